from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    """
    One protocol execution (a sweep, an injection run, a benchmark grid...)
    """

    PROTOCOLS = [
        ("evaluate", "Evaluate"),
        ("sweep_rank", "Rank sweep"),
        ("sweep_data", "Training ratio sweep"),
        ("inject", "Unstable log injection"),
        ("cross", "Cross-dataset evaluation"),
        ("benchmark", "Detection benchmark"),
    ]

    protocol = models.CharField(max_length=20, choices=PROTOCOLS)
    fingerprint = models.CharField(max_length=16)
    seed = models.BigIntegerField()
    config = models.JSONField(default=dict)
    output_dir = models.CharField(max_length=500, blank=True)
    created_at = models.DateTimeField(default=timezone.now)

    class Meta:
        indexes = [
            models.Index(fields=["protocol", "created_at"], name="eval_harnes_protoco_3c1f2a_idx"),
        ]

    def __str__(self):
        return f"{self.protocol} {self.fingerprint}"


class ReportPoint(models.Model):
    """
    One row of a report: the metrics at a single axis value
    """

    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="points")
    position = models.IntegerField()
    axis = models.CharField(max_length=100)
    tp = models.IntegerField(null=True, blank=True)
    fp = models.IntegerField(null=True, blank=True)
    fn = models.IntegerField(null=True, blank=True)
    tn = models.IntegerField(null=True, blank=True)
    precision = models.FloatField(null=True, blank=True)
    recall = models.FloatField(null=True, blank=True)
    f1 = models.FloatField(null=True, blank=True)
    f1_change = models.FloatField(null=True, blank=True, help_text="Relative change against the baseline row")
    epoch_seconds = models.FloatField(null=True, blank=True)
    compute_seconds = models.FloatField(null=True, blank=True)
    seed = models.BigIntegerField()
    init_checksum = models.CharField(max_length=64, blank=True)
    degenerate = models.BooleanField(default=False)
    error = models.TextField(blank=True)
    extra = models.JSONField(null=True, blank=True)

    class Meta:
        ordering = ["position"]
        indexes = [
            models.Index(fields=["run", "position"], name="eval_harnes_run_id_8d2e41_idx"),
        ]

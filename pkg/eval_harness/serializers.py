from rest_framework import serializers

from eval_harness.models import ExperimentRun, ReportPoint


class ReportPointSerializer(serializers.ModelSerializer):
    class Meta:
        model = ReportPoint
        exclude = ["id", "run"]


class ExperimentRunSerializer(serializers.ModelSerializer):
    points = ReportPointSerializer(many=True, read_only=True)

    class Meta:
        model = ExperimentRun
        fields = ["id", "protocol", "fingerprint", "seed", "config", "output_dir", "created_at", "points"]

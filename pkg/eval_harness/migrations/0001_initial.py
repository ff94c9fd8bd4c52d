import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('protocol', models.CharField(choices=[('evaluate', 'Evaluate'), ('sweep_rank', 'Rank sweep'), ('sweep_data', 'Training ratio sweep'), ('inject', 'Unstable log injection'), ('cross', 'Cross-dataset evaluation'), ('benchmark', 'Detection benchmark')], max_length=20)),
                ('fingerprint', models.CharField(max_length=16)),
                ('seed', models.BigIntegerField()),
                ('config', models.JSONField(default=dict)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('created_at', models.DateTimeField(default=django.utils.timezone.now)),
            ],
            options={
                'indexes': [models.Index(fields=['protocol', 'created_at'], name='eval_harnes_protoco_3c1f2a_idx')],
            },
        ),
        migrations.CreateModel(
            name='ReportPoint',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('position', models.IntegerField()),
                ('axis', models.CharField(max_length=100)),
                ('tp', models.IntegerField(blank=True, null=True)),
                ('fp', models.IntegerField(blank=True, null=True)),
                ('fn', models.IntegerField(blank=True, null=True)),
                ('tn', models.IntegerField(blank=True, null=True)),
                ('precision', models.FloatField(blank=True, null=True)),
                ('recall', models.FloatField(blank=True, null=True)),
                ('f1', models.FloatField(blank=True, null=True)),
                ('f1_change', models.FloatField(blank=True, help_text='Relative change against the baseline row', null=True)),
                ('epoch_seconds', models.FloatField(blank=True, null=True)),
                ('compute_seconds', models.FloatField(blank=True, null=True)),
                ('seed', models.BigIntegerField()),
                ('init_checksum', models.CharField(blank=True, max_length=64)),
                ('degenerate', models.BooleanField(default=False)),
                ('error', models.TextField(blank=True)),
                ('extra', models.JSONField(blank=True, null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='points', to='eval_harness.experimentrun')),
            ],
            options={
                'ordering': ['position'],
                'indexes': [models.Index(fields=['run', 'position'], name='eval_harnes_run_id_8d2e41_idx')],
            },
        ),
    ]

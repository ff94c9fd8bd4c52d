from pathlib import Path

from django.conf import settings

from core.management.base import PeftLadCommand
from log_pipeline.synthetic import synthesize_corpus


class Command(PeftLadCommand):
    help = "Write a labeled-lines corpus with a planted anomalous template."
    uses_run_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("--output", required=True, help="Log file to write")
        parser.add_argument("--windows", type=int, default=5000, help="Number of windows (default: %(default)s)")
        parser.add_argument("--window", type=int, default=50, help="Lines per window (default: %(default)s)")
        parser.add_argument("--anomaly-rate", type=float, default=0.05, help="Fraction of windows with an anomaly (default: %(default)s)")
        parser.add_argument("--seed", type=int, default=settings.PEFT_LAD["SEED"], help="(default: %(default)s)")

    def run(self, **options):
        lines = synthesize_corpus(options["windows"], options["window"], options["anomaly_rate"], options["seed"])
        output = Path(options["output"])
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text("\n".join(lines) + "\n", encoding="utf-8")
        self.success(f"Wrote {len(lines)} lines to {output}")

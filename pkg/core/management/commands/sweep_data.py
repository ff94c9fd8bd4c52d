from core.management.base import PeftLadCommand
from eval_harness.protocols import sweep_train_ratio


class Command(PeftLadCommand):
    help = "Train on growing chronological prefixes against a fixed test tail; writes <out>/sweep_data.csv and .json."

    def add_command_arguments(self, parser):
        parser.add_argument("--bundle", required=True, help="Prepared dataset bundle directory")
        parser.add_argument("--ratios", nargs="+", type=float, help="Training fractions (default: 0.1 to 0.8 by 0.1)")
        parser.add_argument("--test-fraction", type=float, help="Fixed test tail (default: 0.2)")

    def run(self, **options):
        config = self.run_config(
            options, extra={"sweep": {"ratios": options["ratios"], "test_fraction": options["test_fraction"]}}
        )
        bundle = self.load_bundle(options["bundle"])
        report = sweep_train_ratio(
            config.experiment(self.progress), bundle.sequences, config.sweep["ratios"], config.sweep["test_fraction"]
        )
        csv_path, _ = report.write(config.out, "sweep_data")
        for row in report.failures:
            self.stderr.write(self.style.WARNING(f"ratio {row.axis} failed: {row.error}"))
        self.success(f"{len(report)} points written to {csv_path}")

from core.management.base import PeftLadCommand
from eval_harness.protocols import cross_eval


class Command(PeftLadCommand):
    help = "Train on one bundle and score the test partition of others; writes <out>/cross.csv and .json."

    def add_command_arguments(self, parser):
        parser.add_argument("--train-bundle", required=True, help="Bundle to fine-tune on")
        parser.add_argument("--test-bundles", nargs="+", required=True, help="Bundles to score (may include the training one)")

    def run(self, **options):
        config = self.run_config(options)
        source = self.load_bundle(options["train_bundle"])
        targets = {}
        for path in options["test_bundles"]:
            bundle = self.load_bundle(path)
            name = bundle.name if bundle.name not in targets else path
            targets[name] = bundle.split()

        report = cross_eval(config.experiment(self.progress), source.name, source.split(), targets)
        csv_path, _ = report.write(config.out, "cross")
        for row in report.rows:
            if row.degenerate:
                self.stderr.write(self.style.WARNING(f"{row.axis}: the detector predicts a single class"))
        self.success(f"{len(report)} rows written to {csv_path}")

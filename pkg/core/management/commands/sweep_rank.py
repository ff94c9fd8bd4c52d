from core.management.base import PeftLadCommand
from eval_harness.protocols import sweep_rank


class Command(PeftLadCommand):
    help = "Train and evaluate once per rank; writes <out>/sweep_rank.csv and .json."

    def add_command_arguments(self, parser):
        parser.add_argument("--bundle", required=True, help="Prepared dataset bundle directory")
        parser.add_argument("--ranks", nargs="+", type=int, help="Ranks, ascending (default: 1 2 4 8 16 32 64 128)")

    def run(self, **options):
        config = self.run_config(options, extra={"sweep": {"ranks": options["ranks"]}})
        bundle = self.load_bundle(options["bundle"])
        report = sweep_rank(config.experiment(self.progress), bundle.split(), config.sweep["ranks"])
        csv_path, _ = report.write(config.out, "sweep_rank")
        for row in report.failures:
            self.stderr.write(self.style.WARNING(f"rank {row.axis} failed: {row.error}"))
        self.success(f"{len(report)} points written to {csv_path}")

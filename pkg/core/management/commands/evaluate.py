from core.management.base import PeftLadCommand
from eval_harness.protocols import evaluate_checkpoint
from training.checkpoint import Checkpoint


class Command(PeftLadCommand):
    help = "Score a checkpoint on the test partition of a bundle; writes <out>/evaluate.csv and .json."

    def add_command_arguments(self, parser):
        parser.add_argument("--checkpoint", required=True, help="Checkpoint directory")
        parser.add_argument("--bundle", required=True, help="Prepared dataset bundle directory")
        parser.add_argument("--all", action="store_true", help="Score every sequence instead of the test partition")

    def run(self, **options):
        config = self.run_config(options)
        checkpoint = Checkpoint.load(options["checkpoint"])
        bundle = self.load_bundle(options["bundle"])
        sequences = bundle.sequences if options["all"] else bundle.split().test

        report = evaluate_checkpoint(checkpoint, bundle.name, sequences)
        csv_path, _ = report.write(config.out, "evaluate")
        metrics = report.rows[0].metrics
        self.info(f"precision {metrics.precision:.4f}  recall {metrics.recall:.4f}  f1 {metrics.f1:.4f}")
        self.success(f"Report written to {csv_path}")

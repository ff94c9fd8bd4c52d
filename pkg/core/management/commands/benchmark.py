from core.management.base import PeftLadCommand
from eval_harness.protocols import benchmark
from peft_methods.config import METHODS
from tokenizer.vocabulary import STYLES


class Command(PeftLadCommand):
    help = "Detection accuracy for every model style and PEFT method; writes <out>/benchmark.csv and .json."

    def add_command_arguments(self, parser):
        parser.add_argument("--bundle", required=True, help="Prepared dataset bundle directory")
        parser.add_argument("--styles", nargs="+", choices=STYLES, default=list(STYLES), help="(default: %(default)s)")
        parser.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS), help="(default: %(default)s)")
        parser.add_argument("--repeats", type=int, default=1, help="Runs per cell with derived seeds (default: %(default)s)")

    def run(self, **options):
        config = self.run_config(options)
        bundle = self.load_bundle(options["bundle"])
        methods = {method: config.peft_config(method) for method in options["methods"]}
        report = benchmark(
            config.experiment(self.progress), bundle.split(), methods, tuple(options["styles"]), options["repeats"]
        )
        csv_path, _ = report.write(config.out, "benchmark")
        for row in report.rows:
            if row.metrics:
                self.info(f"{row.axis:<28} f1 {row.metrics.f1:.4f}  epoch {row.epoch_seconds:.2f}s")
            else:
                self.stderr.write(self.style.WARNING(f"{row.axis} failed: {row.error}"))
        self.success(f"{len(report)} cells written to {csv_path}")

from core.exceptions import NumericError
from core.management.base import PeftLadCommand
from training.gradient_suite import run_gradient_suite


class Command(PeftLadCommand):
    help = "Finite-difference check of every parameterized operation at float64; exits 4 on any failure."
    uses_run_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("--step", type=float, default=1e-5, help="Finite-difference step (default: %(default)s)")

    def run(self, **options):
        results = run_gradient_suite(step=options["step"])
        for result in results:
            status = self.style.SUCCESS("ok") if result.passed else self.style.ERROR("FAIL")
            self.info(f"{result.name:<40} {result.max_relative_error:.3e}  {status}")
        failed = [result.name for result in results if not result.passed]
        if failed:
            raise NumericError(f"{len(failed)} gradient check(s) failed: {', '.join(failed)}")
        self.success(f"All {len(results)} gradient checks passed")

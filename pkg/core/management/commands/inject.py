from pathlib import Path

from core.management.base import PeftLadCommand
from eval_harness.protocols import sweep_injection
from eval_harness.unstable import load_lexicon

SAMPLE_LEXICON = Path(__file__).resolve().parents[3] / "eval_harness" / "fixtures" / "synonyms.csv"


class Command(PeftLadCommand):
    help = "Train once, then score the test set with synonym-substituted action words; writes <out>/inject.csv and .json."

    def add_command_arguments(self, parser):
        parser.add_argument("--bundle", required=True, help="Prepared dataset bundle directory")
        parser.add_argument("--lexicon", default=str(SAMPLE_LEXICON), help="word,syn1[,syn2[,syn3]] CSV (default: the sample lexicon)")
        parser.add_argument("--rates", nargs="+", type=float, help="Injection rates (default: 0.01 0.02 0.03 0.05 0.1 0.2 0.3)")
        parser.add_argument("--action-words", nargs=10, help="Exactly 10 words to replace (default: picked by frequency)")
        parser.add_argument("--inject-epochs", type=int, help="Training epochs for this protocol (default: 1)")

    def run(self, **options):
        config = self.run_config(
            options, extra={"sweep": {"rates": options["rates"], "inject_epochs": options["inject_epochs"]}}
        )
        bundle = self.load_bundle(options["bundle"])
        lexicon = load_lexicon(options["lexicon"])
        report = sweep_injection(
            config.experiment(self.progress),
            bundle.split(),
            config.sweep["rates"],
            lexicon,
            action_words=options["action_words"],
            epochs=config.sweep["inject_epochs"],
        )
        csv_path, _ = report.write(config.out, "inject")
        self.info(f"Action words: {', '.join(report.config['action_words'])}")
        self.success(f"{len(report)} rows written to {csv_path}")

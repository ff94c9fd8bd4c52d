import pandas as pd

from core.management.base import PeftLadCommand
from training.checkpoint import Checkpoint
from training.trainer import train


class Command(PeftLadCommand):
    help = "Fine-tune a PEFT detector on a prepared bundle; writes <out>/<name>/ (checkpoint) and its epochs.csv."

    def add_command_arguments(self, parser):
        parser.add_argument("--bundle", required=True, help="Prepared dataset bundle directory")
        parser.add_argument("--name", default="checkpoint", help="Checkpoint directory under --out (default: %(default)s)")

    def run(self, **options):
        config = self.run_config(options)
        bundle = self.load_bundle(options["bundle"])
        split = bundle.split()
        train_config = config.train_config()

        result = train(
            split,
            config.model_config(),
            config.peft_config(),
            train_config,
            min_count=config.dataset["min_count"],
            max_len=config.dataset["max_len"],
            progress=self.progress,
        )
        target = config.out / options["name"]
        Checkpoint.from_detector(
            result.detector,
            fingerprint=config.fingerprint,
            seed=train_config.seed,
            bundle=bundle.name,
            train=train_config.to_dict(),
            budget=result.budget.to_dict(),
        ).save(target)
        pd.DataFrame([record.to_dict() for record in result.epochs]).to_csv(target / "epochs.csv", index=False)

        self.info(
            f"Trainable parameters: {result.budget.adapter} adapter + {result.budget.head} head = {result.budget.total}"
        )
        for record in result.epochs:
            self.info(f"epoch {record.epoch}: loss {record.mean_loss:.6f} ({record.total_seconds:.2f}s)")
        self.success(f"Checkpoint {config.fingerprint} written to {target}")

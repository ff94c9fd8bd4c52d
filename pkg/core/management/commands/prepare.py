from pathlib import Path

from core.management.base import PeftLadCommand
from log_pipeline.bundle import prepare_sequences, write_bundle
from log_pipeline.grouping import chronological_split
from log_pipeline.records import class_balance


class Command(PeftLadCommand):
    help = "Parse a raw log file, group it into labeled sequences and write a dataset bundle to <out>/<name>."

    def add_command_arguments(self, parser):
        parser.add_argument("--input", required=True, help="Raw log file")
        parser.add_argument("--format", help="Dataset format: hdfs or labeled-lines (default: labeled-lines)")
        parser.add_argument("--grouping", help="session or window (default: window)")
        parser.add_argument("--window", type=int, help="Events per window (default: 50)")
        parser.add_argument("--stride", type=int, help="Window stride (default: the window size, no overlap)")
        parser.add_argument("--labels", help="BlockId,Label CSV for hdfs session grouping")
        parser.add_argument("--header-fields", type=int, help="Fields between the label and the message (default: 0)")
        parser.add_argument("--train-ratio", type=float, help="Chronological train fraction (default: 0.8)")
        parser.add_argument("--name", help="Bundle name (default: the input file stem)")

    def run(self, **options):
        config = self.run_config(
            options,
            extra={
                "dataset": {
                    "format": options["format"],
                    "grouping": options["grouping"],
                    "window": options["window"],
                    "stride": options["stride"],
                    "header_fields": options["header_fields"],
                    "train_ratio": options["train_ratio"],
                }
            },
        )
        dataset = config.dataset
        sequences, report = prepare_sequences(
            options["input"],
            dataset["format"],
            dataset["grouping"],
            window=dataset["window"],
            stride=dataset["stride"],
            labels_path=options["labels"],
            header_fields=dataset["header_fields"],
        )
        split = chronological_split(sequences, dataset["train_ratio"])

        name = options["name"] or Path(options["input"]).stem
        target = write_bundle(
            config.out / name,
            name,
            sequences,
            format=dataset["format"],
            grouping=dataset["grouping"],
            window=dataset["window"],
            stride=dataset["stride"],
            train_ratio=dataset["train_ratio"],
            train=len(split.train),
            test=len(split.test),
            parse_report=report.to_dict(),
            fingerprint=config.fingerprint,
        )
        balance = class_balance(sequences)
        self.info(f"Parsed {report.accepted} lines ({report.rejected} rejected, {report.replaced_sequences} invalid byte sequences replaced)")
        self.info(
            f"{len(sequences)} sequences: {balance['normal']} normal, {balance['anomalous']} anomalous; "
            f"train {len(split.train)} / test {len(split.test)}"
        )
        self.success(f"Bundle written to {target}")

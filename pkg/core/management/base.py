"""
Shared plumbing for the management commands: run-config flags, layering and
the mapping of package errors onto exit codes (2 usage, 3 missing artifact,
4 numeric failure).
"""

from __future__ import annotations

import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from core.config import RunConfig, resolve_run_config, validation_message
from core.exceptions import PeftLadError
from log_pipeline.bundle import DatasetBundle, read_bundle
from peft_methods.config import METHODS
from tokenizer.vocabulary import STYLES

logger = logging.getLogger(__name__)

# flag -> (config group, key); None for top-level keys
RUN_FLAGS = {
    "seed": (None, "seed"),
    "out": (None, "out"),
    "peft": (None, "peft"),
    "jobs": ("sweep", "jobs"),
    "style": ("model", "style"),
    "layers": ("model", "layers"),
    "hidden": ("model", "hidden"),
    "heads": ("model", "heads"),
    "ffn_dim": ("model", "ffn_dim"),
    "activation": ("model", "activation"),
    "dropout": ("model", "dropout"),
    "alpha": ("lora", "alpha"),
    "targets": ("lora", "targets"),
    "position": ("reft", "position"),
    "lr": ("train", "learning_rate"),
    "batch_size": ("train", "batch_size"),
    "epochs": ("train", "epochs"),
    "weight_decay": ("train", "weight_decay"),
    "precision": ("train", "precision"),
    "class_weight": ("train", "class_weight"),
    "min_count": ("dataset", "min_count"),
    "max_len": ("dataset", "max_len"),
}


class PeftLadCommand(BaseCommand):
    uses_run_config = True

    def add_arguments(self, parser):
        if self.uses_run_config:
            self.add_run_config_arguments(parser)
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def add_run_config_arguments(self, parser):
        conf = settings.PEFT_LAD
        model, lora, reft, train, data = conf["MODEL"], conf["LORA"], conf["REFT"], conf["TRAIN"], conf["DATASET"]
        group = parser.add_argument_group("run configuration (flag > --config file > defaults)")
        group.add_argument("--config", help="JSON run config file")
        group.add_argument("--seed", type=int, help=f"Master seed (default: {conf['SEED']}, env PEFT_LAD_SEED)")
        group.add_argument("--out", help="Output directory; every written path is relative to it (default: runs)")
        group.add_argument("--jobs", type=int, help=f"Concurrent sweep points (default: {conf['SWEEP']['jobs']})")
        group.add_argument("--style", choices=STYLES, help=f"Model style (default: {model['style']})")
        group.add_argument("--layers", type=int, help=f"Transformer layers (default: {model['layers']})")
        group.add_argument("--hidden", type=int, help=f"Hidden size d (default: {model['hidden']})")
        group.add_argument("--heads", type=int, help=f"Attention heads (default: {model['heads']})")
        group.add_argument("--ffn-dim", type=int, help=f"Feed-forward width (default: {model['ffn_dim']})")
        group.add_argument("--activation", choices=["gelu", "relu"], help=f"(default: {model['activation']})")
        group.add_argument("--dropout", type=float, help=f"(default: {model['dropout']})")
        group.add_argument("--peft", choices=METHODS, help="Fine-tuning method (default: lora)")
        group.add_argument(
            "--rank", type=int, help=f"Rank of the chosen method (default: lora {lora['rank']}, clamped to d; reft {reft['rank']})"
        )
        group.add_argument("--alpha", type=float, help=f"LoRA alpha (default: {lora['alpha']})")
        group.add_argument("--targets", nargs="+", help=f"LoRA target matrices (default: {' '.join(lora['targets'])})")
        group.add_argument("--position", choices=["prefix", "suffix"], help="ReFT position (default: prefix for masked, suffix for autoregressive)")
        group.add_argument("--lr", type=float, help=f"AdamW learning rate (default: {train['learning_rate']})")
        group.add_argument("--batch-size", type=int, help=f"(default: {train['batch_size']})")
        group.add_argument("--epochs", type=int, help=f"(default: {train['epochs']})")
        group.add_argument("--weight-decay", type=float, help=f"(default: {train['weight_decay']})")
        group.add_argument("--precision", choices=["float32", "float64"], help=f"(default: {train['precision']})")
        group.add_argument(
            "--balance-classes", dest="class_weight", action="store_const", const="balanced",
            help="Weigh the loss so both classes count equally (default: unweighted mean)",
        )
        group.add_argument("--min-count", type=int, help=f"Vocabulary min count (default: {data['min_count']})")
        group.add_argument("--max-len", type=int, help=f"Token limit per sequence (default: {data['max_len']})")

    def handle(self, *args, **options):
        self.verbosity = options.get("verbosity", 1)
        try:
            self.run(**options)
        except serializers.ValidationError as exc:
            raise CommandError(f"Invalid configuration:\n{validation_message(exc)}", returncode=2)
        except PeftLadError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code)

    def run(self, **options):
        raise NotImplementedError

    @property
    def progress(self) -> bool:
        return self.verbosity >= 2

    def run_config(self, options: dict, extra: dict | None = None) -> RunConfig:
        overrides: dict = {}
        for flag, (group, key) in RUN_FLAGS.items():
            value = options.get(flag)
            if value is None:
                continue
            target = overrides if group is None else overrides.setdefault(group, {})
            target[key] = value
        for group, values in (extra or {}).items():
            overrides.setdefault(group, {}).update({k: v for k, v in values.items() if v is not None})
        config = resolve_run_config(options.get("config"), overrides, rank=options.get("rank"))
        logger.debug("Run config %s: %s", config.fingerprint, config.data)
        return config

    def out_path(self, config: RunConfig, *parts: str) -> Path:
        path = config.out.joinpath(*parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def load_bundle(self, path: str) -> DatasetBundle:
        return read_bundle(path)

    def success(self, message: str) -> None:
        if self.verbosity >= 1:
            self.stdout.write(self.style.SUCCESS(message))

    def info(self, message: str) -> None:
        if self.verbosity >= 1:
            self.stdout.write(message)

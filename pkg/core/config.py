"""
Run configuration: settings defaults < JSON config file < command-line flags,
validated by `RunConfigSerializer` and fingerprinted for every artifact.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from core.exceptions import ConfigError
from core.serializers import RunConfigSerializer
from eval_harness.protocols import ExperimentConfig
from model_core.config import ModelConfig
from peft_methods.config import LORA, LoraConfig, PeftConfig, ReftConfig
from training.optim import TrainConfig

logger = logging.getLogger(__name__)

# keys that never change results and stay out of the fingerprint
UNFINGERPRINTED = ("out", "jobs")
DEFAULT_OUT = "runs"


def defaults() -> dict:
    conf = copy.deepcopy(settings.PEFT_LAD)
    return {
        "seed": conf["SEED"],
        "peft": LORA,
        "dataset": conf["DATASET"],
        "model": conf["MODEL"],
        "lora": conf["LORA"],
        "reft": conf["REFT"],
        "train": conf["TRAIN"],
        "sweep": conf["SWEEP"],
        "out": DEFAULT_OUT,
    }


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}")
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return payload


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; None values in `override` leave `base` alone."""
    merged = dict(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _has(layer: dict, *path: str) -> bool:
    for key in path:
        if not isinstance(layer, dict) or layer.get(key) is None:
            return False
        layer = layer[key]
    return True


def _strip(data, keys):
    if isinstance(data, dict):
        return {k: _strip(v, keys) for k, v in data.items() if k not in keys}
    return data


def fingerprint(data: dict) -> str:
    canonical = json.dumps(_strip(data, UNFINGERPRINTED), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class RunConfig:
    data: dict

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.data)

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def method(self) -> str:
        return self.data["peft"]

    @property
    def out(self) -> Path:
        return Path(self.data["out"])

    @property
    def dataset(self) -> dict:
        return self.data["dataset"]

    @property
    def sweep(self) -> dict:
        return self.data["sweep"]

    def model_config(self) -> ModelConfig:
        """Backbone shape; vocab size and max_len are filled in from the vocabulary at build time."""
        return ModelConfig(**self.data["model"], max_len=self.dataset["max_len"], seed=self.seed)

    def peft_config(self, method: str | None = None) -> PeftConfig:
        method = method or self.method
        options = dict(self.data[method])
        if options.get("layers") is not None:
            options["layers"] = tuple(options["layers"])
        if method == LORA:
            options["targets"] = tuple(options["targets"])
            return LoraConfig(**options)
        return ReftConfig(**options)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.data["train"], seed=self.seed)

    def experiment(self, progress: bool = False) -> ExperimentConfig:
        return ExperimentConfig(
            model=self.model_config(),
            peft=self.peft_config(),
            train=self.train_config(),
            seed=self.seed,
            min_count=self.dataset["min_count"],
            max_len=self.dataset["max_len"],
            fingerprint=self.fingerprint,
            jobs=self.sweep["jobs"],
            progress=progress,
        )


def resolve_run_config(
    config_file: str | Path | None = None, overrides: dict | None = None, rank: int | None = None
) -> RunConfig:
    """
    Layer the sources and validate. `rank` applies to whichever PEFT method
    the layered config selects. Raises DRF's ValidationError with the
    field-level messages when a value is rejected.
    """
    from_file = load_config_file(config_file) if config_file else {}
    overrides = overrides or {}
    data = merge(merge(defaults(), from_file), overrides)
    if rank is not None:
        overrides = merge(overrides, {data["peft"]: {"rank": rank}})
        data = merge(data, overrides)

    # an implicit LoRA rank is clamped to the hidden size
    if not (_has(from_file, "lora", "rank") or _has(overrides, "lora", "rank")):
        hidden = data["model"]["hidden"]
        if data["lora"]["rank"] > hidden:
            logger.info("Clamping the default LoRA rank %d to the hidden size %d", data["lora"]["rank"], hidden)
            data["lora"] = {**data["lora"], "rank": hidden}

    serializer = RunConfigSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    return RunConfig(json.loads(json.dumps(serializer.validated_data)))


def validation_message(error: serializers.ValidationError) -> str:
    return json.dumps(error.detail, indent=2, default=str)

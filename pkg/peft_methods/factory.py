from __future__ import annotations

from dataclasses import dataclass

from core.exceptions import ConfigError
from model_core.config import ModelConfig
from model_core.transformer import NO_PEFT, PeftAttachment
from peft_methods.config import LORA, REFT, LoraConfig, PeftConfig, ReftConfig
from peft_methods.lora import LoraAttachment
from peft_methods.reft import ReftAttachment

CLASSES = 2


@dataclass(frozen=True)
class ParameterBudget:
    """Trainable parameter counts; the frozen backbone contributes nothing."""

    adapter: int
    head: int

    @property
    def total(self) -> int:
        return self.adapter + self.head

    def to_dict(self) -> dict:
        return {"adapter": self.adapter, "head": self.head, "total": self.total}


def build_attachment(model: ModelConfig, config: PeftConfig | None, seed: int) -> PeftAttachment:
    if config is None:
        return NO_PEFT
    if isinstance(config, LoraConfig):
        return LoraAttachment.initialise(model, config, seed)
    if isinstance(config, ReftConfig):
        return ReftAttachment.initialise(model, config, seed)
    raise ConfigError(f"Unknown PEFT configuration {config!r}")


def peft_config_for(method: str, **options) -> PeftConfig:
    if method == LORA:
        return LoraConfig(**options)
    if method == REFT:
        return ReftConfig(**options)
    raise ConfigError(f"Unknown PEFT method '{method}', expected '{LORA}' or '{REFT}'")


def trainable_param_count(model: ModelConfig, config: PeftConfig | None) -> ParameterBudget:
    d = model.hidden
    head = CLASSES * d + CLASSES
    if config is None:
        return ParameterBudget(0, head)
    layers = config.resolve(model)
    r = config.rank
    if isinstance(config, LoraConfig):
        adapter = 2 * r * d * len(config.targets) * len(layers)
    else:
        adapter = (r * d + r * d + r) * len(layers)
    return ParameterBudget(adapter, head)

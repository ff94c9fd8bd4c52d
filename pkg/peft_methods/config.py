from __future__ import annotations

from dataclasses import asdict, dataclass, field

from core.exceptions import ConfigError
from model_core.config import ModelConfig
from model_core.transformer import ATTENTION_TARGETS
from tokenizer.vocabulary import MASKED

LORA = "lora"
REFT = "reft"
METHODS = (LORA, REFT)

PREFIX = "prefix"
SUFFIX = "suffix"


def _check_layers(layers: tuple[int, ...] | None, model: ModelConfig) -> tuple[int, ...]:
    if layers is None:
        return tuple(range(model.layers))
    bad = [j for j in layers if not 0 <= j < model.layers]
    if bad:
        raise ConfigError(f"layers {bad} do not exist in a {model.layers}-layer model")
    return tuple(sorted(set(layers)))


@dataclass(frozen=True)
class LoraConfig:
    rank: int = 128
    alpha: float = 256.0
    targets: tuple[str, ...] = ("query", "value")
    layers: tuple[int, ...] | None = None

    method = LORA

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError(f"LoRA rank must be >= 1, got {self.rank}")
        if self.alpha <= 0:
            raise ConfigError(f"LoRA alpha must be > 0, got {self.alpha}")
        if not self.targets:
            raise ConfigError("LoRA needs at least one target matrix")
        unknown = set(self.targets) - set(ATTENTION_TARGETS)
        if unknown:
            raise ConfigError(f"Unknown LoRA targets {sorted(unknown)}, expected a subset of {ATTENTION_TARGETS}")

    def resolve(self, model: ModelConfig) -> tuple[int, ...]:
        """Validate against the model and return the adapted layer indices."""
        if self.rank > model.hidden:
            raise ConfigError(f"LoRA rank {self.rank} exceeds the hidden size {model.hidden}")
        return _check_layers(self.layers, model)

    def to_dict(self) -> dict:
        return {"method": LORA, **asdict(self)}


@dataclass(frozen=True)
class ReftConfig:
    rank: int = 8
    position: str | None = None
    layers: tuple[int, ...] | None = field(default=None)

    method = REFT

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError(f"ReFT rank must be >= 1, got {self.rank}")
        if self.position not in (None, PREFIX, SUFFIX):
            raise ConfigError(f"ReFT position must be '{PREFIX}' or '{SUFFIX}', got '{self.position}'")

    def position_for(self, style: str) -> str:
        if self.position is not None:
            return self.position
        return PREFIX if style == MASKED else SUFFIX

    def resolve(self, model: ModelConfig) -> tuple[int, ...]:
        if self.rank > model.hidden:
            raise ConfigError(f"ReFT rank {self.rank} exceeds the hidden size {model.hidden}")
        return _check_layers(self.layers, model)

    def to_dict(self) -> dict:
        return {"method": REFT, **asdict(self)}


PeftConfig = LoraConfig | ReftConfig

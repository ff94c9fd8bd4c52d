from __future__ import annotations

from dataclasses import asdict, dataclass

from core.exceptions import ConfigError
from tokenizer.vocabulary import STYLES


@dataclass(frozen=True)
class ModelConfig:
    """
    Shape of the transformer backbone.

    `seed` fixes the backbone weights, playing the part of a pretrained
    checkpoint: every run with the same seed starts from the same frozen model.
    """

    style: str = "masked"
    layers: int = 2
    hidden: int = 64
    heads: int = 4
    ffn_dim: int = 256
    vocab_size: int = 3
    max_len: int = 256
    seed: int = 42
    activation: str = "gelu"
    dropout: float = 0.0

    def __post_init__(self):
        if self.style not in STYLES:
            raise ConfigError(f"style must be one of {', '.join(STYLES)}, got '{self.style}'")
        for name in ("layers", "hidden", "heads", "ffn_dim", "vocab_size", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden % self.heads:
            raise ConfigError(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if self.activation not in ("gelu", "relu"):
            raise ConfigError(f"activation must be 'gelu' or 'relu', got '{self.activation}'")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

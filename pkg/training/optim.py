"""
AdamW with decoupled weight decay.

    m ← β1·m + (1 − β1)·g
    v ← β2·v + (1 − β2)·g²
    θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ

m̂ and v̂ are the bias-corrected moments; the decay term uses θ from before the update.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from core.exceptions import ConfigError, NumericError
from tensor_engine.tensor import Tensor

# None weighs every example alike; "balanced" gives both classes the same total weight
CLASS_WEIGHTS = (None, "balanced")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 42
    precision: str = "float32"
    class_weight: str | None = None

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs", "eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be 'float32' or 'float64', got '{self.precision}'")
        if self.class_weight not in CLASS_WEIGHTS:
            raise ConfigError(f"class_weight must be one of {CLASS_WEIGHTS}, got '{self.class_weight}'")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState, cfg: TrainConfig) -> AdamState:
    """Update `params` in place. Nothing is touched if any gradient is non-finite."""
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise NumericError(f"Gradient for '{name}' has shape {grad.shape}, parameter has {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"Non-finite gradient for parameter '{name}', step aborted")

    state.step += 1
    correction1 = 1.0 - cfg.beta1**state.step
    correction2 = 1.0 - cfg.beta2**state.step
    for name, param in params.items():
        grad = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - cfg.beta1) * grad if m is None else cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = (1.0 - cfg.beta2) * grad * grad if v is None else cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
        state.m[name], state.v[name] = m, v

        update = cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.eps)
        decay = cfg.learning_rate * cfg.weight_decay * param.data
        param.data[...] = (param.data - update - decay).astype(param.dtype, copy=False)
    return state


class AdamW:
    def __init__(self, params: dict[str, Tensor], config: TrainConfig):
        self.params = params
        self.config = config
        self.state = AdamState()

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> None:
        grads = {
            name: param.grad if param.grad is not None else np.zeros_like(param.data)
            for name, param in self.params.items()
        }
        adamw_step(self.params, grads, self.state, self.config)
        self.zero_grad()

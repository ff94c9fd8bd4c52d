from __future__ import annotations

import numpy as np

from tensor_engine.tensor import Tensor, default_dtype, matmul, normalize, swap_last, take


def _as_param(values: np.ndarray, name: str, trainable: bool) -> Tensor:
    return Tensor(values.astype(default_dtype()), requires_grad=trainable, name=name)


class LinearLayer:
    """
    y = x Wᵀ + b over the last axis, W of shape (out, in).

    A frozen layer's tensors never require gradients, so no optimizer can
    reach them.
    """

    def __init__(self, weight: Tensor, bias: Tensor, frozen: bool = True):
        self.weight = weight
        self.bias = bias
        self.frozen = frozen

    @classmethod
    def initialise(cls, rng: np.random.Generator, in_dim: int, out_dim: int, name: str, frozen: bool = True):
        bound = 1.0 / np.sqrt(in_dim)
        weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        return cls(
            _as_param(weight, f"{name}.weight", not frozen),
            _as_param(np.zeros(out_dim), f"{name}.bias", not frozen),
            frozen,
        )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, swap_last(self.weight)) + self.bias

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


class LayerNorm:
    def __init__(self, gain: Tensor, shift: Tensor):
        self.gain = gain
        self.shift = shift

    @classmethod
    def initialise(cls, dim: int, name: str):
        return cls(_as_param(np.ones(dim), f"{name}.gain", False), _as_param(np.zeros(dim), f"{name}.shift", False))

    def __call__(self, x: Tensor) -> Tensor:
        return normalize(x) * self.gain + self.shift

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gain": self.gain, f"{prefix}.shift": self.shift}


class Embedding:
    def __init__(self, table: Tensor):
        self.table = table

    @classmethod
    def initialise(cls, rng: np.random.Generator, count: int, dim: int, name: str):
        return cls(_as_param(rng.normal(0.0, 0.02, size=(count, dim)), f"{name}.table", False))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return take(self.table, ids)

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.table": self.table}

"""
Low-rank adapters on the attention projections.

    h = (W + γ·B·A) h_in + b,   γ = α / √r

B starts at zero so a freshly attached adapter reproduces the frozen model.
"""

from __future__ import annotations

import copy
import math

import numpy as np

from core.exceptions import ConfigError, DimensionError
from model_core.config import ModelConfig
from model_core.layers import LinearLayer
from model_core.transformer import PeftAttachment, Transformer
from peft_methods.config import LoraConfig
from tensor_engine.tensor import Tensor, default_dtype, matmul, swap_last

A_INIT_STD = 0.02


def lora_scale(r: int, alpha: float) -> float:
    if r < 1:
        raise ConfigError(f"LoRA rank must be >= 1, got {r}")
    if alpha <= 0:
        raise ConfigError(f"LoRA alpha must be > 0, got {alpha}")
    return alpha / math.sqrt(r)


class LoraAdapter:
    def __init__(self, B: Tensor, A: Tensor, scale: float):
        if B.shape[1] != A.shape[0]:
            raise DimensionError(f"LoRA factors do not chain: B {B.shape}, A {A.shape}")
        self.B = B
        self.A = A
        self.scale = scale

    @classmethod
    def initialise(cls, rng: np.random.Generator, in_dim: int, out_dim: int, rank: int, alpha: float, name: str = "lora"):
        if rank > min(in_dim, out_dim):
            raise ConfigError(f"LoRA rank {rank} exceeds the adapted matrix size {out_dim}x{in_dim}")
        dtype = default_dtype()
        B = Tensor(np.zeros((out_dim, rank), dtype=dtype), requires_grad=True, name=f"{name}.B")
        A = Tensor(rng.normal(0.0, A_INIT_STD, size=(rank, in_dim)).astype(dtype), requires_grad=True, name=f"{name}.A")
        return cls(B, A, lora_scale(rank, alpha))

    @property
    def rank(self) -> int:
        return self.A.shape[0]

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.B": self.B, f"{prefix}.A": self.A}


def lora_forward(h_in: Tensor, base: LinearLayer, adapter: LoraAdapter) -> Tensor:
    if adapter.rank > base.in_dim:
        raise ConfigError(f"LoRA rank {adapter.rank} exceeds the hidden size {base.in_dim}")
    update = matmul(matmul(h_in, swap_last(adapter.A)), swap_last(adapter.B))
    return base(h_in) + update * adapter.scale


def lora_delta(adapter: LoraAdapter) -> np.ndarray:
    """The dense γ·B·A update."""
    return adapter.scale * (adapter.B.data @ adapter.A.data)


class LoraAttachment(PeftAttachment):
    method = "lora"

    def __init__(self, adapters: dict[tuple[int, str], LoraAdapter]):
        self.adapters = adapters

    @classmethod
    def initialise(cls, model: ModelConfig, config: LoraConfig, seed: int) -> LoraAttachment:
        rng = np.random.default_rng(seed)
        adapters = {}
        for layer in config.resolve(model):
            for target in config.targets:
                adapters[(layer, target)] = LoraAdapter.initialise(
                    rng, model.hidden, model.hidden, config.rank, config.alpha, name=f"lora.{layer}.{target}"
                )
        return cls(adapters)

    def project(self, layer: int, target: str, linear: LinearLayer, x: Tensor) -> Tensor:
        adapter = self.adapters.get((layer, target))
        if adapter is None:
            return linear(x)
        return lora_forward(x, linear, adapter)

    def named_parameters(self) -> dict[str, Tensor]:
        params = {}
        for (layer, target), adapter in self.adapters.items():
            params.update(adapter.named_parameters(f"lora.{layer}.{target}"))
        return params


def merge_lora(model: Transformer, attachment: LoraAttachment) -> Transformer:
    """
    A copy of `model` with every adapted weight replaced by W + γ·B·A.

    The copy runs without the attachment; `model` is left untouched.
    """
    merged = copy.deepcopy(model)
    for (layer, target), adapter in attachment.adapters.items():
        linear: LinearLayer = getattr(merged.blocks[layer].attention, target)
        weight = linear.weight
        linear.weight = Tensor((weight.data + lora_delta(adapter)).astype(weight.dtype), name=weight.name)
    return merged

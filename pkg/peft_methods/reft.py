"""
Low-rank representation interventions.

At the intervention position of each chosen layer the block output h becomes

    h + Rᵀ(W h + b − R h)

with R (r×d) kept row-orthonormal by `reorthonormalize` after every optimizer step.
"""

from __future__ import annotations

import logging

import numpy as np

from core.exceptions import ConfigError, NumericError
from model_core.config import ModelConfig
from model_core.transformer import PeftAttachment
from peft_methods.config import PREFIX, ReftConfig
from tensor_engine.tensor import Tensor, add_rows, default_dtype, matmul, swap_last, take_rows

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-8


def reorthonormalize(R: np.ndarray) -> np.ndarray:
    """
    Orthonormal rows spanning the same space as R's rows, built row by row
    (QR of Rᵀ with the signs fixed so each row keeps its direction).
    """
    R = np.asarray(R)
    work = R.astype(np.float64)
    if work.ndim != 2 or work.shape[0] > work.shape[1]:
        raise NumericError(f"reorthonormalize: expected r x d with r <= d, got shape {R.shape}")
    q, u = np.linalg.qr(work.T)
    diagonal = np.diag(u)
    norms = np.linalg.norm(work, axis=1)
    for row, (value, norm) in enumerate(zip(diagonal, norms)):
        if not np.isfinite(value) or abs(value) <= RANK_TOLERANCE * max(norm, 1e-300):
            raise NumericError(f"reorthonormalize: row {row} is linearly dependent on the rows before it")
    signs = np.where(diagonal < 0, -1.0, 1.0)
    return (q * signs).T.astype(R.dtype if R.dtype.kind == "f" else np.float64)


class ReftIntervention:
    def __init__(self, R: Tensor, W: Tensor, b: Tensor):
        if R.shape != W.shape or b.shape != (R.shape[0],):
            raise ConfigError(f"ReFT parameters do not fit: R {R.shape}, W {W.shape}, b {b.shape}")
        if R.shape[0] > R.shape[1]:
            raise ConfigError(f"ReFT rank {R.shape[0]} exceeds the hidden size {R.shape[1]}")
        self.R = R
        self.W = W
        self.b = b

    @classmethod
    def initialise(cls, rng: np.random.Generator, hidden: int, rank: int, name: str = "reft") -> ReftIntervention:
        if rank > hidden:
            raise ConfigError(f"ReFT rank {rank} exceeds the hidden size {hidden}")
        dtype = default_dtype()
        R = reorthonormalize(rng.normal(size=(rank, hidden))).astype(dtype)
        bound = 1.0 / np.sqrt(hidden)
        W = rng.uniform(-bound, bound, size=(rank, hidden)).astype(dtype)
        return cls(
            Tensor(R, requires_grad=True, name=f"{name}.R"),
            Tensor(W, requires_grad=True, name=f"{name}.W"),
            Tensor(np.zeros(rank, dtype=dtype), requires_grad=True, name=f"{name}.b"),
        )

    @property
    def rank(self) -> int:
        return self.R.shape[0]

    def orthonormality_error(self) -> float:
        R = self.R.data.astype(np.float64)
        return float(np.abs(R @ R.T - np.eye(self.rank)).max())

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.R": self.R, f"{prefix}.W": self.W, f"{prefix}.b": self.b}


def reft_delta(h: Tensor, iv: ReftIntervention) -> Tensor:
    """Rᵀ(W h + b − R h) for rows h of shape (..., d)."""
    if iv.rank > h.shape[-1]:
        raise ConfigError(f"ReFT rank {iv.rank} exceeds the hidden size {h.shape[-1]}")
    edit = matmul(h, swap_last(iv.W)) + iv.b - matmul(h, swap_last(iv.R))
    return matmul(edit, iv.R)


def reft_forward(h_in: Tensor, iv: ReftIntervention) -> Tensor:
    return h_in + reft_delta(h_in, iv)


def intervention_positions(mask: np.ndarray, position: str) -> np.ndarray:
    mask = np.asarray(mask)
    if position == PREFIX:
        return np.zeros(mask.shape[0], dtype=np.int64)
    return mask.sum(axis=1).astype(np.int64) - 1


class ReftAttachment(PeftAttachment):
    method = "reft"

    def __init__(self, interventions: dict[int, ReftIntervention], position: str):
        self.interventions = interventions
        self.position = position

    @classmethod
    def initialise(cls, model: ModelConfig, config: ReftConfig, seed: int) -> ReftAttachment:
        rng = np.random.default_rng(seed)
        interventions = {
            layer: ReftIntervention.initialise(rng, model.hidden, config.rank, name=f"reft.{layer}")
            for layer in config.resolve(model)
        }
        return cls(interventions, config.position_for(model.style))

    def intervene(self, layer: int, h: Tensor, mask: np.ndarray) -> Tensor:
        iv = self.interventions.get(layer)
        if iv is None:
            return h
        positions = intervention_positions(mask, self.position)
        return add_rows(h, positions, reft_delta(take_rows(h, positions), iv))

    def reorthonormalize(self) -> float:
        """Re-orthonormalize every R in place; returns the worst ‖RRᵀ − I‖∞ afterwards."""
        worst = 0.0
        for layer, iv in self.interventions.items():
            iv.R.data[...] = reorthonormalize(iv.R.data)
            worst = max(worst, iv.orthonormality_error())
        return worst

    def named_parameters(self) -> dict[str, Tensor]:
        params = {}
        for layer, iv in self.interventions.items():
            params.update(iv.named_parameters(f"reft.{layer}"))
        return params

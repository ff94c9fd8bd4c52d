"""
A small post-norm transformer encoder with masked (bidirectional) or
autoregressive (causal) self-attention.

PEFT methods plug in through a `PeftAttachment`: the model asks it to run the
query/key/value projections (`project`) and hands it every block output
(`intervene`). The base attachment does neither, which is the frozen model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import InputError
from model_core.config import ModelConfig
from model_core.layers import Embedding, LayerNorm, LinearLayer
from tensor_engine.tensor import (
    ACTIVATIONS,
    MASK_VALUE,
    Tensor,
    dropout,
    matmul,
    reshape,
    softmax,
    swap_last,
    take_rows,
    transpose,
)
from tokenizer.vocabulary import AUTOREGRESSIVE, Batch

logger = logging.getLogger(__name__)

ATTENTION_TARGETS = ("query", "key", "value")


class PeftAttachment:
    """Hooks a fine-tuning method into the forward pass. The base class passes everything through."""

    method = "none"

    def project(self, layer: int, target: str, linear: LinearLayer, x: Tensor) -> Tensor:
        return linear(x)

    def intervene(self, layer: int, h: Tensor, mask: np.ndarray) -> Tensor:
        return h

    def named_parameters(self) -> dict[str, Tensor]:
        return {}


NO_PEFT = PeftAttachment()


@dataclass(frozen=True)
class HiddenStates:
    """h^(0) (embeddings) through h^(m) (last block), each (batch, seq, d)."""

    layers: tuple[Tensor, ...]

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, index: int) -> Tensor:
        return self.layers[index]

    @property
    def final(self) -> Tensor:
        return self.layers[-1]

    def select(self, positions: np.ndarray) -> Tensor:
        """h_t^(m) per batch row."""
        return take_rows(self.final, positions)


def attention_bias(mask: np.ndarray, style: str, dtype) -> np.ndarray:
    """Additive (batch, 1, L, L) bias: PAD keys are masked, and future keys too for causal models."""
    mask = np.asarray(mask)
    length = mask.shape[1]
    bias = np.where(mask[:, None, None, :] == 0, MASK_VALUE, 0.0)
    if style == AUTOREGRESSIVE:
        bias = bias + np.triu(np.full((length, length), MASK_VALUE), k=1)[None, None]
    else:
        bias = np.broadcast_to(bias, (mask.shape[0], 1, length, length))
    return np.ascontiguousarray(bias, dtype=dtype)


class SelfAttention:
    def __init__(self, query: LinearLayer, key: LinearLayer, value: LinearLayer, output: LinearLayer, heads: int):
        self.query = query
        self.key = key
        self.value = value
        self.output = output
        self.heads = heads

    def _split(self, x: Tensor) -> Tensor:
        batch, length, hidden = x.shape
        return transpose(reshape(x, (batch, length, self.heads, hidden // self.heads)), (0, 2, 1, 3))

    def attend(self, x: Tensor, bias: np.ndarray, layer: int, peft: PeftAttachment = NO_PEFT) -> Tensor:
        """Concatenated head contexts before the output projection."""
        batch, length, hidden = x.shape
        q = self._split(peft.project(layer, "query", self.query, x))
        k = self._split(peft.project(layer, "key", self.key, x))
        v = self._split(peft.project(layer, "value", self.value, x))

        scores = matmul(q, swap_last(k)) * (1.0 / np.sqrt(hidden // self.heads)) + Tensor(bias)
        context = matmul(softmax(scores, axis=-1), v)
        return reshape(transpose(context, (0, 2, 1, 3)), (batch, length, hidden))

    def __call__(self, x: Tensor, bias: np.ndarray, layer: int, peft: PeftAttachment = NO_PEFT) -> Tensor:
        return self.output(self.attend(x, bias, layer, peft))

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        params = {}
        for name in (*ATTENTION_TARGETS, "output"):
            params.update(getattr(self, name).named_parameters(f"{prefix}.{name}"))
        return params


class FeedForward:
    def __init__(self, up: LinearLayer, down: LinearLayer, activation: str):
        self.up = up
        self.down = down
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(ACTIVATIONS[self.activation](self.up(x)))

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {**self.up.named_parameters(f"{prefix}.up"), **self.down.named_parameters(f"{prefix}.down")}


class TransformerBlock:
    """x -> norm(x + attention(x)) -> norm(. + ffn(.))"""

    def __init__(self, attention: SelfAttention, attention_norm: LayerNorm, ffn: FeedForward, ffn_norm: LayerNorm):
        self.attention = attention
        self.attention_norm = attention_norm
        self.ffn = ffn
        self.ffn_norm = ffn_norm

    def __call__(self, x, bias, layer, peft=NO_PEFT, rate=0.0, rng=None) -> Tensor:
        x = self.attention_norm(x + dropout(self.attention(x, bias, layer, peft), rate, rng))
        return self.ffn_norm(x + dropout(self.ffn(x), rate, rng))

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {
            **self.attention.named_parameters(f"{prefix}.attention"),
            **self.attention_norm.named_parameters(f"{prefix}.attention_norm"),
            **self.ffn.named_parameters(f"{prefix}.ffn"),
            **self.ffn_norm.named_parameters(f"{prefix}.ffn_norm"),
        }


class Transformer:
    def __init__(self, config: ModelConfig, tokens: Embedding, positions: Embedding, blocks: list[TransformerBlock]):
        self.config = config
        self.tokens = tokens
        self.positions = positions
        self.blocks = blocks

    @classmethod
    def initialise(cls, config: ModelConfig) -> Transformer:
        """
        Deterministic from `config.seed`. Draws are made in float64 in a fixed
        order and cast to the current default dtype.
        """
        rng = np.random.default_rng(config.seed)
        d = config.hidden
        tokens = Embedding.initialise(rng, config.vocab_size, d, "tokens")
        positions = Embedding.initialise(rng, config.max_len, d, "positions")
        blocks = []
        for j in range(config.layers):
            name = f"blocks.{j}"
            attention = SelfAttention(
                *(LinearLayer.initialise(rng, d, d, f"{name}.attention.{target}") for target in (*ATTENTION_TARGETS, "output")),
                heads=config.heads,
            )
            ffn = FeedForward(
                LinearLayer.initialise(rng, d, config.ffn_dim, f"{name}.ffn.up"),
                LinearLayer.initialise(rng, config.ffn_dim, d, f"{name}.ffn.down"),
                config.activation,
            )
            blocks.append(
                TransformerBlock(attention, LayerNorm.initialise(d, f"{name}.attention_norm"), ffn, LayerNorm.initialise(d, f"{name}.ffn_norm"))
            )
        return cls(config, tokens, positions, blocks)

    def named_parameters(self) -> dict[str, Tensor]:
        params = {**self.tokens.named_parameters("tokens"), **self.positions.named_parameters("positions")}
        for j, block in enumerate(self.blocks):
            params.update(block.named_parameters(f"blocks.{j}"))
        return params

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.named_parameters().items()}

    def _check_ids(self, ids: np.ndarray) -> None:
        if ids.ndim != 2:
            raise InputError(f"Token ids must be (batch, seq), got shape {ids.shape}")
        if ids.shape[1] > self.config.max_len:
            raise InputError(f"Sequence length {ids.shape[1]} exceeds max_len {self.config.max_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            bad = int(ids.max()) if ids.max() >= self.config.vocab_size else int(ids.min())
            raise InputError(f"Token id {bad} outside the vocabulary of size {self.config.vocab_size}")

    def forward(
        self,
        ids: np.ndarray,
        mask: np.ndarray,
        peft: PeftAttachment = NO_PEFT,
        rng: np.random.Generator | None = None,
    ) -> HiddenStates:
        ids = np.asarray(ids, dtype=np.int64)
        mask = np.asarray(mask)
        self._check_ids(ids)
        rate = self.config.dropout if rng is not None else 0.0

        h = self.tokens(ids) + self.positions(np.arange(ids.shape[1]))
        bias = attention_bias(mask, self.config.style, h.dtype)
        layers = [h]
        for j, block in enumerate(self.blocks):
            h = peft.intervene(j, block(h, bias, j, peft, rate, rng), mask)
            layers.append(h)
        return HiddenStates(tuple(layers))

    def __call__(self, batch: Batch, peft: PeftAttachment = NO_PEFT, rng: np.random.Generator | None = None) -> HiddenStates:
        return self.forward(batch.ids, batch.mask, peft, rng)


def init_parameters(config: ModelConfig) -> dict[str, Tensor]:
    return Transformer.initialise(config).named_parameters()

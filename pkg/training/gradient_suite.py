"""
Finite-difference check of every parameterized operation on a 2-layer, d=8
model at float64.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from model_core.config import ModelConfig
from model_core.transformer import NO_PEFT, PeftAttachment, Transformer
from peft_methods.config import LoraConfig, ReftConfig
from peft_methods.lora import LoraAttachment
from peft_methods.reft import ReftAttachment
from tensor_engine.gradcheck import grad_check_parameter
from tensor_engine.tensor import Tensor, precision
from tokenizer.vocabulary import AUTOREGRESSIVE, MASKED, Batch, TokenizedSequence, collate
from training.head import ClassifierHead, loss

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
# scaled so activations are O(1) and no gradient is lost in rounding noise
EMBEDDING_SCALE = 25.0


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    max_relative_error: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_relative_error) and self.max_relative_error < self.tolerance)


def suite_config(style: str = MASKED, seed: int = 7) -> ModelConfig:
    return ModelConfig(style=style, layers=2, hidden=8, heads=2, ffn_dim=16, vocab_size=10, max_len=8, seed=seed)


def check_batch(style: str) -> Batch:
    rows = [(4, 7, 5, 9), (3, 8)]
    items = []
    for label, ids in enumerate(rows):
        if style == MASKED:
            items.append(TokenizedSequence((2, *ids), (1,) * (len(ids) + 1), 0, label))
        else:
            items.append(TokenizedSequence(ids, (1,) * len(ids), len(ids) - 1, label))
    return collate(items)


class _CheckedModel:
    def __init__(self, style: str, attachment: Callable[[ModelConfig], PeftAttachment] | None = None):
        config = suite_config(style)
        self.model = Transformer.initialise(config)
        self.model.tokens.table.data *= EMBEDDING_SCALE
        self.attachment = attachment(config) if attachment else NO_PEFT
        self.head = ClassifierHead.initialise(np.random.default_rng(11), config.hidden)
        self.batch = check_batch(style)

    def loss(self) -> Tensor:
        hidden = self.model(self.batch, self.attachment)
        return loss(self.head(hidden.select(self.batch.positions)), self.batch.labels)


def _lora(config: ModelConfig) -> LoraAttachment:
    attachment = LoraAttachment.initialise(config, LoraConfig(rank=2, alpha=4.0, targets=("query", "key", "value")), seed=3)
    rng = np.random.default_rng(5)
    for adapter in attachment.adapters.values():
        # a zero B would leave A without gradient
        adapter.B.data[...] = rng.normal(0.0, 0.5, size=adapter.B.shape)
        adapter.A.data[...] = rng.normal(0.0, 0.5, size=adapter.A.shape)
    return attachment


def _reft(config: ModelConfig) -> ReftAttachment:
    attachment = ReftAttachment.initialise(config, ReftConfig(rank=2), seed=3)
    for iv in attachment.interventions.values():
        iv.b.data[...] = np.random.default_rng(9).normal(0.0, 0.5, size=iv.b.shape)
    return attachment


def run_gradient_suite(step: float = 1e-5) -> list[GradCheckResult]:
    results = []
    with precision("float64"):
        checks: list[tuple[str, _CheckedModel, object, str]] = []
        for style in (MASKED, AUTOREGRESSIVE):
            subject = _CheckedModel(style)
            block = subject.model.blocks[0]
            checks += [
                (f"{style}: attention query", subject, block.attention.query, "weight"),
                (f"{style}: attention key", subject, block.attention.key, "weight"),
                (f"{style}: attention value", subject, block.attention.value, "weight"),
                (f"{style}: attention output", subject, block.attention.output, "weight"),
                (f"{style}: feed-forward up", subject, block.ffn.up, "weight"),
                (f"{style}: feed-forward down bias", subject, subject.model.blocks[1].ffn.down, "bias"),
                (f"{style}: layer norm gain", subject, block.attention_norm, "gain"),
                (f"{style}: layer norm shift", subject, block.attention_norm, "shift"),
                (f"{style}: token embedding", subject, subject.model.tokens, "table"),
                (f"{style}: position embedding", subject, subject.model.positions, "table"),
                (f"{style}: classifier head + loss", subject, subject.head, "weight"),
            ]

        lora = _CheckedModel(MASKED, _lora)
        for (layer, target), adapter in lora.attachment.adapters.items():
            if layer == 0:
                checks += [(f"lora {target}: B", lora, adapter, "B"), (f"lora {target}: A", lora, adapter, "A")]

        for style in (MASKED, AUTOREGRESSIVE):
            reft = _CheckedModel(style, _reft)
            iv = reft.attachment.interventions[1]
            checks += [(f"{style} reft: {name}", reft, iv, name) for name in ("R", "W", "b")]

        for name, subject, owner, attribute in checks:
            error = grad_check_parameter(subject.loss, owner, attribute, step=step)
            result = GradCheckResult(name, error)
            logger.log(logging.INFO if result.passed else logging.ERROR, "%-40s %.3e", name, error)
            results.append(result)
    return results

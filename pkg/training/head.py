from __future__ import annotations

import numpy as np

from tensor_engine.tensor import Tensor, cross_entropy, default_dtype, matmul, swap_last

CLASSES = 2
THRESHOLD = 0.5


class ClassifierHead:
    """Two-logit projection of h_t^(m)."""

    def __init__(self, weight: Tensor, bias: Tensor):
        self.weight = weight
        self.bias = bias

    @classmethod
    def initialise(cls, rng: np.random.Generator, hidden: int) -> ClassifierHead:
        bound = 1.0 / np.sqrt(hidden)
        dtype = default_dtype()
        return cls(
            Tensor(rng.uniform(-bound, bound, size=(CLASSES, hidden)).astype(dtype), requires_grad=True, name="head.weight"),
            Tensor(np.zeros(CLASSES, dtype=dtype), requires_grad=True, name="head.bias"),
        )

    def __call__(self, h_t: Tensor) -> Tensor:
        return matmul(h_t, swap_last(self.weight)) + self.bias

    def named_parameters(self) -> dict[str, Tensor]:
        return {"head.weight": self.weight, "head.bias": self.bias}


def loss(logits: Tensor, labels: np.ndarray, class_weights: np.ndarray | None = None) -> Tensor:
    """Mean cross-entropy over the batch, weighted per class when `class_weights` is given."""
    return cross_entropy(logits, labels, reduction="mean", class_weights=class_weights)


def scores_from_logits(logits: np.ndarray) -> np.ndarray:
    """Probability of the anomalous class, computed in float64."""
    logits = np.asarray(logits, dtype=np.float64)
    margin = logits[..., 1] - logits[..., 0]
    return np.where(margin >= 0, 1.0 / (1.0 + np.exp(-np.abs(margin))), np.exp(-np.abs(margin)) / (1.0 + np.exp(-np.abs(margin))))


def labels_from_scores(scores: np.ndarray) -> np.ndarray:
    # a score of exactly 0.5 is normal
    return (np.asarray(scores) > THRESHOLD).astype(np.int64)


def anomaly_score(h_t: Tensor, head: ClassifierHead) -> float:
    return scores_from_logits(head(h_t).data).item()

"""
Finite-difference verification of analytic gradients.

The comparison is element-wise against a central difference; one-sided
differences are also taken so that a kink (|x| at 0, relu at 0) is reported
as an infinite error instead of passing because both sides average out.
"""

from __future__ import annotations

import logging
from typing import Any, Callable

import numpy as np

from core.exceptions import InputError, NumericError
from tensor_engine.tensor import Tensor, precision

logger = logging.getLogger(__name__)

KINK_TOLERANCE = 1e-2


def _evaluate(f: Callable[[Tensor], Tensor], data: np.ndarray) -> float:
    value = f(Tensor(data.copy())).item()
    if not np.isfinite(value):
        raise NumericError(f"grad_check: function value is not finite ({value})")
    return value


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor | np.ndarray, step: float = 1e-5) -> float:
    """
    Max relative error between the backward pass and a central difference.

    relative error per element = |analytic - central| / max(|analytic|, |central|, 1e-8)
    """
    if step <= 0:
        raise InputError(f"grad_check: step must be positive, got {step}")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    with precision("float64"):
        candidate = Tensor(base.copy(), requires_grad=True)
        out = f(candidate)
        if out.data.size != 1:
            raise InputError(f"grad_check: f must return a scalar, got shape {out.shape}")
        if not np.all(np.isfinite(out.data)):
            raise NumericError(f"grad_check: function value is not finite ({out.data})")
        out.backward()
        analytic = np.zeros_like(base) if candidate.grad is None else candidate.grad
        centre = out.item()

        worst = 0.0
        for index in np.ndindex(base.shape):
            shifted = base.copy()
            shifted[index] += step
            upper = _evaluate(f, shifted)
            shifted[index] = base[index] - step
            lower = _evaluate(f, shifted)

            central = (upper - lower) / (2.0 * step)
            forward = (upper - centre) / step
            backward = (centre - lower) / step
            if abs(forward - backward) > KINK_TOLERANCE * max(1.0, abs(central)):
                logger.debug("grad_check: non-differentiable point at index %s", index)
                return float("inf")

            denominator = max(abs(analytic[index]), abs(central), 1e-8)
            worst = max(worst, abs(analytic[index] - central) / denominator)
    return worst


def grad_check_parameter(
    loss: Callable[[], Tensor], owner: Any, attribute: str, step: float = 1e-5
) -> float:
    """
    grad_check a parameter held as `owner.<attribute>`.

    The tensor is swapped for a differentiable copy while `loss` runs and restored afterwards,
    so frozen parameters can be checked without unfreezing them.
    """
    original = getattr(owner, attribute)

    def f(candidate: Tensor) -> Tensor:
        setattr(owner, attribute, candidate)
        return loss()

    try:
        return grad_check(f, original, step=step)
    finally:
        setattr(owner, attribute, original)

"""
Dense arrays with reverse-mode automatic differentiation.

A `Tensor` wraps a numpy array. Every operation on tensors that require
gradients records its parents and a backward closure; `Tensor.backward()`
replays that tape in reverse topological order and frees it afterwards.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from core.exceptions import DimensionError, InputError

_DTYPES = {"float32": np.float32, "float64": np.float64}

_default_dtype: contextvars.ContextVar[type] = contextvars.ContextVar(
    "tensor_default_dtype", default=np.float32
)

LAYER_NORM_EPS = 1e-5
MASK_VALUE = -1e9

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def resolve_dtype(precision: str | type) -> type:
    if isinstance(precision, str):
        try:
            return _DTYPES[precision]
        except KeyError:
            raise InputError(f"Unknown precision '{precision}', expected one of {sorted(_DTYPES)}")
    return np.dtype(precision).type


def default_dtype() -> type:
    return _default_dtype.get()


@contextlib.contextmanager
def precision(dtype: str | type) -> Iterator[type]:
    """Set the dtype new tensors are created with, for the current context only."""
    token = _default_dtype.set(resolve_dtype(dtype))
    try:
        yield _default_dtype.get()
    finally:
        _default_dtype.reset(token)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        dtype = resolve_dtype(dtype) if dtype is not None else None
        if isinstance(data, (np.ndarray, np.generic)) and dtype is None and data.dtype.kind == "f":
            array = np.asarray(data)
        else:
            array = np.asarray(data, dtype=dtype or default_dtype())
        if array.ndim == 0:
            array = array.reshape(())
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    # -- introspection -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # -- autodiff ----------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate gradients from this tensor to every reachable tensor that requires them."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(f"backward() without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)

        order = _topological_order(self)
        pending: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            node.grad = node_grad if node.grad is None else node.grad + node_grad
            if node._backward is None:
                continue
            parent_grads = node._backward(node_grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad
            # the tape is single use
            node._parents = ()
            node._backward = None

    # -- operators ---------------------------------------------------------

    def __add__(self, other) -> Tensor:
        return add(self, other)

    def __radd__(self, other) -> Tensor:
        return add(other, self)

    def __sub__(self, other) -> Tensor:
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other) -> Tensor:
        return add(other, neg(self))

    def __mul__(self, other) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other) -> Tensor:
        return div(self, other)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> Tensor:
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes) -> Tensor:
        return transpose(self, axes or None)

    @property
    def T(self) -> Tensor:
        return transpose(self, None)

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype or default_dtype()))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # plain numbers take the dtype of the tensor they are combined with
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, as_tensor(b, a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return as_tensor(a, b.dtype), b
    return as_tensor(a), as_tensor(b)


def _result(data: np.ndarray, parents: Iterable[Tensor], backward: BackwardFn) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data)
    if any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)

    def backward(grad):
        return (
            _unbroadcast(grad, a.shape) if a.requires_grad else None,
            _unbroadcast(grad, b.shape) if b.requires_grad else None,
        )

    return _result(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)

    def backward(grad):
        return (
            _unbroadcast(grad * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(grad * a.data, b.shape) if b.requires_grad else None,
        )

    return _result(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("div", a, b)

    def backward(grad):
        return (
            _unbroadcast(grad / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-grad * a.data / (b.data * b.data), b.shape) if b.requires_grad else None,
        )

    return _result(a.data / b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda grad: (-grad,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda grad: (grad * out,))


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda grad: (grad / a.data,))


def absolute(a: Tensor) -> Tensor:
    return _result(np.abs(a.data), (a,), lambda grad: (grad * np.sign(a.data),))


def relu(a: Tensor) -> Tensor:
    gate = (a.data > 0).astype(a.dtype)
    return _result(a.data * gate, (a,), lambda grad: (grad * gate,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(grad):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        return (grad * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _result(out, (a,), backward)


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {"gelu": gelu, "relu": relu}


# -- reductions and shape --------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape).copy(),)

    return _result(np.asarray(out, dtype=a.dtype), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view shape {a.shape} as {tuple(shape)}")
    return _result(out, (a,), lambda grad: (grad.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    inverse = np.argsort(axes)
    return _result(np.transpose(a.data, axes), (a,), lambda grad: (np.transpose(grad, inverse),))


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


# -- linear algebra --------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _pair(a, b)
    if a.ndim < 1 or b.ndim < 1:
        raise DimensionError(f"matmul: scalars are not matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise DimensionError(f"matmul: inner extents differ for shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(grad):
        a_data, b_data, g = a.data, b.data, grad
        if b_data.ndim == 1:
            b_data = b_data[:, None]
            g = g[..., None]
        if a_data.ndim == 1:
            a_data = a_data[None, :]
            g = g[..., None, :]
        grad_a = grad_b = None
        if a.requires_grad:
            grad_a = _unbroadcast(np.matmul(g, np.swapaxes(b_data, -1, -2)), a_data.shape).reshape(a.shape)
        if b.requires_grad:
            if b_data.ndim == 2 and a_data.ndim > 2:
                # a shared weight: fold the leading axes into a single GEMM
                grad_b = a_data.reshape(-1, a_data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                grad_b = _unbroadcast(np.matmul(np.swapaxes(a_data, -1, -2), g), b_data.shape)
            grad_b = grad_b.reshape(b.shape)
        return grad_a, grad_b

    return _result(out, (a, b), backward)


# -- normalisation ---------------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(grad):
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - log_norm

    def backward(grad):
        return (grad - np.exp(out) * grad.sum(axis=axis, keepdims=True),)

    return _result(out, (a,), backward)


def normalize(a: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Zero-mean, unit-variance over the last axis (layer norm before its affine terms)."""
    centred = a.data - a.data.mean(axis=-1, keepdims=True)
    variance = (centred * centred).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(variance + eps)
    out = centred * inv_std

    def backward(grad):
        g_mean = grad.mean(axis=-1, keepdims=True)
        gy_mean = (grad * out).mean(axis=-1, keepdims=True)
        return (inv_std * (grad - g_mean - out * gy_mean),)

    return _result(out.astype(a.dtype, copy=False), (a,), backward)


# -- indexing --------------------------------------------------------------


def take(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup `weight[ids]` (embedding tables)."""
    ids = np.asarray(ids, dtype=np.int64)

    def backward(grad):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids, grad)
        return (full,)

    return _result(weight.data[ids], (weight,), backward)


def take_rows(h: Tensor, positions: np.ndarray) -> Tensor:
    """Select `h[b, positions[b]]` from a (batch, seq, d) tensor."""
    positions = np.asarray(positions, dtype=np.int64)
    rows = np.arange(h.shape[0])

    def backward(grad):
        full = np.zeros_like(h.data)
        full[rows, positions] = grad
        return (full,)

    return _result(h.data[rows, positions], (h,), backward)


def add_rows(h: Tensor, positions: np.ndarray, delta: Tensor) -> Tensor:
    """Return `h` with `delta[b]` added at `h[b, positions[b]]`; other positions are copied untouched."""
    positions = np.asarray(positions, dtype=np.int64)
    rows = np.arange(h.shape[0])
    if delta.shape != (h.shape[0], h.shape[-1]):
        raise DimensionError(f"add_rows: delta shape {delta.shape} does not fit {h.shape}")
    out = h.data.copy()
    out[rows, positions] += delta.data

    def backward(grad):
        return grad, grad[rows, positions]

    return _result(out, (h, delta), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rate <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)
    return _result(a.data * keep, (a,), lambda grad: (grad * keep,))


# -- losses ----------------------------------------------------------------


def cross_entropy(
    logits: Tensor, labels: np.ndarray, reduction: str = "mean", class_weights: np.ndarray | None = None
) -> Tensor:
    """
    Softmax cross-entropy of (batch, classes) logits against integer labels.

    With `class_weights` every example counts `class_weights[label]` times and
    the mean divides by the summed weight of the batch.
    """
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} do not match labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InputError(f"cross_entropy: labels must lie in [0, {logits.shape[1] - 1}], got {np.unique(labels)}")
    selector = np.eye(logits.shape[1], dtype=logits.dtype)[labels]
    count = float(max(len(labels), 1))
    if class_weights is not None:
        weights = np.asarray(class_weights, dtype=logits.dtype)
        if weights.shape != (logits.shape[1],) or np.any(weights < 0):
            raise InputError(f"cross_entropy: expected {logits.shape[1]} non-negative class weights, got {weights}")
        selector = selector * weights
        count = float(weights[labels].sum()) or 1.0
    total = neg((log_softmax(logits, axis=-1) * Tensor(selector)).sum())
    if reduction == "sum":
        return total
    return total * (1.0 / count)

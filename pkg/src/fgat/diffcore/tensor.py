"""Dense float64 tensors with reverse-mode gradients.

Every operation records enough context to push gradients back to its
inputs; ``backward`` walks the tape in reverse topological order and
accumulates into ``Tensor.grad``. Gradients of requires-grad tensors are
zero-initialised at construction, so parameters that never participate in
a loss keep an exactly-zero gradient.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from fgat.exceptions import ContractError, ShapeError

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "add",
    "sub",
    "neg",
    "mul",
    "div",
    "matmul",
    "concat",
    "reshape",
    "slice_rows",
    "gather",
    "scatter_add",
    "leaky_relu",
    "relu",
    "elu",
    "exp",
    "log",
    "pow_scalar",
    "tsum",
    "tmean",
    "tmax",
    "softmax",
    "log_softmax",
    "segment_softmax",
    "backward",
]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (read-only forward passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A constant view of the same values, cut off the tape."""
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars and arrays are promoted to constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[], None]) -> Tensor:
    """Wrap op output; tape is recorded only when a grad-tracked input flows in.

    Gradient buffers of intermediate results are materialised on first use
    during the reverse pass; leaf tensors keep their eagerly-zeroed buffer.
    """
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = track
    out.grad = None
    out._parents = tuple(p for p in parents if p.requires_grad) if track else ()
    out._backward = backward if track else None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += _unbroadcast(grad, t.data.shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from None
    def backward():
        if a.requires_grad:
            _accumulate(a, out.grad)
        if b.requires_grad:
            _accumulate(b, out.grad)

    out = _result(data, (a, b), backward)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}") from None
    def backward():
        if a.requires_grad:
            _accumulate(a, out.grad)
        if b.requires_grad:
            _accumulate(b, -out.grad)

    out = _result(data, (a, b), backward)
    return out


def neg(a: Tensor) -> Tensor:
    out = _result(-a.data, (a,), lambda: _accumulate(a, -out.grad))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from None
    def backward():
        if a.requires_grad:
            _accumulate(a, out.grad * b.data)
        if b.requires_grad:
            _accumulate(b, out.grad * a.data)

    out = _result(data, (a, b), backward)
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data / b.data
    except ValueError:
        raise ShapeError(f"div: incompatible shapes {a.shape} and {b.shape}") from None

    def backward():
        if a.requires_grad:
            _accumulate(a, out.grad / b.data)
        if b.requires_grad:
            _accumulate(b, -out.grad * a.data / (b.data * b.data))

    out = _result(data, (a, b), backward)
    return out


def pow_scalar(a: Tensor, exponent: float) -> Tensor:
    data = a.data**exponent

    def backward():
        _accumulate(a, out.grad * exponent * a.data ** (exponent - 1.0))

    out = _result(data, (a,), backward)
    return out


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    data = a.data @ b.data

    def backward():
        if a.requires_grad:
            _accumulate(a, out.grad @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ out.grad)

    out = _result(data, (a, b), backward)
    return out


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ContractError("concat: need at least one tensor")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[t.shape for t in ts]} along axis {axis}"
        ) from None
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward():
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * data.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, out.grad[tuple(sl)])

    out = _result(data, ts, backward)
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)
    out = _result(data, (a,), lambda: _accumulate(a, out.grad.reshape(a.data.shape)))
    return out


def _materialise_grad(t: Tensor) -> np.ndarray:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row range of ``a`` along axis 0."""
    if not 0 <= start <= stop <= a.data.shape[0]:
        raise ShapeError(f"slice_rows: range [{start}, {stop}) outside {a.shape}")
    data = a.data[start:stop]

    def backward():
        if a.requires_grad:
            _materialise_grad(a)[start:stop] += out.grad

    out = _result(data, (a,), backward)
    return out


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Select rows of ``a`` (axis 0) by integer index, with repetition."""
    index = np.asarray(index, dtype=np.int64)
    data = a.data[index]

    def backward():
        if a.requires_grad:
            np.add.at(_materialise_grad(a), index, out.grad)

    out = _result(data, (a,), backward)
    return out


def scatter_add(a: Tensor, index: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets given by ``index``."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != a.data.shape[0]:
        raise ShapeError(f"scatter_add: index length {index.shape[0]} != rows {a.shape[0]}")
    if a.data.ndim == 1:
        data = np.bincount(index, weights=a.data, minlength=num_segments)
    else:
        data = np.zeros((num_segments,) + a.data.shape[1:], dtype=np.float64)
        np.add.at(data, index, a.data)

    out = _result(data, (a,), lambda: _accumulate(a, out.grad[index]))
    return out


# ---------------------------------------------------------------------------
# nonlinearities


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0.0, 1.0, slope)
    out = _result(a.data * factor, (a,), lambda: _accumulate(a, out.grad * factor))
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    out = _result(np.where(mask, a.data, 0.0), (a,), lambda: _accumulate(a, out.grad * mask))
    return out


def elu(a: Tensor) -> Tensor:
    expm1 = np.expm1(a.data)
    data = np.where(a.data > 0.0, a.data, expm1)
    factor = np.where(a.data > 0.0, 1.0, expm1 + 1.0)
    out = _result(data, (a,), lambda: _accumulate(a, out.grad * factor))
    return out


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    out = _result(data, (a,), lambda: _accumulate(a, out.grad * data))
    return out


def log(a: Tensor) -> Tensor:
    out = _result(np.log(a.data), (a,), lambda: _accumulate(a, out.grad / a.data))
    return out


# ---------------------------------------------------------------------------
# reductions


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.data.shape))

    out = _result(np.asarray(data, dtype=np.float64), (a,), backward)
    return out


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.data.shape) / count)

    out = _result(np.asarray(data, dtype=np.float64), (a,), backward)
    return out


def tmax(a: Tensor, axis: int) -> Tensor:
    """Maximum along one axis; gradient flows to the first maximal entry."""
    data = a.data.max(axis=axis)
    argmax = np.expand_dims(a.data.argmax(axis=axis), axis)

    def backward():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            np.put_along_axis(g, argmax, np.expand_dims(out.grad, axis), axis=axis)
            _materialise_grad(a)
            a.grad += g

    out = _result(data, (a,), backward)
    return out


# ---------------------------------------------------------------------------
# softmax family (composed from primitives; the max shift is a constant and
# cancels exactly, so gradients stay analytic)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor(a.data.max(axis=axis, keepdims=True))
    e = exp(sub(a, shift))
    return div(e, tsum(e, axis=axis if axis >= 0 else a.data.ndim + axis, keepdims=True))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor(a.data.max(axis=axis, keepdims=True))
    z = sub(a, shift)
    ax = axis if axis >= 0 else a.data.ndim + axis
    return sub(z, log(tsum(exp(z), axis=ax, keepdims=True)))


def segment_softmax(scores: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of a 1-D score vector within each segment.

    The stabilising shift is the global score maximum; per-segment softmax is
    invariant to any constant shift, so the result is exact. Segments with no
    member simply produce no output entries.
    """
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if scores.data.ndim != 1:
        raise ShapeError(f"segment_softmax: expected 1-D scores, got {scores.shape}")
    shift = float(scores.data.max()) if scores.data.size else 0.0
    e = exp(sub(scores, Tensor(shift)))
    denom = scatter_add(e, segment_ids, num_segments)
    return div(e, gather(denom, segment_ids))


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor) -> None:
    """Populate gradients of every requires-grad tensor reachable from ``loss``."""
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    _materialise_grad(loss)
    loss.grad += np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()

"""Small dense-array engine with reverse-mode differentiation.

Only the operations the Matrix-SE model needs are provided. Every op builds
a node on an implicit tape (parent links plus a backward closure); calling
:func:`backward` on a scalar walks the tape in reverse topological order and
accumulates ``.grad`` on every leaf that has ``requires_grad`` set.

Training runs in float32. Gradient checks switch to float64 with
:func:`precision`.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import expit

from . import _kernels

__all__ = [
    "Array",
    "apply_gelu",
    "apply_linear",
    "apply_rmsnorm",
    "apply_sigmoid",
    "add",
    "backward",
    "default_dtype",
    "embed",
    "mul",
    "permute_select",
    "precision",
    "reshape",
    "softmax_xent_loss",
]

RMS_EPS = 1e-6

_dtype = np.dtype(np.float32)


def default_dtype() -> np.dtype:
    return _dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily change the dtype used for newly created arrays."""
    global _dtype
    previous = _dtype
    _dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _dtype = previous


class Array:
    """Dense numeric array that can take part in the gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None or not isinstance(data, np.ndarray) or not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(dtype or _dtype)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Array, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> dict:
        return backward(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Array(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


def _as_array(x) -> Array:
    return x if isinstance(x, Array) else Array(x)


def _node(data: np.ndarray, parents: Sequence[Array], fn) -> Array:
    out = Array(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# glue ops


def add(a, b) -> Array:
    a, b = _as_array(a), _as_array(b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), fn)


def mul(a, b) -> Array:
    a, b = _as_array(a), _as_array(b)

    def fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), fn)


def reshape(x: Array, shape: Sequence[int]) -> Array:
    src = x.shape

    def fn(g):
        return (g.reshape(src),)

    return _node(x.data.reshape(shape), (x,), fn)


def embed(table: Array, ids) -> Array:
    """Row lookup ``table[ids]``; the gradient is scattered back with add."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise TypeError("embedding ids must be integers")
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise ValueError(f"symbol out of vocabulary: ids must lie in [0, {vocab})")

    def fn(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.ravel(), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _node(table.data[ids], (table,), fn)


# ---------------------------------------------------------------------------
# model ops


def apply_linear(x: Array, weight: Array, bias: Array | None = None) -> Array:
    """Affine map over the trailing dimension: ``out_j = sum_i x_i w_ij + b_j``."""
    d_in, d_out = weight.shape
    if x.shape[-1] != d_in:
        raise ValueError(
            f"apply_linear: input trailing extent {x.shape[-1]} does not match weight input extent {d_in} "
            f"(x shape {x.shape}, weight shape {weight.shape})"
        )
    if bias is not None and bias.shape != (d_out,):
        raise ValueError(f"apply_linear: bias shape {bias.shape} != ({d_out},)")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, d_in)
    out = x2 @ weight.data
    if bias is not None:
        out += bias.data

    def fn(g):
        g2 = g.reshape(-1, d_out)
        gx = (g2 @ weight.data.T).reshape(*lead, d_in) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out.reshape(*lead, d_out), parents, fn)


def apply_gelu(x: Array) -> Array:
    """Exact GELU, ``x * Phi(x)`` with Phi the standard normal CDF."""

    def fn(g):
        return (_kernels.gelu_grad(x.data, g),)

    return _node(_kernels.gelu(x.data), (x,), fn)


def apply_rmsnorm(x: Array, gain: Array, eps: float = RMS_EPS) -> Array:
    d = x.shape[-1]
    if gain.shape != (d,):
        raise ValueError(f"apply_rmsnorm: gain shape {gain.shape} does not match trailing extent {d}")
    x2 = np.ascontiguousarray(x.data.reshape(-1, d))
    out, inv = _kernels.rmsnorm(x2, gain.data, eps)

    def fn(g):
        gx, ggain = _kernels.rmsnorm_grad(x2, gain.data, inv, np.ascontiguousarray(g.reshape(-1, d)))
        return gx.reshape(x.shape), ggain

    return _node(out.reshape(x.shape), (x, gain), fn)


def apply_sigmoid(x: Array) -> Array:
    y = expit(x.data)

    def fn(g):
        return (g * y * (1.0 - y),)

    return _node(y, (x,), fn)


def permute_select(x: Array, table, axis: int = 0) -> Array:
    """Gather ``out[j] = x[table[j]]`` along ``axis``.

    ``table`` may be a :class:`~matrixse.routing.PermTable` (its cached inverse
    is used for the backward scatter) or any integer sequence.
    """
    inverse = getattr(table, "inverse", None)
    idx = np.asarray(getattr(table, "table", table))
    n = x.shape[axis]
    if idx.ndim != 1 or len(idx) != n:
        raise ValueError(f"permute_select: table length {idx.size} != extent {n} along axis {axis}")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError(f"permute_select: table entries must lie in [0, {n})")

    def fn(g):
        if inverse is not None:
            return (np.take(g, inverse, axis=axis),)
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (gx,)

    return _node(np.take(x.data, idx, axis=axis), (x,), fn)


def softmax_xent_loss(logits: Array, labels, mask) -> Array:
    """Mean over masked positions of ``-log softmax(logits)[label]``."""
    if logits.data.ndim != 2:
        raise ValueError(f"softmax_xent_loss: logits must be [n, C], got {logits.shape}")
    n, classes = logits.shape
    labels = np.asarray(labels).reshape(-1)
    mask = np.asarray(mask).reshape(-1).astype(logits.dtype)
    if labels.shape[0] != n or mask.shape[0] != n:
        raise ValueError("softmax_xent_loss: labels and mask must match the leading extent of logits")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"softmax_xent_loss: labels must lie in [0, {classes})")
    count = float(mask.sum())
    if count == 0:
        raise ValueError("softmax_xent_loss: mask selects no positions")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    nll = lse - shifted[np.arange(n), labels]
    loss = np.asarray((nll * mask).sum() / count, dtype=logits.dtype)

    def fn(g):
        probs = np.exp(shifted - lse[:, None])
        probs[np.arange(n), labels] -= 1.0
        return (probs * (mask[:, None] * (g / count)),)

    return _node(loss, (logits,), fn)


# ---------------------------------------------------------------------------
# tape traversal


def _topological(root: Array) -> list[Array]:
    order: list[Array] = []
    seen: set[int] = set()
    stack: list[tuple[Array, bool]] = [(root, False)]
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
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Array) -> dict[Array, np.ndarray]:
    """Reverse-mode accumulation from a scalar ``loss``.

    Leaf gradients are accumulated into ``leaf.grad``; the returned mapping
    holds the gradient contributed by this call for each reachable leaf.
    """
    if loss.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    touched: dict[Array, np.ndarray] = {}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            touched[node] = g
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = pg.astype(parent.dtype, copy=False)
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    return touched

"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` whenever
at least one operand requires a gradient.  Outside a tape nothing is
recorded, which is how inference paths avoid bookkeeping cost.

>>> w = Tensor([1.0, 2.0], requires_grad=True)
>>> with Tape() as tape:
...     loss = (w * w).sum()
>>> tape.backward(loss, [w])[0]
array([2., 4.])
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError

_TAPES: list["Tape"] = []


def _active_tape():
    return _TAPES[-1] if _TAPES else None


class Node:
    __slots__ = ("out", "parents", "vjp", "op")

    def __init__(self, out, parents, vjp, op):
        self.out = out
        self.parents = parents
        self.vjp = vjp
        self.op = op


class Tape:
    """Ordered record of the primitive ops executed inside a ``with`` block."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def record(self, out, parents, vjp, op):
        self.nodes.append(Node(out, parents, vjp, op))

    def backward(self, loss: "Tensor", params: Sequence["Tensor"]) -> list[np.ndarray]:
        """Gradients of the scalar ``loss`` with respect to each of ``params``.

        Parameters never touched by the recorded computation get a zero
        gradient.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        adj: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = adj.pop(id(node.out), None)
            if g is None:
                continue
            grads = node.vjp(g)
            for parent, pg in zip(node.parents, grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adj:
                    adj[key] = adj[key] + pg
                else:
                    adj[key] = pg
        out = []
        for p in params:
            g = adj.get(id(p))
            out.append(np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64))
        return out


def backward(loss: "Tensor", graph: Tape, params: Sequence["Tensor"]) -> list[np.ndarray]:
    """Functional alias for :meth:`Tape.backward`."""
    return graph.backward(loss, params)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: tuple, vjp: Callable, op: str) -> "Tensor":
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        tape.record(out, parents, vjp, op)
        return out
    return Tensor(data)


class Tensor:
    """Immutable wrapper around a float64 ndarray."""

    __slots__ = ("data", "requires_grad")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_scalar(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=4)}{flag})"

    def __len__(self):
        return len(self.data)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, k):
        return power(self, k)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # reductions / views ---------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


def _raise_scalar(t):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def vjp(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return _make(ad * bd, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def vjp(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return _make(out, (a, b), vjp, "div")


def power(a, k: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    if k == 2:
        return _make(ad * ad, (a,), lambda g: (2.0 * g * ad,), "pow")
    return _make(ad ** k, (a,), lambda g: (g * k * ad ** (k - 1),), "pow")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def silu(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-ad))
    out = ad * s

    def vjp(g):
        r = ad - out
        r += 1.0
        r *= s
        r *= g
        return (r,)

    return _make(out, (a,), vjp, "silu")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """Tanh-approximated GELU."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    inner = _GELU_C * x * (1.0 + 0.044715 * x2)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner),)

    return _make(out, (a,), vjp, "gelu")


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise DimensionError(f"matmul needs operands of rank >= 2, got {ad.shape} and {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {ad.shape} @ {bd.shape}")

    if bd.ndim == 2 and ad.ndim > 2:
        # fold leading axes so a single GEMM serves the whole batch
        a2 = ad.reshape(-1, ad.shape[-1])

        def vjp(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ bd.T).reshape(ad.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return _make((a2 @ bd).reshape(ad.shape[:-1] + (bd.shape[-1],)), (a, b), vjp, "matmul")

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _make(ad @ bd, (a, b), vjp, "matmul")


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(out, (a,), vjp, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),), "swapaxes")


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    items = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in items)

    def vjp(g):
        full = np.zeros(shape)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _make(a.data[idx], (a,), vjp, "getitem")


def take(table, indices) -> Tensor:
    """Row lookup ``table[indices]`` (embedding gather)."""
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.intp)
    shape = table.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _make(table.data[idx], (table,), vjp, "take")


def concat(items: Iterable, axis: int = -1) -> Tensor:
    items = [as_tensor(x) for x in items]
    sizes = [x.shape[axis] for x in items]
    cuts = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([x.data for x in items], axis=axis), tuple(items),
                 lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def pad_last(a, n: int) -> Tensor:
    """Append ``n`` zeros along the last axis."""
    a = as_tensor(a)
    if n == 0:
        return a
    width = [(0, 0)] * (a.ndim - 1) + [(0, n)]
    return _make(np.pad(a.data, width), (a,), lambda g: (g[..., :-n],), "pad")


def linear_map(a, fn: Callable, adjoint: Callable) -> Tensor:
    """Apply a fixed linear operator ``fn`` whose adjoint is ``adjoint``."""
    a = as_tensor(a)
    return _make(fn(a.data), (a,), lambda g: (adjoint(g),), "linear_map")


# ---------------------------------------------------------------------------
# fused primitives
# ---------------------------------------------------------------------------

def softmax(v, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    v = as_tensor(v)
    if v.data.size == 0 or v.data.ndim == 0:
        raise DimensionError("softmax of an empty tensor")
    z = v.data - v.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (v,), vjp, "softmax")


def layer_norm(x, gain, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale by ``gain``."""
    x, gain = as_tensor(x), as_tensor(gain)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    n = xd.shape[-1]

    def vjp(g):
        gg = _unbroadcast(g * xhat, gd.shape) if gain.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gd
            gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / n)
        return gx, gg

    return _make(xhat * gd, (x, gain), vjp, "layer_norm")


def sq_norm_rows(a) -> Tensor:
    """Squared 2-norm over every axis but the first."""
    a = as_tensor(a)
    ad = a.data
    axes = tuple(range(1, ad.ndim))
    return _make((ad * ad).sum(axis=axes), (a,),
                 lambda g: (2.0 * ad * g.reshape((-1,) + (1,) * len(axes)),), "sq_norm_rows")

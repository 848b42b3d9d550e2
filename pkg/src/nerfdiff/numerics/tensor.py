"""Tape-based reverse-mode automatic differentiation over float32 arrays.

Differentiable ops only record onto an active :class:`Graph`. Outside a
``with Graph():`` block every op still computes its value but nothing is
recorded, which is how rendering and sampling run without tape overhead.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from nerfdiff.errors import ContractError, DimensionError, DomainError, NumericError

DTYPE = np.float32

_ACTIVE: list["Graph"] = []


class Tensor:
    """Dense float32 array that may participate in a recorded graph."""

    __slots__ = ("data", "requires_grad", "name", "grad", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all of these route through `elementwise`
    def __add__(self, other):
        return elementwise("add", self, other)

    def __radd__(self, other):
        return elementwise("add", other, self)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __rsub__(self, other):
        return elementwise("sub", other, self)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        return elementwise("mul", other, self)

    def __truediv__(self, other):
        return elementwise("div", self, other)

    def __rtruediv__(self, other):
        return elementwise("div", other, self)

    def __neg__(self):
        return elementwise("neg", self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


class _Record:
    __slots__ = ("op", "out", "inputs", "backward")

    def __init__(self, op: str, out: Tensor, inputs: Sequence[Tensor], backward: Callable):
        self.op = op
        self.out = out
        self.inputs = tuple(inputs)
        self.backward = backward


class Graph:
    """Ordered tape of op records; execution order is record order.

    Use as a context manager. A graph is rebuilt for each forward pass and
    is not meant to be shared between threads.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Graph":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.pop()

    def __len__(self) -> int:
        return len(self.records)


def active_graph() -> Graph | None:
    return _ACTIVE[-1] if _ACTIVE else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(op: str, arr: np.ndarray) -> None:
    # cheap float32 sum first; it can only overflow on huge finite values, so confirm
    if not math.isfinite(float(arr.sum())) and not bool(np.isfinite(arr).all()):
        raise NumericError(f"non-finite value produced by op '{op}'")


def _emit(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    data = np.asarray(data, dtype=DTYPE)
    _check_finite(op, data)
    graph = active_graph()
    needs = graph is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        graph.records.append(_Record(op, out, inputs, backward))
    return out


def backward(graph: Graph, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-accumulate d(loss)/d(leaf) for every leaf reachable on ``graph``.

    Leaves are tensors with ``requires_grad`` that were not produced by a
    recorded op (parameters). Their ``.grad`` is overwritten and the same
    arrays are returned keyed by tensor.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    produced = {id(r.out) for r in graph.records}
    if id(loss) not in produced:
        raise ContractError("loss was not recorded on this graph")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=DTYPE)}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(graph.records):
        g_out = grads.pop(id(rec.out), None)
        if g_out is None:
            continue
        g_ins = rec.backward(g_out)
        for t, g in zip(rec.inputs, g_ins):
            if g is None or not t.requires_grad:
                continue
            key = id(t)
            if key not in produced:
                leaves[key] = t
            g = np.asarray(g, dtype=DTYPE)
            prev = grads.get(key)
            grads[key] = g if prev is None else prev + g
    result = {}
    for key, t in leaves.items():
        g = grads.get(key)
        if g is None:
            g = np.zeros(t.shape, dtype=DTYPE)
        t.grad = g
        result[t] = g
    return result


# ---------------------------------------------------------------------------
# elementwise

def _pair(a, b) -> tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"cannot broadcast {a.shape} with {b.shape}")
    return a, b


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum(dtype=np.float64), dtype=DTYPE).reshape(shape)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_UNARY = {"exp", "sin", "cos", "softplus", "sigmoid", "relu", "neg", "square", "log", "sqrt"}
_BINARY = {"add", "sub", "mul", "div"}


def elementwise(kind: str, x, y=None) -> Tensor:
    """Apply a pointwise op. Binary kinds broadcast scalars or equal shapes only."""
    if kind in _BINARY:
        if y is None:
            raise ContractError(f"'{kind}' needs two operands")
        return _binary(kind, x, y)
    if kind not in _UNARY:
        raise ContractError(f"unknown elementwise kind '{kind}'")
    x = as_tensor(x)
    a = x.data
    if kind == "exp":
        with np.errstate(over="ignore"):  # overflow is reported by the finite check
            out = np.exp(a)
        bw = lambda g: (g * out,)
    elif kind == "sin":
        out = np.sin(a)
        bw = lambda g: (g * np.cos(a),)
    elif kind == "cos":
        out = np.cos(a)
        bw = lambda g: (-g * np.sin(a),)
    elif kind == "softplus":
        out = _softplus(a)
        bw = lambda g: (g * _sigmoid(a),)
    elif kind == "sigmoid":
        out = _sigmoid(a)
        bw = lambda g: (g * out * (1.0 - out),)
    elif kind == "relu":
        out = np.maximum(a, 0)
        bw = lambda g: (g * (a > 0),)
    elif kind == "neg":
        out = -a
        bw = lambda g: (-g,)
    elif kind == "square":
        out = a * a
        bw = lambda g: (2.0 * g * a,)
    elif kind == "log":
        if np.any(a <= 0):
            raise DomainError("log of non-positive value")
        out = np.log(a)
        bw = lambda g: (g / a,)
    else:  # sqrt
        if np.any(a < 0):
            raise DomainError("sqrt of negative value")
        out = np.sqrt(a)
        bw = lambda g: (g * 0.5 / np.maximum(out, np.finfo(DTYPE).tiny),)
    return _emit(kind, out, (x,), bw)


def _binary(kind: str, x, y) -> Tensor:
    x, y = _pair(x, y)
    a, b = x.data, y.data
    sa, sb = x.shape, y.shape
    if kind == "add":
        out = a + b
        bw = lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    elif kind == "sub":
        out = a - b
        bw = lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    elif kind == "mul":
        out = a * b
        bw = lambda g: (_unbroadcast(g * b, sa), _unbroadcast(g * a, sb))
    else:
        if np.any(b == 0):
            raise DomainError("division by zero")
        out = a / b
        bw = lambda g: (_unbroadcast(g / b, sa), _unbroadcast(-g * a / (b * b), sb))
    return _emit(kind, out, (x, y), bw)


def add(x, y):
    return elementwise("add", x, y)


def sub(x, y):
    return elementwise("sub", x, y)


def mul(x, y):
    return elementwise("mul", x, y)


def div(x, y):
    return elementwise("div", x, y)


def neg(x):
    return elementwise("neg", x)


def exp(x):
    return elementwise("exp", x)


def sin(x):
    return elementwise("sin", x)


def cos(x):
    return elementwise("cos", x)


def softplus(x):
    return elementwise("softplus", x)


def sigmoid(x):
    return elementwise("sigmoid", x)


def relu(x):
    return elementwise("relu", x)


def square(x):
    return elementwise("square", x)


# ---------------------------------------------------------------------------
# linear algebra and reductions

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not chain")
    A, B = a.data, b.data
    return _emit("matmul", A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def linear(x, w, b=None) -> Tensor:
    """Affine map ``x @ w + b`` with ``b`` broadcast over rows."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"linear shapes {x.shape} and {w.shape} do not chain")
    X, W = x.data, w.data
    out = X @ W
    gx = (lambda g: g @ W.T) if x.requires_grad else (lambda g: None)
    if b is None:
        return _emit("linear", out, (x, w), lambda g: (gx(g), X.T @ g))
    b = as_tensor(b)
    if b.shape != (w.shape[1],):
        raise DimensionError(f"bias shape {b.shape} does not match {w.shape[1]} outputs")
    out += b.data
    ones = np.ones(X.shape[0], dtype=DTYPE)
    return _emit("linear", out, (x, w, b), lambda g: (gx(g), X.T @ g, ones @ g))


def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape
    out = x.data.sum(axis=axis, dtype=np.float64)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(DTYPE),)

    return _emit("sum", out, (x,), bw)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    shape = x.shape
    out = x.data.mean(axis=axis, dtype=np.float64)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).astype(DTYPE),)

    return _emit("mean", out, (x,), bw)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _emit("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    ax = axis % xs[0].ndim
    for t in xs[1:]:
        if t.ndim != xs[0].ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, xs[0].shape)) if i != ax
        ):
            raise DimensionError(f"concat shapes {[t.shape for t in xs]} disagree off axis {ax}")
    sizes = [t.shape[ax] for t in xs]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in xs], axis=ax)
    return _emit("concat", out, xs, lambda g: tuple(np.split(g, cuts, axis=ax)))


def take(x, index) -> Tensor:
    """Numpy-style indexing; the backward scatters with ``np.add.at``."""
    x = as_tensor(x)
    shape = x.shape

    def bw(g):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, index, g)
        return (full,)

    return _emit("take", x.data[index], (x,), bw)


def mse(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.shape != b.shape:
        raise DimensionError(f"mse shapes {a.shape} and {b.shape} differ")
    return mean(square(sub(a, b)))


def custom(op: str, data: np.ndarray, inputs: Sequence, backward: Callable) -> Tensor:
    """Record a fused op whose analytic backward is supplied by the caller.

    ``backward`` maps the output gradient to one gradient (or None) per input.
    """
    return _emit(op, data, [as_tensor(t) for t in inputs], backward)

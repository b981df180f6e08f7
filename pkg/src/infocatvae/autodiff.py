"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Operations are recorded on the innermost active :class:`Tape` whenever one of
their inputs requires a gradient. Outside a tape nothing is recorded, so
evaluation code pays no bookkeeping cost::

    with Tape() as tape:
        loss = ad.mean(ad.square(ad.matmul(x, w)))
    tape.backward(loss)
    w.grad

Broadcasting is limited to a tensor combined with a scalar; the only other
shape-changing conveniences are :func:`add_bias` (row-vector bias) and the
axis reductions of :func:`sum`.

Tape policy: :meth:`Tape.backward` clears the tape unless ``retain=True``.
Leaf gradients accumulate (``+=``) into ``Tensor.grad`` across calls.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Incompatible operand shapes for an operation."""

    def __init__(self, kind, *shapes):
        self.kind = kind
        self.shapes = shapes
        shown = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{kind}: incompatible shapes {shown}")


class NumericalError(FloatingPointError):
    """An operation left the finite range or hit a domain violation."""


class TapeError(RuntimeError):
    pass


class Tensor:
    """A dense array that may participate in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad", "name", "is_leaf")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self.is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(scalar_mul(self, -1.0), other)

    def __mul__(self, other):
        if _is_number(other):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __truediv__(self, other):
        if not _is_number(other):
            raise TypeError("only division by a Python scalar is supported")
        return scalar_mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)


def _is_number(x):
    return isinstance(x, (int, float, np.floating, np.integer))


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


class _Node:
    __slots__ = ("kind", "inputs", "output", "backward")

    def __init__(self, kind, inputs, output, backward):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward = backward


_local = threading.local()


def _stack():
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape():
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations for one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._outputs: set[int] = set()

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:
            stack.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, node: _Node):
        self.nodes.append(node)
        self._outputs.add(id(node.output))

    def clear(self):
        self.nodes.clear()
        self._outputs.clear()

    def backward(self, root: Tensor, retain: bool = False) -> None:
        """Populate ``grad`` on every requires-grad leaf reachable from ``root``."""
        if not self.nodes:
            raise TapeError("backward called on an empty tape (no forward pass recorded)")
        if root.data.size != 1:
            raise TapeError(f"backward root must be a scalar, got shape {root.shape}")
        if id(root) not in self._outputs:
            raise TapeError("backward root was not produced on this tape")

        grads = {id(root): np.ones_like(root.data)}
        leaves = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if inp.is_leaf:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            g = grads[key].astype(leaf.data.dtype, copy=False)
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        if not retain:
            self.clear()


def backward(tape: Tape, root: Tensor, retain: bool = False) -> None:
    tape.backward(root, retain=retain)


def _finite(kind, out):
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"{kind} produced non-finite values")
    return out


def _make(kind, out, inputs, backward_fn):
    """Wrap a forward result and record it when any input needs a gradient."""
    _finite(kind, out)
    t = Tensor(out)
    tape = active_tape()
    if tape is not None and any(i.requires_grad for i in inputs):
        t.requires_grad = True
        t.is_leaf = False
        tape.record(_Node(kind, tuple(inputs), t, backward_fn))
    return t


def _same_or_scalar(kind, a: Tensor, b: Tensor):
    if a.shape == b.shape or a.size == 1 and a.data.ndim == 0 or b.size == 1 and b.data.ndim == 0:
        return
    raise ShapeError(kind, a.shape, b.shape)


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(b, dtype=a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(a, dtype=b.dtype), b
    return as_tensor(a), as_tensor(b)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


# ---------------------------------------------------------------- binary ops


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    out = a.data @ b.data

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _make("matmul", out, (a, b), bw)


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _same_or_scalar("add", a, b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", out, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _same_or_scalar("sub", a, b)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", out, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _same_or_scalar("mul", a, b)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make("mul", out, (a, b), bw)


def scalar_mul(a, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)
    out = a.data * s
    return _make("scalar_mul", out, (a,), lambda g: (g * s,))


def add_bias(x, b) -> Tensor:
    """``x + b`` with ``b`` a row vector of length ``x.shape[1]``."""
    x, b = as_tensor(x), as_tensor(b)
    if x.data.ndim != 2 or b.data.ndim != 1 or b.shape[0] != x.shape[1]:
        raise ShapeError("add_bias", x.shape, b.shape)
    out = x.data + b.data

    def bw(g):
        return g, g.sum(axis=0)

    return _make("add_bias", out, (x, b), bw)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat_cols needs at least one tensor")
    rows = tensors[0].shape[0]
    for t in tensors:
        if t.data.ndim != 2 or t.shape[0] != rows:
            raise ShapeError("concat_cols", tensors[0].shape, t.shape)
    out = np.concatenate([t.data for t in tensors], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def bw(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _make("concat_cols", out, tensors, bw)


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2 or not 0 <= start < stop <= a.shape[1]:
        raise ShapeError("slice_cols", a.shape, (start, stop))
    out = a.data[:, start:stop].copy()

    def bw(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _make("slice_cols", out, (a,), bw)


# ----------------------------------------------------------------- unary ops


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = np.where(mask, a.data, 0.0).astype(a.dtype, copy=False)
    return _make("relu", out, (a,), lambda g: (g * mask,))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _make("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def _check_rows(kind, a):
    if a.data.ndim != 2:
        raise ShapeError(kind, a.shape)


def softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    _check_rows("softmax_rows", a)
    e = np.exp(a.data - a.data.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _make("softmax_rows", s, (a,), bw)


def log_softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    _check_rows("log_softmax_rows", a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=1, keepdims=True),)

    return _make("log_softmax_rows", out, (a,), bw)


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericalError("log: argument has nonpositive entries")
    out = np.log(a.data)
    return _make("log", out, (a,), lambda g: (g / a.data,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make("square", a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    """Sum all entries (scalar result) or along ``axis`` keeping that axis."""
    a = as_tensor(a)
    if axis is None:
        out = np.asarray(a.data.sum())
        return _make("sum", out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))
    out = a.data.sum(axis=axis, keepdims=True)
    return _make("sum", out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    out = np.asarray(a.data.mean())
    return _make("mean", out, (a,), lambda g: (np.full(a.shape, g / n, dtype=a.dtype),))


def bce_with_logits(logits, target) -> Tensor:
    """Elementwise binary cross-entropy of ``sigmoid(logits)`` against ``target``.

    ``target`` is treated as a constant. Computed as
    ``softplus(l) - target * l`` so saturated logits stay finite.
    """
    logits = as_tensor(logits)
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ShapeError("bce_with_logits", logits.shape, t.shape)
    l = logits.data
    out = np.maximum(l, 0.0) + np.log1p(np.exp(-np.abs(l))) - t * l

    def bw(g):
        return (g * (_sigmoid(l) - t),)

    return _make("bce_with_logits", out, (logits,), bw)


def detach(a) -> Tensor:
    """Copy of ``a`` cut off from gradient recording."""
    return Tensor(as_tensor(a).data)


_UNARY = {
    "relu": relu,
    "sigmoid": sigmoid,
    "softmax_rows": softmax_rows,
    "log": log,
    "exp": exp,
    "sum": sum,
    "mean": mean,
    "square": square,
}
_BINARY = {"matmul": matmul, "add": add, "mul": mul, "sub": sub}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch an operation by name."""
    if kind in _UNARY:
        return _UNARY[kind](*inputs, **kwargs)
    if kind in _BINARY:
        return _BINARY[kind](*inputs)
    if kind == "scalar_mul":
        return scalar_mul(*inputs)
    if kind == "concat_cols":
        return concat_cols(inputs)
    raise ValueError(f"unknown op kind {kind!r}")


# --------------------------------------------------------- gradient checking


def finite_difference_check(
    f: Callable[..., Tensor],
    x,
    h: float = 1e-5,
    coords=None,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``x`` is a Tensor or a list of Tensors that ``f(x)`` reads; entries are
    perturbed in place and restored. ``coords`` optionally restricts the
    check to ``(tensor_index, flat_index)`` pairs. The error per coordinate is
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if not 1e-6 <= h <= 1e-4:
        raise ValueError(f"step h={h} outside [1e-6, 1e-4]")
    single = isinstance(x, Tensor)
    xs = [x] if single else list(x)
    for t in xs:
        if t.dtype != np.float64:
            raise TypeError("finite_difference_check requires float64 tensors")

    def evaluate():
        val = f(xs[0] if single else xs)
        v = val.item() if isinstance(val, Tensor) else float(val)
        if not np.isfinite(v):
            raise NumericalError("f(x) is not finite")
        return v

    saved = [(t.requires_grad, t.grad) for t in xs]
    for t in xs:
        t.requires_grad = True
        t.grad = None
    try:
        with Tape() as tape:
            root = f(xs[0] if single else xs)
        if not isinstance(root, Tensor):
            raise TypeError("f must return a Tensor")
        if not np.isfinite(root.data).all():
            raise NumericalError("f(x) is not finite")
        if len(tape):
            tape.backward(root)
        analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in xs]
    finally:
        for t, (rg, g) in zip(xs, saved):
            t.requires_grad, t.grad = rg, g

    if coords is None:
        coords = [(i, j) for i, t in enumerate(xs) for j in range(t.size)]
    worst = 0.0
    for i, j in coords:
        flat = xs[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        fp = evaluate()
        flat[j] = orig - h
        fm = evaluate()
        flat[j] = orig
        numeric = (fp - fm) / (2.0 * h)
        err = abs(analytic[i].reshape(-1)[j] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst

"""A small reverse-mode differentiation engine over dense 2-D float64 arrays.

Operations on tensors that require gradients are appended to the calling
thread's active :class:`Tape`. :func:`backward` replays that tape in reverse,
accumulates ``.grad`` on every leaf that requires it, and clears the tape.

    >>> w = Tensor([[3.0]], requires_grad=True)
    >>> backward(sum_all(square(w)))
    >>> w.grad
    array([[6.]])
"""

from __future__ import annotations

import contextlib
import math
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

DIV_EPS = 1e-8


class DivergenceError(FloatingPointError):
    """A forward value or gradient became NaN or infinite."""


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape", "_gen", "_csr", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        _check_finite(arr, "tensor data")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None
        self._gen = -1
        self._csr = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t._tape = None
        t._gen = -1
        t._csr = None
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


@dataclass
class _Record:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered log of differentiable operations.

    Use as a context manager to make it the active tape for the current
    thread; otherwise each thread gets its own default tape.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.generation = 0
        self._prev: list[Tape | None] = []

    def __len__(self) -> int:
        return len(self.records)

    def clear(self) -> None:
        self.records.clear()
        self.generation += 1

    def __enter__(self) -> "Tape":
        self._prev.append(getattr(_local, "tape", None))
        _local.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _local.tape = self._prev.pop()


_local = threading.local()


def active_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording anything on the tape."""
    prev = getattr(_local, "no_grad", False)
    _local.no_grad = True
    try:
        yield
    finally:
        _local.no_grad = prev


class MulCounter:
    """Tally of scalar multiplications in :func:`matmul` and :func:`elem_mul`.

    Matrix products are counted at their dense cost ``rows * inner * cols``,
    even when a cached sparse copy does the work.
    """

    def __init__(self):
        self.matmul = 0
        self.elementwise = 0

    @property
    def total(self) -> int:
        return self.matmul + self.elementwise


@contextlib.contextmanager
def count_multiplications():
    counter = MulCounter()
    prev = getattr(_local, "counter", None)
    _local.counter = counter
    try:
        yield counter
    finally:
        _local.counter = prev


def _counter() -> MulCounter | None:
    return getattr(_local, "counter", None)


def _check_finite(arr: np.ndarray, what: str) -> None:
    # a finite sum implies finite entries; overflow falls through to the exact check
    if math.isfinite(np.add.reduce(arr, axis=None)):
        return
    if not np.isfinite(arr).all():
        raise DivergenceError(f"non-finite values in {what}")


def constant(data, sparse_below: float = 0.05) -> Tensor:
    """A non-differentiable matrix, e.g. the aggregation matrix.

    The dense array is kept; if its density is below ``sparse_below`` a CSR copy
    is cached as well and :func:`matmul` uses it for products with this operand.
    Results are identical up to float summation order.
    """
    t = Tensor(data)
    if t.data.size and np.count_nonzero(t.data) < sparse_below * t.data.size:
        t._csr = sp.csr_array(t.data)
    return t


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(name: str, data: np.ndarray, inputs: tuple[Tensor, ...], grad_fn) -> Tensor:
    _check_finite(data, f"output of {name}")
    out = Tensor._wrap(data)
    if getattr(_local, "no_grad", False) or not any(t.requires_grad for t in inputs):
        return out
    tape = active_tape()
    out.requires_grad = True
    out._tape = tape
    out._gen = tape.generation
    tape.records.append(_Record(out, inputs, grad_fn))
    return out


def _same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")


# --- primitives -------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    counter = _counter()
    if counter is not None:
        counter.matmul += a.shape[0] * a.shape[1] * b.shape[1]
    A, B = a.data, b.data
    if a._csr is not None and not a.requires_grad:
        csr = a._csr
        return _result("matmul", csr @ B, (a, b), lambda g: (None, csr.T @ g))

    def grad(g):
        return (g @ B.T if a.requires_grad else None, A.T @ g if b.requires_grad else None)

    return _result("matmul", A @ B, (a, b), grad)


def add_bias(x, b) -> Tensor:
    """Add the ``1 x C`` row ``b`` to every row of ``x``."""
    x, b = _as_tensor(x), _as_tensor(b)
    if b.shape != (1, x.shape[1]):
        raise ShapeError(f"add_bias: bias shape {b.shape} does not match rows of {x.shape}")
    return _result("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    return _result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def elem_add(x, y) -> Tensor:
    x, y = _as_tensor(x), _as_tensor(y)
    _same_shape("elem_add", x, y)
    return _result("elem_add", x.data + y.data, (x, y), lambda g: (g, g))


def elem_sub(x, y) -> Tensor:
    x, y = _as_tensor(x), _as_tensor(y)
    _same_shape("elem_sub", x, y)
    return _result("elem_sub", x.data - y.data, (x, y), lambda g: (g, -g))


def elem_mul(x, y) -> Tensor:
    x, y = _as_tensor(x), _as_tensor(y)
    _same_shape("elem_mul", x, y)
    counter = _counter()
    if counter is not None:
        counter.elementwise += x.data.size
    X, Y = x.data, y.data
    return _result("elem_mul", X * Y, (x, y), lambda g: (g * Y, g * X))


def _guard(d: np.ndarray) -> np.ndarray:
    # sign-preserving: |d| + eps, with sign(0) taken as +
    return np.where(d >= 0, d + DIV_EPS, d - DIV_EPS)


def elem_div(x, y) -> Tensor:
    """``x / y`` with the denominator pushed ``1e-8`` away from zero."""
    x, y = _as_tensor(x), _as_tensor(y)
    _same_shape("elem_div", x, y)
    den = _guard(y.data)
    q = x.data / den
    return _result("elem_div", q, (x, y), lambda g: (g / den, -g * q / den))


def square(x) -> Tensor:
    x = _as_tensor(x)
    X = x.data
    return _result("square", X * X, (x,), lambda g: (2.0 * g * X,))


def row_sum(x) -> Tensor:
    x = _as_tensor(x)
    cols = x.shape[1]
    return _result("row_sum", x.data.sum(axis=1, keepdims=True), (x,),
                   lambda g: (np.repeat(g, cols, axis=1),))


def sum_all(x) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape
    return _result("sum_all", np.array([[x.data.sum()]]), (x,),
                   lambda g: (np.full(shape, g[0, 0]),))


def mean_all(x) -> Tensor:
    x = _as_tensor(x)
    return affine(sum_all(x), 1.0 / x.data.size)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(over="ignore"):
        e = np.exp(x.data)
    return _result("exp", e, (x,), lambda g: (g * e,))


def log(x) -> Tensor:
    x = _as_tensor(x)
    X = x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(X)
    return _result("log", out, (x,), lambda g: (g / X,))


def reciprocal(x) -> Tensor:
    x = _as_tensor(x)
    X = x.data
    with np.errstate(divide="ignore"):
        r = 1.0 / X
    return _result("reciprocal", r, (x,), lambda g: (-g * r * r,))


def affine(x, scale: float = 1.0, shift: float = 0.0) -> Tensor:
    """``scale * x + shift`` for scalar constants."""
    x = _as_tensor(x)
    return _result("affine", scale * x.data + shift, (x,), lambda g: (scale * g,))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    X = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(X))
    s = np.where(X >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _result("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp into ``[lo, hi]``; the gradient is zero where clamping bites."""
    x = _as_tensor(x)
    X = x.data
    inside = (X >= lo) & (X <= hi)
    return _result("clip", np.clip(X, lo, hi), (x,), lambda g: (g * inside,))


def log_softmax_rows(x) -> Tensor:
    x = _as_tensor(x)
    X = x.data
    shifted = X - X.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    soft = np.exp(out)
    return _result("log_softmax_rows", out, (x,),
                   lambda g: (g - soft * g.sum(axis=1, keepdims=True),))


def take_rows(x, index) -> Tensor:
    """Gather rows ``x[index]``; repeated indices accumulate in the backward pass."""
    x = _as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def grad(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _result("take_rows", x.data[idx], (x,), grad)


def pick(x, rows, cols) -> Tensor:
    """Column vector of the entries ``x[rows[i], cols[i]]``."""
    x = _as_tensor(x)
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    shape = x.shape

    def grad(g):
        full = np.zeros(shape)
        np.add.at(full, (r, c), g[:, 0])
        return (full,)

    return _result("pick", x.data[r, c][:, None], (x,), grad)


def concat_rows(xs: Sequence[Tensor]) -> Tensor:
    """Stack tensors with equal column counts on top of each other."""
    xs = tuple(_as_tensor(x) for x in xs)
    cols = {x.shape[1] for x in xs}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: column counts differ: {[x.shape for x in xs]}")
    splits = np.cumsum([x.shape[0] for x in xs])[:-1]
    return _result("concat_rows", np.concatenate([x.data for x in xs]), xs,
                   lambda g: tuple(np.split(g, splits)))


def dropconnect_mask(w, p: float, seed: int | np.random.Generator) -> Tensor:
    """Zero each weight independently with probability ``p``; survivors are scaled by ``1/(1-p)``."""
    w = _as_tensor(w)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropconnect probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return w
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = (rng.random(w.shape) >= p) / (1.0 - p)
    return _result("dropconnect", w.data * mask, (w,), lambda g: (g * mask,))


# --- reverse pass -------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d leaf`` into ``leaf.grad`` for every leaf on the tape.

    The tape is cleared afterwards; a second call needs a fresh forward pass.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a 1x1 loss, got {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise TapeError("loss was not recorded on a tape (no input requires grad)")
    if loss._gen != tape.generation:
        raise TapeError("backward already ran for this graph; run a new forward pass")

    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    produced = {id(r.out) for r in tape.records}
    try:
        for rec in reversed(tape.records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            for t, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if key not in produced:  # leaf
                    _check_finite(gi, "gradient")
                    t.grad = gi.copy() if t.grad is None else t.grad + gi
                    grads.pop(key)
    finally:
        tape.clear()

"""Dense float64 tensors with a small reverse-mode tape.

Values are plain ``numpy.ndarray`` objects (float64, C-ordered). A :class:`Tape`
records primitive operations eagerly as they are applied to :class:`Var`
handles, and :meth:`Tape.backward` replays them in reverse to produce vector-
Jacobian products for every tracked leaf.

The primitive set is closed: matmul, add, bias_add, activation, row_norm,
sum, scale, square, transpose, plus fused batch_norm and normalize_rows (neither
division nor square roots are otherwise available). Layers and losses are
composed from these, so the finite-difference oracle covers all of them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MAGIC = b"RSRKTNSR"


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class TapeError(RuntimeError):
    pass


def as_tensor(x, *, name: str = "input") -> np.ndarray:
    """Validate user input as a finite float64 C-ordered array."""
    arr = np.array(x, dtype=np.float64, order="C", copy=True)
    if arr.ndim > 0 and 0 in arr.shape:
        raise ShapeError(f"{name}: zero-sized dimension in shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name}: non-finite entries")
    return arr


class Var:
    """Handle to a value recorded on a tape."""

    __slots__ = ("tape", "value", "index", "needs_grad", "is_leaf", "name")

    def __init__(self, tape, value, index, needs_grad, is_leaf, name=None):
        self.tape = tape
        self.value = value
        self.index = index
        self.needs_grad = needs_grad
        self.is_leaf = is_leaf
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        kind = "leaf" if self.is_leaf else "node"
        return f"Var({kind} #{self.index}, shape={self.value.shape})"

    # operator sugar; every method lowers to a primitive
    def __add__(self, other):
        other = _lift(self.tape, other)
        if self.value.ndim == 2 and other.value.ndim == 1:
            return bias_add(self, other)
        return add(self, other)

    def __sub__(self, other):
        other = _lift(self.tape, other)
        neg = scale(other, -1.0)
        if self.value.ndim == 2 and other.value.ndim == 1:
            return bias_add(self, neg)
        return add(self, neg)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, c):
        if isinstance(c, Var):
            raise TypeError("elementwise Var*Var is not a primitive; use scale with a float")
        return scale(self, float(c))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, _lift(self.tape, other))

    @property
    def T(self):
        return transpose(self)


@dataclass
class Node:
    op: str
    inputs: tuple
    output: Var
    vjp: Callable[[np.ndarray], Sequence[np.ndarray]]


@dataclass
class Tape:
    """Eager recording of primitive operations, single owner."""

    nodes: list = field(default_factory=list)
    leaves: list = field(default_factory=list)
    check_finite: bool = True
    _count: int = 0

    def _new_index(self):
        self._count += 1
        return self._count - 1

    def leaf(self, value, *, requires_grad: bool = True, name: str | None = None) -> Var:
        arr = np.ascontiguousarray(value, dtype=np.float64)
        v = Var(self, arr, self._new_index(), requires_grad, True, name)
        self.leaves.append(v)
        return v

    def constant(self, value, *, name: str | None = None) -> Var:
        return self.leaf(value, requires_grad=False, name=name)

    def record(self, op: str, inputs: tuple, value: np.ndarray, vjp) -> Var:
        for v in inputs:
            if v.tape is not self:
                raise TapeError(f"{op}: operand belongs to a different tape")
        # a finite sum implies finite entries (barring overflow, which is failure anyway)
        if self.check_finite and not np.isfinite(np.add.reduce(value, axis=None)):
            raise NonFiniteError(f"node {len(self.nodes)} ({op}) produced non-finite values")
        needs = any(v.needs_grad for v in inputs)
        out = Var(self, value, self._new_index(), needs, False)
        self.nodes.append(Node(op, inputs, out, vjp))
        return out

    def raise_first_nonfinite(self) -> None:
        """Locate and report the earliest non-finite node (for tapes recorded
        with ``check_finite=False``); silent when every value is finite."""
        for i, node in enumerate(self.nodes):
            if not np.all(np.isfinite(node.output.value)):
                raise NonFiniteError(f"node {i} ({node.op}) produced non-finite values")

    def backward(self, output: Var, seed=None) -> dict:
        """Reverse sweep from ``output``; returns {leaf Var: gradient} for tracked leaves."""
        if output.tape is not self:
            raise TapeError("output was not produced on this tape")
        if not self.nodes and not output.is_leaf:
            raise TapeError("backward called before any forward computation")
        if seed is None:
            seed = np.ones_like(output.value)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != output.value.shape:
            raise ShapeError(f"seed shape {seed.shape} does not match output shape {output.value.shape}")

        grads = {output.index: seed}
        for node in reversed(self.nodes):
            if node.output.index > output.index:
                continue
            g = grads.pop(node.output.index, None)
            if g is None or not node.output.needs_grad:
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if not inp.needs_grad:
                    continue
                prev = grads.get(inp.index)
                grads[inp.index] = gi if prev is None else prev + gi
        out = {}
        for leaf in self.leaves:
            if leaf.needs_grad:
                g = grads.get(leaf.index)
                out[leaf] = np.zeros_like(leaf.value) if g is None else g
        return out


def _lift(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        return x
    return tape.constant(np.asarray(x, dtype=np.float64))


def _same_tape(*vs: Var) -> Tape:
    tape = vs[0].tape
    for v in vs[1:]:
        if v.tape is not tape:
            raise TapeError("operands live on different tapes")
    return tape


# -- primitives ---------------------------------------------------------------

def matmul(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    A, B = a.value, b.value
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ShapeError(f"matmul: shapes {A.shape} and {B.shape} do not conform")
    ga, gb = a.needs_grad, b.needs_grad  # skip products nobody will read
    return tape.record(
        "matmul", (a, b), A @ B, lambda g: (g @ B.T if ga else None, A.T @ g if gb else None)
    )


def add(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add: shapes {a.value.shape} and {b.value.shape} differ")
    return tape.record("add", (a, b), a.value + b.value, lambda g: (g, g))


def bias_add(x: Var, b: Var) -> Var:
    """Add a length-K vector to every row of an N x K matrix."""
    tape = _same_tape(x, b)
    X, v = x.value, b.value
    if X.ndim != 2 or v.ndim != 1 or X.shape[1] != v.shape[0]:
        raise ShapeError(f"bias_add: shapes {X.shape} and {v.shape} do not conform")
    return tape.record("bias_add", (x, b), X + v, lambda g: (g, g.sum(axis=0)))


ACTIVATIONS = ("tanh", "relu", "leaky_relu", "none")


def activation(x: Var, kind: str, alpha: float = 0.2) -> Var:
    X = x.value
    if kind == "none":
        return x
    if kind == "tanh":
        y = np.tanh(X)
        return x.tape.record("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))
    if kind in ("relu", "leaky_relu"):
        if kind == "relu":
            alpha = 0.0
        elif not 0.0 < alpha < 1.0:
            raise ValueError(f"leaky_relu slope must lie in (0, 1), got {alpha}")
        # local slope as a float mask; far cheaper than np.where on both passes
        slope = np.greater(X, 0.0).astype(np.float64)
        if alpha:
            slope *= 1.0 - alpha
            slope += alpha
        return x.tape.record(kind, (x,), X * slope, lambda g: (g * slope,))
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def row_norm(x: Var) -> Var:
    """Euclidean norm of every row; zero rows get the zero subgradient."""
    X = x.value
    if X.ndim != 2:
        raise ShapeError(f"row_norm expects a matrix, got shape {X.shape}")
    n = np.sqrt(np.einsum("ij,ij->i", X, X))
    safe = np.where(n > 0, n, 1.0)
    unit = np.where((n > 0)[:, None], X / safe[:, None], 0.0)
    return x.tape.record("row_norm", (x,), n, lambda g: (g[:, None] * unit,))


def normalize_rows(x: Var, floor: float = 1e-12) -> Var:
    """Scale every row to unit norm; rows with norm below ``floor`` pass through."""
    X = x.value
    if X.ndim != 2:
        raise ShapeError(f"normalize_rows expects a matrix, got shape {X.shape}")
    n = np.sqrt(np.einsum("ij,ij->i", X, X))
    keep = n >= floor
    inv = np.where(keep, 1.0 / np.where(keep, n, 1.0), 1.0)
    Y = X * inv[:, None]

    def vjp(g):
        # (I - u u^T) g / |x| on normalized rows, identity elsewhere
        radial = np.where(keep, np.einsum("ij,ij->i", g, Y), 0.0)
        return ((g - radial[:, None] * Y) * inv[:, None],)

    return x.tape.record("normalize_rows", (x,), Y, vjp)


def sum(x: Var) -> Var:  # noqa: A001
    X = x.value
    return x.tape.record("sum", (x,), np.asarray(X.sum()), lambda g: (np.full_like(X, g),))


def scale(x: Var, c: float) -> Var:
    c = float(c)
    return x.tape.record("scale", (x,), c * x.value, lambda g: (c * g,))


def square(x: Var) -> Var:
    X = x.value
    return x.tape.record("square", (x,), X * X, lambda g: (2.0 * X * g,))


def transpose(x: Var) -> Var:
    if x.value.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.value.shape}")
    return x.tape.record("transpose", (x,), np.ascontiguousarray(x.value.T), lambda g: (g.T,))


def batch_norm(x: Var, gamma: Var, beta: Var, mean=None, var=None, eps: float = 1e-5) -> Var:
    """Column-wise normalization ``gamma * (x - mean) / sqrt(var + eps) + beta``.

    With ``mean``/``var`` omitted, batch statistics are used and differentiated
    through; otherwise they are treated as constants (inference mode).
    """
    tape = _same_tape(x, gamma, beta)
    X, gm = x.value, gamma.value
    if X.ndim != 2 or gm.shape != (X.shape[1],) or beta.value.shape != gm.shape:
        raise ShapeError(
            f"batch_norm: x {X.shape}, gamma {gm.shape}, beta {beta.value.shape} do not conform"
        )
    batch = mean is None
    if batch:
        mean = X.mean(axis=0)
        var = X.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (X - mean) * inv
    y = xhat * gm + beta.value

    def vjp(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        gx = g * gm
        if batch:
            dx = inv * (gx - gx.mean(axis=0) - xhat * (gx * xhat).mean(axis=0))
        else:
            dx = gx * inv
        return dx, dgamma, dbeta

    return tape.record("batch_norm", (x, gamma, beta), y, vjp)


# -- gradient oracle ------------------------------------------------------------

def finite_difference_gradient(f: Callable[[np.ndarray], float], point, step: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time."""
    x = np.array(point, dtype=np.float64)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x))
        flat[i] = orig - step
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite function value when probing coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


# -- binary serialization ---------------------------------------------------------

def tensor_to_bytes(t: np.ndarray) -> bytes:
    t = np.asarray(t, dtype="<f8", order="C")  # ascontiguousarray would promote 0-d to 1-d
    head = MAGIC + struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}Q", *t.shape)
    return head + t.tobytes(order="C")


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor starting at ``offset``; returns (array, next offset)."""
    if buf[offset:offset + 8] != MAGIC:
        raise ValueError(f"bad tensor magic at byte {offset}")
    (rank,) = struct.unpack_from("<I", buf, offset + 8)
    pos = offset + 12
    dims = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    count = int(np.prod(dims)) if rank else 1
    end = pos + 8 * count
    if end > len(buf):
        raise ValueError("truncated tensor payload")
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(dims)
    return arr, end


def save_tensor(path, t: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(t))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        arr, _ = tensor_from_bytes(fh.read())
    return arr

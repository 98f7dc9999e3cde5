"""Dense 2-D arithmetic with a reverse-mode tape and a finite-difference checker.

Every value is a :class:`Matrix` wrapping a float64 numpy array of rank 2
(scalars are 1x1). Primitive ops record themselves on the active
:class:`Tape`, if any, so that ``tape.gradients(loss, params)`` can replay the
record backward.

    >>> w = Matrix([[1.0, 2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = total(mul(w, w))
    >>> tape.gradients(loss, [w])[w]
    array([[2., 4.]])
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

__all__ = [
    "Matrix",
    "Tape",
    "make_rng",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "add_row",
    "transpose",
    "activation",
    "dropout",
    "rows",
    "take_rows",
    "vstack",
    "hstack",
    "total",
    "log",
    "row_normalize",
    "gradient_check",
    "ACTIVATIONS",
]

LEAKY_SLOPE = 0.01
ACTIVATIONS = ("leaky_relu", "relu", "sigmoid", "tanh", "identity")

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "hyperhar_active_tape", default=None
)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the same seed gives the same stream on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


class Matrix:
    """A 2-D float64 value that may participate in differentiation."""

    __slots__ = ("data", "requires_grad", "name", "_tracked", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"Matrix needs rank <= 2 data, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self._tracked = requires_grad

    @classmethod
    def _wrap(cls, arr: np.ndarray, tracked: bool) -> "Matrix":
        out = cls.__new__(cls)
        out.data = arr
        out.requires_grad = False
        out.name = None
        out._tracked = tracked
        return out

    @classmethod
    def zeros(cls, rows: int, cols: int, **kw) -> "Matrix":
        return cls(np.zeros((rows, cols)), **kw)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def T(self) -> "Matrix":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 matrix, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Matrix":
        return Matrix(self.data)

    def __matmul__(self, other: "Matrix") -> "Matrix":
        return matmul(self, other)

    def __add__(self, other: "Matrix") -> "Matrix":
        return add(self, other)

    def __sub__(self, other: "Matrix") -> "Matrix":
        return sub(self, other)

    def __mul__(self, other) -> "Matrix":
        if isinstance(other, Matrix):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Matrix":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Matrix({self.rows}x{self.cols}{label})"


@dataclass
class _Record:
    out: Matrix
    inputs: tuple[Matrix, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of primitive ops executed while the tape is active."""

    def __init__(self) -> None:
        self.records: list[_Record] = []
        self._token: contextvars.Token | None = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        assert self._token is not None
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def gradients(self, loss: Matrix, params: Iterable[Matrix]) -> dict[Matrix, np.ndarray]:
        """Replay backward from a 1x1 ``loss``; one gradient per parameter.

        Parameters the loss does not depend on get zero gradients.
        """
        if loss.shape != (1, 1):
            raise ShapeError(f"loss must be 1x1, got {loss.shape}")
        params = list(params)
        adj: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        for rec in reversed(self.records):
            g = adj.pop(id(rec.out), None)
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.vjp(g)):
                if gi is None or not inp._tracked:
                    continue
                key = id(inp)
                if key in adj:
                    adj[key] = adj[key] + gi
                else:
                    adj[key] = gi
        return {p: adj.get(id(p), np.zeros_like(p.data)).copy() for p in params}


def _record(out_arr: np.ndarray, inputs: tuple[Matrix, ...], vjp) -> Matrix:
    tracked = any(m._tracked for m in inputs)
    out = Matrix._wrap(out_arr, tracked)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and tracked:
        tape.records.append(_Record(out, inputs, vjp))
    return out


def _same_shape(op: str, a: Matrix, b: Matrix) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data
    return _record(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def add(a: Matrix, b: Matrix) -> Matrix:
    _same_shape("add", a, b)
    return _record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Matrix, b: Matrix) -> Matrix:
    _same_shape("sub", a, b)
    return _record(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Matrix, b: Matrix) -> Matrix:
    """Entrywise product."""
    _same_shape("mul", a, b)
    A, B = a.data, b.data
    return _record(A * B, (a, b), lambda g: (g * B, g * A))


def scale(a: Matrix, c: float) -> Matrix:
    return _record(a.data * c, (a,), lambda g: (g * c,))


def add_row(a: Matrix, row: Matrix) -> Matrix:
    """Add a 1xN row vector to every row of an MxN matrix (bias add)."""
    if row.rows != 1 or row.cols != a.cols:
        raise ShapeError(f"add_row: cannot broadcast {row.shape} onto {a.shape}")
    return _record(a.data + row.data, (a, row), lambda g: (g, g.sum(axis=0, keepdims=True)))


def transpose(a: Matrix) -> Matrix:
    return _record(a.data.T.copy(), (a,), lambda g: (g.T,))


def activation(x: Matrix, kind: str = "leaky_relu") -> Matrix:
    X = x.data
    if kind == "leaky_relu":
        slope = np.where(X > 0, 1.0, LEAKY_SLOPE)
        return _record(X * slope, (x,), lambda g: (g * slope,))
    if kind == "relu":
        mask = (X > 0).astype(np.float64)
        return _record(X * mask, (x,), lambda g: (g * mask,))
    if kind == "sigmoid":
        # split by sign so exp never overflows
        e = np.exp(-np.abs(X))
        Y = np.where(X >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return _record(Y, (x,), lambda g: (g * Y * (1.0 - Y),))
    if kind == "tanh":
        Y = np.tanh(X)
        return _record(Y, (x,), lambda g: (g * (1.0 - Y * Y),))
    if kind == "identity":
        return _record(X.copy(), (x,), lambda g: (g,))
    raise ConfigError(f"unknown activation kind {kind!r}; expected one of {ACTIVATIONS}")


def dropout(x: Matrix, p: float, rng: np.random.Generator | None, training: bool) -> Matrix:
    """Inverted dropout: survivors scaled by 1/(1-p); identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return _record(x.data * keep, (x,), lambda g: (g * keep,))


def rows(x: Matrix, start: int, stop: int) -> Matrix:
    """Contiguous row block ``x[start:stop]``."""
    if not 0 <= start <= stop <= x.rows:
        raise ShapeError(f"rows: block [{start}:{stop}] outside {x.shape}")
    n = x.rows

    def vjp(g):
        full = np.zeros((n, g.shape[1]))
        full[start:stop] = g
        return (full,)

    return _record(x.data[start:stop].copy(), (x,), vjp)


def take_rows(x: Matrix, indices: Sequence[int]) -> Matrix:
    """Rows ``x[indices]`` (gather); repeated indices accumulate gradient."""
    idx = np.asarray(indices, dtype=np.int64)
    n = x.rows

    def vjp(g):
        full = np.zeros((n, g.shape[1]))
        np.add.at(full, idx, g)
        return (full,)

    return _record(x.data[idx].copy(), (x,), vjp)


def vstack(parts: Sequence[Matrix]) -> Matrix:
    cols = {p.cols for p in parts}
    if len(cols) != 1:
        raise ShapeError(f"vstack: column counts differ {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.rows for p in parts])
    return _record(
        np.vstack([p.data for p in parts]),
        tuple(parts),
        lambda g: tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(parts))),
    )


def hstack(parts: Sequence[Matrix]) -> Matrix:
    nrows = {p.rows for p in parts}
    if len(nrows) != 1:
        raise ShapeError(f"hstack: row counts differ {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.cols for p in parts])
    return _record(
        np.hstack([p.data for p in parts]),
        tuple(parts),
        lambda g: tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts))),
    )


def total(x: Matrix) -> Matrix:
    """Sum of all entries as a 1x1 matrix."""
    shape = x.shape
    return _record(np.array([[x.data.sum()]]), (x,), lambda g: (np.full(shape, g[0, 0]),))


def log(x: Matrix, floor: float = 1e-12) -> Matrix:
    """Natural log of ``max(x, floor)``; zero gradient where clamped."""
    X = x.data
    live = X > floor
    safe = np.maximum(X, floor)  # NaN passes through
    return _record(np.log(safe), (x,), lambda g: (np.where(live, g / safe, 0.0),))


def row_normalize(x: Matrix) -> Matrix:
    """Scale every row to unit Euclidean norm. Rows must be nonzero."""
    X = x.data
    norms = np.sqrt((X * X).sum(axis=1, keepdims=True))
    if np.any(norms == 0.0):
        raise NumericError("row_normalize: zero-norm row")
    Y = X / norms

    def vjp(g):
        return ((g - Y * (g * Y).sum(axis=1, keepdims=True)) / norms,)

    return _record(Y, (x,), vjp)


def gradient_check(
    loss_fn: Callable[[], Matrix], params: Sequence[Matrix], eps: float = 1e-5
) -> float:
    """Max relative error between tape gradients and central differences.

    The error per coordinate is ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    ``loss_fn`` must be deterministic; it is called once under a tape and
    twice per coordinate without one.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    with Tape() as tape:
        loss = loss_fn()
    if not np.isfinite(loss.item()):
        raise NumericError(f"non-finite loss {loss.item()}")
    analytic = tape.gradients(loss, params)

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        ga = analytic[p].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"non-finite loss while perturbing {p!r}[{i}]")
            numeric = (up - down) / (2.0 * eps)
            err = abs(ga[i] - numeric) / max(1.0, abs(ga[i]), abs(numeric))
            worst = max(worst, err)
    return worst

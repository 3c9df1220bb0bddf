"""Dense matrix helpers and a deterministic counter-based random generator.

Matrices throughout the package are plain 2-D C-contiguous float64 numpy
arrays (columns are batch samples unless stated otherwise).  Public
functions never mutate their inputs and always return fresh arrays.

The random generator is splitmix64: draw ``i`` of seed ``s`` is
``mix64(s + GAMMA * (i + 1))`` with GAMMA = 0x9E3779B97F4A7C15 and the
standard finalizer constants 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB.
Because each draw is a pure function of (seed, index), streams are
reproducible bit-for-bit on any platform, independent of numpy's own
generator internals.  Gaussians come from Box-Muller on consecutive
uniform pairs.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
# distinct increment for derive() so substreams never alias the main stream
_DERIVE_GAMMA = 0xD1B54A32D192ED03


class ShapeError(ValueError):
    """Raised when operand dimensions do not conform."""


def as_matrix(values) -> np.ndarray:
    """Coerce to a fresh 2-D C-contiguous float64 array.

    1-D input becomes a single column.
    """
    arr = np.array(values, dtype=np.float64, order="C")
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 1-D or 2-D array, got ndim={arr.ndim}")
    return arr


def _check_2d(name: str, a: np.ndarray) -> None:
    if not isinstance(a, np.ndarray) or a.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D array")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product in double precision; shapes must chain."""
    _check_2d("a", a)
    _check_2d("b", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul dimension mismatch: {a.shape[0]}x{a.shape[1]} @ "
            f"{b.shape[0]}x{b.shape[1]}"
        )
    return np.asarray(a @ b, dtype=np.float64)


_UNARY_OPS = {
    "square": np.square,
    "sqrt": np.sqrt,
    "relu": lambda a: np.maximum(a, 0.0),
    # subgradient 0 at the kink
    "relu-grad": lambda a: (a > 0.0).astype(np.float64),
}

_BINARY_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "scale": np.multiply,
}


def elementwise(op: str, a, b=None) -> np.ndarray:
    """Apply a tagged elementwise op.

    Unary tags: square, sqrt, relu, relu-grad.  Binary tags: add, sub,
    mul, div, scale.  Binary ops accept a scalar for either operand;
    matrix operands must have identical shapes (no broadcasting).
    """
    if op in _UNARY_OPS:
        if b is not None:
            raise ValueError(f"elementwise op {op!r} is unary")
        return _UNARY_OPS[op](np.asarray(a, dtype=np.float64))
    if op not in _BINARY_OPS:
        raise ValueError(f"unknown elementwise op {op!r}")
    if b is None:
        raise ValueError(f"elementwise op {op!r} needs two operands")
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if a_arr.ndim > 0 and b_arr.ndim > 0 and a_arr.shape != b_arr.shape:
        raise ShapeError(
            f"elementwise {op!r} shape mismatch: {a_arr.shape} vs {b_arr.shape}"
        )
    return _BINARY_OPS[op](a_arr, b_arr)


def _mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer (pure Python)."""
    z &= _MASK64
    z = (z ^ (z >> 30)) * _MIX1 & _MASK64
    z = (z ^ (z >> 27)) * _MIX2 & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


class SeededRng:
    """Deterministic counter-based generator (splitmix64 + Box-Muller).

    State is (seed, counter); draw ``i`` depends only on the seed, so the
    whole stream is a pure function of the seed.  Not thread safe: one
    owner per generator; use :meth:`derive` to hand substreams to
    parallel work.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def _next_block(self, n: int) -> np.ndarray:
        """Raw 64-bit draws at the current counter position."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            states = np.uint64(self.seed) + np.uint64(_GAMMA) * idx
        return _mix64_array(states)

    def uniform(self, rows: int, cols: int) -> np.ndarray:
        """Uniform [0, 1) draws as a rows x cols matrix."""
        bits = self._next_block(rows * cols)
        return ((bits >> np.uint64(11)) * 2.0**-53).reshape(rows, cols)

    def normal(self, rows: int, cols: int, stddev: float = 1.0) -> np.ndarray:
        """Gaussian N(0, stddev^2) draws as a rows x cols matrix."""
        if stddev <= 0:
            raise ValueError("stddev must be positive")
        n = rows * cols
        pairs = (n + 1) // 2
        bits = self._next_block(2 * pairs)
        # u1 in (0, 1] so log never sees zero
        u1 = ((bits[:pairs] >> np.uint64(11)) + np.uint64(1)) * 2.0**-53
        u2 = (bits[pairs:] >> np.uint64(11)) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return (stddev * out[:n]).reshape(rows, cols)

    def permutation(self, n: int) -> np.ndarray:
        """A permutation of 0..n-1 (argsort of n random 64-bit keys)."""
        return np.argsort(self._next_block(n), kind="stable")

    def derive(self, key: int) -> "SeededRng":
        """Independent substream for ``key``; depends only on (seed, key)."""
        return SeededRng(_mix64(self.seed + _DERIVE_GAMMA * (int(key) + 1)))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, counter={self.counter})"

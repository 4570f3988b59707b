"""Dense float64 math and the seeded random stream underpinning the library.

Everything runs on plain C-contiguous float64 numpy arrays: vectors are
1-D, matrices are 2-D, row-major. The operations here are pure (inputs are
never mutated) and validate their contracts up front so failures carry a
usable message instead of surfacing deep inside a training step. Layer
internals call numpy directly on shapes they have already validated; this
module is the checked public surface.

Randomness comes from numpy's PCG64 bit generator, which is documented,
seedable and platform-stable: an identical seed yields an identical draw
stream on every machine. Python's global `random` / `numpy.random` module
state is never touched.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import NumericError, ShapeError, UsageError

Array = np.ndarray

ELEMENTWISE_KINDS = ("relu", "sigmoid", "tanh", "exp", "log", "square")


def as_f64(values) -> Array:
    """Coerce input to a C-contiguous float64 array (copying only if needed)."""
    return np.ascontiguousarray(values, dtype=np.float64)


class Rng:
    """Deterministic random stream (PCG64).

    The stream is a pure function of (seed, spawn keys, call order).
    Independent components derive their own streams with `spawn(key)`,
    which seeds a fresh PCG64 with the entropy sequence ``[seed, *keys]``;
    sibling spawns never share state, so adding draws to one component
    cannot perturb another.
    """

    def __init__(self, seed: int, _keys: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._keys = tuple(int(k) for k in _keys)
        self._gen = np.random.Generator(np.random.PCG64([self.seed, *self._keys]))

    def spawn(self, key: int) -> "Rng":
        """Derive an independent sub-stream identified by `key`."""
        return Rng(self.seed, self._keys + (int(key),))

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> Array:
        if std < 0:
            raise UsageError(f"std must be >= 0, got {std}")
        return self._gen.normal(loc=mean, scale=std, size=shape).astype(np.float64, copy=False)

    def uniform(self, low: float, high: float, shape) -> Array:
        return self._gen.uniform(low, high, size=shape).astype(np.float64, copy=False)

    def random(self, shape) -> Array:
        """Uniform [0, 1) draws, used for dropout masks and Bernoulli events."""
        return self._gen.random(size=shape)

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))

    def poisson(self, lam: float) -> int:
        return int(self._gen.poisson(lam))

    def permutation(self, n: int) -> Array:
        return self._gen.permutation(n)


def rng_normal(rng: Rng, rows: int, cols: int, mean: float = 0.0, std: float = 1.0) -> Array:
    """Draw a (rows, cols) matrix of N(mean, std^2) samples from `rng`."""
    return rng.normal((rows, cols), mean=mean, std=std)


def mat_mul(a: Array, b: Array) -> Array:
    """Matrix product with an explicit shape check.

    Raises ShapeError naming both operand shapes when the inner dimensions
    disagree, which is the failure mode worth a good message.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"mat_mul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"mat_mul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def _stable_sigmoid(x: Array) -> Array:
    # Split by sign so exp never overflows.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Array) -> Array:
    return _stable_sigmoid(np.asarray(x, dtype=np.float64))


def relu(x: Array) -> Array:
    return np.maximum(x, 0.0)


def elementwise(kind: str, m: Array) -> Array:
    """Apply a named scalar function entrywise. Output shape == input shape.

    Raises NumericError identifying the first offending entry if the result
    is not finite (e.g. log of a non-positive value, exp overflow).
    """
    m = np.asarray(m, dtype=np.float64)
    if kind == "relu":
        out = relu(m)
    elif kind == "sigmoid":
        out = _stable_sigmoid(m)
    elif kind == "tanh":
        out = np.tanh(m)
    elif kind == "exp":
        with np.errstate(over="ignore"):
            out = np.exp(m)
    elif kind == "log":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(m)
    elif kind == "square":
        out = np.square(m)
    else:
        raise UsageError(f"unknown elementwise kind {kind!r}; expected one of {ELEMENTWISE_KINDS}")
    bad = ~np.isfinite(out)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NumericError(
            f"elementwise {kind!r} produced non-finite value at flat index {idx} "
            f"(input entry {m.flat[idx]!r})"
        )
    return out


def softmax(v: Array) -> Array:
    """Numerically stable softmax of a 1-D vector (max-subtraction)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"softmax expects a non-empty 1-D vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise NumericError("softmax input contains non-finite entries")
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_backward(weights: Array, grad_weights: Array) -> Array:
    """Gradient of softmax: J^T g = w * (g - <g, w>)."""
    dot = float(grad_weights @ weights)
    return weights * (grad_weights - dot)


def check_finite(x: Array, what: str) -> None:
    """Raise NumericError naming `what` if any entry of x is non-finite."""
    if not np.isfinite(x).all():
        raise NumericError(f"non-finite value in {what}")


def stack_rows(vectors: Sequence[Array]) -> Array:
    """Stack equal-length 1-D vectors into an (n, d) matrix."""
    return np.stack(vectors, axis=0)

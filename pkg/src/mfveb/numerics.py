"""Dense linear algebra helpers, counter-based RNG streams, and stable scalars.

Everything downstream (networks, samplers, data generation) builds on the
primitives in this module.  All floating point work is 64-bit.  Matrix
helpers validate shapes and finiteness so that violations surface at the
boundary instead of deep inside a training loop; hot loops elsewhere use
numpy directly and rely on these contracts being enforced at module edges.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln as _gammaln

__all__ = [
    "DomainError",
    "ShapeError",
    "RngStream",
    "add",
    "gaussian_logpdf",
    "hadamard",
    "log_gamma",
    "map_elementwise",
    "matmul",
    "softplus",
    "softplus_inv",
]

_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * math.pi
# Smallest positive double; used to keep softplus strictly positive even
# when log1p(exp(x)) underflows for very negative x.
_TINY = np.finfo(np.float64).smallest_subnormal


class ShapeError(ValueError):
    """Operands have incompatible shapes; message names both shapes."""


class DomainError(ValueError):
    """Scalar function evaluated outside its mathematical domain."""


# ---------------------------------------------------------------------------
# Stable scalar functions (vectorized over numpy arrays)
# ---------------------------------------------------------------------------

def softplus(x):
    """ln(1 + exp(x)) with an overflow-safe branch: identity for x > 30."""
    x = np.asarray(x, dtype=np.float64)
    safe = np.where(x > 30.0, 0.0, x)
    out = np.where(x > 30.0, x, np.log1p(np.exp(safe)))
    out = np.maximum(out, _TINY)
    return float(out) if out.ndim == 0 else out


def softplus_inv(y):
    """Inverse of :func:`softplus`: ln(exp(y) - 1), stable for large y."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0):
        raise DomainError("softplus_inv requires y > 0")
    safe = np.where(y > 30.0, 1.0, y)
    out = np.where(y > 30.0, y, np.log(np.expm1(safe)))
    return float(out) if out.ndim == 0 else out


def log_gamma(x):
    """ln Gamma(x) for x > 0 (Lanczos-grade accuracy via scipy)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0):
        raise DomainError("log_gamma requires x > 0")
    out = _gammaln(x)
    return float(out) if out.ndim == 0 else out


def gaussian_logpdf(y, mean, variance):
    """Log density of N(mean, variance) evaluated at y, elementwise."""
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(variance <= 0.0):
        raise DomainError("gaussian_logpdf requires variance > 0")
    y = np.asarray(y, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    out = -0.5 * np.log(_TWO_PI * variance) - (y - mean) ** 2 / (2.0 * variance)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Matrix helpers
# ---------------------------------------------------------------------------

def _as_matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _check_finite(out, op):
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{op} produced non-finite entries")
    return out


def matmul(a, b):
    a = _as_matrix(a, "left operand")
    b = _as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return _check_finite(a @ b, "matmul")


def add(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")
    return _check_finite(a + b, "add")


def hadamard(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cannot take elementwise product of shapes {a.shape} and {b.shape}")
    return _check_finite(a * b, "hadamard")


def map_elementwise(fn, a):
    a = np.asarray(a, dtype=np.float64)
    out = np.vectorize(fn, otypes=[np.float64])(a)
    return _check_finite(out, "map_elementwise")


# ---------------------------------------------------------------------------
# Counter-based random streams
# ---------------------------------------------------------------------------

def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class RngStream:
    """Deterministic random stream keyed by a (seed, stream_id) pair.

    Backed by the Philox counter-based generator, so two streams built from
    the same key replay identical sequences and streams with distinct ids
    are independent by construction.  Gaussian draws use Box-Muller on the
    underlying uniform stream.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        )

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def substream(self, k: int) -> "RngStream":
        """Independent child stream; distinct k give distinct stream ids."""
        child = _splitmix64(_splitmix64(self.stream_id) + int(k) + 1)
        return RngStream(self.seed, child)

    def uniform(self, low=0.0, high=1.0, size=None):
        return low + (high - low) * self._gen.random(size)

    def normal(self, size=None):
        """Standard normal draws via Box-Muller on the uniform stream."""
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        u1 = 1.0 - self._gen.random(m)  # (0, 1]: keeps log(u1) finite
        u2 = self._gen.random(m)
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([radius * np.cos(_TWO_PI * u2), radius * np.sin(_TWO_PI * u2)])[:n]
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

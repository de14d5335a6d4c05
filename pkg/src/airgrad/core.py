"""Dense matrix primitives and deterministic per-stream random numbers.

Gradient matrices are plain 2-D float64 numpy arrays. Every source of
randomness in the library flows through :class:`RngStream`, a counter-based
generator keyed by a seed plus an arbitrary label path, so that each
(worker, layer, round) stream is independent and insensitive to execution
order.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

__all__ = [
    "RngStream",
    "as_matrix",
    "frobenius_norm",
    "reshape_to_matrix",
    "sample_noise",
]


def _philox_key(seed: int, labels: tuple) -> int:
    digest = hashlib.blake2b(
        repr((int(seed),) + labels).encode("utf-8"), digest_size=16
    ).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Deterministic random stream identified by (seed, label path).

    Two streams with the same seed and labels yield identical sample
    sequences; streams with different labels are statistically independent.
    A stream instance is stateful (draws advance it) and must not be shared
    between threads; derive per-task children with :meth:`child` instead.
    """

    def __init__(self, seed: int, *labels):
        self.seed = int(seed)
        self.labels = tuple(labels)
        self._gen = np.random.Generator(
            np.random.Philox(key=_philox_key(self.seed, self.labels))
        )

    def child(self, *labels) -> "RngStream":
        """A fresh independent stream scoped under this one's label path."""
        return RngStream(self.seed, *(self.labels + tuple(labels)))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform_unit(self, shape) -> np.ndarray:
        """Zero-mean unit-variance uniform draws on (-sqrt(3), sqrt(3))."""
        half = math.sqrt(3.0)
        return self._gen.uniform(-half, half, shape)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high=high, size=size)

    def choice(self, n, size, replace=True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, labels={self.labels})"


def as_matrix(values) -> np.ndarray:
    """Validate and return a 2-D float64 matrix with finite entries."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.size and not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def reshape_to_matrix(shape) -> tuple[int, int]:
    """Matrix shape (m, n) for a gradient tensor shape.

    The leading dimension is kept as the row count and the remaining
    dimensions are flattened into the columns; 1-D shapes become column
    vectors (n = 1).
    """
    dims = [int(d) for d in shape]
    if not dims:
        raise ValueError("tensor shape must be non-empty")
    if any(d <= 0 for d in dims):
        raise ValueError(f"tensor dimensions must be positive, got {dims}")
    m = dims[0]
    n = 1
    for d in dims[1:]:
        n *= d
    return m, n


def sample_noise(m: int, n: int, stream: RngStream, distribution: str = "gaussian") -> np.ndarray:
    """An m-by-n matrix of i.i.d. zero-mean unit-variance noise.

    Gaussian by default; a uniform variant is available for robustness
    checks. Deterministic given the stream.
    """
    if m < 1 or n < 1:
        raise ValueError(f"noise shape must be positive, got ({m}, {n})")
    if distribution == "gaussian":
        return stream.normal((m, n))
    if distribution == "uniform":
        return stream.uniform_unit((m, n))
    raise ValueError(f"unknown noise distribution {distribution!r}")


def frobenius_norm(matrix) -> float:
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(np.asarray(matrix, dtype=np.float64)))

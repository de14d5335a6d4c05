"""Gradient compressors and the compression-quality estimator.

The rank compressor performs one warm-started subspace-iteration step and
returns a factor pair (left orthonormal columns, right coefficient columns)
whose product reconstructs the input's projection onto the iterated
subspace. Random-K, count-mean sketching, and sign compression follow the
shared-seed convention: workers given the same seed build identical index,
sign, and bucket structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RngStream, as_matrix

__all__ = [
    "RankFactors",
    "SketchMessage",
    "compression_quality",
    "decompress",
    "identity_compress",
    "orthonormalize_columns",
    "payload_size",
    "random_k_compress",
    "random_k_decompress",
    "rank_compress",
    "signum_aggregate",
    "signum_compress",
    "sketch_compress",
    "sketch_decompress",
]

# Columns with norm at or below this are treated as rank-deficient and
# replaced by fresh random directions during orthonormalization.
_COLUMN_TOL = 1e-12


@dataclass
class RankFactors:
    """Low-rank factor pair; the reconstruction is ``left @ right.T``.

    ``left`` (m-by-r) carries orthonormal columns, ``right`` (n-by-r) the
    coefficients; component energies live in the right factor's column
    norms. Zero factors (from a zero input) are the one allowed exception
    to orthonormality.
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = as_matrix(self.left)
        self.right = as_matrix(self.right)
        if self.left.shape[1] != self.right.shape[1]:
            raise ValueError("factor ranks differ")

    @property
    def rank(self) -> int:
        return self.left.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape[0], self.right.shape[0]


def orthonormalize_columns(a, fill_stream: RngStream | None = None, tol: float = _COLUMN_TOL) -> np.ndarray:
    """Modified Gram-Schmidt with replacement of rank-deficient columns.

    Columns whose residual norm falls at or below ``tol`` are replaced by
    fresh Gaussian directions (orthogonalized against the ones already
    kept), so the result always has orthonormal columns.
    """
    q = np.array(a, dtype=np.float64, copy=True)
    m, r = q.shape
    for j in range(r):
        for i in range(j):
            q[:, j] -= (q[:, i] @ q[:, j]) * q[:, i]
        nrm = np.linalg.norm(q[:, j])
        while nrm <= tol:
            if fill_stream is None:
                raise ValueError("rank-deficient column and no fill stream given")
            v = fill_stream.normal(m)
            for i in range(j):
                v -= (q[:, i] @ v) * q[:, i]
            nrm = np.linalg.norm(v)
            q[:, j] = v
        q[:, j] /= nrm
    return q


def rank_compress(matrix, rank: int, warm: np.ndarray | None = None, stream: RngStream | None = None) -> RankFactors:
    """One subspace-iteration step toward a rank-``rank`` factorization.

    The iteration is seeded with ``warm`` (the previous call's right factor)
    when given, else with Gaussian directions from ``stream``. Pass the
    returned ``.right`` as the next call's warm start; on a fixed matrix the
    iteration converges to the dominant rank-``rank`` subspace.
    """
    m_mat = as_matrix(matrix)
    m, n = m_mat.shape
    if not 1 <= rank <= min(m, n):
        raise ValueError(f"rank {rank} outside [1, {min(m, n)}]")
    if not m_mat.any():
        return RankFactors(np.zeros((m, rank)), np.zeros((n, rank)))
    if warm is not None:
        warm = np.asarray(warm, dtype=np.float64)
        if warm.shape != (n, rank):
            raise ValueError(f"warm start shape {warm.shape} != {(n, rank)}")
        start = warm
    else:
        if stream is None:
            raise ValueError("cold start requires a random stream")
        start = stream.normal((n, rank))
    left = orthonormalize_columns(m_mat @ start, fill_stream=stream)
    right = m_mat.T @ left
    return RankFactors(left, right)


def decompress(factors: RankFactors) -> np.ndarray:
    """Exact product ``left @ right.T``."""
    return factors.left @ factors.right.T


def payload_size(m: int, n: int, cf: float) -> int:
    """Number of transmitted values: round-half-up of m*n*cf, at least 1."""
    if not 0 < cf <= 1:
        raise ValueError("compression factor must be in (0, 1]")
    return int(min(max(math.floor(m * n * cf + 0.5), 1), m * n))


def random_k_compress(matrix, cf: float, shared_seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly sampled entries of the flattened matrix.

    Indices are drawn without replacement from a stream keyed only by
    ``shared_seed``, so every worker using the same seed samples the same
    positions.
    """
    m_mat = as_matrix(matrix)
    m, n = m_mat.shape
    b = payload_size(m, n, cf)
    rng = RngStream(shared_seed, "random-k")
    indices = np.sort(rng.choice(m * n, size=b, replace=False))
    return indices, m_mat.ravel()[indices]


def random_k_decompress(values_per_worker, indices, m: int, n: int) -> np.ndarray:
    """Zeros everywhere except the sampled positions, which hold the worker average."""
    indices = np.asarray(indices)
    stacked = []
    for vals in values_per_worker:
        vals = np.asarray(vals, dtype=np.float64)
        if vals.shape != indices.shape:
            raise ValueError("worker message length does not match the index set")
        stacked.append(vals)
    if not stacked:
        raise ValueError("need at least one worker message")
    out = np.zeros(m * n)
    out[indices] = np.mean(stacked, axis=0)
    return out.reshape(m, n)


@dataclass
class SketchMessage:
    """Count-mean sketch buckets for one worker's matrix."""

    buckets: np.ndarray

    def __post_init__(self):
        self.buckets = np.asarray(self.buckets, dtype=np.float64)
        if self.buckets.ndim != 1 or self.buckets.size < 1:
            raise ValueError("buckets must be a non-empty vector")

    @property
    def width(self) -> int:
        return self.buckets.size


def _sketch_maps(mn: int, b: int, shared_seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = RngStream(shared_seed, "sketch")
    index_map = rng.integers(0, b, size=mn)
    sign_map = rng.integers(0, 2, size=mn) * 2.0 - 1.0
    return index_map, sign_map


def sketch_compress(matrix, cf: float, shared_seed: int) -> SketchMessage:
    """Signed bucket sums: bucket j accumulates sum of S(l) M(l) over l with I(l)=j."""
    m_mat = as_matrix(matrix)
    m, n = m_mat.shape
    b = payload_size(m, n, cf)
    index_map, sign_map = _sketch_maps(m * n, b, shared_seed)
    buckets = np.zeros(b)
    np.add.at(buckets, index_map, sign_map * m_mat.ravel())
    return SketchMessage(buckets)


def sketch_decompress(messages, cf: float, shared_seed: int, m: int, n: int) -> np.ndarray:
    """Entry l estimated as S(l) times the worker-averaged bucket I(l)."""
    b = payload_size(m, n, cf)
    stacked = []
    for msg in messages:
        buckets = msg.buckets if isinstance(msg, SketchMessage) else np.asarray(msg, dtype=np.float64)
        if buckets.size != b:
            raise ValueError(f"bucket length {buckets.size} != expected {b}")
        stacked.append(buckets)
    if not stacked:
        raise ValueError("need at least one worker message")
    index_map, sign_map = _sketch_maps(m * n, b, shared_seed)
    mean_buckets = np.mean(stacked, axis=0)
    return (sign_map * mean_buckets[index_map]).reshape(m, n)


def signum_compress(matrix) -> np.ndarray:
    """Entrywise sign with sign(0) = +1."""
    m_mat = as_matrix(matrix)
    return np.where(m_mat >= 0, 1.0, -1.0)


def signum_aggregate(sign_messages) -> np.ndarray:
    """Entrywise majority vote across workers; split votes go to +1."""
    mats = [as_matrix(s) for s in sign_messages]
    if not mats:
        raise ValueError("need at least one sign message")
    for s in mats:
        if not np.all(np.abs(s) == 1.0):
            raise ValueError("sign messages must contain only +1/-1")
    total = sum(mats)
    return np.where(total >= 0, 1.0, -1.0)


def identity_compress(matrix) -> np.ndarray:
    """The lossless compressor: returns the input unchanged."""
    return as_matrix(matrix).copy()


def compression_quality(roundtrip, corpus, seeds: int = 1, base_seed: int = 0) -> float:
    """Retained-energy floor of a compressor over a matrix corpus.

    Evaluates 1 - max over the corpus of ||C(M) - M||^2 / ||M||^2, averaging
    the ratio over ``seeds`` internal seeds for randomized compressors.
    ``roundtrip(matrix, seed)`` must return the reconstructed matrix. The
    result lies in [0, 1] for any compressor whose distortion never exceeds
    the input energy; estimators that amplify (e.g. sketch sums under heavy
    collisions) can legitimately push it negative.
    """
    worst = None
    for idx, matrix in enumerate(corpus):
        m_mat = as_matrix(matrix)
        denom = float(np.sum(m_mat * m_mat))
        if denom == 0.0:
            raise ValueError(f"corpus matrix {idx} is zero")
        total = 0.0
        for s in range(seeds):
            rec = np.asarray(roundtrip(m_mat, base_seed + s), dtype=np.float64)
            diff = rec - m_mat
            total += float(np.sum(diff * diff)) / denom
        ratio = total / seeds
        worst = ratio if worst is None else max(worst, ratio)
    if worst is None:
        raise ValueError("corpus is empty")
    return 1.0 - worst

"""Channel-influence analytics and rank-energy diagnostics.

The influence factor of a transmission scheme is the expected squared
channel distortion of the reconstructed gradient divided by the transmitted
object's squared energy. Sending a matrix uncompressed costs exactly
1/snr with snr = P/(m*n); sending rank-r factors under the closed-form
allocation costs at most 4/((m/r) snr) (1 + 1/((n/r) snr)), an order-m
improvement whenever the rank is small and the per-entry energy is of
constant order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .allocation import RankPowerAllocation, distortion_factor
from .compressors import RankFactors, decompress
from .core import RngStream, as_matrix

__all__ = [
    "InfluenceReport",
    "RankEnergy",
    "lowrank_influence_bound",
    "meets_snr_condition",
    "monte_carlo_influence",
    "rank_energy",
    "uncompressed_influence",
]


def uncompressed_influence(m: int, n: int, power: float) -> float:
    """Influence factor of direct (uncompressed) transmission: m*n/P."""
    if m < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    if math.isinf(power):
        return 0.0
    if power <= 0:
        raise ValueError("power must be positive")
    return m * n / power


def lowrank_influence_bound(m: int, n: int, rank: int, power: float) -> float:
    """Worst-case influence of rank-``rank`` factor transmission.

    Evaluates 4/((m/r) snr) (1 + 1/((n/r) snr)) with snr = P/(m*n); holds
    for the closed-form allocation regardless of the component weights.
    """
    if not 1 <= rank <= min(m, n):
        raise ValueError(f"rank {rank} outside [1, {min(m, n)}]")
    if math.isinf(power):
        return 0.0
    if power <= 0:
        raise ValueError("power must be positive")
    snr = power / (m * n)
    return 4.0 / ((m / rank) * snr) * (1.0 + 1.0 / ((n / rank) * snr))


def meets_snr_condition(power: float, rank: int) -> bool:
    """Whether P/(4 r^2) > 1, the regime where low-rank transmission wins.

    This is far weaker than requiring constant per-entry energy; it is the
    exact threshold under which the bound ratio 4r/m + 4r^2/P stays below
    one for small ranks.
    """
    if power < 0 or rank < 1:
        raise ValueError("need nonnegative power and positive rank")
    return power / (4.0 * rank * rank) > 1.0


@dataclass(frozen=True)
class InfluenceReport:
    """Analytic vs Monte-Carlo influence of one factor transmission."""

    analytic: float
    empirical: float
    trials: int
    std_error: float
    normalization: str = "compressed"


def monte_carlo_influence(
    factors: RankFactors,
    alloc: RankPowerAllocation,
    trials: int,
    stream: RngStream,
    reference_norm_sq: float | None = None,
    batch: int = 256,
) -> InfluenceReport:
    """Simulate noisy factor transmission and compare with the analytic value.

    Each trial perturbs every factor column by channel noise scaled with its
    energy share, re-multiplies, and measures the squared reconstruction
    error. The default normalizes by the compressed matrix's energy (the
    transmitted object); pass ``reference_norm_sq`` (e.g. the raw gradient's
    squared norm) to normalize by the source instead.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a meaningful estimate")
    if alloc.rank != factors.rank:
        raise ValueError("allocation rank does not match the factors")
    left, right = factors.left, factors.right
    m, n = factors.shape
    r = factors.rank
    compressed = decompress(factors)
    compressed_sq = float(np.sum(compressed * compressed))
    if compressed_sq == 0.0:
        raise ValueError("cannot measure influence of zero factors")
    if reference_norm_sq is None:
        norm_sq = compressed_sq
        normalization = "compressed"
    else:
        if reference_norm_sq <= 0:
            raise ValueError("reference norm must be positive")
        norm_sq = float(reference_norm_sq)
        normalization = "source"

    left_energy = np.sum(left * left, axis=0)
    right_energy = np.sum(right * right, axis=0)
    f_vals = np.array(
        [distortion_factor(alloc.alphas[i], alloc.betas[i], m, n) for i in range(r)]
    )
    analytic = float(np.sum(left_energy * right_energy * (f_vals - 1.0)) / norm_sq)

    left_scale = np.sqrt(left_energy) / np.sqrt(alloc.alphas)
    right_scale = np.sqrt(right_energy) / np.sqrt(alloc.betas)
    ratios = np.empty(trials)
    done = 0
    while done < trials:
        count = min(batch, trials - done)
        noisy_left = left[None, :, :] + stream.normal((count, m, r)) * left_scale
        noisy_right = right[None, :, :] + stream.normal((count, n, r)) * right_scale
        received = np.einsum("tmr,tnr->tmn", noisy_left, noisy_right)
        diff = received - compressed
        ratios[done : done + count] = np.sum(diff * diff, axis=(1, 2)) / norm_sq
        done += count
    empirical = float(ratios.mean())
    std_error = float(ratios.std(ddof=1) / math.sqrt(trials))
    return InfluenceReport(analytic, empirical, trials, std_error, normalization)


class RankEnergy(NamedTuple):
    fraction: float
    converged: bool


def rank_energy(
    matrix,
    top_k: int,
    tol: float = 1e-8,
    max_iter: int = 500,
    stream: RngStream | None = None,
) -> RankEnergy:
    """Fraction of squared energy captured by the top singular components.

    Singular values are found by power iteration with deflation (tolerance
    on the relative change of each value, capped iterations per component).
    A ``converged=False`` result flags components that hit the iteration cap;
    the fraction is still reported from the partial estimates.
    """
    m_mat = as_matrix(matrix)
    m, n = m_mat.shape
    if not 1 <= top_k <= min(m, n):
        raise ValueError(f"top_k {top_k} outside [1, {min(m, n)}]")
    total = float(np.sum(m_mat * m_mat))
    if total == 0.0:
        raise ValueError("rank energy of the zero matrix is undefined")
    if stream is None:
        stream = RngStream(0, "rank-energy")
    work = m_mat.copy()
    captured = 0.0
    converged = True
    for _ in range(top_k):
        residual = float(np.linalg.norm(work))
        if residual <= tol * math.sqrt(total):
            break
        v = stream.normal(n)
        v /= np.linalg.norm(v)
        sigma_prev = 0.0
        sigma = 0.0
        ok = False
        for _ in range(max_iter):
            w = work @ v
            sigma = float(np.linalg.norm(w))
            if sigma == 0.0:
                break
            u = w / sigma
            v = work.T @ u
            v_norm = float(np.linalg.norm(v))
            if v_norm == 0.0:
                break
            v /= v_norm
            sigma = v_norm
            if abs(sigma - sigma_prev) <= tol * max(sigma, 1.0):
                ok = True
                break
            sigma_prev = sigma
        if not ok:
            converged = False
        if sigma > 0.0:
            u = work @ v
            sigma = float(np.linalg.norm(u))
            if sigma > 0.0:
                u /= sigma
                work -= sigma * np.outer(u, v)
                captured += sigma * sigma
    return RankEnergy(min(captured / total, 1.0), converged)

"""Closed-form power allocation across rank components and network layers.

Transmitting a factor pair (u, v) with energies (alpha, beta) multiplies the
component's expected energy by (1 + m/alpha)(1 + n/beta); the distortion is
that factor minus one. For a single component the optimal split of a budget
P between alpha and beta has a closed form; for several components the
budget is first divided proportionally to the square roots of the component
energy weights, then each share is split by the rank-1 rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compressors import RankFactors

__all__ = [
    "LAYER_SCHEMES",
    "LayerStats",
    "RankPowerAllocation",
    "allocate_rank",
    "allocate_rank1",
    "component_weights",
    "distortion_factor",
    "layer_allocation",
]

# Degenerate component weights are floored at this value before renormalizing
# so every emitted component receives nonzero power.
_WEIGHT_EPS = 1e-12

LAYER_SCHEMES = ("uniform", "grad-norm", "compressed-norm")


def distortion_factor(alpha: float, beta: float, m: int, n: int) -> float:
    """Energy amplification (1 + m/alpha)(1 + n/beta) of one noisy factor pair."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("power shares must be positive")
    if m < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    return (1.0 + m / alpha) * (1.0 + n / beta)


def allocate_rank1(m: int, n: int, power: float) -> tuple[float, float]:
    """Optimal split of ``power`` between the two factors of one component.

    Minimizes distortion_factor over alpha + beta = power. Equal dimensions
    split evenly; otherwise the closed form favours the smaller side. The
    result satisfies the bound
    f <= 1 + 4/(m*snr) (1 + 1/(n*snr)) with snr = power/(m*n), m <= n.
    """
    if power <= 0:
        raise ValueError("power must be positive")
    if m < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    if m == n:
        return power / 2.0, power / 2.0
    swapped = m > n
    if swapped:
        m, n = n, m
    root_m = math.sqrt(1.0 + power / m)
    root_n = math.sqrt(1.0 + power / n)
    alpha = root_n * (root_m - root_n) / (1.0 / m - 1.0 / n)
    beta = power - alpha
    if swapped:
        alpha, beta = beta, alpha
    return alpha, beta


@dataclass(frozen=True)
class RankPowerAllocation:
    """Per-component factor energies; total equals the layer budget."""

    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=np.float64))
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=np.float64))
        if self.alphas.shape != self.betas.shape or self.alphas.ndim != 1:
            raise ValueError("alphas and betas must be 1-D of equal length")
        if np.any(self.alphas < 0) or np.any(self.betas < 0):
            raise ValueError("power shares must be nonnegative")

    @property
    def rank(self) -> int:
        return self.alphas.size

    @property
    def total(self) -> float:
        return float(self.alphas.sum() + self.betas.sum())


def allocate_rank(m: int, n: int, power: float, weights) -> RankPowerAllocation:
    """Split ``power`` across rank components proportionally to sqrt(weight).

    ``weights`` are the normalized component energies (positive, summing to
    one). Each component's share is then divided between its two factors by
    the rank-1 rule. The weighted distortion sum satisfies
    sum_i w_i f(alpha_i, beta_i) <= 1 + 4/((m/r) snr) (1 + 1/((n/r) snr)).
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    if power <= 0:
        raise ValueError("power must be positive")
    roots = np.sqrt(w)
    shares = power * roots / roots.sum()
    alphas = np.empty(w.size)
    betas = np.empty(w.size)
    for i, p_i in enumerate(shares):
        alphas[i], betas[i] = allocate_rank1(m, n, p_i)
    return RankPowerAllocation(alphas, betas)


def component_weights(factors: RankFactors) -> np.ndarray:
    """Normalized component energies from the coefficient factor's columns.

    Proportional to the squared column norms of the non-orthonormal (right)
    factor; zero-energy components are floored at a tiny epsilon before
    renormalizing so they still receive power.
    """
    energies = np.sum(factors.right * factors.right, axis=0)
    if energies.sum() == 0.0:
        raise ValueError("all factor components are zero")
    energies = np.maximum(energies, _WEIGHT_EPS * energies.max())
    return energies / energies.sum()


@dataclass(frozen=True)
class LayerStats:
    """One worker's per-layer statistics used for budget proposals."""

    elements: int
    grad_norm: float
    compressed_norm: float


def _proposal(scheme: str, stats: dict[str, LayerStats], layers: list[str], power: float) -> np.ndarray:
    if scheme == "uniform":
        weights = np.ones(len(layers))
    elif scheme == "grad-norm":
        weights = np.array([stats[name].grad_norm for name in layers])
    else:
        weights = np.array([stats[name].compressed_norm for name in layers])
    if np.any(weights < 0):
        raise ValueError("layer statistics must be nonnegative")
    total = weights.sum()
    if total == 0.0:
        weights = np.ones(len(layers))
        total = weights.sum()
    return power * weights / total


def layer_allocation(scheme: str, worker_stats, power: float) -> dict[str, float]:
    """Per-layer budgets under a proposal scheme, averaged across workers.

    Each worker proposes shares of ``power`` across layers (uniform,
    proportional to gradient norms, or proportional to compressed-message
    norms); the server averages the proposals. All-zero statistics fall back
    to the uniform split. Shares sum to ``power`` exactly.
    """
    if scheme not in LAYER_SCHEMES:
        raise ValueError(f"unknown layer allocation scheme {scheme!r}")
    if power < 0:
        raise ValueError("power must be nonnegative")
    worker_stats = list(worker_stats)
    if not worker_stats:
        raise ValueError("need statistics from at least one worker")
    layers = sorted(worker_stats[0].keys())
    if not layers:
        raise ValueError("need at least one layer")
    for stats in worker_stats:
        if sorted(stats.keys()) != layers:
            raise ValueError("workers disagree on the layer set")
    proposals = np.array([_proposal(scheme, stats, layers, power) for stats in worker_stats])
    shares = proposals.mean(axis=0)
    total = shares.sum()
    if total > 0:
        shares = shares * (power / total)
    return dict(zip(layers, shares.tolist()))

"""The additive-noise uplink.

Workers transmit simultaneously; signals superpose and arrive at the server
corrupted by zero-mean unit-variance noise. Each worker's signal energy per
round is capped by a power policy whose time average must not exceed the
round budget. With the optimal uniform scaling a = sqrt(P_t)/max_j ||g_j||,
the received signal (after dividing by k*a) equals the gradient average plus
noise scaled by max_j ||g_j|| / (k*sqrt(P_t)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream, sample_noise

__all__ = [
    "POLICY_KINDS",
    "ChannelConfig",
    "PowerPolicy",
    "optimal_scalar",
    "power_at",
    "transmit_effective",
    "transmit_vector",
]

POLICY_KINDS = (
    "constant",
    "step-decreasing",
    "step-increasing",
    "linear-decreasing",
    "linear-increasing",
)

# Relative slack when checking the average-power constraint.
_AVG_TOL = 1e-9


def _step_schedule(budget: float, horizon: int, increasing: bool) -> np.ndarray:
    levels = budget * np.array([1 / 3, 2 / 3, 1.0, 4 / 3, 5 / 3])
    if not increasing:
        levels = levels[::-1]
    phase = math.ceil(horizon / 5)
    sched = np.repeat(levels, phase)[:horizon]
    # Truncated phases can push the mean above the budget; rescale so the
    # average constraint holds for every horizon. Horizons divisible by 5
    # keep the exact level set.
    mean = sched.mean()
    if mean > budget > 0:
        sched = sched * (budget / mean)
    return sched


def _linear_schedule(budget: float, horizon: int, increasing: bool) -> np.ndarray:
    if horizon == 1:
        return np.array([budget])
    sched = np.linspace(budget / 3, 5 * budget / 3, horizon)
    return sched if increasing else sched[::-1].copy()


@dataclass(frozen=True)
class PowerPolicy:
    """Per-round energy budgets P_t whose average over the horizon is <= budget."""

    kind: str = "constant"
    budget: float = 1.0
    horizon: int = 1
    _schedule: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown power policy {self.kind!r}")
        if not (self.budget >= 0):
            raise ValueError("power budget must be nonnegative")
        if self.horizon < 1:
            raise ValueError("policy horizon must be positive")
        if self.kind == "constant":
            sched = np.full(self.horizon, float(self.budget))
        elif self.kind.startswith("step"):
            sched = _step_schedule(self.budget, self.horizon, self.kind.endswith("increasing"))
        else:
            sched = _linear_schedule(self.budget, self.horizon, self.kind.endswith("increasing"))
        assert sched.mean() <= self.budget * (1 + _AVG_TOL) + 1e-30
        assert np.all(sched >= 0)
        object.__setattr__(self, "_schedule", sched)

    def power_at(self, t: int) -> float:
        if not 0 <= t < self.horizon:
            raise ValueError(f"round {t} outside horizon [0, {self.horizon})")
        return float(self._schedule[t])

    def schedule(self) -> np.ndarray:
        return self._schedule.copy()


def power_at(policy: PowerPolicy, t: int) -> float:
    """Budget for round t under the policy."""
    return policy.power_at(t)


@dataclass(frozen=True)
class ChannelConfig:
    """Uplink configuration shared by all workers."""

    policy: PowerPolicy = PowerPolicy()
    workers: int = 1
    infinite_power: bool = False
    noise: str = "gaussian"

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("worker count must be positive")


def optimal_scalar(norms, power: float) -> float:
    """Uniform gradient scaling sqrt(P_t) / max_j ||g_j||.

    Saturates the per-client power constraint while keeping the received
    signal proportional to the gradient sum. A zero max norm means nothing
    is sent and the scalar is 0.
    """
    norms = np.asarray(norms, dtype=np.float64)
    if norms.size == 0:
        raise ValueError("need at least one gradient norm")
    if np.any(norms < 0) or power < 0:
        raise ValueError("norms and power must be nonnegative")
    top = float(norms.max())
    if top == 0.0:
        return 0.0
    return math.sqrt(power) / top


def transmit_effective(
    signals,
    power: float,
    stream: RngStream,
    infinite_power: bool = False,
    noise: str = "gaussian",
) -> np.ndarray:
    """Effective channel output: signal average plus scaled noise.

    Returns (1/k) sum_i x_i + (max_i ||x_i|| / (k sqrt(P))) Z. Infinite power
    or an all-zero input yields the exact average (no noise drawn).
    """
    arrays = [np.asarray(x, dtype=np.float64) for x in signals]
    if not arrays:
        raise ValueError("need at least one transmitted signal")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("all transmitted signals must share a shape")
    k = len(arrays)
    avg = sum(arrays) / k
    if infinite_power or math.isinf(power):
        return avg
    if power < 0:
        raise ValueError("power must be nonnegative")
    top = max(float(np.linalg.norm(a)) for a in arrays)
    if top == 0.0:
        return avg
    flat_m, flat_n = (shape if len(shape) == 2 else (int(np.prod(shape)) or 1, 1))
    z = sample_noise(flat_m, flat_n, stream, distribution=noise).reshape(shape)
    return avg + (top / (k * math.sqrt(power))) * z


def transmit_vector(
    x,
    alpha: float,
    stream: RngStream,
    infinite_power: bool = False,
    noise: str = "gaussian",
) -> np.ndarray:
    """Single-vector channel use with energy share alpha.

    The physically transmitted signal (sqrt(alpha)/||x||) x has squared norm
    exactly alpha; the receiver rescales, so the output is
    x + (||x||/sqrt(alpha)) z with z i.i.d. unit noise of x's length.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("transmit_vector expects a 1-D vector")
    nrm = float(np.linalg.norm(x))
    if nrm == 0.0:
        return x.copy()
    if infinite_power or math.isinf(alpha):
        return x.copy()
    if alpha <= 0:
        raise ValueError("power share must be positive for a nonzero vector")
    z = sample_noise(x.size, 1, stream, distribution=noise).ravel()
    return x + (nrm / math.sqrt(alpha)) * z

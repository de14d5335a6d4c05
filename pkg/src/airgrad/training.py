"""Training tasks, stochastic gradient oracles, and the momentum optimizer.

Model parameters are dicts mapping layer names to 2-D matrices, matching the
unit of compression and transmission. Two tasks are provided: a strongly
convex quadratic with a known optimum (for convergence and equivalence
checks) and a one-layer softmax classifier for 28x28 digit images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream, as_matrix

__all__ = [
    "OptimizerConfig",
    "QuadraticTask",
    "SgdState",
    "WorkerSet",
    "init_classifier",
    "nn_accuracy",
    "nn_forward_backward",
    "shard_dataset",
]


@dataclass(frozen=True)
class QuadraticTask:
    """f(theta) = 0.5 sum_ij s_ij (theta_ij - opt_ij)^2 with s > 0 entrywise.

    The gradient oracle adds isotropic Gaussian noise of scale
    ``noise_scale``, so it is conditionally unbiased with constant variance.
    """

    spectrum: np.ndarray
    optimum: np.ndarray
    noise_scale: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "spectrum", as_matrix(self.spectrum))
        object.__setattr__(self, "optimum", as_matrix(self.optimum))
        if self.spectrum.shape != self.optimum.shape:
            raise ValueError("spectrum and optimum shapes differ")
        if np.any(self.spectrum <= 0):
            raise ValueError("curvature spectrum must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.spectrum.shape

    @property
    def max_curvature(self) -> float:
        return float(self.spectrum.max())

    def loss(self, theta) -> float:
        diff = as_matrix(theta) - self.optimum
        return 0.5 * float(np.sum(self.spectrum * diff * diff))

    def gradient(self, theta) -> np.ndarray:
        theta = as_matrix(theta)
        if theta.shape != self.shape:
            raise ValueError(f"parameter shape {theta.shape} != {self.shape}")
        return self.spectrum * (theta - self.optimum)

    def noisy_gradient(self, theta, stream: RngStream) -> np.ndarray:
        grad = self.gradient(theta)
        if self.noise_scale == 0.0:
            return grad
        return grad + self.noise_scale * stream.normal(self.shape)

    @classmethod
    def random(cls, m: int, n: int, stream: RngStream, noise_scale: float = 0.0,
               curvature_range: tuple[float, float] = (0.5, 2.0),
               optimum_rank: int = 0) -> "QuadraticTask":
        """Random instance; ``optimum_rank`` > 0 makes the optimum (and hence
        the gradient path from a zero start) approximately low-rank."""
        lo, hi = curvature_range
        spectrum = lo + (hi - lo) * stream.generator.random((m, n))
        if optimum_rank > 0:
            r = min(optimum_rank, m, n)
            optimum = (stream.normal((m, r)) @ stream.normal((r, n))) / math.sqrt(r)
        else:
            optimum = stream.normal((m, n))
        return cls(spectrum, optimum, noise_scale)


def init_classifier(n_classes: int = 10, n_features: int = 784,
                    stream: RngStream | None = None, scale: float = 0.01) -> dict[str, np.ndarray]:
    """Parameters of the linear softmax classifier.

    The bias is kept as a column matrix so it travels through the channel
    like any other layer (uncompressed, with its own budget share).
    """
    if stream is None:
        weights = np.zeros((n_classes, n_features))
    else:
        weights = scale * stream.normal((n_classes, n_features))
    return {"weights": weights, "bias": np.zeros((n_classes, 1))}


def _logits(params: dict[str, np.ndarray], images: np.ndarray) -> np.ndarray:
    return images @ params["weights"].T + params["bias"].ravel()


def nn_forward_backward(params, images, labels) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy and its exact gradients.

    ``images`` is (batch, features) with values in [0, 1]; ``labels`` holds
    class ids. Gradients come back keyed like the parameters.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    n_classes = params["weights"].shape[0]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    batch = images.shape[0]
    logits = _logits(params, images)
    logits = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = -float(np.mean(np.log(probs[np.arange(batch), labels] + 1e-300)))
    dlogits = probs
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch
    grads = {
        "weights": dlogits.T @ images,
        "bias": dlogits.sum(axis=0)[:, None],
    }
    return loss, grads


def nn_accuracy(params, images, labels) -> float:
    preds = _logits(params, np.asarray(images, dtype=np.float64)).argmax(axis=1)
    return float(np.mean(preds == np.asarray(labels)))


@dataclass(frozen=True)
class OptimizerConfig:
    """SGD with momentum, weight decay, and a learning-rate schedule."""

    learning_rate: float = 0.01
    momentum: float = 0.0
    weight_decay: float = 0.0
    schedule: str = "constant"
    horizon: int = 1
    decay_factor: float = 10.0
    decay_at: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")
        if self.schedule not in ("constant", "cosine", "step-decay"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "cosine" and self.horizon < 1:
            raise ValueError("cosine schedule needs a positive horizon")
        if self.schedule == "step-decay" and self.decay_factor <= 0:
            raise ValueError("decay factor must be positive")

    def learning_rate_at(self, t: int) -> float:
        if self.schedule == "constant":
            return self.learning_rate
        if self.schedule == "cosine":
            # Evaluated at t/horizon with t < horizon, so the rate stays positive.
            frac = min(t, self.horizon - 1) / self.horizon
            return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * frac))
        return self.learning_rate / self.decay_factor if t >= self.decay_at else self.learning_rate


@dataclass
class SgdState:
    """Per-layer momentum buffers."""

    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def like(cls, params: dict[str, np.ndarray]) -> "SgdState":
        return cls({name: np.zeros_like(p) for name, p in params.items()})

    def apply_gradient(self, params, grads, config: OptimizerConfig, t: int) -> None:
        """v <- momentum v + g + wd theta; theta <- theta - lr_t v (in place)."""
        lr = config.learning_rate_at(t)
        for name, theta in params.items():
            g = grads[name]
            if g.shape != theta.shape:
                raise ValueError(f"gradient shape mismatch on layer {name!r}")
            v = self.velocity[name]
            v *= config.momentum
            v += g
            if config.weight_decay:
                v += config.weight_decay * theta
            theta -= lr * v

    def apply_update(self, params, updates, config: OptimizerConfig, t: int) -> None:
        """Momentum step for updates that already carry the learning rate.

        v <- momentum v + u + lr_t wd theta; theta <- theta - v. Identical to
        :meth:`apply_gradient` with u = lr_t g whenever the rate is constant.
        """
        lr = config.learning_rate_at(t)
        for name, theta in params.items():
            u = updates[name]
            if u.shape != theta.shape:
                raise ValueError(f"update shape mismatch on layer {name!r}")
            v = self.velocity[name]
            v *= config.momentum
            v += u
            if config.weight_decay:
                v += lr * config.weight_decay * theta
            theta -= v


def shard_dataset(n_samples: int, k: int) -> list[np.ndarray]:
    """Partition sample indices into k shards with sizes differing by <= 1."""
    if k < 1 or n_samples < k:
        raise ValueError("need at least one sample per worker")
    bounds = np.linspace(0, n_samples, k + 1).astype(int)
    return [np.arange(bounds[i], bounds[i + 1]) for i in range(k)]


class WorkerSet:
    """Data-homogeneous workers with per-epoch reshuffled shards."""

    def __init__(self, n_samples: int, workers: int, batch_size: int, seed: int):
        self.shards = shard_dataset(n_samples, workers)
        self.workers = workers
        self.batch_size = batch_size
        self.seed = seed
        smallest = min(len(s) for s in self.shards)
        self.batches_per_epoch = max(smallest // batch_size, 1)

    def epoch_batches(self, epoch: int) -> list[list[np.ndarray]]:
        """For each worker, the epoch's batch index arrays (partial tail dropped)."""
        out = []
        for w, shard in enumerate(self.shards):
            perm = RngStream(self.seed, "shuffle", w, epoch).permutation(len(shard))
            ordered = shard[perm]
            batches = [
                ordered[i * self.batch_size : (i + 1) * self.batch_size]
                for i in range(self.batches_per_epoch)
            ]
            out.append(batches)
        return out

"""Per-round orchestration: compress, allocate power, transmit, update.

Every algorithm follows the same round shape. Workers compute stochastic
gradients; error-feedback algorithms fold the learning rate and residual
memory into the message; messages cross the additive-noise uplink with a
per-layer budget agreed through a noiseless side channel; the server
reconstructs an update and applies it. Channel draws are keyed by
(round, layer, component) streams, so any execution schedule produces the
same result.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .allocation import LayerStats, allocate_rank, component_weights, layer_allocation
from .channel import ChannelConfig, transmit_effective
from .compressors import (
    decompress,
    payload_size,
    random_k_compress,
    rank_compress,
    signum_compress,
    sketch_compress,
    _sketch_maps,
)
from .core import RngStream, frobenius_norm
from .metrics import RunRecord
from .training import OptimizerConfig, QuadraticTask, SgdState, WorkerSet, init_classifier, nn_accuracy, nn_forward_backward

__all__ = [
    "ALGORITHM_KINDS",
    "AlgorithmSpec",
    "WorkerState",
    "baseline_round",
    "lowrank_round",
    "payload_values",
    "run_experiment",
    "zsgd_round",
]

ALGORITHM_KINDS = ("lowrank", "zsgd", "random_k", "sketching", "signum")

# Error feedback per algorithm: on for the rank and random-K schemes, off for
# sketching (diverges with it) and sign compression (original form).
_ERROR_FEEDBACK = {"lowrank": True, "zsgd": False, "random_k": True, "sketching": False, "signum": False}

_POWER_TOL = 1e-9


@dataclass(frozen=True)
class AlgorithmSpec:
    """Which compression-and-transmission scheme a run uses."""

    kind: str
    rank: int | None = None
    cf: float | None = None

    def __post_init__(self):
        if self.kind not in ALGORITHM_KINDS:
            raise ValueError(f"unknown algorithm {self.kind!r}")
        if self.kind == "lowrank" and (self.rank is None or self.rank < 1):
            raise ValueError("lowrank needs a positive rank")
        if self.kind in ("random_k", "sketching") and not (self.cf and 0 < self.cf <= 1):
            raise ValueError(f"{self.kind} needs a compression factor in (0, 1]")

    @property
    def error_feedback(self) -> bool:
        return _ERROR_FEEDBACK[self.kind]


@dataclass
class WorkerState:
    """One worker's error memory and warm starts, keyed by layer."""

    worker_id: int
    error: dict[str, np.ndarray] = field(default_factory=dict)
    warm: dict[str, np.ndarray | None] = field(default_factory=dict)

    @classmethod
    def zeros(cls, worker_id: int, shapes: dict[str, tuple[int, int]]) -> "WorkerState":
        return cls(
            worker_id,
            {name: np.zeros(shape) for name, shape in shapes.items()},
            {name: None for name in shapes},
        )


def _is_vector_layer(shape: tuple[int, int]) -> bool:
    return min(shape) == 1


def _check_layers(gradients: list[dict[str, np.ndarray]]) -> list[str]:
    if not gradients:
        raise ValueError("need gradients from at least one worker")
    layers = sorted(gradients[0].keys())
    shape0 = {name: gradients[0][name].shape for name in layers}
    for g in gradients[1:]:
        if sorted(g.keys()) != layers:
            raise ValueError("workers disagree on the layer set")
        for name in layers:
            if g[name].shape != shape0[name]:
                raise ValueError(f"gradient shape mismatch on layer {name!r}")
    return layers


def _shared_seed(seed: int, t: int, layer: str) -> int:
    digest = hashlib.blake2b(repr((seed, t, layer)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def lowrank_round(
    gradients: list[dict[str, np.ndarray]],
    states: list[WorkerState],
    lr_t: float,
    rank: int,
    power_t: float,
    channel: ChannelConfig,
    stream: RngStream,
) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    """One round of warm-started rank-factor compression and transmission.

    Per worker and layer: fold the memory and scaled gradient, take one
    subspace-iteration step, keep the local residual. Matrix layers transmit
    their factor columns component-by-component (all workers superpose on
    the channel); column-shaped layers go through uncompressed with their
    budget share. Returns the reconstructed update (learning rate already
    inside) and the per-layer budgets.
    """
    layers = _check_layers(gradients)
    k = len(gradients)
    if len(states) != k:
        raise ValueError("need one state per worker")
    infinite = channel.infinite_power
    factors_by_layer: dict[str, list] = {}
    payload_by_layer: dict[str, list] = {}
    stats = []
    for i, (g, state) in enumerate(zip(gradients, states)):
        wstats = {}
        for name in layers:
            shape = g[name].shape
            message = state.error[name] + lr_t * g[name]
            if _is_vector_layer(shape):
                payload_by_layer.setdefault(name, []).append(message)
                state.error[name] = np.zeros(shape)
                wstats[name] = LayerStats(message.size, frobenius_norm(g[name]), frobenius_norm(message))
            else:
                r_l = min(rank, *shape)
                # The cold-start directions are keyed by layer only, so every
                # worker iterates from the same subspace and the factor
                # components stay aligned for over-the-air averaging.
                factors = rank_compress(
                    message, r_l, warm=state.warm[name], stream=stream.child("compress", name)
                )
                state.warm[name] = factors.right.copy()
                rec = decompress(factors)
                state.error[name] = message - rec
                assert np.allclose(state.error[name] + rec, message, rtol=0, atol=1e-9 * max(1.0, float(np.abs(message).max())))
                factors_by_layer.setdefault(name, []).append(factors)
                wstats[name] = LayerStats(message.size, frobenius_norm(g[name]), frobenius_norm(factors.right))
        stats.append(wstats)

    budgets = layer_allocation("compressed-norm", stats, power_t if not infinite else 1.0)
    if infinite:
        budgets = {name: float("inf") for name in layers}

    updates: dict[str, np.ndarray] = {}
    spent = 0.0
    for name in layers:
        p_layer = budgets[name]
        if name in payload_by_layer:
            vecs = payload_by_layer[name]
            updates[name] = transmit_effective(
                vecs, p_layer, stream.child("channel", name), infinite_power=infinite, noise=channel.noise
            )
            if not infinite:
                spent += p_layer
            continue
        worker_factors = factors_by_layer[name]
        m, n = worker_factors[0].shape
        r_l = worker_factors[0].rank
        energies = [f.right for f in worker_factors]
        if not any(e.any() for e in energies):
            updates[name] = np.zeros((m, n))
            continue
        proposals = []
        for f in worker_factors:
            if f.right.any():
                proposals.append(component_weights(f))
            else:
                proposals.append(np.full(r_l, 1.0 / r_l))
        weights = np.mean(proposals, axis=0)
        weights = weights / weights.sum()
        if infinite:
            alphas = betas = np.full(r_l, float("inf"))
        else:
            alloc = allocate_rank(m, n, p_layer, weights)
            alphas, betas = alloc.alphas, alloc.betas
            spent += alloc.total
        received_left = np.empty((m, r_l))
        received_right = np.empty((n, r_l))
        for i in range(r_l):
            received_left[:, i] = transmit_effective(
                [f.left[:, i] for f in worker_factors],
                alphas[i],
                stream.child("channel", name, "left", i),
                infinite_power=infinite,
                noise=channel.noise,
            )
            received_right[:, i] = transmit_effective(
                [f.right[:, i] for f in worker_factors],
                betas[i],
                stream.child("channel", name, "right", i),
                infinite_power=infinite,
                noise=channel.noise,
            )
        updates[name] = received_left @ received_right.T
    if not infinite:
        assert spent <= power_t * (1 + _POWER_TOL)
    return updates, budgets


def zsgd_round(
    gradients: list[dict[str, np.ndarray]],
    power_t: float,
    channel: ChannelConfig,
    stream: RngStream,
) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    """Uncompressed transmission: per-layer noisy gradient averages.

    Budgets are proportional to the gradient norms. Returns the channel
    estimates (no learning rate applied) and the per-layer budgets.
    """
    layers = _check_layers(gradients)
    infinite = channel.infinite_power
    stats = [
        {name: LayerStats(g[name].size, frobenius_norm(g[name]), frobenius_norm(g[name])) for name in layers}
        for g in gradients
    ]
    budgets = layer_allocation("grad-norm", stats, power_t if not infinite else 1.0)
    if infinite:
        budgets = {name: float("inf") for name in layers}
    estimates = {
        name: transmit_effective(
            [g[name] for g in gradients],
            budgets[name],
            stream.child("channel", name),
            infinite_power=infinite,
            noise=channel.noise,
        )
        for name in layers
    }
    return estimates, budgets


def baseline_round(
    spec: AlgorithmSpec,
    gradients: list[dict[str, np.ndarray]],
    states: list[WorkerState],
    lr_t: float,
    power_t: float,
    channel: ChannelConfig,
    stream: RngStream,
    round_t: int,
    seed: int,
) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    """One round of a payload-compression baseline (Random-K, sketching, sign).

    Workers derive identical index/sign structure from a per-(round, layer)
    shared seed, transmit their payload vectors over the channel with the
    layer's budget, and the server reconstructs from the received average.
    Error feedback follows the per-algorithm convention.
    """
    layers = _check_layers(gradients)
    infinite = channel.infinite_power
    shared = {name: _shared_seed(seed, round_t, name) for name in layers}

    payloads: dict[str, list[np.ndarray]] = {name: [] for name in layers}
    side: dict[str, object] = {}
    stats = []
    for g, state in zip(gradients, states):
        wstats = {}
        for name in layers:
            shape = g[name].shape
            if spec.kind == "random_k":
                message = state.error[name] + lr_t * g[name]
                indices, values = random_k_compress(message, spec.cf, shared[name])
                side[name] = indices
                local = np.zeros(message.size)
                local[indices] = values
                local = local.reshape(shape)
                state.error[name] = message - local
                assert np.allclose(state.error[name] + local, message, rtol=0, atol=1e-9 * max(1.0, float(np.abs(message).max())))
                payloads[name].append(values)
                wstats[name] = LayerStats(message.size, frobenius_norm(g[name]), float(np.linalg.norm(values)))
            elif spec.kind == "sketching":
                message = lr_t * g[name]
                msg = sketch_compress(message, spec.cf, shared[name])
                payloads[name].append(msg.buckets)
                wstats[name] = LayerStats(message.size, frobenius_norm(g[name]), float(np.linalg.norm(msg.buckets)))
            else:  # signum
                signs = signum_compress(g[name])
                payloads[name].append(signs.ravel())
                wstats[name] = LayerStats(signs.size, frobenius_norm(g[name]), float(np.linalg.norm(signs)))
        stats.append(wstats)

    budgets = layer_allocation("compressed-norm", stats, power_t if not infinite else 1.0)
    if infinite:
        budgets = {name: float("inf") for name in layers}

    updates: dict[str, np.ndarray] = {}
    for name in layers:
        shape = gradients[0][name].shape
        received = transmit_effective(
            payloads[name],
            budgets[name],
            stream.child("channel", name),
            infinite_power=infinite,
            noise=channel.noise,
        )
        if spec.kind == "random_k":
            out = np.zeros(shape[0] * shape[1])
            out[side[name]] = received
            updates[name] = out.reshape(shape)
        elif spec.kind == "sketching":
            m, n = shape
            b = payload_size(m, n, spec.cf)
            index_map, sign_map = _sketch_maps(m * n, b, shared[name])
            updates[name] = (sign_map * received[index_map]).reshape(shape)
        else:
            majority = np.where(received.reshape(shape) >= 0, 1.0, -1.0)
            updates[name] = lr_t * majority
    return updates, budgets


def payload_values(spec: AlgorithmSpec, shape: tuple[int, int]) -> int:
    """Values one worker sends per round for a layer of the given shape."""
    m, n = shape
    if spec.kind == "lowrank":
        if _is_vector_layer((m, n)):
            return m * n
        r = min(spec.rank, m, n)
        return (m + n) * r
    if spec.kind == "zsgd" or spec.kind == "signum":
        return m * n
    return payload_size(m, n, spec.cf)


def _worker_gradients(compute, workers: int, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(compute, range(workers)))
    return [compute(w) for w in range(workers)]


def run_experiment(config) -> list[RunRecord]:
    """Run a full seeded experiment and return its per-round records.

    ``config`` is an :class:`airgrad.config.ExperimentConfig`. Identical
    configs (including the seed) produce identical records regardless of the
    thread count.
    """
    from .channel import PowerPolicy
    from .mnist import load_mnist

    spec = config.algorithm_spec()
    seed = config.seed

    if config.task == "quadratic":
        task = QuadraticTask.random(
            config.quad_rows,
            config.quad_cols,
            RngStream(config.task_seed, "task"),
            noise_scale=config.quad_noise,
        )
        params = {"theta": np.zeros(task.shape)}
        rounds = config.rounds
        batches = None
        dataset = None
        workerset = None
    else:
        dataset = load_mnist(config.data_dir)
        params = init_classifier(10, dataset.train_images.shape[1])
        workerset = WorkerSet(dataset.train_images.shape[0], config.workers, config.batch_size, seed)
        rounds = config.epochs * workerset.batches_per_epoch
        batches = None

    budget = config.power if not config.infinite_power else 1.0
    policy = PowerPolicy(config.policy, budget, max(rounds, 1))
    channel = ChannelConfig(policy, config.workers, config.infinite_power, config.noise)
    opt = OptimizerConfig(
        learning_rate=config.learning_rate,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        schedule=config.schedule,
        horizon=max(rounds, 1),
        decay_factor=config.decay_factor,
        decay_at=config.decay_round,
    )
    opt_state = SgdState.like(params)
    shapes = {name: p.shape for name, p in params.items()}
    states = [WorkerState.zeros(w, shapes) for w in range(config.workers)]
    per_round_values = sum(payload_values(spec, shape) for shape in shapes.values()) * config.workers

    records: list[RunRecord] = []
    eval_metric = 0.0
    cumulative_values = 0
    epoch = -1
    for t in range(rounds):
        start = time.perf_counter() if config.measure_time else 0.0
        p_t = policy.power_at(t)
        stream = RngStream(seed, "round", t)

        if config.task == "quadratic":
            def compute(w, _t=t):
                return {"theta": task.noisy_gradient(params["theta"], RngStream(seed, "grad", _t, w))}

            gradients = _worker_gradients(compute, config.workers, config.threads)
            losses = None
        else:
            this_epoch = t // workerset.batches_per_epoch
            if this_epoch != epoch:
                epoch = this_epoch
                batches = workerset.epoch_batches(epoch)
            b = t % workerset.batches_per_epoch

            def compute(w, _b=b):
                idx = batches[w][_b]
                return nn_forward_backward(params, dataset.train_images[idx], dataset.train_labels[idx])

            results = _worker_gradients(compute, config.workers, config.threads)
            losses = [loss for loss, _ in results]
            gradients = [g for _, g in results]

        lr_t = opt.learning_rate_at(t)
        if spec.kind == "lowrank":
            updates, budgets = lowrank_round(gradients, states, lr_t, spec.rank, p_t, channel, stream)
            opt_state.apply_update(params, updates, opt, t)
        elif spec.kind == "zsgd":
            estimates, budgets = zsgd_round(gradients, p_t, channel, stream)
            opt_state.apply_gradient(params, estimates, opt, t)
        else:
            updates, budgets = baseline_round(spec, gradients, states, lr_t, p_t, channel, stream, t, seed)
            opt_state.apply_update(params, updates, opt, t)

        if config.task == "quadratic":
            loss = task.loss(params["theta"])
            eval_metric = loss
        else:
            loss = float(np.mean(losses))
            if (t + 1) % workerset.batches_per_epoch == 0:
                eval_metric = nn_accuracy(params, dataset.test_images, dataset.test_labels)
        cumulative_values += per_round_values
        wall = (time.perf_counter() - start) * 1e3 if config.measure_time else 0.0
        records.append(
            RunRecord(
                round=t,
                loss=loss,
                eval=eval_metric,
                power=p_t if not config.infinite_power else float("inf"),
                wall_ms=wall,
                per_layer_power={k: float(v) for k, v in budgets.items()},
                values_sent=cumulative_values,
            )
        )
    return records

"""Distributed SGD over a power-constrained additive-noise uplink.

A numpy library plus simulator for gradient compression and over-the-air
aggregation: warm-started low-rank factor transmission with closed-form
power allocation, the uncompressed and payload-compression baselines,
channel-influence analytics, and reproducible experiment runs.
"""

from .allocation import (
    LayerStats,
    RankPowerAllocation,
    allocate_rank,
    allocate_rank1,
    component_weights,
    distortion_factor,
    layer_allocation,
)
from .channel import (
    ChannelConfig,
    PowerPolicy,
    optimal_scalar,
    power_at,
    transmit_effective,
    transmit_vector,
)
from .compressors import (
    RankFactors,
    SketchMessage,
    compression_quality,
    decompress,
    identity_compress,
    payload_size,
    random_k_compress,
    random_k_decompress,
    rank_compress,
    signum_aggregate,
    signum_compress,
    sketch_compress,
    sketch_decompress,
)
from .config import ConfigError, ExperimentConfig, parse_config, serialize_config
from .core import RngStream, frobenius_norm, reshape_to_matrix, sample_noise
from .influence import (
    InfluenceReport,
    RankEnergy,
    lowrank_influence_bound,
    meets_snr_condition,
    monte_carlo_influence,
    rank_energy,
    uncompressed_influence,
)
from .metrics import RunRecord, emit_metrics, read_jsonl
from .mnist import Dataset, MnistFormatError, fetch_mnist, load_mnist
from .pipeline import (
    AlgorithmSpec,
    WorkerState,
    baseline_round,
    lowrank_round,
    payload_values,
    run_experiment,
    zsgd_round,
)
from .training import (
    OptimizerConfig,
    QuadraticTask,
    SgdState,
    WorkerSet,
    init_classifier,
    nn_accuracy,
    nn_forward_backward,
    shard_dataset,
)

__version__ = "0.1.0"

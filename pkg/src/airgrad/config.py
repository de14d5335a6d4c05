"""Experiment configuration: a flat, sectioned INI file.

Sections and keys (all optional; defaults mirror the standard digit-task
setup):

    [experiment]  task, algorithm, rank, compression_factor, workers,
                  rounds, epochs, batch_size, seed, task_seed, output,
                  format, threads, measure_time
    [optimizer]   learning_rate, momentum, weight_decay, schedule,
                  decay_factor, decay_round
    [channel]     power, policy, infinite, noise
    [quadratic]   rows, cols, noise_scale
    [mnist]       data_dir
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, replace

from .channel import POLICY_KINDS
from .pipeline import ALGORITHM_KINDS, AlgorithmSpec

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "serialize_config"]


class ConfigError(ValueError):
    """A configuration problem; the CLI maps it to exit status 2."""


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "quadratic"
    algorithm: str = "zsgd"
    rank: int = 2
    cf: float = 0.1
    workers: int = 16
    rounds: int = 100
    epochs: int = 50
    batch_size: int = 128
    seed: int = 0
    task_seed: int = 0
    output: str = "metrics.csv"
    format: str = "csv"
    threads: int = 1
    measure_time: bool = False
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    schedule: str = "constant"
    decay_factor: float = 10.0
    decay_round: int = 0
    power: float = 1.0
    policy: str = "constant"
    infinite_power: bool = False
    noise: str = "gaussian"
    data_dir: str = "data/mnist"
    quad_rows: int = 16
    quad_cols: int = 16
    quad_noise: float = 0.0

    def algorithm_spec(self) -> AlgorithmSpec:
        if self.algorithm == "lowrank":
            return AlgorithmSpec("lowrank", rank=self.rank)
        if self.algorithm in ("random_k", "sketching"):
            return AlgorithmSpec(self.algorithm, cf=self.cf)
        return AlgorithmSpec(self.algorithm)

    def with_power(self, power: float) -> "ExperimentConfig":
        return replace(self, power=power)

    def validate(self) -> None:
        problems = []
        if self.task not in ("quadratic", "mnist"):
            problems.append(f"task must be quadratic or mnist, got {self.task!r}")
        if self.algorithm not in ALGORITHM_KINDS:
            problems.append(f"algorithm must be one of {ALGORITHM_KINDS}, got {self.algorithm!r}")
        if self.rank < 1:
            problems.append("rank must be positive")
        if not 0 < self.cf <= 1:
            problems.append("compression_factor must be in (0, 1]")
        if self.workers < 1:
            problems.append("workers must be positive")
        if self.rounds < 1:
            problems.append("rounds must be positive")
        if self.epochs < 1:
            problems.append("epochs must be positive")
        if self.batch_size < 1:
            problems.append("batch_size must be positive")
        if self.threads < 1:
            problems.append("threads must be positive")
        if self.format not in ("csv", "jsonl"):
            problems.append(f"format must be csv or jsonl, got {self.format!r}")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            problems.append("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            problems.append("weight_decay must be nonnegative")
        if self.schedule not in ("constant", "cosine", "step-decay"):
            problems.append(f"unknown schedule {self.schedule!r}")
        if self.policy not in POLICY_KINDS:
            problems.append(f"unknown power policy {self.policy!r}")
        if not self.infinite_power and self.power <= 0:
            problems.append("power must be positive unless infinite")
        if self.noise not in ("gaussian", "uniform"):
            problems.append(f"noise must be gaussian or uniform, got {self.noise!r}")
        if self.quad_rows < 1 or self.quad_cols < 1:
            problems.append("quadratic task dimensions must be positive")
        if self.quad_noise < 0:
            problems.append("quadratic noise scale must be nonnegative")
        if problems:
            raise ConfigError("; ".join(problems))

    def validate_paths(self) -> None:
        """Existence checks done at run time (not at parse time)."""
        if self.task == "mnist" and not os.path.isdir(self.data_dir):
            raise ConfigError(f"mnist data directory not found: {self.data_dir}")
        parent = os.path.dirname(os.path.abspath(self.output))
        if not os.path.isdir(parent):
            raise ConfigError(f"output directory not found: {parent}")


_SCHEMA = {
    "experiment": {
        "task": ("task", str),
        "algorithm": ("algorithm", str),
        "rank": ("rank", int),
        "compression_factor": ("cf", float),
        "workers": ("workers", int),
        "rounds": ("rounds", int),
        "epochs": ("epochs", int),
        "batch_size": ("batch_size", int),
        "seed": ("seed", int),
        "task_seed": ("task_seed", int),
        "output": ("output", str),
        "format": ("format", str),
        "threads": ("threads", int),
        "measure_time": ("measure_time", bool),
    },
    "optimizer": {
        "learning_rate": ("learning_rate", float),
        "momentum": ("momentum", float),
        "weight_decay": ("weight_decay", float),
        "schedule": ("schedule", str),
        "decay_factor": ("decay_factor", float),
        "decay_round": ("decay_round", int),
    },
    "channel": {
        "power": ("power", float),
        "policy": ("policy", str),
        "infinite": ("infinite_power", bool),
        "noise": ("noise", str),
    },
    "quadratic": {
        "rows": ("quad_rows", int),
        "cols": ("quad_cols", int),
        "noise_scale": ("quad_noise", float),
    },
    "mnist": {
        "data_dir": ("data_dir", str),
    },
}

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text into a validated config."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            field_name, kind = _SCHEMA[section][key]
            try:
                if kind is bool:
                    values[field_name] = _BOOL[raw.strip().lower()]
                else:
                    values[field_name] = kind(raw)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    config = ExperimentConfig(**values)
    config.validate()
    return config


def serialize_config(config: ExperimentConfig) -> str:
    """Render a config back to INI text; parse(serialize(c)) == c."""
    parser = configparser.ConfigParser()
    for section, keys in _SCHEMA.items():
        parser.add_section(section)
        for key, (field_name, kind) in keys.items():
            value = getattr(config, field_name)
            if kind is bool:
                parser.set(section, key, "true" if value else "false")
            elif kind is float:
                parser.set(section, key, repr(float(value)))
            else:
                parser.set(section, key, str(value))
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())

"""Command-line entry point.

Subcommands:

    run <config>                  full experiment from an INI config
    influence --m --n --power ... channel-influence analytics
    alloc --m --n --power --rank  closed-form power allocations
    rank-energy <matrix-file>     top-k singular energy fraction
    sweep <config> --powers a,b,c rerun a config across power budgets

Exit status: 0 on success, 2 on configuration/usage errors, 3 on runtime
errors. The AIRGRAD_THREADS environment variable caps worker thread counts.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .allocation import allocate_rank, allocate_rank1, component_weights
from .channel import transmit_effective
from .compressors import rank_compress
from .core import RngStream
from .influence import lowrank_influence_bound, monte_carlo_influence, rank_energy, uncompressed_influence
from .config import ConfigError, load_config
from .metrics import emit_metrics
from .pipeline import run_experiment

__all__ = ["entry", "main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airgrad", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full experiment from a config file")
    p_run.add_argument("config", help="path to an INI experiment config")

    p_inf = sub.add_parser("influence", help="channel-influence analytics")
    p_inf.add_argument("--m", type=int, required=True)
    p_inf.add_argument("--n", type=int, required=True)
    p_inf.add_argument("--power", type=float, required=True)
    p_inf.add_argument("--r", type=int, default=None, help="compression rank (lowrank only)")
    p_inf.add_argument("--trials", type=int, default=0, help="Monte-Carlo trials (0 = analytic only)")
    p_inf.add_argument("--algorithm", choices=("zsgd", "lowrank"), default="zsgd")
    p_inf.add_argument("--seed", type=int, default=0)

    p_alloc = sub.add_parser("alloc", help="print closed-form power allocations")
    p_alloc.add_argument("--m", type=int, required=True)
    p_alloc.add_argument("--n", type=int, required=True)
    p_alloc.add_argument("--power", type=float, required=True)
    p_alloc.add_argument("--rank", type=int, default=1)
    p_alloc.add_argument("--weights", type=str, default=None, help="comma-separated component weights (default uniform)")

    p_re = sub.add_parser("rank-energy", help="fraction of energy in the top singular components")
    p_re.add_argument("matrix_file", help=".npy or whitespace-separated text matrix")
    p_re.add_argument("--top-k", type=int, default=8)

    p_sweep = sub.add_parser("sweep", help="rerun a config across power budgets")
    p_sweep.add_argument("config", help="path to an INI experiment config")
    p_sweep.add_argument("--powers", type=str, required=True, help="comma-separated power budgets")
    return parser


def _cap_threads(threads: int) -> int:
    cap = os.environ.get("AIRGRAD_THREADS")
    if cap is None:
        return threads
    try:
        return max(1, min(threads, int(cap)))
    except ValueError as exc:
        raise ConfigError(f"AIRGRAD_THREADS must be an integer, got {cap!r}") from exc


def _cmd_run(args) -> int:
    config = load_config(args.config)
    config = replace(config, threads=_cap_threads(config.threads))
    config.validate_paths()
    records = run_experiment(config)
    emit_metrics(records, config.output, config.format)
    final = records[-1] if records else None
    if final is not None:
        print(f"rounds={len(records)} final_loss={final.loss:.6g} final_eval={final.eval:.6g} -> {config.output}")
    else:
        print(f"rounds=0 -> {config.output}")
    return 0


def _cmd_influence(args) -> int:
    if args.algorithm == "zsgd":
        lam = uncompressed_influence(args.m, args.n, args.power)
        print(f"lambda={lam:g}")
        if args.trials > 0:
            stream = RngStream(args.seed, "influence")
            g = stream.normal((args.m, args.n))
            g_sq = float(np.sum(g * g))
            ratios = np.empty(args.trials)
            for t in range(args.trials):
                y = transmit_effective([g], args.power, stream.child("trial", t))
                ratios[t] = float(np.sum((y - g) ** 2)) / g_sq
            print(f"empirical={ratios.mean():g} std_error={ratios.std(ddof=1) / np.sqrt(args.trials):g} trials={args.trials}")
        return 0
    if args.r is None:
        raise ConfigError("--algorithm lowrank requires --r")
    bound = lowrank_influence_bound(args.m, args.n, args.r, args.power)
    print(f"lambda_bound={bound:g}")
    if args.trials > 0:
        stream = RngStream(args.seed, "influence")
        matrix = stream.normal((args.m, args.n))
        factors = rank_compress(matrix, args.r, stream=stream.child("compress"))
        weights = component_weights(factors)
        alloc = allocate_rank(args.m, args.n, args.power, weights)
        report = monte_carlo_influence(factors, alloc, args.trials, stream.child("mc"))
        print(
            f"analytic={report.analytic:g} empirical={report.empirical:g} "
            f"std_error={report.std_error:g} trials={report.trials}"
        )
    return 0


def _cmd_alloc(args) -> int:
    if args.rank == 1:
        alpha, beta = allocate_rank1(args.m, args.n, args.power)
        print(f"alpha={alpha:g} beta={beta:g}")
        return 0
    if args.weights is not None:
        weights = np.array([float(w) for w in args.weights.split(",")])
    else:
        weights = np.full(args.rank, 1.0 / args.rank)
    if weights.size != args.rank:
        raise ConfigError(f"expected {args.rank} weights, got {weights.size}")
    alloc = allocate_rank(args.m, args.n, args.power, weights)
    for i in range(alloc.rank):
        print(f"component={i} share={alloc.alphas[i] + alloc.betas[i]:g} alpha={alloc.alphas[i]:g} beta={alloc.betas[i]:g}")
    print(f"total={alloc.total:g}")
    return 0


def _cmd_rank_energy(args) -> int:
    if not os.path.exists(args.matrix_file):
        raise ConfigError(f"matrix file not found: {args.matrix_file}")
    if args.matrix_file.endswith(".npy"):
        matrix = np.load(args.matrix_file)
    else:
        matrix = np.loadtxt(args.matrix_file, ndmin=2)
    result = rank_energy(matrix, args.top_k)
    print(f"fraction={result.fraction:.6f} converged={str(result.converged).lower()}")
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    config = replace(config, threads=_cap_threads(config.threads))
    config.validate_paths()
    try:
        powers = [float(p) for p in args.powers.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --powers list: {args.powers!r}") from exc
    if not powers:
        raise ConfigError("--powers list is empty")
    root, ext = os.path.splitext(config.output)
    for power in powers:
        cfg = config.with_power(power)
        records = run_experiment(cfg)
        out = f"{root}.p{power:g}{ext}"
        emit_metrics(records, out, cfg.format)
        final = records[-1]
        print(f"power={power:g} final_loss={final.loss:.6g} final_eval={final.eval:.6g} -> {out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "influence": _cmd_influence,
    "alloc": _cmd_alloc,
    "rank-energy": _cmd_rank_energy,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())

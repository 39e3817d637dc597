"""Benchmark CLI: sample-stats, envelope-check, exec-sim, memory-compare,
and sweep. All outputs are CSV/JSON and are byte-identical for a fixed
master seed."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import COMMAND_INDEX, ExperimentConfig, load_config
from .envelope import check_overflow, compute_envelope
from .errors import ConfigError
from .execmodel import (
    CostModel,
    Strategy,
    build_pipeline,
    default_cost_model,
    simulate_data_parallel,
    simulate_epoch,
)
from .provisioning import compare_plans, envelope_plan, exact_plan, maxsg_plan
from .sampler import SampleConfig, sample_minibatch


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_cost(config: ExperimentConfig) -> CostModel:
    if config.cost_model:
        return CostModel.from_json(config.cost_model)
    return default_cost_model()


def _sample_run(config: ExperimentConfig, graph, command: str, iterations: int,
                sample: SampleConfig | None = None, start: int = 0):
    """Sample `iterations` minibatches with the documented seed scheme."""
    sample = sample or config.sample
    out = []
    for i in range(start, start + iterations):
        rng = config.seed_selection_rng(command, i)
        seeds = rng.choice(graph.num_vertices, size=sample.batch_size, replace=False)
        _, md = sample_minibatch(graph, sample, seeds, config.iteration_stream(command, i))
        out.append(md)
    return out


def _depth_fanouts(base: tuple[int, ...], depth: int) -> tuple[int, ...]:
    """Fanout profile for a depth sweep: truncate the configured profile
    or pad with its last value."""
    if depth <= len(base):
        return base[:depth]
    return base + (base[-1],) * (depth - len(base))


def cmd_sample_stats(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    graph = config.graph.load(config.master_seed)
    mds = _sample_run(config, graph, "sample-stats", config.iterations)
    hops = config.sample.num_hops

    header = ["iteration", "total_unique", "total_edges"]
    header += [f"v_cum_h{h}" for h in range(1, hops + 1)]
    header += [f"e_h{h}" for h in range(1, hops + 1)]
    rows = []
    for i, md in enumerate(mds):
        rows.append(
            [i, md.total_unique_vertices, md.total_edges]
            + list(md.per_hop_vertex_counts)
            + list(md.per_hop_edge_counts)
        )
    csv_path = out_dir / "sample_stats.csv"
    _write_csv(csv_path, header, rows)

    totals = np.array([md.total_unique_vertices for md in mds], dtype=np.int64)
    mean = float(totals.mean())
    spread = float((totals.max() - totals.min()) / mean) if mean else 0.0
    counts, edges = np.histogram(totals, bins=min(50, max(10, totals.size // 40)))
    summary = {
        "iterations": config.iterations,
        "batch_size": config.sample.batch_size,
        "fanouts": list(config.sample.fanouts),
        "mean_unique": mean,
        "min_unique": int(totals.min()),
        "max_unique": int(totals.max()),
        "spread_pct": 100.0 * spread,
        "histogram": {"bin_edges": edges.tolist(), "counts": counts.tolist()},
    }
    json_path = out_dir / "sample_stats_summary.json"
    _write_json(json_path, summary)
    return [csv_path, json_path]


def cmd_envelope_check(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    graph = config.graph.load(config.master_seed)
    m = config.envelope_repetitions
    env = compute_envelope(
        graph,
        config.sample,
        confidence=config.envelope.confidence,
        repetitions=m,
        safety_factor=config.envelope.safety_factor,
    )
    mds = _sample_run(config, graph, "envelope-check", config.iterations)
    totals = np.array([md.total_unique_vertices for md in mds], dtype=np.int64)
    covered = float(np.mean(totals <= env.v_max_total))
    overflow = sum(1 for md in mds if any(check_overflow(md, env)))
    mean = float(totals.mean())
    spread = float((totals.max() - totals.min()) / mean) if mean else 0.0
    report = {
        "envelope": json.loads(env.to_json()),
        "iterations": config.iterations,
        "coverage": covered,
        "coverage_target": config.envelope.confidence,
        "coverage_pass": covered >= config.envelope.confidence - 3.0 * float(
            np.sqrt(config.envelope.confidence * (1 - config.envelope.confidence) / max(len(mds), 1))
        ),
        "overflow_count": overflow,
        "observed_mean": mean,
        "observed_spread": spread,
        "range_bound": env.range_bound,
    }
    path = out_dir / "envelope_check.json"
    _write_json(path, report)
    return [path]


def cmd_exec_sim(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    graph = config.graph.load(config.master_seed)
    cost = _load_cost(config)
    header = [
        "strategy", "batch", "hops", "iterations", "end_to_end", "gpu_time",
        "host_time", "fraction", "launches", "syncs", "overflows",
        "speedup_vs_host_mediated",
    ]
    rows = []
    for batch in config.sweep.batch_sizes:
        sample = SampleConfig(batch_size=batch, fanouts=config.sample.fanouts)
        mds = _sample_run(config, graph, "exec-sim", config.exec_iterations, sample)
        pipeline = build_pipeline(sample, config.layers, config.feature_dim, cost)
        env = compute_envelope(
            graph, sample, config.envelope.confidence,
            config.envelope_repetitions, config.envelope.safety_factor,
        )
        base_time = None
        for name in config.sweep.strategies:
            strategy = Strategy(name)
            result = simulate_epoch(
                pipeline, strategy, mds, cost,
                envelope=env if strategy is Strategy.REPLAY else None,
                safe_metadata=mds[0] if strategy is Strategy.REPLAY else None,
            )
            metrics = result.metrics
            if strategy is Strategy.HOST_MEDIATED:
                base_time = metrics.end_to_end
            speedup = base_time / metrics.end_to_end if base_time else float("nan")
            rows.append([
                strategy.value, batch, config.sample.num_hops, result.iterations,
                metrics.end_to_end, metrics.gpu_time, metrics.host_time,
                "" if metrics.profile_opaque else _fmt(metrics.gpu_execution_fraction),
                metrics.launches, metrics.syncs, result.overflow_count,
                speedup,
            ])
    path = out_dir / "exec_sim.csv"
    _write_csv(path, header, rows)

    # data-parallel scaling table
    dp_header = ["strategy", "batch", "workers", "end_to_end", "speedup_vs_1"]
    dp_rows = []
    for batch in config.sweep.batch_sizes:
        for name in config.sweep.strategies:
            strategy = Strategy(name)
            base = None
            for workers in config.sweep.workers:
                if batch % workers:
                    continue
                per = batch // workers
                sample = SampleConfig(batch_size=per, fanouts=config.sample.fanouts)
                pipeline = build_pipeline(sample, config.layers, config.feature_dim, cost)
                env = compute_envelope(
                    graph, sample, config.envelope.confidence,
                    config.envelope_repetitions, config.envelope.safety_factor,
                )
                worker_mds = [
                    _sample_run(
                        config, graph, "exec-sim", config.exec_iterations, sample,
                        start=w * config.exec_iterations,
                    )
                    for w in range(workers)
                ]
                result = simulate_data_parallel(
                    pipeline, worker_mds, strategy, cost,
                    envelope=env if strategy is Strategy.REPLAY else None,
                    safe_metadata=worker_mds[0][0] if strategy is Strategy.REPLAY else None,
                )
                t = result.metrics.end_to_end
                if workers == 1:
                    base = t
                dp_rows.append([
                    strategy.value, batch, workers, t,
                    base / t if base else float("nan"),
                ])
    dp_path = out_dir / "exec_scaling.csv"
    _write_csv(dp_path, dp_header, dp_rows)
    return [path, dp_path]


def cmd_memory_compare(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    graph = config.graph.load(config.master_seed)
    header = [
        "strategy", "hops", "fanouts", "vertex_caps", "edge_caps",
        "total_bytes", "log2_vs_maxsg",
    ]
    rows = []
    for depth in config.sweep.depths:
        fanouts = _depth_fanouts(config.sample.fanouts, depth)
        sample = SampleConfig(batch_size=config.sample.batch_size, fanouts=fanouts)
        env = compute_envelope(
            graph, sample, config.envelope.confidence,
            config.envelope_repetitions, config.envelope.safety_factor,
        )
        # one sampled iteration stands in for the dynamic optimal baseline
        md = _sample_run(config, graph, "memory-compare", 1, sample, start=depth)[0]
        plans = [
            maxsg_plan(sample, config.feature_dim, graph.num_vertices),
            envelope_plan(env, config.feature_dim, sample.batch_size),
            exact_plan(md, config.feature_dim),
        ]
        comparisons = {c.strategy: c for c in compare_plans(plans)}
        for plan in plans:
            v_caps = [b.element_count for b in plan.buffers if b.name.startswith("vertex_ids")]
            e_caps = [b.element_count for b in plan.buffers if b.name.startswith("edges")]
            rows.append([
                plan.strategy.value, depth, "|".join(map(str, fanouts)),
                "|".join(map(str, v_caps)), "|".join(map(str, e_caps)),
                plan.total_bytes, comparisons[plan.strategy].log2_efficiency,
            ])
    path = out_dir / "memory_compare.csv"
    _write_csv(path, header, rows)
    return [path]


def cmd_sweep(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    produced = []
    produced += cmd_sample_stats(config, out_dir)
    produced += cmd_envelope_check(config, out_dir)
    produced += cmd_exec_sim(config, out_dir)
    produced += cmd_memory_compare(config, out_dir)
    manifest = {
        "master_seed": config.master_seed,
        "seed_scheme": (
            "graph seed = master_seed; iteration stream = SeedSequence(master_seed, "
            "spawn_key=(command_index, iteration)); hop h appends h; seed-vertex "
            "selection uses spawn_key=(command_index, iteration, 0)"
        ),
        "command_index": COMMAND_INDEX,
        "files": sorted(p.name for p in produced),
    }
    path = out_dir / "manifest.json"
    _write_json(path, manifest)
    return produced + [path]


COMMANDS = {
    "sample-stats": cmd_sample_stats,
    "envelope-check": cmd_envelope_check,
    "exec-sim": cmd_exec_sim,
    "memory-compare": cmd_memory_compare,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gsbench",
        description="Sampling-based GNN training benchmark harness",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--out", default=None, help="override output directory")
    parser.add_argument("--iterations", type=int, default=None)
    args = parser.parse_args(argv)

    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.out is not None:
        overrides["output"] = args.out
    try:
        config = load_config(args.config, **overrides)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        files = COMMANDS[args.command](config, out_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())

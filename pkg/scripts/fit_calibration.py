#!/usr/bin/env python3
"""Fit the default cost-model calibration.

Host-side constants are fixed by hand at microsecond-scale magnitudes.
Kernel device-time coefficients start from hand-chosen relative shapes
and are scaled by a single factor so that the host-mediated strategy at
batch size 128 on the reference synthetic graph lands exactly on a GPU
execution fraction of 0.45. The early-exit block cost is then derived so
that a +180% grid over-allocation stays within 2% of any kernel's exact
device time (with 4x headroom).

Writes src/gsbench/calibration/default.json and prints the verification
numbers used by the acceptance suite.

Usage: python3 scripts/fit_calibration.py
"""

import json
from pathlib import Path

import numpy as np

import gsbench as g
from gsbench.envelope import compute_envelope
from gsbench.execmodel import (
    CostModel,
    KernelCoeffs,
    Strategy,
    _device_time,
    _kernel_size,
    build_pipeline,
    grid_size,
    realized_sizes,
    simulate_data_parallel,
    simulate_epoch,
)

REPO = Path(__file__).resolve().parent.parent
OUT = REPO / "src" / "gsbench" / "calibration" / "default.json"

GRAPH_SEED = 42
MASTER_SEED = 2026
N = 100_000
AVG_DEG = 200
FANOUTS = (10, 10)
LAYERS = 2
FEATURE_DIM = 100
ANCHOR_BATCH = 128
ANCHOR_FRACTION = 0.45
FIT_ITERATIONS = 50

HOST = dict(
    host_launch_latency=14.0,
    sync_export_latency=22.0,
    host_logic_latency=1.0,
    graph_replay_latency=1.6,
    pilot_child_launch_latency=4.0,
    block_quota=256,
    allreduce_latency=2.5,
)

# relative device-time shapes; one global scale is fitted below
UNIT_COEFFS = {
    "pre": KernelCoeffs(a=0.5, b_v=0.0005),
    "scan": KernelCoeffs(a=0.5, b_v=0.0004),
    "sample": KernelCoeffs(a=0.8, b_e=0.002),
    "relabel": KernelCoeffs(a=0.8, b_e=0.0025),
    "build": KernelCoeffs(a=0.8, b_e=0.002),
    "gather": KernelCoeffs(a=1.0, b_v=0.0002, b_f=0.00004),
    "train": KernelCoeffs(a=1.5, b_v=0.0005, b_e=0.004, b_f=0.0001),
}


def sample_epoch_metadata(graph, batch, iterations, tag):
    cfg = g.SampleConfig(batch_size=batch, fanouts=FANOUTS)
    out = []
    for i in range(iterations):
        sel = np.random.default_rng(np.random.SeedSequence(MASTER_SEED, spawn_key=(tag, i, 0)))
        seeds = sel.choice(graph.num_vertices, size=batch, replace=False)
        _, md = g.sample_minibatch(
            graph, cfg, seeds, np.random.SeedSequence(MASTER_SEED, spawn_key=(tag, i))
        )
        out.append(md)
    return out


def main():
    graph = g.generate(
        g.GraphGenSpec("power-law", N, N * AVG_DEG, exponent=2.1), GRAPH_SEED
    )
    print(f"reference graph: n={N} m={graph.num_edges}")

    cost0 = CostModel(early_exit_block_cost=0.0, kernel_coeffs=UNIT_COEFFS, **HOST)
    cfg = g.SampleConfig(batch_size=ANCHOR_BATCH, fanouts=FANOUTS)
    pipeline = build_pipeline(cfg, LAYERS, FEATURE_DIM, cost0)
    mds = sample_epoch_metadata(graph, ANCHOR_BATCH, FIT_ITERATIONS, tag=90)

    host_metrics = simulate_epoch(pipeline, Strategy.HOST_MEDIATED, mds, cost0).metrics
    host_per_iter = host_metrics.host_time / len(mds)
    gpu_unit = host_metrics.gpu_time / len(mds)
    gpu_target = host_per_iter * ANCHOR_FRACTION / (1.0 - ANCHOR_FRACTION)
    scale = gpu_target / gpu_unit
    print(f"host/iter={host_per_iter:.1f} gpu_unit={gpu_unit:.1f} scale={scale:.5f}")

    coeffs = {
        k: KernelCoeffs(a=c.a * scale, b_v=c.b_v * scale, b_e=c.b_e * scale, b_f=c.b_f * scale)
        for k, c in UNIT_COEFFS.items()
    }

    # early-exit cost: 1/4 of what would put +180% over-allocation at the
    # 2% device-time budget for the tightest kernel at anchor sizes
    cost1 = CostModel(early_exit_block_cost=0.0, kernel_coeffs=coeffs, **HOST)
    sizes = realized_sizes(mds[0])
    worst = np.inf
    for k in pipeline.kernels:
        if k.grid_key is None:
            continue
        dt = _device_time(pipeline, k, sizes, cost1)
        blocks = grid_size(_kernel_size(k, k.grid_key, sizes), cost1.block_quota)
        worst = min(worst, 0.02 * dt / (1.8 * blocks))
    ee_cost = round(worst / 4.0, 6)
    print(f"early_exit_block_cost={ee_cost} (budget floor {worst:.6f})")

    payload = dict(HOST)
    payload["early_exit_block_cost"] = ee_cost
    payload["kernel_coeffs"] = {
        k: {f: getattr(c, f) for f in ("a", "b_v", "b_e", "b_f") if getattr(c, f)}
        for k, c in coeffs.items()
    }
    payload["provenance"] = (
        "Time unit: microseconds. Host constants hand-set; kernel coefficients "
        "fitted by scripts/fit_calibration.py so host-mediated execution at "
        "batch 128 on the reference power-law graph (n=1e5, avg deg 200, "
        "exponent 2.1, seed 42) sits at GPU execution fraction 0.45. "
        "early_exit_block_cost keeps +180% grid over-allocation within 2% of "
        "exact-grid kernel time with 4x headroom."
    )
    OUT.write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {OUT}")

    # ---- verification ----
    cost = CostModel.from_dict(json.loads(OUT.read_text()))
    env = compute_envelope(graph, cfg, confidence=0.999, repetitions=2000)
    hm = simulate_epoch(pipeline, Strategy.HOST_MEDIATED, mds, cost).metrics
    rp = simulate_epoch(
        pipeline, Strategy.REPLAY, mds, cost, envelope=env, safe_metadata=mds[0]
    ).metrics
    print(f"fraction host-mediated @128 = {hm.gpu_execution_fraction:.4f} (target 0.45+-0.05)")
    print(f"fraction replay        @128 = {rp.gpu_execution_fraction:.4f} (target >= 0.99)")

    print("speedup replay vs host-mediated (want strictly decreasing, > 1 at 4096):")
    for batch in (64, 256, 1024, 4096):
        c = g.SampleConfig(batch_size=batch, fanouts=FANOUTS)
        p = build_pipeline(c, LAYERS, FEATURE_DIM, cost)
        m = sample_epoch_metadata(graph, batch, 12, tag=91)
        e = compute_envelope(graph, c, confidence=0.999, repetitions=2000)
        t_h = simulate_epoch(p, Strategy.HOST_MEDIATED, m, cost).metrics.end_to_end
        t_r = simulate_epoch(p, Strategy.REPLAY, m, cost, e, m[0]).metrics.end_to_end
        print(f"  B={batch}: {t_h / t_r:.3f}")

    print("replay strong scaling g=2 (want within [1.6, 2.0]):")
    for batch in (64, 256, 1024):
        half = batch // 2
        c1 = g.SampleConfig(batch_size=batch, fanouts=FANOUTS)
        c2 = g.SampleConfig(batch_size=half, fanouts=FANOUTS)
        p1 = build_pipeline(c1, LAYERS, FEATURE_DIM, cost)
        p2 = build_pipeline(c2, LAYERS, FEATURE_DIM, cost)
        m1 = sample_epoch_metadata(graph, batch, 12, tag=92)
        m2a = sample_epoch_metadata(graph, half, 12, tag=93)
        m2b = sample_epoch_metadata(graph, half, 12, tag=94)
        e1 = compute_envelope(graph, c1, 0.999, 2000)
        e2 = compute_envelope(graph, c2, 0.999, 2000)
        t1 = simulate_data_parallel(p1, [m1], Strategy.REPLAY, cost, e1, m1[0]).metrics.end_to_end
        t2 = simulate_data_parallel(
            p2, [m2a, m2b], Strategy.REPLAY, cost, e2, m2a[0]
        ).metrics.end_to_end
        th1 = simulate_data_parallel(p1, [m1], Strategy.HOST_MEDIATED, cost).metrics.end_to_end
        th2 = simulate_data_parallel(
            p2, [m2a, m2b], Strategy.HOST_MEDIATED, cost
        ).metrics.end_to_end
        print(f"  B={batch}: replay {t1 / t2:.3f}  host-mediated {th1 / th2:.3f}")


if __name__ == "__main__":
    main()

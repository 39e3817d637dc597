"""Deterministic cost-model simulation of one training iteration's kernel
pipeline under three orchestration strategies.

Timing is fully serialized: end_to_end = host_time + gpu_time with no
host/device overlap, the worst-case framing for host-mediated execution.
Time units are arbitrary (the shipped calibration uses microseconds).

Strategies:
  host-mediated  every kernel pays a host launch plus control step, and
                 every device-produced metadata key consumed downstream
                 pays one synchronizing export.
  device-pilot   one host launch starts a pilot that issues every worker
                 kernel from the device. The per-child launch overhead is
                 charged to host_time (it is orchestration, not compute),
                 and the strategy is profile-opaque: dynamic launching
                 disables device-time profiling, so reports suppress its
                 GPU fraction.
  replay         a single whole-graph launch per iteration. Grids are
                 fixed at envelope bounds; surplus blocks early-exit at a
                 small per-block cost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Mapping, Sequence

from .envelope import EnvelopeSpec, check_overflow
from .errors import CapacityError, ConfigError, ReplayInvalidated
from .provisioning import BufferArena
from .sampler import IterationMetadata, SampleConfig, scan_level_sizes


class Strategy(str, Enum):
    HOST_MEDIATED = "host-mediated"
    DEVICE_PILOT = "device-pilot"
    REPLAY = "replay"


@dataclass(frozen=True)
class KernelCoeffs:
    """Affine device-time model a + b_v*|V| + b_e*|E| + b_f*|V|*feature_dim."""

    a: float = 0.0
    b_v: float = 0.0
    b_e: float = 0.0
    b_f: float = 0.0


@dataclass(frozen=True)
class CostModel:
    host_launch_latency: float
    sync_export_latency: float
    host_logic_latency: float  # per-launch control step incl. sizing allocations
    graph_replay_latency: float
    pilot_child_launch_latency: float
    early_exit_block_cost: float
    block_quota: int
    allreduce_latency: float = 0.0
    kernel_coeffs: Mapping[str, KernelCoeffs] = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "host_launch_latency",
            "sync_export_latency",
            "host_logic_latency",
            "graph_replay_latency",
            "pilot_child_launch_latency",
            "early_exit_block_cost",
            "allreduce_latency",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.block_quota < 1:
            raise ConfigError("block_quota must be >= 1")

    def coeffs(self, kclass: str) -> KernelCoeffs:
        return self.kernel_coeffs.get(kclass, KernelCoeffs())

    @classmethod
    def from_dict(cls, raw: dict) -> "CostModel":
        raw = dict(raw)
        raw.pop("provenance", None)
        coeffs = {
            k: KernelCoeffs(**v) for k, v in raw.pop("kernel_coeffs", {}).items()
        }
        known = {
            "host_launch_latency",
            "sync_export_latency",
            "host_logic_latency",
            "graph_replay_latency",
            "pilot_child_launch_latency",
            "early_exit_block_cost",
            "block_quota",
            "allreduce_latency",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown cost model keys: {sorted(unknown)}")
        return cls(kernel_coeffs=coeffs, **raw)

    @classmethod
    def from_json(cls, path) -> "CostModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_cost_model() -> CostModel:
    """The calibration committed with the package (see calibration/default.json)."""
    text = resources.files("gsbench").joinpath("calibration/default.json").read_text()
    return CostModel.from_dict(json.loads(text))


@dataclass(frozen=True)
class KernelSpec:
    kid: str
    kclass: str  # coefficient class: pre | scan | sample | relabel | build | gather | train
    v_key: str | None = None
    e_key: str | None = None
    grid_key: str | None = None  # size driving the launch grid
    divisor: int = 1  # scan levels shrink by block_quota per level
    consumes: tuple[str, ...] = ()
    produces: tuple[str, ...] = ()


@dataclass(frozen=True)
class PipelineGraph:
    """Fixed per-iteration launch skeleton with metadata produce/consume
    edges at hop boundaries."""

    kernels: tuple[KernelSpec, ...]
    hop_structure: Mapping[int, tuple[str, ...]]
    batch_size: int
    fanouts: tuple[int, ...]
    layers: int
    feature_dim: int
    block_quota: int

    @property
    def num_hops(self) -> int:
        return len(self.fanouts)

    @property
    def sync_keys(self) -> frozenset[str]:
        produced = set()
        for k in self.kernels:
            produced.update(k.produces)
        consumed = set()
        for k in self.kernels:
            consumed.update(k.consumes)
        return frozenset(produced & consumed)


@dataclass(frozen=True)
class ExecMetrics:
    """Per-iteration timing decomposition under the serialized model.

    ``hdoo`` mirrors ``host_time``: the host-side orchestration overhead
    (launches, synchronizing exports, control logic)."""

    end_to_end: float
    gpu_time: float
    host_time: float
    launches: int
    syncs: int
    gpu_execution_fraction: float
    hdoo: float
    profile_opaque: bool = False


def _metrics(gpu: float, host: float, launches: int, syncs: int, opaque=False) -> ExecMetrics:
    total = gpu + host
    fraction = gpu / total if total > 0 else 1.0
    return ExecMetrics(
        end_to_end=total,
        gpu_time=gpu,
        host_time=host,
        launches=launches,
        syncs=syncs,
        gpu_execution_fraction=fraction,
        hdoo=host,
        profile_opaque=opaque,
    )


def aggregate_metrics(items: Sequence[ExecMetrics]) -> ExecMetrics:
    gpu = sum(m.gpu_time for m in items)
    host = sum(m.host_time for m in items)
    return _metrics(
        gpu,
        host,
        sum(m.launches for m in items),
        sum(m.syncs for m in items),
        any(m.profile_opaque for m in items),
    )


def grid_size(n: int, block_quota: int) -> int:
    """ceil(n / T) blocks, minimum 1: an empty input still launches."""
    if block_quota < 1:
        raise ConfigError("block quota must be >= 1")
    if n < 0:
        raise ConfigError("work size must be nonnegative")
    return max(1, math.ceil(n / block_quota))


def early_exit_overhead(grid_max: int, grid_actual: int, cost: CostModel) -> float:
    """Cost of surplus blocks that read the true size and return."""
    if grid_max < grid_actual:
        raise ValueError(
            "replay grid under-provisioned: envelope bound below realized size"
        )
    return (grid_max - grid_actual) * cost.early_exit_block_cost


def build_pipeline(
    config: SampleConfig,
    layers: int,
    feature_dim: int,
    cost: CostModel,
) -> PipelineGraph:
    """Emit the per-hop kernel chain: pre-sampling, degree scan rounds,
    sampling, relabel, subgraph build; then the feature gather and
    2 * layers training kernels.

    Scan round counts come from the static worst-case frontier so the
    skeleton shape is metadata-free (a runtime-dependent kernel count
    would itself be dynamic information).
    """
    if layers < 1:
        raise ConfigError("layers must be >= 1")
    T = cost.block_quota
    kernels: list[KernelSpec] = []
    hop_structure: dict[int, tuple[str, ...]] = {}
    batch = config.batch_size

    worst_frontier = batch  # B * prod_{i<h} F_i, exact int
    for hop, fanout in enumerate(config.fanouts, 1):
        fkey = f"frontier.{hop}"
        ekey = f"edges.{hop}"
        hop_kernels: list[KernelSpec] = []
        upstream = (fkey,) if hop > 1 else ()

        hop_kernels.append(
            KernelSpec(
                kid=f"pre.{hop}",
                kclass="pre",
                v_key=fkey,
                grid_key=fkey,
                consumes=upstream,
            )
        )
        levels = scan_level_sizes(max(worst_frontier, 1), T)
        chain: list[tuple[str, int]] = [(f"scan.{hop}.{i}", i) for i in range(len(levels))]
        chain += [(f"addoff.{hop}.{i}", i) for i in range(len(levels) - 2, -1, -1)]
        for idx, (kid, level) in enumerate(chain):
            last = idx == len(chain) - 1
            hop_kernels.append(
                KernelSpec(
                    kid=kid,
                    kclass="scan",
                    v_key=fkey,
                    grid_key=fkey,
                    divisor=T**level,
                    consumes=upstream,
                    produces=(ekey,) if last else (),
                )
            )
        hop_kernels.append(
            KernelSpec(
                kid=f"sample.{hop}",
                kclass="sample",
                e_key=ekey,
                grid_key=ekey,
                consumes=(ekey,),
            )
        )
        next_key = f"frontier.{hop + 1}" if hop < config.num_hops else "unique.total"
        hop_kernels.append(
            KernelSpec(
                kid=f"relabel.{hop}",
                kclass="relabel",
                e_key=ekey,
                grid_key=ekey,
                consumes=(ekey,),
                produces=(next_key,),
            )
        )
        hop_kernels.append(
            KernelSpec(
                kid=f"build.{hop}",
                kclass="build",
                e_key=ekey,
                grid_key=ekey,
                consumes=(ekey,),
            )
        )
        kernels.extend(hop_kernels)
        hop_structure[hop] = tuple(k.kid for k in hop_kernels)
        worst_frontier *= fanout

    kernels.append(
        KernelSpec(
            kid="gather",
            kclass="gather",
            v_key="unique.total",
            grid_key="unique.total",
            consumes=("unique.total",),
        )
    )
    for i in range(2 * layers):
        kernels.append(
            KernelSpec(
                kid=f"train.{i}",
                kclass="train",
                v_key="unique.total",
                e_key="edges.total",
                grid_key="edges.total",
                consumes=("unique.total", "edges.total"),
            )
        )

    return PipelineGraph(
        kernels=tuple(kernels),
        hop_structure=hop_structure,
        batch_size=batch,
        fanouts=config.fanouts,
        layers=layers,
        feature_dim=feature_dim,
        block_quota=T,
    )


def realized_sizes(metadata: IterationMetadata) -> dict[str, int]:
    sizes = {
        "unique.total": metadata.total_unique_vertices,
        "edges.total": metadata.total_edges,
    }
    for h in range(1, metadata.num_hops + 1):
        sizes[f"frontier.{h}"] = metadata.frontier_size(h)
        sizes[f"edges.{h}"] = metadata.per_hop_edge_counts[h - 1]
    return sizes


def envelope_bounds(pipeline: PipelineGraph, envelope: EnvelopeSpec) -> dict[str, int]:
    """Grid bounds per size key. Frontier-driven kernels are bounded by the
    previous hop's cumulative vertex bound, which any non-overflowing
    iteration respects."""
    bounds = {
        "unique.total": envelope.v_max_total,
        "edges.total": int(sum(envelope.e_max_per_hop)),
        "frontier.1": pipeline.batch_size,
    }
    for h in range(2, pipeline.num_hops + 1):
        bounds[f"frontier.{h}"] = envelope.v_max_per_hop[h - 2]
    for h in range(1, pipeline.num_hops + 1):
        bounds[f"edges.{h}"] = envelope.e_max_per_hop[h - 1]
    return bounds


def _kernel_size(kernel: KernelSpec, key: str | None, table: Mapping[str, int]) -> int:
    if key is None:
        return 0
    value = table[key]
    if kernel.divisor > 1:
        return math.ceil(value / kernel.divisor)
    return value


def _device_time(pipeline: PipelineGraph, kernel: KernelSpec, sizes, cost: CostModel) -> float:
    c = cost.coeffs(kernel.kclass)
    v = _kernel_size(kernel, kernel.v_key, sizes)
    e = _kernel_size(kernel, kernel.e_key, sizes)
    return c.a + c.b_v * v + c.b_e * e + c.b_f * v * pipeline.feature_dim


def simulate_iteration(
    pipeline: PipelineGraph,
    strategy: Strategy,
    metadata: IterationMetadata,
    envelope: EnvelopeSpec | None,
    cost: CostModel,
) -> ExecMetrics:
    """One iteration under the chosen orchestration strategy."""
    strategy = Strategy(strategy)
    if metadata.num_hops != pipeline.num_hops:
        raise ConfigError(
            f"metadata has {metadata.num_hops} hops, pipeline {pipeline.num_hops}"
        )
    sizes = realized_sizes(metadata)
    gpu = sum(_device_time(pipeline, k, sizes, cost) for k in pipeline.kernels)
    n_kernels = len(pipeline.kernels)

    if strategy is Strategy.HOST_MEDIATED:
        syncs = len(pipeline.sync_keys)
        host = (
            n_kernels * (cost.host_launch_latency + cost.host_logic_latency)
            + syncs * cost.sync_export_latency
        )
        return _metrics(gpu, host, launches=n_kernels, syncs=syncs)

    if strategy is Strategy.DEVICE_PILOT:
        host = (
            cost.host_launch_latency
            + cost.host_logic_latency
            + n_kernels * cost.pilot_child_launch_latency
        )
        return _metrics(gpu, host, launches=1, syncs=0, opaque=True)

    # replay
    if envelope is None:
        raise ConfigError("replay strategy requires an execution envelope")
    bounds = envelope_bounds(pipeline, envelope)
    T = pipeline.block_quota
    overhead = 0.0
    for k in pipeline.kernels:
        if k.grid_key is None:
            continue
        actual = grid_size(_kernel_size(k, k.grid_key, sizes), T)
        bound = grid_size(_kernel_size(k, k.grid_key, bounds), T)
        overhead += early_exit_overhead(bound, actual, cost)
    host = cost.graph_replay_latency + cost.host_logic_latency
    return _metrics(gpu + overhead, host, launches=1, syncs=0)


@dataclass(frozen=True)
class ReplayGraph:
    """Captured launch skeleton: fixed grids plus the buffer identities it
    references. Replaying validates both are unchanged."""

    pipeline: PipelineGraph
    envelope: EnvelopeSpec
    cost: CostModel
    grid_max: Mapping[str, int]
    buffer_ids: Mapping[str, int]
    safe_metadata: IterationMetadata
    _arena: BufferArena

    def replay(self, metadata: IterationMetadata | None = None) -> ExecMetrics:
        if self._arena.snapshot_ids() != dict(self.buffer_ids):
            raise ReplayInvalidated("buffer identities changed since capture")
        current = _capture_grids(self.pipeline, self.envelope)
        if current != dict(self.grid_max):
            raise ReplayInvalidated("captured grid values changed since capture")
        metadata = self.safe_metadata if metadata is None else metadata
        if any(check_overflow(metadata, self.envelope)):
            raise CapacityError("iteration exceeds the envelope; take the fallback path")
        return simulate_iteration(
            self.pipeline, Strategy.REPLAY, metadata, self.envelope, self.cost
        )


def _capture_grids(pipeline: PipelineGraph, envelope: EnvelopeSpec) -> dict[str, int]:
    bounds = envelope_bounds(pipeline, envelope)
    grids = {}
    for k in pipeline.kernels:
        if k.grid_key is not None:
            grids[k.kid] = grid_size(
                _kernel_size(k, k.grid_key, bounds), pipeline.block_quota
            )
    return grids


def capture_replay(
    pipeline: PipelineGraph,
    envelope: EnvelopeSpec,
    arena: BufferArena,
    cost: CostModel,
    warmup_metadata: IterationMetadata,
) -> ReplayGraph:
    """Record the fixed launch skeleton after a warm-up iteration. The
    warm-up subgraph becomes the cached safe graph; it must fit the
    envelope."""
    if any(check_overflow(warmup_metadata, envelope)):
        raise ConfigError(
            "warm-up iteration exceeds the envelope; increase the safety factor"
        )
    return ReplayGraph(
        pipeline=pipeline,
        envelope=envelope,
        cost=cost,
        grid_max=_capture_grids(pipeline, envelope),
        buffer_ids=arena.snapshot_ids(),
        safe_metadata=warmup_metadata,
        _arena=arena,
    )


@dataclass(frozen=True)
class EpochResult:
    metrics: ExecMetrics
    iterations: int
    overflow_count: int


def simulate_epoch(
    pipeline: PipelineGraph,
    strategy: Strategy,
    metadata_seq: Sequence[IterationMetadata],
    cost: CostModel,
    envelope: EnvelopeSpec | None = None,
    safe_metadata: IterationMetadata | None = None,
) -> EpochResult:
    """Simulate a sequence of iterations. Under replay, iterations that
    exceed the envelope are accounted as replays of the cached safe
    iteration; other strategies ignore the envelope."""
    strategy = Strategy(strategy)
    overflow = 0
    per_iter: list[ExecMetrics] = []
    if strategy is Strategy.REPLAY:
        if envelope is None or safe_metadata is None:
            raise ConfigError("replay epochs need an envelope and a cached safe iteration")
        if any(check_overflow(safe_metadata, envelope)):
            raise ConfigError(
                "cached safe iteration exceeds the envelope; increase the safety factor"
            )
    for md in metadata_seq:
        if strategy is Strategy.REPLAY and any(check_overflow(md, envelope)):
            overflow += 1
            md = safe_metadata
        per_iter.append(simulate_iteration(pipeline, strategy, md, envelope, cost))
    return EpochResult(
        metrics=aggregate_metrics(per_iter),
        iterations=len(per_iter),
        overflow_count=overflow,
    )


@dataclass(frozen=True)
class DataParallelResult:
    metrics: ExecMetrics
    per_worker: tuple[ExecMetrics, ...]
    workers: int


def simulate_data_parallel(
    pipeline: PipelineGraph,
    worker_metadata: Sequence[Sequence[IterationMetadata]],
    strategy: Strategy,
    cost: CostModel,
    envelope: EnvelopeSpec | None = None,
    safe_metadata: IterationMetadata | None = None,
) -> DataParallelResult:
    """Replicated pipelines, one per worker, synchronized per iteration.

    Each iteration costs the slowest worker plus one all-reduce; the
    all-reduce is charged to host_time (it is a synchronization cost).
    """
    strategy = Strategy(strategy)
    workers = len(worker_metadata)
    if workers < 1:
        raise ConfigError("need at least one worker")
    steps = {len(seq) for seq in worker_metadata}
    if len(steps) != 1:
        raise ConfigError("workers must run the same number of iterations")
    if strategy is Strategy.REPLAY:
        if envelope is None or safe_metadata is None:
            raise ConfigError("replay epochs need an envelope and a cached safe iteration")
        if any(check_overflow(safe_metadata, envelope)):
            raise ConfigError(
                "cached safe iteration exceeds the envelope; increase the safety factor"
            )

    per_worker_steps: list[list[ExecMetrics]] = [[] for _ in range(workers)]
    gpu = host = 0.0
    launches = syncs = 0
    for i in range(steps.pop()):
        step = []
        for w in range(workers):
            md = worker_metadata[w][i]
            if strategy is Strategy.REPLAY and any(check_overflow(md, envelope)):
                md = safe_metadata
            m = simulate_iteration(pipeline, strategy, md, envelope, cost)
            per_worker_steps[w].append(m)
            step.append(m)
        critical = max(step, key=lambda m: m.end_to_end)
        gpu += critical.gpu_time
        host += critical.host_time + (cost.allreduce_latency if workers > 1 else 0.0)
        launches += critical.launches
        syncs += critical.syncs
    combined = _metrics(
        gpu, host, launches, syncs, opaque=strategy is Strategy.DEVICE_PILOT
    )
    return DataParallelResult(
        metrics=combined,
        per_worker=tuple(aggregate_metrics(ms) for ms in per_worker_steps),
        workers=workers,
    )

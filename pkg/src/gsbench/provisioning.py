"""Memory-plan accounting (worst-case, exact, envelope) and the
fixed-identity buffer arena with overflow-safe fallback.

All three strategies size the same buffer inventory so byte ratios
compare like for like: per-hop vertex-id arrays (cumulative unique plus
the seed batch), per-hop edge arrays, the local-to-global mapping table,
the feature gather buffer, and the label buffer. Feature buffers are
counted, never filled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .envelope import EnvelopeSpec, check_overflow
from .errors import CapacityError, ConfigError
from .sampler import IterationMetadata, SampleConfig


class PlanStrategy(str, Enum):
    MAXSG = "maxsg"
    EXACT = "exact"
    ENVELOPE = "envelope"


@dataclass(frozen=True)
class ByteWidths:
    """Element widths in bytes; 32-bit ids and float32 features by default."""

    vertex_id: int = 4
    edge: int = 8  # (src, dst) pair of 32-bit local ids
    feature: int = 4
    label: int = 4


DEFAULT_WIDTHS = ByteWidths()


@dataclass(frozen=True)
class BufferSpec:
    name: str
    element_count: int
    bytes_per_element: int

    @property
    def nbytes(self) -> int:
        return self.element_count * self.bytes_per_element


@dataclass(frozen=True)
class MemoryPlan:
    strategy: PlanStrategy
    buffers: tuple[BufferSpec, ...]
    total_bytes: int

    def buffer(self, name: str) -> BufferSpec:
        for b in self.buffers:
            if b.name == name:
                return b
        raise KeyError(name)


def _assemble(
    strategy: PlanStrategy,
    hop_vertex_caps: list[int],
    hop_edge_caps: list[int],
    final_unique: int,
    batch_size: int,
    feature_dim: int,
    widths: ByteWidths,
) -> MemoryPlan:
    buffers = []
    for h, cap in enumerate(hop_vertex_caps, 1):
        buffers.append(BufferSpec(f"vertex_ids.{h}", int(cap), widths.vertex_id))
    for h, cap in enumerate(hop_edge_caps, 1):
        buffers.append(BufferSpec(f"edges.{h}", int(cap), widths.edge))
    buffers.append(BufferSpec("mapping", int(final_unique), widths.vertex_id))
    buffers.append(BufferSpec("features", int(final_unique) * feature_dim, widths.feature))
    buffers.append(BufferSpec("labels", int(batch_size), widths.label))
    total = sum(b.nbytes for b in buffers)
    return MemoryPlan(strategy=strategy, buffers=tuple(buffers), total_bytes=total)


def maxsg_plan(
    config: SampleConfig,
    feature_dim: int,
    num_vertices: int,
    widths: ByteWidths = DEFAULT_WIDTHS,
) -> MemoryPlan:
    """Worst-case reservation: hop h holds B * prod_{i<=h} F_i + B unique
    vertices (clamped at n) and frontier-max * F_h edges."""
    batch = config.batch_size
    v_caps, e_caps = [], []
    prod = batch  # B * prod F_i, exact int
    for fanout in config.fanouts:
        e_caps.append(min(prod, num_vertices) * fanout)
        prod *= fanout
        v_caps.append(min(prod + batch, num_vertices))
    return _assemble(
        PlanStrategy.MAXSG, v_caps, e_caps, v_caps[-1], batch, feature_dim, widths
    )


def exact_plan(
    metadata: IterationMetadata,
    feature_dim: int,
    widths: ByteWidths = DEFAULT_WIDTHS,
) -> MemoryPlan:
    """Buffers sized by one iteration's realized counts (the optimal
    dynamic baseline, re-planned every iteration)."""
    return _assemble(
        PlanStrategy.EXACT,
        list(metadata.per_hop_vertex_counts),
        list(metadata.per_hop_edge_counts),
        metadata.total_unique_vertices,
        metadata.batch_size,
        feature_dim,
        widths,
    )


def envelope_plan(
    envelope: EnvelopeSpec,
    feature_dim: int,
    batch_size: int,
    widths: ByteWidths = DEFAULT_WIDTHS,
) -> MemoryPlan:
    """Buffers sized once from the envelope, independent of any iteration."""
    return _assemble(
        PlanStrategy.ENVELOPE,
        list(envelope.v_max_per_hop),
        list(envelope.e_max_per_hop),
        envelope.v_max_total,
        batch_size,
        feature_dim,
        widths,
    )


@dataclass(frozen=True)
class PlanComparison:
    strategy: PlanStrategy
    total_bytes: int
    ratio_vs_maxsg: float  # this plan / maxsg
    log2_efficiency: float  # log2(maxsg / this plan)


def compare_plans(plans) -> list[PlanComparison]:
    """Byte ratios and log2 efficiency relative to the MaxSG plan."""
    plans = list(plans)
    if len(plans) < 2:
        raise ConfigError("need at least two plans to compare")
    maxsg = [p for p in plans if p.strategy is PlanStrategy.MAXSG]
    if not maxsg:
        raise ConfigError("comparison requires a MaxSG plan as the baseline")
    base = maxsg[0].total_bytes
    rows = []
    for p in plans:
        rows.append(
            PlanComparison(
                strategy=p.strategy,
                total_bytes=p.total_bytes,
                ratio_vs_maxsg=p.total_bytes / base,
                log2_efficiency=math.log2(base / p.total_bytes) if p.total_bytes else math.inf,
            )
        )
    return rows


class BufferArena:
    """Pre-allocated buffer pool with immutable buffer identities plus
    fixed-identity metadata slots (the device-resident metadata buffer in
    simulation). ``allocation_epoch`` stays 0 during steady state;
    ``reallocate`` exists only to model breaking the stable-address
    contract."""

    def __init__(self, plan: MemoryPlan, metadata_keys):
        self._capacity = {b.name: b.element_count for b in plan.buffers}
        self._ids = {name: i for i, name in enumerate(self._capacity)}
        self._next_id = len(self._ids)
        self.allocation_epoch = 0
        self.metadata_slots = {key: i for i, key in enumerate(metadata_keys)}
        self._slot_values = {key: 0 for key in self.metadata_slots}

    def buffer_names(self):
        return list(self._capacity)

    def buffer_id(self, name: str) -> int:
        return self._ids[name]

    def capacity(self, name: str) -> int:
        return self._capacity[name]

    def snapshot_ids(self) -> dict[str, int]:
        return dict(self._ids)

    def request(self, name: str, element_count: int) -> int:
        """Claim space in a fixed buffer; the id never changes."""
        cap = self._capacity[name]
        if element_count > cap:
            raise CapacityError(
                f"buffer {name!r}: requested {element_count} > capacity {cap}"
            )
        return self._ids[name]

    def write_metadata(self, key: str, value: int) -> int:
        """Store a runtime count in its fixed slot; returns the slot id."""
        slot = self.metadata_slots[key]
        self._slot_values[key] = int(value)
        return slot

    def read_metadata(self, key: str) -> int:
        return self._slot_values[key]

    def reallocate(self, name: str) -> int:
        """Assign a fresh id, breaking capture/replay validity."""
        self._ids[name] = self._next_id
        self._next_id += 1
        self.allocation_epoch += 1
        return self._ids[name]


def arena_init(plan: MemoryPlan, metadata_keys=()) -> BufferArena:
    return BufferArena(plan, metadata_keys)


@dataclass(frozen=True)
class IterationOutcome:
    outcome: str  # "normal" | "fallback"
    effective: IterationMetadata


def _touch_buffers(arena: BufferArena, metadata: IterationMetadata, feature_dim: int):
    for h in range(1, metadata.num_hops + 1):
        arena.request(f"vertex_ids.{h}", metadata.per_hop_vertex_counts[h - 1])
        arena.request(f"edges.{h}", metadata.per_hop_edge_counts[h - 1])
        arena.write_metadata(f"unique.{h}", metadata.per_hop_vertex_counts[h - 1])
        arena.write_metadata(f"edges.{h}", metadata.per_hop_edge_counts[h - 1])
    arena.request("mapping", metadata.total_unique_vertices)
    arena.request("features", metadata.total_unique_vertices * feature_dim)
    arena.request("labels", metadata.batch_size)


def metadata_slot_keys(num_hops: int) -> list[str]:
    keys = []
    for h in range(1, num_hops + 1):
        keys.append(f"unique.{h}")
        keys.append(f"edges.{h}")
    return keys


def run_iteration_with_fallback(
    arena: BufferArena,
    envelope: EnvelopeSpec,
    metadata: IterationMetadata,
    safe_metadata: IterationMetadata,
    feature_dim: int,
) -> IterationOutcome:
    """Account one iteration against the fixed arena. Iterations that
    exceed the envelope are replaced by a replay of the cached safe
    iteration; buffer identities are untouched on both paths."""
    if any(check_overflow(safe_metadata, envelope)):
        raise ConfigError(
            "cached safe iteration exceeds the envelope; increase the safety factor"
        )
    if any(check_overflow(metadata, envelope)):
        effective, outcome = safe_metadata, "fallback"
    else:
        effective, outcome = metadata, "normal"
    _touch_buffers(arena, effective, feature_dim)
    return IterationOutcome(outcome=outcome, effective=effective)

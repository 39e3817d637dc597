"""Per-iteration sampling pipeline: multi-hop neighbor sampling with
replacement, dedup/relabeling into a compact local id space, subgraph CSR
construction, and gather-index generation.

RNG contract: draw streams derive from a base ``numpy.random.SeedSequence``
by appending the 1-based hop index to its spawn key, i.e. the stream for
hop h is ``SeedSequence(base.entropy, spawn_key=base.spawn_key + (h,))``.
The rule is pure, so distinct iterations given distinct base sequences are
reproducible and independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import ceil
from typing import Union

import numpy as np

from .errors import ConfigError
from .graph import CsrGraph

LOCAL_DTYPE = np.int32

SeedLike = Union[int, np.random.SeedSequence, None]


@dataclass(frozen=True)
class SampleConfig:
    """Mini-batch size B and per-hop fanouts F_1..F_N."""

    batch_size: int
    fanouts: tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fanouts", tuple(int(f) for f in self.fanouts))
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if len(self.fanouts) < 1:
            raise ConfigError("at least one hop is required")
        if any(f < 0 for f in self.fanouts):
            raise ConfigError("fanouts must be nonnegative")

    @property
    def num_hops(self) -> int:
        return len(self.fanouts)


@dataclass
class HopBlock:
    """One hop's sampled block in local id space."""

    hop_index: int  # 1-based
    src_local: np.ndarray  # frontier vertices (unique, in frontier order)
    dst_unique_local: np.ndarray  # locals first assigned during this hop
    edge_src: np.ndarray  # per-draw source local, len == raw_draw_count
    edge_dst: np.ndarray  # per-draw destination local
    raw_draw_count: int


@dataclass
class SampledSubgraph:
    hops: list[HopBlock]
    local_to_global: np.ndarray  # local id -> global id, dense 0..|V_d|-1

    @cached_property
    def global_to_local(self) -> dict[int, int]:
        return {int(g): i for i, g in enumerate(self.local_to_global)}

    @property
    def num_local_vertices(self) -> int:
        return int(self.local_to_global.size)


@dataclass(frozen=True)
class IterationMetadata:
    """Runtime counts of one iteration; drives all provisioning."""

    batch_size: int
    per_hop_vertex_counts: tuple[int, ...]  # cumulative unique incl. seeds
    per_hop_edge_counts: tuple[int, ...]
    total_unique_vertices: int
    total_edges: int

    @property
    def num_hops(self) -> int:
        return len(self.per_hop_vertex_counts)

    def frontier_size(self, hop: int) -> int:
        """Frontier feeding hop h: the seeds for h=1, else hop h-1's new
        destinations."""
        if hop == 1:
            return self.batch_size
        prev = self.per_hop_vertex_counts[hop - 2]
        before = self.batch_size if hop == 2 else self.per_hop_vertex_counts[hop - 3]
        return prev - before


def hop_generator(base: np.random.SeedSequence, hop: int) -> np.random.Generator:
    """Per-hop substream: append the hop index to the base spawn key."""
    if base.entropy is None:
        # entropy-less sequences cannot be re-derived purely; spawn instead
        return np.random.default_rng(base.spawn(1)[0])
    child = np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + (hop,))
    return np.random.default_rng(child)


def _as_seed_sequence(rng: SeedLike, default_seed: int) -> np.random.SeedSequence:
    if rng is None:
        return np.random.SeedSequence(default_seed)
    if isinstance(rng, np.random.SeedSequence):
        return rng
    return np.random.SeedSequence(int(rng))


def sample_hop(
    graph: CsrGraph,
    frontier: np.ndarray,
    fanout: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``fanout`` neighbors with replacement for every frontier vertex.

    Degree-0 vertices contribute no pairs. Returns (src, dst) global-id
    arrays of equal length; deterministic for a fixed generator state.
    """
    frontier = np.asarray(frontier, dtype=np.int64)
    empty = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    if fanout == 0 or frontier.size == 0:
        return empty
    deg = graph.degrees[frontier]
    active = frontier[deg > 0]
    if active.size == 0:
        return empty
    adeg = deg[deg > 0]
    src = np.repeat(active, fanout)
    base = np.repeat(graph.offsets[active], fanout)
    span = np.repeat(adeg, fanout)
    # uniform integer in [0, deg): random() < 1 guarantees pick < deg
    pick = (rng.random(src.size) * span).astype(np.int64)
    dst = graph.targets[base + pick].astype(np.int64)
    return src, dst


class SubgraphBuilder:
    """Accumulates hops, assigning local ids in first-occurrence order.

    Seeds occupy locals 0..B-1. The internal vertex->local table is an
    int32 array over the base graph, so lookups are O(1) vectorized.
    """

    def __init__(self, num_vertices: int, seeds: np.ndarray):
        seeds = np.asarray(seeds, dtype=np.int64)
        if seeds.size == 0:
            raise ConfigError("seed batch must be non-empty")
        if np.unique(seeds).size != seeds.size:
            raise ConfigError("seed vertices must be distinct")
        if seeds.min() < 0 or seeds.max() >= num_vertices:
            raise ConfigError("seed vertex id out of range")
        self._local_of = np.full(num_vertices, -1, dtype=LOCAL_DTYPE)
        self._local_of[seeds] = np.arange(seeds.size, dtype=LOCAL_DTYPE)
        self._chunks: list[np.ndarray] = [seeds.copy()]
        self._size = int(seeds.size)
        self.hops: list[HopBlock] = []

    @property
    def num_local_vertices(self) -> int:
        return self._size

    def add_hop(
        self,
        hop_index: int,
        frontier: np.ndarray,
        src_global: np.ndarray,
        dst_global: np.ndarray,
    ) -> HopBlock:
        block = dedup_relabel(src_global, dst_global, self, hop_index, frontier=frontier)
        self.hops.append(block)
        return block

    def finish(self) -> SampledSubgraph:
        local_to_global = (
            np.concatenate(self._chunks) if len(self._chunks) > 1 else self._chunks[0]
        )
        local_to_global.setflags(write=False)
        return SampledSubgraph(hops=self.hops, local_to_global=local_to_global)


def dedup_relabel(
    src_global: np.ndarray,
    dst_global: np.ndarray,
    builder: SubgraphBuilder,
    hop_index: int,
    frontier: np.ndarray | None = None,
) -> HopBlock:
    """Relabel one hop's draws: first-seen destinations get fresh local ids
    in first-occurrence order, previously seen ids are reused."""
    src_global = np.asarray(src_global, dtype=np.int64)
    dst_global = np.asarray(dst_global, dtype=np.int64)
    table = builder._local_of

    src_local = table[src_global]
    if src_local.size and src_local.min() < 0:
        raise ValueError("hop source vertex not present in subgraph")

    dst_local = table[dst_global]
    fresh = dst_local < 0
    if fresh.any():
        first_seen = dst_global[fresh]
        uniq, first_pos = np.unique(first_seen, return_index=True)
        new_in_order = uniq[np.argsort(first_pos, kind="stable")]
        start = builder._size
        table[new_in_order] = np.arange(
            start, start + new_in_order.size, dtype=LOCAL_DTYPE
        )
        builder._chunks.append(new_in_order)
        builder._size = start + int(new_in_order.size)
        dst_local = table[dst_global]
        new_locals = np.arange(start, builder._size, dtype=LOCAL_DTYPE)
    else:
        new_locals = np.empty(0, dtype=LOCAL_DTYPE)

    if frontier is not None:
        frontier_local = table[np.asarray(frontier, dtype=np.int64)]
    else:
        # fall back to the draw sources, unique in first-occurrence order
        uniq, pos = np.unique(src_local, return_index=True)
        frontier_local = uniq[np.argsort(pos, kind="stable")].astype(LOCAL_DTYPE)

    return HopBlock(
        hop_index=hop_index,
        src_local=frontier_local.astype(LOCAL_DTYPE),
        dst_unique_local=new_locals,
        edge_src=src_local.astype(LOCAL_DTYPE),
        edge_dst=dst_local.astype(LOCAL_DTYPE),
        raw_draw_count=int(src_local.size),
    )


def build_subgraph_csr(
    edge_src: np.ndarray,
    edge_dst: np.ndarray,
    num_local_src: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Exclusive prefix sum of per-source degrees plus stable grouping."""
    edge_src = np.asarray(edge_src, dtype=np.int64)
    edge_dst = np.asarray(edge_dst, dtype=np.int64)
    if edge_src.size and (edge_src.min() < 0 or edge_src.max() >= num_local_src):
        raise IndexError("edge source local id out of range")
    deg = np.bincount(edge_src, minlength=num_local_src)
    offsets = np.zeros(num_local_src + 1, dtype=np.int64)
    np.cumsum(deg, out=offsets[1:])
    order = np.argsort(edge_src, kind="stable")
    return offsets, edge_dst[order].astype(LOCAL_DTYPE)


def sample_minibatch(
    graph: CsrGraph,
    config: SampleConfig,
    seed_vertices: np.ndarray,
    rng: SeedLike = None,
) -> tuple[SampledSubgraph, IterationMetadata]:
    """Run hops 1..N; hop h's frontier is hop h-1's new destinations
    (hop 1 starts from the seeds). Deterministic for fixed (seeds, rng)."""
    seeds = np.asarray(seed_vertices, dtype=np.int64)
    if seeds.size != config.batch_size:
        raise ConfigError(
            f"expected {config.batch_size} seed vertices, got {seeds.size}"
        )
    base = _as_seed_sequence(rng, config.seed)
    builder = SubgraphBuilder(graph.num_vertices, seeds)

    vertex_counts: list[int] = []
    edge_counts: list[int] = []
    frontier = seeds
    for hop, fanout in enumerate(config.fanouts, 1):
        gen = hop_generator(base, hop)
        src_g, dst_g = sample_hop(graph, frontier, fanout, gen)
        block = builder.add_hop(hop, frontier, src_g, dst_g)
        vertex_counts.append(builder.num_local_vertices)
        edge_counts.append(block.raw_draw_count)
        frontier = builder._chunks[-1] if block.dst_unique_local.size else np.empty(
            0, dtype=np.int64
        )

    subgraph = builder.finish()
    metadata = IterationMetadata(
        batch_size=int(seeds.size),
        per_hop_vertex_counts=tuple(vertex_counts),
        per_hop_edge_counts=tuple(edge_counts),
        total_unique_vertices=builder.num_local_vertices,
        total_edges=int(sum(edge_counts)),
    )
    return subgraph, metadata


def gather_indices(subgraph: SampledSubgraph) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for every unique sampled vertex; label rows for the
    seed batch (locals 0..B-1)."""
    batch = subgraph.hops[0].src_local.size if subgraph.hops else 0
    feature_rows = np.array(subgraph.local_to_global, copy=True)
    label_rows = feature_rows[:batch].copy()
    return feature_rows, label_rows


def prefix_sum_rounds(n: int, block_quota: int) -> int:
    """Kernel invocations for a hierarchical scan over n items.

    Levels shrink by the block quota T until one block suffices; each
    level costs a scan kernel and each non-final level an add-offset
    kernel, so the count is 2 * levels - 1. An empty scan still launches
    once.
    """
    if block_quota < 2:
        raise ConfigError("block quota must be >= 2")
    if n < 0:
        raise ConfigError("scan length must be nonnegative")
    levels = 1
    size = n
    while size > block_quota:
        size = ceil(size / block_quota)
        levels += 1
    return 2 * levels - 1


def scan_level_sizes(n: int, block_quota: int) -> list[int]:
    """Problem size at each scan level, largest first."""
    if block_quota < 2:
        raise ConfigError("block quota must be >= 2")
    sizes = [n]
    while sizes[-1] > block_quota:
        sizes.append(ceil(sizes[-1] / block_quota))
    return sizes


def subgraph_to_json(subgraph: SampledSubgraph, metadata: IterationMetadata) -> dict:
    """Debug dump used by the dedup oracle test and the CLI."""
    return {
        "batch_size": metadata.batch_size,
        "per_hop_vertex_counts": list(metadata.per_hop_vertex_counts),
        "per_hop_edge_counts": list(metadata.per_hop_edge_counts),
        "total_unique_vertices": metadata.total_unique_vertices,
        "total_edges": metadata.total_edges,
        "local_to_global": subgraph.local_to_global.tolist(),
        "hops": [
            {
                "hop": b.hop_index,
                "frontier_local": b.src_local.tolist(),
                "new_unique_local": b.dst_unique_local.tolist(),
                "edge_src": b.edge_src.tolist(),
                "edge_dst": b.edge_dst.tolist(),
            }
            for b in subgraph.hops
        ],
    }

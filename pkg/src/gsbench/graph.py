"""CSR graph storage, synthetic graph generation, and edge-list ingestion.

Graphs are directed. Undirected datasets are represented by storing both
edge directions (``symmetrize=True`` at ingestion). Vertex ids are dense
0..n-1; ``compact_ids=True`` remaps a sparse id space at load time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from .errors import ConfigError, ParseError, RangeError

OFFSET_DTYPE = np.int64
TARGET_DTYPE = np.int32

# Largest id storable in the 32-bit target array.
MAX_VERTEX_ID = np.iinfo(TARGET_DTYPE).max

_CSR_MAGIC = b"CSR1"

GraphSource = Union[str, Path, IO[str], Iterable[str]]


@dataclass(frozen=True)
class CsrGraph:
    """Compressed sparse row adjacency. Immutable after construction."""

    num_vertices: int
    num_edges: int
    offsets: np.ndarray  # int64, length num_vertices + 1
    targets: np.ndarray  # int32, length num_edges

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def degree(self, v: int) -> int:
        return int(self.offsets[v + 1] - self.offsets[v])

    def neighbors(self, v: int) -> np.ndarray:
        return self.targets[self.offsets[v] : self.offsets[v + 1]]


@dataclass(frozen=True)
class GraphGenSpec:
    """Parameters for one synthetic graph family.

    ``target_edges`` is an edge count (int) or, for uniform-random only,
    an edge probability (float in (0, 1)) applied to all n^2 ordered pairs.
    """

    kind: str  # uniform-random | power-law | star | ring | complete
    num_vertices: int
    target_edges: int | float | None = None
    exponent: float | None = None

    _KINDS = ("uniform-random", "power-law", "star", "ring", "complete")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ConfigError(f"unknown graph kind {self.kind!r}")
        if self.num_vertices < 1:
            raise ConfigError("num_vertices must be positive")
        if self.kind in ("uniform-random", "power-law"):
            if self.target_edges is None:
                raise ConfigError(f"{self.kind} requires target_edges")
            if isinstance(self.target_edges, float) and not 0 < self.target_edges < 1:
                raise ConfigError("edge probability must lie in (0, 1)")
        if self.kind == "power-law":
            if self.exponent is None or self.exponent <= 1:
                raise ConfigError("power-law requires exponent > 1")

    def edge_count(self) -> int:
        n = self.num_vertices
        if isinstance(self.target_edges, float):
            return int(round(self.target_edges * n * n))
        return int(self.target_edges or 0)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def make_csr(num_vertices: int, offsets: np.ndarray, targets: np.ndarray) -> CsrGraph:
    """Validate the CSR invariants and build an immutable graph."""
    offsets = np.ascontiguousarray(offsets, dtype=OFFSET_DTYPE)
    targets = np.ascontiguousarray(targets, dtype=TARGET_DTYPE)
    if offsets.shape != (num_vertices + 1,):
        raise ValueError("offsets must have length num_vertices + 1")
    if offsets[0] != 0 or offsets[-1] != targets.size:
        raise ValueError("offsets must start at 0 and end at num_edges")
    if np.any(np.diff(offsets) < 0):
        raise ValueError("offsets must be nondecreasing")
    if targets.size and (targets.min() < 0 or targets.max() >= num_vertices):
        raise RangeError("target vertex id out of range")
    return CsrGraph(num_vertices, int(targets.size), _freeze(offsets), _freeze(targets))


def csr_from_edges(num_vertices: int, src: np.ndarray, dst: np.ndarray) -> CsrGraph:
    """Counting-sort edge pairs into CSR; stable within each source segment."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    deg = np.bincount(src, minlength=num_vertices)
    offsets = np.zeros(num_vertices + 1, dtype=OFFSET_DTYPE)
    np.cumsum(deg, out=offsets[1:])
    order = np.argsort(src, kind="stable")
    return make_csr(num_vertices, offsets, dst[order].astype(TARGET_DTYPE))


def total_degree(graph: CsrGraph) -> int:
    """Sum of out-degrees; equals num_edges by the CSR invariant."""
    return int(graph.offsets[-1])


# ---------------------------------------------------------------------------
# edge-list text format


def _iter_lines(source: GraphSource):
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def load_edge_list(
    source: GraphSource,
    *,
    symmetrize: bool = False,
    compact_ids: bool = False,
) -> CsrGraph:
    """Parse "src dst" lines into a CsrGraph.

    Lines starting with '#' are comments. An optional header "n=<count>"
    declares a vertex count larger than max id + 1. With ``symmetrize``
    both edge directions are stored. With ``compact_ids`` sparse ids are
    remapped to dense 0..k-1 (in ascending id order) and any header is
    ignored.
    """
    srcs: list[int] = []
    dsts: list[int] = []
    declared_n: int | None = None
    for lineno, raw in enumerate(_iter_lines(source), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("n="):
            try:
                declared_n = int(line[2:])
            except ValueError:
                raise ParseError(lineno, f"bad vertex-count header {line!r}") from None
            if declared_n < 0:
                raise ParseError(lineno, "declared vertex count must be nonnegative")
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(lineno, f"expected 'src dst', got {line!r}")
        try:
            s, d = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(lineno, f"expected 'src dst', got {line!r}") from None
        if s < 0 or d < 0:
            raise ParseError(lineno, "vertex ids must be nonnegative")
        if s > MAX_VERTEX_ID or d > MAX_VERTEX_ID:
            raise RangeError(f"line {lineno}: vertex id exceeds 32-bit id space")
        srcs.append(s)
        dsts.append(d)

    src = np.asarray(srcs, dtype=np.int64)
    dst = np.asarray(dsts, dtype=np.int64)
    if symmetrize and src.size:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])

    if compact_ids:
        ids = np.unique(np.concatenate([src, dst]))
        src = np.searchsorted(ids, src)
        dst = np.searchsorted(ids, dst)
        n = int(ids.size)
    else:
        max_id = int(max(src.max(initial=-1), dst.max(initial=-1)))
        n = max_id + 1
        if declared_n is not None:
            if declared_n < n:
                raise RangeError(
                    f"vertex id {max_id} outside declared range n={declared_n}"
                )
            n = declared_n
    return csr_from_edges(n, src, dst)


# ---------------------------------------------------------------------------
# binary CSR format: magic "CSR1", little-endian u64 counts, then the
# offsets array (int64 LE) and the targets array (int32 LE)


def save_csr(graph: CsrGraph, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_CSR_MAGIC)
        fh.write(struct.pack("<QQ", graph.num_vertices, graph.num_edges))
        fh.write(graph.offsets.astype("<i8").tobytes())
        fh.write(graph.targets.astype("<i4").tobytes())


def load_csr(path: str | Path) -> CsrGraph:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CSR_MAGIC:
            raise ParseError(1, f"bad magic {magic!r}, expected {_CSR_MAGIC!r}")
        n, m = struct.unpack("<QQ", fh.read(16))
        offsets = np.frombuffer(fh.read(8 * (n + 1)), dtype="<i8")
        targets = np.frombuffer(fh.read(4 * m), dtype="<i4")
    return make_csr(int(n), offsets.astype(OFFSET_DTYPE), targets.astype(TARGET_DTYPE))


# ---------------------------------------------------------------------------
# synthetic generators


def generate(spec: GraphGenSpec, seed: int) -> CsrGraph:
    """Deterministically generate a graph from (spec, seed)."""
    n = spec.num_vertices
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if spec.kind == "star":
        # all edges directed out of vertex 0
        offsets = np.full(n + 1, n - 1, dtype=OFFSET_DTYPE)
        offsets[0] = 0
        return make_csr(n, offsets, np.arange(1, n, dtype=TARGET_DTYPE))
    if spec.kind == "ring":
        offsets = np.arange(n + 1, dtype=OFFSET_DTYPE)
        targets = (np.arange(n, dtype=np.int64) + 1) % n
        return make_csr(n, offsets, targets.astype(TARGET_DTYPE))
    if spec.kind == "complete":
        offsets = np.arange(n + 1, dtype=OFFSET_DTYPE) * (n - 1)
        grid = np.tile(np.arange(n, dtype=np.int64), (n, 1))
        mask = ~np.eye(n, dtype=bool)
        return make_csr(n, offsets, grid[mask].astype(TARGET_DTYPE))

    m = spec.edge_count()
    if m > n * n:
        raise ConfigError(f"target_edges {m} exceeds n^2 = {n * n}")
    if spec.kind == "uniform-random":
        src = rng.integers(0, n, size=m, dtype=np.int64)
        dst = rng.integers(0, n, size=m, dtype=np.int64)
        return csr_from_edges(n, src, dst)

    # power-law: Chung-Lu style, both endpoints drawn proportionally to
    # w_v = (v+1)^(-1/(exponent-1)), giving a heavy-tailed degree sequence
    weights = (np.arange(n, dtype=np.float64) + 1.0) ** (-1.0 / (spec.exponent - 1.0))
    probs = weights / weights.sum()
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    src = np.searchsorted(cdf, rng.random(m), side="right").astype(np.int64)
    dst = np.searchsorted(cdf, rng.random(m), side="right").astype(np.int64)
    return csr_from_edges(n, src, dst)

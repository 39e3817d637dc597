"""Experiment configuration: JSON schema with strict key checking.

Seed derivation: the graph generator uses ``master_seed`` directly; the
stream for iteration i of command c is
``SeedSequence(master_seed, spawn_key=(c, i))`` (the sampler appends the
hop index), and seed-vertex selection uses ``spawn_key=(c, i, 0)``.
Command indexes: sample-stats=1, envelope-check=2, exec-sim=3,
memory-compare=4.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .graph import CsrGraph, GraphGenSpec, generate, load_csr, load_edge_list
from .sampler import SampleConfig

COMMAND_INDEX = {
    "sample-stats": 1,
    "envelope-check": 2,
    "exec-sim": 3,
    "memory-compare": 4,
}


@dataclass(frozen=True)
class GraphSource:
    """Either a generator spec or a path to an edge list / binary CSR."""

    spec: GraphGenSpec | None = None
    path: str | None = None
    format: str = "edgelist"  # edgelist | csr
    symmetrize: bool = False
    compact_ids: bool = False

    def load(self, master_seed: int) -> CsrGraph:
        if self.spec is not None:
            return generate(self.spec, master_seed)
        if self.format == "csr":
            return load_csr(self.path)
        return load_edge_list(
            self.path, symmetrize=self.symmetrize, compact_ids=self.compact_ids
        )


@dataclass(frozen=True)
class EnvelopeParams:
    confidence: float = 0.999
    repetitions: int | None = None  # None: use the iteration count
    safety_factor: float = 1.0


@dataclass(frozen=True)
class SweepSpec:
    batch_sizes: tuple[int, ...] = (64, 256, 1024, 4096)
    depths: tuple[int, ...] = (2, 3, 4)
    strategies: tuple[str, ...] = ("host-mediated", "device-pilot", "replay")
    workers: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        for name in ("batch_sizes", "depths", "strategies", "workers"):
            if not getattr(self, name):
                raise ConfigError(f"sweep.{name} must be non-empty")


@dataclass(frozen=True)
class ExperimentConfig:
    graph: GraphSource
    sample: SampleConfig
    envelope: EnvelopeParams = EnvelopeParams()
    cost_model: str | None = None  # path; None loads the packaged default
    iterations: int = 200
    exec_iterations: int = 25  # per sweep point in exec-sim
    feature_dim: int = 100
    layers: int = 2
    sweep: SweepSpec = SweepSpec()
    output: str = "out"
    master_seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.exec_iterations < 1:
            raise ConfigError("exec_iterations must be >= 1")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")

    @property
    def envelope_repetitions(self) -> int:
        return self.envelope.repetitions or self.iterations

    def iteration_stream(self, command: str, iteration: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            self.master_seed, spawn_key=(COMMAND_INDEX[command], iteration)
        )

    def seed_selection_rng(self, command: str, iteration: int) -> np.random.Generator:
        ss = np.random.SeedSequence(
            self.master_seed, spawn_key=(COMMAND_INDEX[command], iteration, 0)
        )
        return np.random.default_rng(ss)


def _require_keys(raw: dict, allowed: set[str], context: str) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} keys: {sorted(unknown)}")


def _parse_graph(raw: dict) -> GraphSource:
    _require_keys(
        raw,
        {"kind", "num_vertices", "target_edges", "exponent", "path", "format",
         "symmetrize", "compact_ids"},
        "graph",
    )
    if "path" in raw:
        return GraphSource(
            path=raw["path"],
            format=raw.get("format", "edgelist"),
            symmetrize=bool(raw.get("symmetrize", False)),
            compact_ids=bool(raw.get("compact_ids", False)),
        )
    spec = GraphGenSpec(
        kind=raw["kind"],
        num_vertices=int(raw["num_vertices"]),
        target_edges=raw.get("target_edges"),
        exponent=raw.get("exponent"),
    )
    return GraphSource(spec=spec)


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return parse_config(raw, **overrides)


def parse_config(raw: dict, **overrides) -> ExperimentConfig:
    _require_keys(
        raw,
        {"graph", "sample", "envelope", "cost_model", "iterations", "exec_iterations",
         "feature_dim", "layers", "sweep", "output", "master_seed"},
        "config",
    )
    if "graph" not in raw or "sample" not in raw:
        raise ConfigError("config requires 'graph' and 'sample' sections")

    sample_raw = dict(raw["sample"])
    _require_keys(sample_raw, {"batch_size", "fanouts", "seed"}, "sample")
    sample = SampleConfig(
        batch_size=int(sample_raw["batch_size"]),
        fanouts=tuple(sample_raw["fanouts"]),
        seed=int(sample_raw.get("seed", 0)),
    )

    env_raw = dict(raw.get("envelope", {}))
    _require_keys(env_raw, {"confidence", "repetitions", "safety_factor"}, "envelope")
    envelope = EnvelopeParams(
        confidence=float(env_raw.get("confidence", 0.999)),
        repetitions=(
            int(env_raw["repetitions"])
            if env_raw.get("repetitions") is not None
            else None
        ),
        safety_factor=float(env_raw.get("safety_factor", 1.0)),
    )

    sweep_raw = dict(raw.get("sweep", {}))
    _require_keys(sweep_raw, {"batch_sizes", "depths", "strategies", "workers"}, "sweep")
    sweep_kwargs = {k: tuple(v) for k, v in sweep_raw.items()}

    cfg = dict(
        graph=_parse_graph(dict(raw["graph"])),
        sample=sample,
        envelope=envelope,
        cost_model=raw.get("cost_model"),
        iterations=int(raw.get("iterations", 200)),
        exec_iterations=int(raw.get("exec_iterations", 25)),
        feature_dim=int(raw.get("feature_dim", 100)),
        layers=int(raw.get("layers", 2)),
        sweep=SweepSpec(**sweep_kwargs),
        output=raw.get("output", "out"),
        master_seed=int(raw.get("master_seed", 0)),
    )
    cfg.update(overrides)
    return ExperimentConfig(**cfg)

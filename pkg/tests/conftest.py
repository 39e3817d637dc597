import numpy as np
import pytest

import gsbench as g


def sample_epoch(graph, sample_cfg, iterations, master_seed, command_index=1, start=0):
    """Sample an epoch with the harness seed scheme; returns metadata list."""
    out = []
    for i in range(start, start + iterations):
        sel = np.random.default_rng(
            np.random.SeedSequence(master_seed, spawn_key=(command_index, i, 0))
        )
        seeds = sel.choice(graph.num_vertices, size=sample_cfg.batch_size, replace=False)
        _, md = g.sample_minibatch(
            graph, sample_cfg, seeds,
            np.random.SeedSequence(master_seed, spawn_key=(command_index, i)),
        )
        out.append(md)
    return out


@pytest.fixture(scope="session")
def small_powerlaw():
    """10k-vertex heavy-tailed graph for fast randomized tests."""
    return g.generate(g.GraphGenSpec("power-law", 10_000, 200_000, exponent=2.1), 7)


@pytest.fixture(scope="session")
def reference_powerlaw():
    """The reference graph: power-law, n=1e5, avg degree 200, exponent 2.1.

    Matches the committed calibration provenance (seed 42).
    """
    return g.generate(
        g.GraphGenSpec("power-law", 100_000, 20_000_000, exponent=2.1), 42
    )


@pytest.fixture(scope="session")
def reference_uniform():
    return g.generate(g.GraphGenSpec("uniform-random", 100_000, 20_000_000), 43)


@pytest.fixture(scope="session")
def deep_powerlaw():
    """Million-vertex power-law for the memory depth study: at n=1e5 the
    vertex-count clamp saturates both plans by depth 4."""
    return g.generate(g.GraphGenSpec("power-law", 1_000_000, 8_000_000, exponent=2.1), 99)


@pytest.fixture(scope="session")
def reference_epoch(reference_powerlaw):
    """2000 sampled iterations at the default config (B=256, F=[10,10])."""
    cfg = g.SampleConfig(batch_size=256, fanouts=(10, 10))
    return cfg, sample_epoch(reference_powerlaw, cfg, 2000, master_seed=42)

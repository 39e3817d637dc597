"""Desk-scale model of sampling-based GNN training orchestration."""

from .envelope import (
    EnvelopeSpec,
    HitModel,
    PbMoments,
    check_overflow,
    compute_envelope,
    hitting_probability,
    normal_quantile,
    pb_exact_distribution,
    pb_moments,
    repetition_quantile,
    total_draws,
    vertex_hit_prob,
)
from .graph import CsrGraph, GraphGenSpec, generate, load_csr, load_edge_list, save_csr, total_degree
from .sampler import (
    HopBlock,
    IterationMetadata,
    SampleConfig,
    SampledSubgraph,
    build_subgraph_csr,
    gather_indices,
    prefix_sum_rounds,
    sample_hop,
    sample_minibatch,
)

__version__ = "0.1.0"

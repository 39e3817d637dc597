"""Statistical execution envelope for metadata-free provisioning.

The deduplicated sampled size is modeled as a Poisson-binomial variable:
each vertex is hit by a single draw with probability pi_v proportional to
its degree, a pipeline of S_tot draws hits it at least once with
probability p_v = 1 - (1 - pi_v)^S_tot, and the unique count has moments
mu = sum p_v, sigma^2 = sum p_v (1 - p_v). For confidence p over m
repeated iterations the band half-width is z * sigma with
z = Phi^-1(p^(1/m)), and the normalized range obeys
(max - min) / mean <= 2 z CV.

Draw counts use the worst-case frontier expansion (B * prod F, clamped at
n) per hop so the envelope stays metadata-free.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, ModelError
from .graph import CsrGraph
from .sampler import IterationMetadata, SampleConfig


@dataclass(frozen=True)
class HitModel:
    """Degree-proportional hit probabilities and the worst-case draw plan."""

    pi: np.ndarray  # per-vertex single-draw hit probability, sums to 1
    draws_per_hop: tuple[int, ...]
    total_draws: int


@dataclass(frozen=True)
class PbMoments:
    """Poisson-binomial mean, variance, and coefficient of variation.

    ``cv`` is None when the mean is zero (flagged undefined).
    """

    mu: float
    sigma2: float
    cv: float | None

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class EnvelopeSpec:
    """Per-hop conservative vertex/edge bounds plus their statistical
    parameters. Bounds are inclusive: a realized size equal to the bound
    is not an overflow."""

    confidence: float
    repetitions: int
    z: float
    safety_factor: float
    v_max_per_hop: tuple[int, ...]
    e_max_per_hop: tuple[int, ...]
    v_max_total: int
    range_bound: float

    @property
    def num_hops(self) -> int:
        return len(self.v_max_per_hop)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EnvelopeSpec":
        raw = json.loads(text)
        raw["v_max_per_hop"] = tuple(raw["v_max_per_hop"])
        raw["e_max_per_hop"] = tuple(raw["e_max_per_hop"])
        return cls(**raw)


def hitting_probability(graph: CsrGraph) -> np.ndarray:
    """pi_v = deg(v) / sum_u deg(u)."""
    total = int(graph.offsets[-1])
    if total == 0:
        raise ModelError("hit model undefined for an edgeless graph")
    return graph.degrees.astype(np.float64) / float(total)


def total_draws(config: SampleConfig, num_vertices: int) -> list[int]:
    """Worst-case draws per hop: S_h = min(B * prod_{i<h} F_i, n) * F_h.

    Uses the static frontier expansion rather than realized frontiers so
    the plan is metadata-free.
    """
    draws = []
    frontier = config.batch_size  # exact Python int, no overflow
    for fanout in config.fanouts:
        draws.append(min(frontier, num_vertices) * fanout)
        frontier *= fanout
    return draws


def build_hit_model(graph: CsrGraph, config: SampleConfig) -> HitModel:
    draws = total_draws(config, graph.num_vertices)
    return HitModel(
        pi=hitting_probability(graph),
        draws_per_hop=tuple(draws),
        total_draws=int(sum(draws)),
    )


def vertex_hit_prob(pi_v, s_tot: int):
    """p_v = 1 - (1 - pi_v)^S_tot, evaluated as -expm1(S * log1p(-pi)).

    Accepts a scalar or an array; stable across the full pi range.
    """
    pi = np.asarray(pi_v, dtype=np.float64)
    if s_tot < 0:
        raise ConfigError("draw count must be nonnegative")
    if s_tot == 0:
        out = np.zeros_like(pi)
        return float(out) if np.isscalar(pi_v) else out
    with np.errstate(divide="ignore"):
        log_miss = np.log1p(-pi)  # -inf exactly at pi == 1
    out = -np.expm1(s_tot * log_miss)
    out = np.where(pi >= 1.0, 1.0, out)
    return float(out) if np.isscalar(pi_v) else out


def pb_moments(p) -> PbMoments:
    """Exact Poisson-binomial moments: mu = sum p, sigma^2 = sum p(1-p)."""
    p = np.asarray(p, dtype=np.float64)
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ModelError("hit probabilities must lie in [0, 1]")
    mu = float(p.sum())
    sigma2 = float((p * (1.0 - p)).sum())
    sigma2 = max(sigma2, 0.0)
    cv = math.sqrt(sigma2) / mu if mu > 0 else None
    return PbMoments(mu=mu, sigma2=sigma2, cv=cv)


# ---------------------------------------------------------------------------
# standard-normal inverse CDF: rational initial guess (Acklam's regions)
# refined by one Halley step against an erfc-based CDF. Absolute error is
# well below 1e-8 over (1e-12, 1 - 1e-12); q > 1/2 is mirrored, which makes
# the odd symmetry exact (1 - q is exact for q in [1/2, 1]).

_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
    3.754408661907416e00,
)

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _quantile_lower_half(q: float) -> float:
    """Inverse CDF for q in (0, 0.5]."""
    if q < 0.02425:
        r = math.sqrt(-2.0 * math.log(q))
        x = (
            ((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]
        ) / ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0)
    else:
        r = q - 0.5
        s = r * r
        x = (
            (((((_A[0] * s + _A[1]) * s + _A[2]) * s + _A[3]) * s + _A[4]) * s + _A[5])
            * r
            / (((((_B[0] * s + _B[1]) * s + _B[2]) * s + _B[3]) * s + _B[4]) * s + 1.0)
        )
    # one Halley refinement against the high-accuracy CDF
    err = _norm_cdf(x) - q
    u = err * _SQRT_2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_quantile(q: float) -> float:
    """Phi^-1(q) for q in (0, 1)."""
    if not 0.0 < q < 1.0:
        raise ConfigError(f"quantile argument must lie in (0, 1), got {q}")
    if q > 0.5:
        return -_quantile_lower_half(1.0 - q)
    return _quantile_lower_half(q)


def repetition_quantile(p: float, m: int) -> float:
    """z_p^(m) = Phi^-1(p^(1/m)), with p^(1/m) formed via exp(log(p)/m).

    The complement 1 - p^(1/m) is computed as -expm1(log(p)/m) so the
    quantile stays accurate when m pushes the argument toward 1.
    """
    if not 0.0 < p < 1.0:
        raise ConfigError(f"confidence must lie in (0, 1), got {p}")
    if m < 1:
        raise ConfigError("repetition count must be >= 1")
    tail = -math.expm1(math.log(p) / m)  # 1 - p^(1/m)
    if tail <= 0.0:
        raise ConfigError("confidence too close to 1 for this repetition count")
    if tail >= 0.5:
        return normal_quantile(1.0 - tail)
    return -_quantile_lower_half(tail)


def normalized_range_bound(moments: PbMoments, z: float) -> float:
    """Normalized fluctuation-range bound 2 * z * CV."""
    if moments.cv is None:
        raise ModelError("range bound undefined for zero mean")
    return 2.0 * z * moments.cv


def compute_envelope(
    graph: CsrGraph,
    config: SampleConfig,
    confidence: float = 0.999,
    repetitions: int = 1,
    safety_factor: float = 1.0,
) -> EnvelopeSpec:
    """Per-hop vertex/edge bounds at mu + z * sigma over cumulative draws.

    The vertex bound at hop h is ceil(sf * (mu_h + z * sigma_h)) + B for
    the always-present seeds, clamped at both the vertex count and the
    worst-case hop cap B * prod_{i<=h} F_i + B so the envelope never
    exceeds the maximal reservation. Edge bounds multiply the previous
    hop's vertex-bound increment (the frontier bound) by the fanout.
    """
    if safety_factor < 1.0:
        raise ConfigError("safety factor must be >= 1")
    n = graph.num_vertices
    batch = config.batch_size
    pi = hitting_probability(graph)
    draws = total_draws(config, n)
    z = repetition_quantile(confidence, repetitions)

    v_max: list[int] = []
    cumulative = 0
    worst = batch  # B * prod_{i<=h} F_i, exact int
    final_moments: PbMoments | None = None
    for hop, fanout in enumerate(config.fanouts, 1):
        cumulative += draws[hop - 1]
        worst *= fanout
        p_hit = vertex_hit_prob(pi, cumulative)
        moments = pb_moments(p_hit)
        final_moments = moments
        raw = math.ceil(safety_factor * (moments.mu + z * moments.sigma)) + batch
        bound = min(raw, n, worst + batch)
        if v_max:
            bound = max(bound, v_max[-1])  # cumulative bounds never shrink
        v_max.append(bound)

    e_max: list[int] = []
    for hop, fanout in enumerate(config.fanouts, 1):
        if hop == 1:
            frontier_bound = batch
        else:
            prev_base = batch if hop == 2 else v_max[hop - 3]
            frontier_bound = max(v_max[hop - 2] - prev_base, 0)
        e_max.append(min(frontier_bound, n) * fanout)

    assert final_moments is not None
    if final_moments.mu > 0:
        range_bound = normalized_range_bound(final_moments, z)
    else:
        range_bound = 0.0  # no draws: the size is deterministic

    return EnvelopeSpec(
        confidence=confidence,
        repetitions=repetitions,
        z=z,
        safety_factor=safety_factor,
        v_max_per_hop=tuple(v_max),
        e_max_per_hop=tuple(e_max),
        v_max_total=v_max[-1],
        range_bound=range_bound,
    )


def pb_exact_distribution(p) -> np.ndarray:
    """Exact Poisson-binomial pmf over 0..len(p) by DP convolution.

    Quadratic in len(p); capped at 10^4 entries. Small-instance oracle
    for the normal-approximation envelope.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.size > 10_000:
        raise ConfigError("exact distribution capped at 10^4 probabilities")
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ModelError("hit probabilities must lie in [0, 1]")
    pmf = np.ones(1, dtype=np.float64)
    for pv in p:
        nxt = np.empty(pmf.size + 1, dtype=np.float64)
        nxt[:-1] = pmf * (1.0 - pv)
        nxt[-1] = 0.0
        nxt[1:] += pmf * pv
        pmf = nxt
    return pmf


def pb_quantile(pmf: np.ndarray, q: float) -> int:
    """Smallest k with CDF(k) >= q."""
    cdf = np.cumsum(pmf)
    return int(np.searchsorted(cdf, q, side="left"))


def check_overflow(metadata: IterationMetadata, envelope: EnvelopeSpec) -> list[bool]:
    """Per-hop flags: cumulative uniques beyond v_max or hop edges beyond
    e_max. Bounds are inclusive."""
    if metadata.num_hops != envelope.num_hops:
        raise ConfigError(
            f"metadata has {metadata.num_hops} hops, envelope {envelope.num_hops}"
        )
    flags = []
    for h in range(metadata.num_hops):
        over_v = metadata.per_hop_vertex_counts[h] > envelope.v_max_per_hop[h]
        over_e = metadata.per_hop_edge_counts[h] > envelope.e_max_per_hop[h]
        flags.append(bool(over_v or over_e))
    return flags

import io
import math

import numpy as np
import pytest

import gsbench as g
from gsbench.envelope import (
    EnvelopeSpec,
    build_hit_model,
    normalized_range_bound,
    pb_quantile,
)
from gsbench.errors import ConfigError, ModelError

# mpmath-evaluated reference values (40 significant digits upstream)
PHI_INV_0975 = 1.959963984540054
HIT_1E6 = 0.6321207427683549  # 1 - (1 - 1e-6)^1e6
Z_0999_1000 = 4.753323322661528  # Phi^-1(0.999^(1/1000))


# ---------------------------------------------------------------------------
# hitting probability and draw plan


def test_hitting_probability_complete():
    comp = g.generate(g.GraphGenSpec("complete", 3), 0)
    assert np.allclose(g.hitting_probability(comp), [1 / 3] * 3)


def test_hitting_probability_star():
    star = g.generate(g.GraphGenSpec("star", 5), 0)
    pi = g.hitting_probability(star)
    assert pi[0] == 1.0
    assert np.all(pi[1:] == 0.0)


def test_hitting_probability_from_degrees():
    graph = g.load_edge_list(io.StringIO("0 1\n1 0\n1 0\n1 0\n"))
    assert np.allclose(g.hitting_probability(graph), [0.25, 0.75])


def test_hitting_probability_edgeless():
    graph = g.load_edge_list(io.StringIO("n=3\n"))
    with pytest.raises(ModelError):
        g.hitting_probability(graph)


def test_total_draws_simple():
    assert g.total_draws(g.SampleConfig(2, (3, 2)), 10**9) == [6, 12]
    assert g.total_draws(g.SampleConfig(1, (7,)), 100) == [7]


def test_total_draws_clamped():
    assert g.total_draws(g.SampleConfig(100, (10, 10)), 500) == [1000, 5000]


def test_total_draws_zero_fanout():
    assert g.total_draws(g.SampleConfig(8, (0, 5)), 1000) == [0, 0]


def test_build_hit_model(small_powerlaw):
    hm = build_hit_model(small_powerlaw, g.SampleConfig(4, (3, 2)))
    assert hm.total_draws == 12 + 24
    assert abs(hm.pi.sum() - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# vertex hit probability


def test_vertex_hit_prob_half():
    assert g.vertex_hit_prob(0.5, 2) == pytest.approx(0.75, abs=1e-15)


def test_vertex_hit_prob_edges():
    assert g.vertex_hit_prob(0.0, 100) == 0.0
    assert g.vertex_hit_prob(0.3, 0) == 0.0
    assert g.vertex_hit_prob(1.0, 1) == 1.0


def test_vertex_hit_prob_small_pi_large_s():
    assert g.vertex_hit_prob(1e-6, 10**6) == pytest.approx(HIT_1E6, rel=1e-12)


def test_vertex_hit_prob_stability_range():
    # relative accuracy across pi * S from 1e-12 to 50
    for lam in (1e-12, 1e-6, 1e-3, 1.0, 50.0):
        pi = lam / 1e6
        exact = -math.expm1(1e6 * math.log1p(-pi))
        assert g.vertex_hit_prob(pi, 10**6) == pytest.approx(exact, rel=1e-12)


def test_vertex_hit_prob_vectorized():
    out = g.vertex_hit_prob(np.array([0.0, 0.5, 1.0]), 2)
    assert np.allclose(out, [0.0, 0.75, 1.0])


# ---------------------------------------------------------------------------
# Poisson-binomial moments


def test_pb_moments_basic():
    m = g.pb_moments([0.5, 0.5, 0.5])
    assert m.mu == pytest.approx(1.5)
    assert m.sigma2 == pytest.approx(0.75)
    assert m.cv == pytest.approx(math.sqrt(0.75) / 1.5)


def test_pb_moments_deterministic():
    m = g.pb_moments([1.0, 1.0])
    assert m.mu == 2.0 and m.sigma2 == 0.0 and m.cv == 0.0


def test_pb_moments_zero_mean_flagged():
    m = g.pb_moments([0.0, 0.0])
    assert m.cv is None
    with pytest.raises(ModelError):
        normalized_range_bound(m, 1.0)


def test_pb_moments_sparse_regime_cv():
    p = np.full(100_000, 0.005)
    m = g.pb_moments(p)
    assert m.cv == pytest.approx(1 / math.sqrt(m.mu), rel=0.01)


# ---------------------------------------------------------------------------
# quantiles


def test_normal_quantile_median():
    assert g.normal_quantile(0.5) == 0.0


def test_normal_quantile_reference_point():
    assert g.normal_quantile(0.975) == pytest.approx(PHI_INV_0975, abs=1e-8)


def test_normal_quantile_symmetry():
    # dyadic q so that 1 - q is exactly representable; the mirrored
    # evaluation is then bit-exact
    for q in (2.0**-40, 2.0**-20, 2.0**-10, 0.25, 0.375):
        assert g.normal_quantile(q) == -g.normal_quantile(1 - q)
    for q in (0.01, 0.3, 0.49):
        assert g.normal_quantile(q) == pytest.approx(-g.normal_quantile(1 - q), abs=1e-12)


def test_normal_quantile_strictly_increasing():
    qs = np.linspace(0.001, 0.999, 199)
    vals = [g.normal_quantile(q) for q in qs]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_normal_quantile_domain():
    for q in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(ConfigError):
            g.normal_quantile(q)


def test_repetition_quantile_median():
    assert g.repetition_quantile(0.5, 1) == 0.0


def test_repetition_quantile_increasing_in_m():
    vals = [g.repetition_quantile(0.9, m) for m in (1, 10, 100, 1000, 10_000)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_repetition_quantile_reference():
    assert g.repetition_quantile(0.999, 1000) == pytest.approx(Z_0999_1000, abs=1e-8)


def test_repetition_quantile_domain():
    with pytest.raises(ConfigError):
        g.repetition_quantile(1.0, 10)
    with pytest.raises(ConfigError):
        g.repetition_quantile(0.9, 0)


# ---------------------------------------------------------------------------
# exact Poisson-binomial distribution


def test_pb_exact_single():
    assert np.allclose(g.pb_exact_distribution([0.5]), [0.5, 0.5])


def test_pb_exact_binomial():
    assert np.allclose(g.pb_exact_distribution([0.5, 0.5]), [0.25, 0.5, 0.25])


def test_pb_exact_hand_convolution():
    pmf = g.pb_exact_distribution([0.1, 0.2, 0.3])
    assert np.allclose(pmf, [0.504, 0.398, 0.092, 0.006], atol=1e-12)


def test_pb_exact_size_cap():
    with pytest.raises(ConfigError):
        g.pb_exact_distribution(np.full(10_001, 0.5))


def test_pb_exact_matches_moments():
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = rng.random(int(rng.integers(1, 21)))
        pmf = g.pb_exact_distribution(p)
        moments = g.pb_moments(p)
        k = np.arange(pmf.size)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-10)
        assert float(k @ pmf) == pytest.approx(moments.mu, abs=1e-9)
        assert float((k - moments.mu) ** 2 @ pmf) == pytest.approx(moments.sigma2, abs=1e-9)


def test_pb_exact_contract_at_scale():
    p = np.random.default_rng(0).random(1000) * 0.9
    pmf = g.pb_exact_distribution(p)
    moments = g.pb_moments(p)
    k = np.arange(pmf.size)
    assert abs(pmf.sum() - 1.0) < 1e-10
    assert abs(float(k @ pmf) - moments.mu) < 1e-9
    assert abs(float((k - moments.mu) ** 2 @ pmf) - moments.sigma2) < 1e-9


def test_pb_quantile():
    pmf = g.pb_exact_distribution([0.5, 0.5])
    assert pb_quantile(pmf, 0.25) == 0
    assert pb_quantile(pmf, 0.5) == 1
    assert pb_quantile(pmf, 0.99) == 2


# ---------------------------------------------------------------------------
# envelope assembly


def test_envelope_zero_fanout(small_powerlaw):
    env = g.compute_envelope(small_powerlaw, g.SampleConfig(8, (0,)), 0.999, 100)
    assert env.v_max_total == 8
    assert env.e_max_per_hop == (0,)
    assert env.range_bound == 0.0


def test_envelope_clamped_at_vertex_count(small_powerlaw):
    env = g.compute_envelope(small_powerlaw, g.SampleConfig(64, (50, 50, 50)), 0.999, 100)
    assert env.v_max_total <= small_powerlaw.num_vertices


def test_envelope_monotone_in_parameters(small_powerlaw):
    base = g.compute_envelope(small_powerlaw, g.SampleConfig(16, (5, 5)), 0.99, 100, 1.0)
    higher_p = g.compute_envelope(small_powerlaw, g.SampleConfig(16, (5, 5)), 0.999, 100, 1.0)
    more_reps = g.compute_envelope(small_powerlaw, g.SampleConfig(16, (5, 5)), 0.99, 1000, 1.0)
    more_safety = g.compute_envelope(small_powerlaw, g.SampleConfig(16, (5, 5)), 0.99, 100, 1.2)
    wider_fan = g.compute_envelope(small_powerlaw, g.SampleConfig(16, (5, 6)), 0.99, 100, 1.0)
    assert higher_p.v_max_total >= base.v_max_total
    assert more_reps.v_max_total >= base.v_max_total
    assert more_safety.v_max_total >= base.v_max_total
    assert wider_fan.v_max_total >= base.v_max_total


def test_envelope_never_exceeds_worst_case(small_powerlaw):
    rng = np.random.default_rng(17)
    for _ in range(25):
        batch = int(rng.integers(1, 128))
        hops = int(rng.integers(1, 4))
        fanouts = tuple(int(f) for f in rng.integers(1, 12, size=hops))
        env = g.compute_envelope(
            small_powerlaw, g.SampleConfig(batch, fanouts), 0.999, 2000
        )
        cap = batch
        for h, f in enumerate(fanouts):
            cap *= f
            assert env.v_max_per_hop[h] <= cap + batch
        assert env.v_max_total <= cap + batch


def test_envelope_e_max_structure(small_powerlaw):
    cfg = g.SampleConfig(32, (4, 5, 6))
    env = g.compute_envelope(small_powerlaw, cfg, 0.999, 500)
    assert env.e_max_per_hop[0] == 32 * 4
    inc1 = env.v_max_per_hop[0] - 32
    inc2 = env.v_max_per_hop[1] - env.v_max_per_hop[0]
    assert env.e_max_per_hop[1] == inc1 * 5
    assert env.e_max_per_hop[2] == inc2 * 6


def test_envelope_json_round_trip(small_powerlaw):
    env = g.compute_envelope(small_powerlaw, g.SampleConfig(8, (3, 3)), 0.99, 50)
    assert EnvelopeSpec.from_json(env.to_json()) == env


def test_range_bound_trivial_cases():
    m = g.pb_moments([0.5, 0.5])
    assert normalized_range_bound(m, 0.0) == 0.0
    deterministic = g.pb_moments([1.0, 1.0, 0.0])
    assert normalized_range_bound(deterministic, 3.0) == 0.0


def test_range_bound_sparse_regime():
    p = np.full(200_000, 5e-5)  # mu = 10, cv ~ 1/sqrt(mu)
    m = g.pb_moments(p)
    z = 2.0
    assert normalized_range_bound(m, z) == pytest.approx(2 * z / math.sqrt(m.mu), rel=0.01)


# ---------------------------------------------------------------------------
# overflow checks


def _metadata(batch, v_counts, e_counts):
    return g.IterationMetadata(
        batch_size=batch,
        per_hop_vertex_counts=tuple(v_counts),
        per_hop_edge_counts=tuple(e_counts),
        total_unique_vertices=v_counts[-1],
        total_edges=sum(e_counts),
    )


def _envelope(v_max, e_max):
    return EnvelopeSpec(
        confidence=0.99, repetitions=1, z=2.0, safety_factor=1.0,
        v_max_per_hop=tuple(v_max), e_max_per_hop=tuple(e_max),
        v_max_total=v_max[-1], range_bound=0.1,
    )


def test_check_overflow_inclusive_bound():
    env = _envelope([10, 20], [30, 40])
    md = _metadata(4, [10, 20], [30, 40])
    assert g.check_overflow(md, env) == [False, False]


def test_check_overflow_vertex_beyond_bound():
    env = _envelope([10, 20], [30, 40])
    md = _metadata(4, [10, 21], [30, 40])
    assert g.check_overflow(md, env) == [False, True]


def test_check_overflow_edges_beyond_bound():
    env = _envelope([10, 20], [30, 40])
    md = _metadata(4, [9, 19], [31, 40])
    assert g.check_overflow(md, env) == [True, False]


def test_check_overflow_hop_mismatch():
    env = _envelope([10], [30])
    md = _metadata(4, [10, 20], [30, 40])
    with pytest.raises(ConfigError):
        g.check_overflow(md, env)


def test_zero_fanout_never_overflows(small_powerlaw):
    cfg = g.SampleConfig(8, (0,))
    env = g.compute_envelope(small_powerlaw, cfg, 0.999, 100)
    _, md = g.sample_minibatch(small_powerlaw, cfg, np.arange(8))
    assert g.check_overflow(md, env) == [False]


# ---------------------------------------------------------------------------
# small Monte-Carlo coverage smoke test (full version in acceptance)


def test_envelope_coverage_smoke(small_powerlaw):
    cfg = g.SampleConfig(batch_size=32, fanouts=(8, 8))
    env = g.compute_envelope(small_powerlaw, cfg, confidence=0.99, repetitions=300)
    master = np.random.default_rng(31)
    hits = 0
    for i in range(300):
        seeds = master.choice(small_powerlaw.num_vertices, size=32, replace=False)
        _, md = g.sample_minibatch(small_powerlaw, cfg, seeds, int(master.integers(2**32)))
        hits += md.total_unique_vertices <= env.v_max_total
    assert hits / 300 >= 0.97

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from brwkit import stats, streams
from brwkit.engine import ReplicaOutcome, Trajectory, GenStats
from brwkit.errors import (EmptyInput, InsufficientTail, NonpositiveSigma2, NonpositiveZ,
                           TooFewSurvivors)
from oracles import LOG_TWO, ks_bruteforce


def gumbel_draws(rng, c, z):
    """X with P(X >= x | Z) = exp(-c Z e^x), by inverse transform."""
    return np.log(-np.log(rng.random(z.size)) / (c * z))


def synthetic_replicas(rng, n, c_star, c_prime):
    z = rng.gamma(2.0, 0.5, size=n)
    w = gumbel_draws(rng, c_star, z)
    l = gumbel_draws(rng, c_prime, z)
    return [ReplicaOutcome(True, a, b, c, True) for a, b, c in zip(z, w, l)]


# ---------------------------------------------------------------------------
# tail constant


@pytest.mark.parametrize("seed", range(3))
def test_unit_exponential_tail(seed):
    rng = np.random.default_rng(seed)
    fit = stats.estimate_cM(-rng.exponential(size=100_000), seed=seed)
    assert abs(fit.c_hat - 1.0) <= 3 * fit.stderr
    assert -1.1 <= fit.slope <= -0.9
    assert fit.n_tail >= 200 and fit.window == (3.0, 8.0)


def test_shifted_exponential_tail():
    rng = np.random.default_rng(7)
    # P(R <= -x) = 2 e^{-x} for x >= ln 2
    fit = stats.estimate_cM(-(rng.exponential(size=100_000) + LOG_TWO))
    assert abs(fit.c_hat - 2.0) <= 3 * fit.stderr


def test_all_zero_pool_has_no_tail():
    with pytest.raises(InsufficientTail):
        stats.estimate_cM(np.zeros(1000))


def test_tail_fit_is_deterministic():
    data = -np.random.default_rng(1).exponential(size=20_000)
    a = stats.estimate_cM(data, window=(2, 5), seed=4)
    b = stats.estimate_cM(data, window=(2, 5), seed=4)
    assert a == b
    assert stats.estimate_cM(data, window=(2, 5), seed=5).stderr != a.stderr


def test_bad_window():
    with pytest.raises(ValueError):
        stats.estimate_cM(-np.ones(10), window=(5, 3))


# ---------------------------------------------------------------------------
# Gumbel scale


def test_mle_examples():
    assert stats.mle_gumbel_scale([(1.0, 0.0)]) == (1.0, 1.0)
    c, se = stats.mle_gumbel_scale([(1.0, LOG_TWO), (1.0, LOG_TWO)])
    assert c == pytest.approx(0.5, abs=1e-15)
    assert se == pytest.approx(0.5 / math.sqrt(2))


def test_mle_recovers_scale():
    rng = np.random.default_rng(3)
    z = np.ones(100_000)
    x = gumbel_draws(rng, 3.0, z)
    c, se = stats.mle_gumbel_scale(np.column_stack([z, x]))
    assert abs(c - 3.0) <= 3 * se


def test_mle_errors():
    with pytest.raises(EmptyInput):
        stats.mle_gumbel_scale([])
    with pytest.raises(NonpositiveZ):
        stats.mle_gumbel_scale([(0.0, 1.0)])
    with pytest.raises(NonpositiveZ):
        stats.mle_gumbel_scale([(1.0, 1.0), (-2.0, 0.0)])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 100), st.floats(-5, 5)), min_size=1, max_size=50),
       st.sampled_from([0.125, 0.5, 2.0, 4.0, 1024.0]))
def test_mle_scale_consistency(pairs, lam):
    # powers of two keep the rescaling exact in floating point
    c, _ = stats.mle_gumbel_scale(pairs)
    c_scaled, _ = stats.mle_gumbel_scale([(lam * z, x) for z, x in pairs])
    assert c_scaled == c / lam


def test_derive_cprime():
    assert stats.derive_cprime(1.0, 2 * LOG_TWO) == pytest.approx(math.sqrt(1 / (math.pi * LOG_TWO)))
    assert stats.derive_cprime(1.0, 2 * LOG_TWO) == pytest.approx(0.6776608, abs=1e-7)
    assert stats.derive_cprime(0.37, 2 / math.pi) == pytest.approx(0.37, rel=1e-15)
    assert stats.derive_cprime(0.0, 1.0) == 0.0
    with pytest.raises(NonpositiveSigma2):
        stats.derive_cprime(1.0, 0.0)


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


def test_ks_examples():
    assert stats.ks_statistic([0.5], stats.uniform_cdf).statistic == 0.5
    n = 40
    d = stats.ks_statistic(np.arange(1, n + 1) / n, stats.uniform_cdf).statistic
    assert d == pytest.approx(1 / n, abs=1e-15)
    with pytest.raises(EmptyInput):
        stats.ks_statistic([], stats.uniform_cdf)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=60))
def test_ks_matches_bruteforce(xs):
    cdf = sps.norm.cdf
    assert stats.ks_statistic(xs, cdf).statistic == pytest.approx(ks_bruteforce(xs, cdf), abs=1e-12)


def test_ks_matches_bruteforce_large():
    xs = np.random.default_rng(2).normal(size=1000)
    cdf = lambda x: sps.norm.cdf(x, 0.05, 1.0)
    assert stats.ks_statistic(xs, cdf).statistic == pytest.approx(ks_bruteforce(xs, cdf), abs=1e-12)


def test_ks_pvalue_matches_asymptotic_reference():
    xs = np.random.default_rng(3).random(5000)
    d, p = stats.ks_statistic(xs, stats.uniform_cdf)
    ref = sps.kstest(xs, "uniform", method="asymp")
    assert d == pytest.approx(ref.statistic, abs=1e-15)
    # scipy's asymptotic mode uses the one-sided refinement; agree to a few percent
    assert p == pytest.approx(ref.pvalue, rel=0.05, abs=1e-3)


def test_two_sample_ks_matches_scipy():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=700), rng.normal(0.1, 1.0, size=500)
    assert stats.ks_two_sample(a, b).statistic == pytest.approx(sps.ks_2samp(a, b).statistic)
    assert stats.ks_critical(0.01, 2000, 2000) == pytest.approx(1.6276 * math.sqrt(2 / 2000), rel=1e-4)


# ---------------------------------------------------------------------------
# PIT


def test_pit_accepts_exact_law():
    rng = streams.replica_rng(0, 0, streams.SYNTHETIC)
    reps = synthetic_replicas(rng, 10_000, 0.7, 0.3)
    rep = stats.pit_independence_test(reps, 0.7, 0.3)
    assert rep.n_used == 10_000
    assert min(rep.ks_W.pvalue, rep.ks_L.pvalue, rep.indep.pvalue) > 0.01
    for t in (rep.ks_W, rep.ks_L, rep.indep):
        assert 0 <= t.statistic <= 1 and 0 <= t.pvalue <= 1


def test_pit_rejects_doubled_constant():
    rng = streams.replica_rng(0, 1, streams.SYNTHETIC)
    reps = synthetic_replicas(rng, 10_000, 0.7, 0.3)
    assert stats.pit_independence_test(reps, 1.4, 0.3).ks_W.pvalue < 0.01


def test_pit_detects_dependence():
    rng = np.random.default_rng(8)
    z = np.ones(10_000)
    w = gumbel_draws(rng, 1.0, z)
    reps = [ReplicaOutcome(True, 1.0, a, a, True) for a in w]  # L = W
    assert stats.pit_independence_test(reps, 1.0, 1.0).indep.pvalue < 0.01


def test_pit_point_mass():
    # U = exp(-Z e^W) = 0.5 for every replica
    w = math.log(LOG_TWO)
    reps = [ReplicaOutcome(True, 1.0, w, w + 0.01 * i, True) for i in range(200)]
    rep = stats.pit_independence_test(reps, 1.0, 1.0)
    assert rep.ks_W.statistic == pytest.approx(0.5, abs=1e-12)
    assert rep.ks_W.pvalue < 0.01


def test_pit_filters_and_counts():
    rng = np.random.default_rng(9)
    reps = synthetic_replicas(rng, 150, 1.0, 1.0)
    reps += [ReplicaOutcome(False, 0.0, math.inf, math.inf, True)] * 30
    reps += [ReplicaOutcome(True, -0.2, 0.0, 0.0, True)] * 5
    assert stats.pit_independence_test(reps, 1.0, 1.0).n_used == 150
    with pytest.raises(TooFewSurvivors):
        stats.pit_independence_test(reps[:99], 1.0, 1.0)


def test_quadrant_chi2_degenerate_table():
    assert stats.quadrant_chi2(np.full(50, 0.3), np.linspace(0, 1, 50)) == (0.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# diagnostics


def staircase_outcome(n_max):
    traj = Trajectory([GenStats(k, k * LOG_TWO, 1.0, k * LOG_TWO, 2**k, 0.0) for k in range(n_max + 1)])
    return ReplicaOutcome(True, n_max * LOG_TWO, 0.0, 0.0, True, traj, n_max)


def test_diagnostics_staircase_closed_form():
    ais, as_ = stats.diagnostics([staircase_outcome(30)], [1, 4, 16, 30])
    for s in ais:
        want = 1 / (math.sqrt(s.n) * LOG_TWO)
        assert s.values[0] == pytest.approx(want, rel=1e-14)
        assert s.dropped == 0
    for s in as_:
        assert s.values[0] == pytest.approx(s.n * LOG_TWO / math.log(s.n), rel=1e-14)
    assert [s.n for s in as_] == [4, 16, 30]


def test_diagnostics_drops_nonpositive_z():
    traj = Trajectory([GenStats(0, 0.0, 1.0, 0.0, 1, 0.0), GenStats(1, -0.5, 1.2, -0.1, 2, 0.0),
                       GenStats(2, 0.1, 0.9, 0.3, 3, 0.0)])
    out = ReplicaOutcome(True, 0.3, 0.0, 0.0, True, traj, 2)
    ais, _ = stats.diagnostics([out], [1, 2])
    assert ais[0].values.size == 0 and ais[0].dropped == 1
    assert ais[1].values.size == 1

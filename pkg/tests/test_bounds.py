"""Unit tests for the bound calculators, against hand arithmetic oracles."""

import math

import numpy as np
import pytest

from fedswarm import bounds
from fedswarm.bounds import (
    BoundParams,
    coverage_slacks,
    degraded_dither_bounds,
    estimate_fmax,
    heterogeneity_drift,
    pinsker_coverage_slack,
    set_size_bound,
    training_kl_bound,
)


def test_quant_term_spot_value():
    p = BoundParams(K=4, V=256, bits_per_coord=8, clip=20.0)
    r = training_kl_bound(p)
    # clip^2/6 = 66.666..., times 1/4, times 2^-16.
    assert 400.0 / 6.0 == pytest.approx(66.6667, rel=1e-4)
    assert r.quant_term == pytest.approx(66.66666666666667 * 0.25 * 2.0**-16, rel=1e-12)
    assert r.quant_term == pytest.approx(2.543e-4, rel=1e-3)


def test_quant_term_vanishes_at_high_rate():
    p = BoundParams(bits_per_coord=60)
    assert training_kl_bound(p).quant_term < 1e-30


def test_rate_terms_hand_arithmetic():
    p = BoundParams(K=2, n=100, m=400, V=16, bits_per_coord=4, clip=10.0,
                    d=16.0, rho=2.0, delta=0.1, c1=3.0, c2=0.5,
                    eps_opt=0.01, eps_fit=0.02)
    r = training_kl_bound(p)
    assert r.stat_term == pytest.approx(3.0 * 16 / 200)
    assert r.probe_term == pytest.approx(0.5 * 2.0 * math.sqrt(16 * math.log(160) / 400))
    assert r.quant_term == pytest.approx((100 / 6) * 0.5 * 2.0**-8)
    assert r.rate_total == pytest.approx(
        r.stat_term + r.probe_term + r.quant_term + 0.03)


def test_default_d_is_v_squared():
    p = BoundParams(V=256)
    assert p.d == 256.0**2


def test_degraded_bounds_ratios():
    p = BoundParams(K=4, V=256, bits_per_coord=8, clip=20.0)
    r = training_kl_bound(p)
    corr, asym = degraded_dither_bounds(p)
    assert corr / r.quant_term == pytest.approx(256 / 2)
    assert asym == pytest.approx(20.0 * (400 / 3) * 4**-2 * 2.0**-24, rel=1e-12)
    # V = 1 edge: the correlated bound collapses to clip^2/12 / K * 2^-2B.
    p1 = BoundParams(K=2, V=1, bits_per_coord=5.0, clip=6.0, m=1, n=1)
    corr1, _ = degraded_dither_bounds(p1)
    assert corr1 == pytest.approx((36 / 12) * (1 / 2) * 2.0**-10)


def test_degraded_bound_looser_for_all_v():
    for V in (2, 16, 256, 1024):
        p = BoundParams(V=V)
        r = training_kl_bound(p)
        corr, _ = degraded_dither_bounds(p)
        assert corr >= r.quant_term


def test_rate_monotonicity():
    base = BoundParams()
    r0 = training_kl_bound(base)
    assert training_kl_bound(BoundParams(K=8)).stat_term < r0.stat_term
    assert training_kl_bound(BoundParams(n=6000)).stat_term < r0.stat_term
    assert training_kl_bound(BoundParams(m=6000)).probe_term < r0.probe_term
    assert training_kl_bound(BoundParams(V=512)).probe_term > r0.probe_term
    assert training_kl_bound(BoundParams(bits_per_coord=10)).quant_term < r0.quant_term
    assert training_kl_bound(BoundParams(K=8)).quant_term < r0.quant_term
    assert all(t >= 0 for t in (r0.stat_term, r0.probe_term, r0.quant_term))


def test_heterogeneity_drift_values():
    assert heterogeneity_drift([0.0, 0.0]) == 0.0
    assert heterogeneity_drift([0.1, 0.3]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        heterogeneity_drift([])


def test_coverage_slack_hand_case():
    # Choose s_max so each score-variance term equals 0.01 at 1 bit.
    s_max = math.sqrt(0.03 * 4.0)
    p = BoundParams(K=4, b_i=(1, 1, 1, 1), s_max=s_max, f_max=2.0,
                    b_cal=30, n_cal=10**9)
    _, delta_rag, _ = coverage_slacks(p)
    assert delta_rag == pytest.approx(2.0 * math.sqrt(0.04 / 16), rel=1e-9)
    assert delta_rag == pytest.approx(0.1, rel=1e-9)


def test_delta_rag_vanishes_at_high_rate():
    p = BoundParams(K=4, b_i=(60, 60, 60, 60))
    _, delta_rag, _ = coverage_slacks(p)
    assert delta_rag < 1e-15


def test_delta_rag_uniform_scaling_in_k():
    # Uniform budgets: delta_rag = f_max sqrt(v / K).
    for K in (1, 4, 16):
        p = BoundParams(K=K, b_i=tuple([6] * K), f_max=1.5)
        _, delta_rag, _ = coverage_slacks(p)
        v = bounds.score_quant_variance(6, p.s_max)
        assert delta_rag == pytest.approx(1.5 * math.sqrt(v / K), rel=1e-12)


def test_coverage_lb_monotone_in_bandwidth():
    base = dict(K=4, f_max=0.5)
    lb = lambda **kw: coverage_slacks(BoundParams(**base, **kw))[2]
    assert lb(n_cal=10000) >= lb(n_cal=1000) >= lb(n_cal=100)
    assert lb(b_cal=12) >= lb(b_cal=6) >= lb(b_cal=1)
    assert lb(b_i=(8,) * 4) >= lb(b_i=(4,) * 4) >= lb(b_i=(1,) * 4)


def test_coverage_lb_may_be_vacuous():
    p = BoundParams(K=4, b_cal=1, f_max=1.0)
    _, _, lb = coverage_slacks(p)
    assert lb < 0  # reported verbatim, not clamped


def test_set_size_hand_case():
    p = BoundParams(V=4, alpha=0.1, n_cal=9, f_max=0.0)
    assert set_size_bound(p) == pytest.approx(4.0)


def test_set_size_limit():
    p = BoundParams(V=64, alpha=0.1, n_cal=10**9, f_max=0.0)
    assert set_size_bound(p) == pytest.approx(64 * 0.9, rel=1e-6)


def test_pinsker_values():
    assert pinsker_coverage_slack(0.0, 1.0) == 0.0
    assert pinsker_coverage_slack(0.02, 1.0) == pytest.approx(0.22)
    grid = np.linspace(0, 2, 50)
    vals = [pinsker_coverage_slack(x, 1.3) for x in grid]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    # Exact formula, not an approximation.
    for x in (0.001, 0.3, 1.7):
        assert pinsker_coverage_slack(x, 2.0) == 2.0 * (x + math.sqrt(2 * x))
    # Small-KL regime: the square-root term dominates.
    assert pinsker_coverage_slack(1e-10, 3.0) / math.sqrt(2e-10) == pytest.approx(3.0, rel=1e-4)
    with pytest.raises(ValueError):
        pinsker_coverage_slack(-0.1, 1.0)


def test_estimate_fmax_uniform_oracle():
    rng = np.random.default_rng(0)
    scores = rng.uniform(0, 1, size=100_000)
    est = estimate_fmax(scores, q_star=0.5, radius=0.2)
    assert est == pytest.approx(1.0, abs=0.1)


def test_estimate_fmax_normal_oracle():
    rng = np.random.default_rng(1)
    scores = rng.standard_normal(100_000)
    est = estimate_fmax(scores, q_star=0.0, radius=0.2)
    assert est == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=0.1)


def test_estimate_fmax_degenerate_and_sparse():
    with pytest.warns(UserWarning):
        assert estimate_fmax(np.full(1000, 5.0), q_star=0.0, radius=0.5) == 0.0
    with pytest.raises(ValueError):
        estimate_fmax(np.linspace(0, 100, 1000), q_star=50.0, radius=0.5)
    with pytest.raises(ValueError):
        estimate_fmax(np.zeros(200), q_star=0.0, radius=0.0)


def test_param_validation():
    with pytest.raises(ValueError):
        BoundParams(delta=0.0)
    with pytest.raises(ValueError):
        BoundParams(alpha=1.0)
    with pytest.raises(ValueError):
        BoundParams(K=0)
    with pytest.raises(ValueError):
        coverage_slacks(BoundParams(K=3, b_i=(8, 8)))


def test_full_report_assembles_everything():
    p = BoundParams()
    r = bounds.full_report(p, kl_bar=0.02, drift_term=0.4)
    d = r.to_dict()
    for key in ("stat_term", "probe_term", "quant_term", "rate_total",
                "quant_term_corr", "asym_cubic_extra", "drift_term",
                "delta_fl", "delta_rag", "coverage_lb", "set_size_ub",
                "delta_train", "coverage_lb_e2e"):
        assert key in d
    assert r.coverage_lb_e2e == pytest.approx(r.coverage_lb - r.delta_train)

"""Unit tests for federated scoring, calibration summaries, and prediction sets."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedswarm import fcrag, ngram
from fedswarm.fcrag import (
    FcragPipeline,
    grid_levels,
    predict_set,
    reconstruct_quantile,
    score_query,
    serialize_summary,
    summarize_calibration,
)
from fedswarm.transport import Bus


def _table_for_scores(scores, V=4):
    """Log-prob table whose row 0 yields the requested raw scores."""
    logp = np.full((V, V), -50.0)
    logp[0, : len(scores)] = [-s for s in scores]
    return logp


def test_two_node_swarm_mean():
    # Nodes score 1.0 and 3.0 at near-lossless rate: swarm mean 2.0.
    tables = [_table_for_scores([1.0]), _table_for_scores([3.0])]
    records = score_query(0, tables, score_bits=[40, 40], seed=0, s_max=10.0)
    assert records[0].swarm_score == pytest.approx(2.0, abs=1e-9)
    assert records[0].k_y == 2


def test_single_node_high_rate_close_to_raw():
    tables = [_table_for_scores([1.234])]
    records = score_query(0, tables, score_bits=[30], seed=1, s_max=10.0)
    step = 10.0 / 2**30
    assert abs(records[0].swarm_score - 1.234) <= step / 2 + 1e-12


def test_scores_truncated_and_bounded():
    tables = [_table_for_scores([25.0, 0.5])]
    records = score_query(0, tables, score_bits=[8], seed=2, s_max=13.8)
    for r in records:
        assert 0.0 <= r.swarm_score <= 13.8
        assert np.all(r.per_node_scores >= 0.0)
        assert np.all(r.per_node_scores <= 13.8)


def test_summary_hand_snapping():
    # 4-level grid over [0, 8]: cells [0,2), [2,4), [4,6), [6,8].
    s = summarize_calibration(np.array([0.3, 1.9, 2.0, 5.7, 7.9]),
                              grid_bits=2, s_max=8.0)
    assert np.array_equal(s.counts, [2, 1, 1, 1])
    assert np.allclose(grid_levels(2, 8.0), [1.0, 3.0, 5.0, 7.0])


def test_summary_resolution():
    rng = np.random.default_rng(0)
    scores = rng.uniform(0, 8, size=500)
    bits = 12
    s = summarize_calibration(scores, grid_bits=bits, s_max=8.0)
    levels = grid_levels(bits, 8.0)
    recon = np.repeat(levels, s.counts)
    assert np.max(np.abs(np.sort(recon) - np.sort(scores))) <= 8.0 / 2**bits


def test_summary_rejects_bad_inputs():
    with pytest.raises(ValueError):
        summarize_calibration(np.array([1.0]), grid_bits=0, s_max=8.0)
    with pytest.raises(ValueError):
        summarize_calibration(np.array([9.0]), grid_bits=2, s_max=8.0)


def test_summary_bit_accounting():
    s = summarize_calibration(np.linspace(0, 7.9, 10), grid_bits=3, s_max=8.0)
    assert s.payload_bits == 10 * 3
    assert s.header_bits == 112 + 32 * 8
    wire = serialize_summary(s)
    assert len(wire) == 14 + 4 * 8


def test_quantile_rank_arithmetic():
    # n_cal=9, alpha=0.1: rank ceil(0.9 * 10) = 9, the largest of nine scores.
    scores = np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5])
    s = summarize_calibration(scores, grid_bits=16, s_max=8.0)
    q = reconstruct_quantile([s], alpha=0.1)
    assert q.n_cal == 9
    assert q.q_hat == pytest.approx(4.5, abs=8.0 / 2**16)


def test_quantile_infinite_when_rank_exceeds_mass():
    s = summarize_calibration(np.array([1.0, 2.0]), grid_bits=8, s_max=8.0)
    q = reconstruct_quantile([s], alpha=0.01)  # rank 3 > n_cal=2
    assert math.isinf(q.q_hat)
    q0 = reconstruct_quantile([s], alpha=0.0)
    assert math.isinf(q0.q_hat)


def test_single_node_matches_centralized_quantile():
    rng = np.random.default_rng(1)
    scores = rng.uniform(0, 8, size=200)
    s = summarize_calibration(scores, grid_bits=20, s_max=8.0)
    q = reconstruct_quantile([s], alpha=0.1)
    rank = math.ceil(0.9 * 201)
    oracle = np.sort(scores)[rank - 1]
    assert q.q_hat == pytest.approx(oracle, abs=8.0 / 2**20)


def test_federated_quantile_matches_pooled_sort():
    # K=4 nodes vs. a pooled-sort oracle on the same raw scores.
    rng = np.random.default_rng(2)
    shares = [rng.uniform(0, 8, size=n) for n in (50, 80, 20, 66)]
    summaries = [summarize_calibration(s, grid_bits=16, s_max=8.0, node_id=i)
                 for i, s in enumerate(shares)]
    q = reconstruct_quantile(summaries, alpha=0.1)
    pooled = np.sort(np.concatenate(shares))
    rank = math.ceil(0.9 * (pooled.size + 1))
    assert abs(q.q_hat - pooled[rank - 1]) <= 8.0 / 2**16


def test_quantile_permutation_invariant():
    rng = np.random.default_rng(3)
    scores = rng.uniform(0, 8, size=101)
    a = reconstruct_quantile([summarize_calibration(scores, 6, 8.0)], alpha=0.2)
    b = reconstruct_quantile(
        [summarize_calibration(rng.permutation(scores), 6, 8.0)], alpha=0.2)
    assert a.q_hat == b.q_hat


def test_quantile_rejects_empty():
    with pytest.raises(ValueError):
        reconstruct_quantile([], alpha=0.1)
    empty = summarize_calibration(np.array([]), grid_bits=4, s_max=8.0)
    with pytest.raises(ValueError):
        reconstruct_quantile([empty], alpha=0.1)


def test_predict_set_extremes_and_filter_oracle():
    tables = [_table_for_scores([0.5, 1.5, 2.5, 3.5])]
    records = score_query(0, tables, score_bits=[30], seed=3, s_max=8.0)
    full = predict_set(0, fcrag.ConformalQuantile(float("inf"), 0.1, 10), records)
    assert full.size == 4
    empty = predict_set(0, fcrag.ConformalQuantile(0.01, 0.1, 10), records)
    assert empty.size == 0
    q = fcrag.ConformalQuantile(2.0, 0.1, 10)
    got = predict_set(0, q, records)
    brute = sorted(r.candidate for r in records if r.swarm_score <= 2.0)
    assert got.members.tolist() == brute


def test_pipeline_end_to_end_tiny_oracle():
    # V=4, n_cal=20: recompute the whole pipeline by hand at high rate.
    gt = ngram.generate_ground_truth(4, seed=9)
    table = ngram.log_softmax(gt.logits)
    K = 2
    pipe = FcragPipeline([table] * K, score_bits=[30] * K, grid_bits=16,
                         alpha=0.2, s_max=10.0, seed=5, bus=Bus(K))
    rng = np.random.default_rng(7)
    cx = rng.integers(0, 4, size=20)
    cy = rng.integers(0, 4, size=20)
    pipe.calibrate(cx, cy)
    raw = np.clip(-table[cx, cy], 0, 10.0)
    rank = math.ceil(0.8 * 21)
    oracle_q = np.sort(raw)[rank - 1]
    # High-rate channel and fine grid: reconstruction within one grid step
    # plus the score half-step.
    assert abs(pipe.quantile.q_hat - oracle_q) <= 10.0 / 2**16 + 10.0 / 2**30
    tx = rng.integers(0, 4, size=50)
    ty = rng.integers(0, 4, size=50)
    cov, size = fcrag.evaluate_coverage((tx, ty), pipe)
    scores = np.clip(-table[tx], 0, 10.0)
    inset = scores <= pipe.quantile.q_hat + 1e-6
    assert cov == pytest.approx(inset[np.arange(50), ty].mean(), abs=0.05)
    assert 0 <= size <= 4


def test_pipeline_requires_calibration_first():
    gt = ngram.generate_ground_truth(4, seed=10)
    table = ngram.log_softmax(gt.logits)
    pipe = FcragPipeline([table], score_bits=[8], grid_bits=8, alpha=0.1)
    with pytest.raises(RuntimeError):
        pipe.predict(0)
    pipe.calibrate(np.array([0, 1, 2, 3] * 5), np.array([1, 2, 3, 0] * 5))
    with pytest.raises(RuntimeError):
        pipe.calibrate(np.array([0]), np.array([1]))
    assert pipe.predict(0).size >= 0


def test_pipeline_inference_bit_identity():
    gt = ngram.generate_ground_truth(8, seed=11)
    table = ngram.log_softmax(gt.logits)
    K, b_i, n_test = 3, 6, 40
    pipe = FcragPipeline([table] * K, score_bits=[b_i] * K, grid_bits=8,
                         alpha=0.1, seed=1, bus=Bus(K))
    rng = np.random.default_rng(12)
    pipe.calibrate(rng.integers(0, 8, 30), rng.integers(0, 8, 30))
    cal_bits = pipe.bus.ledger.calibration_uplink_bits
    assert cal_bits == 30 * K * b_i + 30 * 8  # per-pair scores + summary budget
    pipe.evaluate(rng.integers(0, 8, n_test), rng.integers(0, 8, n_test))
    assert pipe.bus.ledger.inference_uplink_bits == n_test * K * 8 * b_i


def test_pipeline_heterogeneous_score_budgets():
    gt = ngram.generate_ground_truth(8, seed=14)
    table = ngram.log_softmax(gt.logits)
    bits = [3, 5, 9]
    pipe = FcragPipeline([table] * 3, score_bits=bits, grid_bits=8,
                         alpha=0.1, seed=4, bus=Bus(3))
    rng = np.random.default_rng(15)
    pipe.calibrate(rng.integers(0, 8, 40), rng.integers(0, 8, 40))
    n_test = 25
    pipe.evaluate(rng.integers(0, 8, n_test), rng.integers(0, 8, n_test))
    assert pipe.bus.ledger.inference_uplink_bits == n_test * 8 * sum(bits)


def test_alpha_zero_gives_full_coverage():
    gt = ngram.generate_ground_truth(6, seed=16)
    table = ngram.log_softmax(gt.logits)
    pipe = FcragPipeline([table], score_bits=[16], grid_bits=16, alpha=0.0, seed=6)
    rng = np.random.default_rng(17)
    pipe.calibrate(rng.integers(0, 6, 30), rng.integers(0, 6, 30))
    assert math.isinf(pipe.quantile.q_hat)
    cov, size = pipe.evaluate(rng.integers(0, 6, 40), rng.integers(0, 6, 40))
    assert cov == 1.0
    assert size == 6.0


def test_quantile_stability_under_density_bound():
    # Logistic CDF with density ceiling 1/(4 scale) on any interval.
    scale = 0.7
    f_max = 1.0 / (4 * scale)

    def F(u):
        return 1.0 / (1.0 + math.exp(-u / scale))

    rng = np.random.default_rng(13)
    q_star = 0.3
    for _ in range(1000):
        q_hat = q_star + rng.uniform(-2, 2)
        assert abs(F(q_hat) - F(q_star)) <= f_max * abs(q_hat - q_star) + 1e-12


@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
@settings(max_examples=30, deadline=None)
def test_quantile_merge_is_order_free(seed, k):
    rng = np.random.default_rng(seed)
    scores = rng.uniform(0, 8, size=60)
    parts = np.array_split(rng.permutation(scores), k)
    summaries = [summarize_calibration(p, 8, 8.0, node_id=i)
                 for i, p in enumerate(parts)]
    pooled = reconstruct_quantile(
        [summarize_calibration(scores, 8, 8.0)], alpha=0.25)
    fed = reconstruct_quantile(summaries, alpha=0.25)
    assert fed.q_hat == pooled.q_hat

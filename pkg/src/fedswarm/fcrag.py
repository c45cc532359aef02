"""Per-query federated scoring and one-shot federated split-conformal calibration.

Every node scores every candidate of a query with its own frozen table
(truncated negative log-probability), quantizes each score, and uplinks it;
the hub averages the dequantized per-node scores into a swarm score. The
conformal threshold comes from a one-shot calibration round: each node
summarizes its share of calibration swarm scores as a histogram on an
equispaced grid, and the hub reconstructs the conservative split-conformal
quantile from the merged histogram. Prediction sets are the candidates whose
swarm score does not exceed that threshold.

Retrieval is the identity in this synthetic regime: node heterogeneity
enters only through the per-node scoring tables.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from fedswarm.fpld import child_seed
from fedswarm.quant import HEADER_BITS, QuantizerConfig, dequantize, quantize
from fedswarm.transport import Bus

__all__ = [
    "S_MAX_DEFAULT",
    "ScoreRecord",
    "CalibrationSummary",
    "ConformalQuantile",
    "PredictionSet",
    "grid_levels",
    "snap_to_grid",
    "score_query",
    "summarize_calibration",
    "serialize_summary",
    "reconstruct_quantile",
    "predict_set",
    "evaluate_coverage",
    "FcragPipeline",
]

# Truncation ceiling: -log of the probability floor 1e-6.
S_MAX_DEFAULT = float(-math.log(1e-6))

_ROLE_CAL_SCORE = 11
_ROLE_TEST_SCORE = 12

_SUMMARY_HEADER = struct.Struct(">HIQ")


@dataclass(frozen=True)
class ScoreRecord:
    """One candidate's scores: the K per-node values and their swarm mean."""

    query: int
    candidate: int
    per_node_scores: np.ndarray
    swarm_score: float

    @property
    def k_y(self) -> int:
        # Full candidate-set inclusion: every node scores every candidate.
        return int(self.per_node_scores.size)


@dataclass(frozen=True)
class CalibrationSummary:
    """A node's histogram of local calibration scores on the equispaced grid.

    The information budget is ``grid_bits`` per summarized score (one snapped
    score is one grid index); the 32-bit wire encoding of the counts is
    charged as overhead, not payload.
    """

    node_id: int
    grid_bits: int
    counts: np.ndarray
    s_max: float

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if self.grid_bits < 1:
            raise ValueError("grid_bits must be positive")
        if counts.shape != (2 ** self.grid_bits,):
            raise ValueError("counts must have one entry per grid level")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def payload_bits(self) -> int:
        return self.total * self.grid_bits

    @property
    def header_bits(self) -> int:
        return HEADER_BITS + 32 * self.counts.size


@dataclass(frozen=True)
class ConformalQuantile:
    """Reconstructed score threshold; +inf when the rank exceeds all mass."""

    q_hat: float
    alpha: float
    n_cal: int


@dataclass(frozen=True)
class PredictionSet:
    members: np.ndarray
    size: int


def grid_levels(grid_bits: int, s_max: float) -> np.ndarray:
    """Cell midpoints of the 2^bits equispaced levels covering [0, s_max]."""
    L = 2 ** grid_bits
    width = s_max / L
    return (np.arange(L) + 0.5) * width


def snap_to_grid(scores: np.ndarray, grid_bits: int, s_max: float) -> np.ndarray:
    """Nearest-level indices; half-way ties snap to the larger level."""
    L = 2 ** grid_bits
    width = s_max / L
    idx = np.floor(np.asarray(scores, dtype=np.float64) / width).astype(np.int64)
    return np.clip(idx, 0, L - 1)


def truncated_scores(log_probs: np.ndarray, s_max: float) -> np.ndarray:
    """Raw nonconformity scores: -log p clipped into [0, s_max]."""
    return np.clip(-np.asarray(log_probs, dtype=np.float64), 0.0, s_max)


def _score_quantizer(bits: int, s_max: float) -> QuantizerConfig:
    # Score range [0, s_max] rides the signed quantizer at half-width s_max/2.
    return QuantizerConfig(bits_per_coord=bits, clip=s_max / 2.0, mode="dithered_iid")


def score_query(
    x: int,
    node_log_probs: list[np.ndarray],
    score_bits: list[int],
    seed: int,
    s_max: float = S_MAX_DEFAULT,
    bus: Bus | None = None,
) -> list[ScoreRecord]:
    """Score every vocabulary candidate of context x across all K nodes.

    Each node truncates its raw scores to [0, s_max], quantizes them at its
    own bit budget, and (when a bus is given) uplinks one payload per query
    on the inference channel. Returns one record per candidate with the
    dequantized per-node scores and their mean.
    """
    K = len(node_log_probs)
    if len(score_bits) != K:
        raise ValueError("need one bit budget per node")
    V = node_log_probs[0].shape[1]
    per_node = np.empty((K, V))
    for i in range(K):
        raw = truncated_scores(node_log_probs[i][x], s_max)
        cfg = _score_quantizer(score_bits[i], s_max)
        payload = quantize(raw - s_max / 2.0, cfg, child_seed(seed, _ROLE_TEST_SCORE, i, x))
        if bus is not None:
            bus.uplink(i, "inference", payload, key=x)
        per_node[i] = np.clip(dequantize(payload) + s_max / 2.0, 0.0, s_max)
    swarm = per_node.mean(axis=0)
    return [
        ScoreRecord(query=int(x), candidate=y, per_node_scores=per_node[:, y],
                    swarm_score=float(swarm[y]))
        for y in range(V)
    ]


def summarize_calibration(
    local_scores: np.ndarray,
    grid_bits: int,
    s_max: float = S_MAX_DEFAULT,
    node_id: int = 0,
) -> CalibrationSummary:
    """Histogram a node's calibration scores on the 2^bits equispaced grid."""
    if grid_bits < 1:
        raise ValueError(f"grid_bits must be >= 1, got {grid_bits}")
    scores = np.asarray(local_scores, dtype=np.float64)
    if scores.size and (scores.min() < 0 or scores.max() > s_max):
        raise ValueError("calibration scores must lie in [0, s_max]")
    idx = snap_to_grid(scores, grid_bits, s_max)
    counts = np.bincount(idx, minlength=2 ** grid_bits)
    return CalibrationSummary(node_id=node_id, grid_bits=grid_bits,
                              counts=counts, s_max=s_max)


def serialize_summary(s: CalibrationSummary) -> bytes:
    """Wire format: {grid_bits:16, num_levels:32, node_id:64} + 32-bit counts."""
    head = _SUMMARY_HEADER.pack(s.grid_bits, s.counts.size, s.node_id)
    return head + s.counts.astype(">u4").tobytes()


def reconstruct_quantile(summaries: list[CalibrationSummary], alpha: float) -> ConformalQuantile:
    """Merge node histograms and read off the conservative conformal quantile.

    The threshold is the grid level at rank ceil((1 - alpha) * (n_cal + 1))
    in the merged multiset of snapped scores, or +inf when that rank exceeds
    the calibration mass. Merging is order-free, so any permutation of the
    calibration scores (or of the nodes) yields the same threshold.
    """
    if not summaries:
        raise ValueError("no calibration summaries")
    # alpha = 0 is legal and forces the +inf threshold through the rank rule.
    if not (0 <= alpha < 1):
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    g = summaries[0]
    if any(s.grid_bits != g.grid_bits or s.s_max != g.s_max for s in summaries):
        raise ValueError("summaries disagree on grid resolution")
    merged = np.sum([s.counts for s in summaries], axis=0)
    n_cal = int(merged.sum())
    if n_cal < 1:
        raise ValueError("empty calibration set")
    rank = math.ceil((1.0 - alpha) * (n_cal + 1))
    if rank > n_cal:
        return ConformalQuantile(q_hat=float("inf"), alpha=alpha, n_cal=n_cal)
    levels = grid_levels(g.grid_bits, g.s_max)
    j = int(np.searchsorted(np.cumsum(merged), rank, side="left"))
    return ConformalQuantile(q_hat=float(levels[j]), alpha=alpha, n_cal=n_cal)


def predict_set(x: int, q: ConformalQuantile, scores: list[ScoreRecord]) -> PredictionSet:
    """Threshold rule, applied exactly: keep candidates with swarm score <= q_hat."""
    members = np.array(sorted(r.candidate for r in scores
                              if r.query == x and r.swarm_score <= q.q_hat), dtype=np.int64)
    return PredictionSet(members=members, size=int(members.size))


class FcragPipeline:
    """Calibrate once, then answer queries with conformal sets.

    The pipeline owns K frozen per-node scoring tables over a shared
    vocabulary plus the bit budgets of both bandwidth axes: per-score bits
    for every uplinked score and grid bits for the one-shot calibration
    summaries. Calibration scores travel on the calibration channel; test
    queries are charged on the inference channel, one payload of V scores
    per node per query batch.
    """

    def __init__(
        self,
        node_log_probs: list[np.ndarray],
        score_bits: list[int],
        grid_bits: int,
        alpha: float,
        s_max: float = S_MAX_DEFAULT,
        seed: int = 0,
        bus: Bus | None = None,
    ):
        self.node_log_probs = [np.asarray(t, dtype=np.float64) for t in node_log_probs]
        self.K = len(self.node_log_probs)
        self.V = self.node_log_probs[0].shape[1]
        if len(score_bits) != self.K:
            raise ValueError("need one score bit budget per node")
        self.score_bits = list(score_bits)
        self.grid_bits = grid_bits
        self.alpha = alpha
        self.s_max = s_max
        self.seed = seed
        self.bus = bus if bus is not None else Bus(self.K)
        self.quantile: ConformalQuantile | None = None
        self.oracle_cal_scores: np.ndarray | None = None
        self._batch = 0

    def _swarm_true_scores(self, contexts, labels) -> tuple[np.ndarray, np.ndarray]:
        """Quantized swarm scores (and unquantized oracle means) of true pairs."""
        contexts = np.asarray(contexts, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        acc = np.zeros(contexts.size)
        oracle = np.zeros(contexts.size)
        self._batch += 1
        self.bus.broadcast(("score_request", self._batch, contexts))  # free downlink
        for i in range(self.K):
            raw = truncated_scores(self.node_log_probs[i][contexts, labels], self.s_max)
            oracle += raw
            cfg = _score_quantizer(self.score_bits[i], self.s_max)
            payload = quantize(raw - self.s_max / 2.0, cfg,
                               child_seed(self.seed, _ROLE_CAL_SCORE, i, self._batch))
            self.bus.uplink(i, "calibration", payload, key=("scores", self._batch))
            acc += np.clip(dequantize(payload) + self.s_max / 2.0, 0.0, self.s_max)
        return acc / self.K, oracle / self.K

    def calibrate(self, contexts, labels) -> ConformalQuantile:
        """One-shot federated calibration; freezes the conformal threshold.

        The calibration pairs are partitioned round-robin across nodes; each
        node summarizes its share of swarm scores at the grid resolution and
        uplinks the histogram. The unquantized swarm means are retained
        locally as the oracle scores used by density diagnostics.
        """
        if self.quantile is not None:
            raise RuntimeError("pipeline is already calibrated")
        swarm, oracle = self._swarm_true_scores(contexts, labels)
        owners = np.arange(swarm.size) % self.K
        summaries = []
        for i in range(self.K):
            s = summarize_calibration(swarm[owners == i], self.grid_bits,
                                      self.s_max, node_id=i)
            self.bus.uplink(i, "calibration", s, key=("summary", i))
            summaries.append(s)
        self.quantile = reconstruct_quantile(summaries, self.alpha)
        self.oracle_cal_scores = oracle
        return self.quantile

    def _require_frozen(self):
        if self.quantile is None:
            raise RuntimeError("calibrate() must run before any test query")

    def swarm_score_matrix(self, contexts) -> np.ndarray:
        """(n, V) swarm scores for full candidate sets, charged per query batch."""
        self._require_frozen()
        contexts = np.asarray(contexts, dtype=np.int64)
        acc = np.zeros((contexts.size, self.V))
        self._batch += 1
        self.bus.broadcast(("query", self._batch, contexts))  # free downlink
        for i in range(self.K):
            raw = truncated_scores(self.node_log_probs[i][contexts], self.s_max)
            cfg = _score_quantizer(self.score_bits[i], self.s_max)
            payload = quantize(raw - self.s_max / 2.0, cfg,
                               child_seed(self.seed, _ROLE_TEST_SCORE, i, self._batch))
            self.bus.uplink(i, "inference", payload, key=("queries", self._batch))
            acc += np.clip(dequantize(payload).reshape(raw.shape) + self.s_max / 2.0,
                           0.0, self.s_max)
        return acc / self.K

    def predict(self, x: int) -> PredictionSet:
        scores = self.swarm_score_matrix(np.array([x]))[0]
        members = np.flatnonzero(scores <= self.quantile.q_hat)
        return PredictionSet(members=members, size=int(members.size))

    def evaluate(self, contexts, labels) -> tuple[float, float]:
        """Empirical coverage and mean set size over frozen-threshold queries."""
        labels = np.asarray(labels, dtype=np.int64)
        scores = self.swarm_score_matrix(contexts)
        inset = scores <= self.quantile.q_hat
        coverage = float(inset[np.arange(labels.size), labels].mean())
        mean_size = float(inset.sum(axis=1).mean())
        return coverage, mean_size


def evaluate_coverage(test_pairs, pipeline: FcragPipeline) -> tuple[float, float]:
    """Coverage and mean set size of a calibrated pipeline on (contexts, labels)."""
    contexts, labels = test_pairs
    return pipeline.evaluate(contexts, labels)

"""Closed-form bound calculators for every envelope the protocols admit.

The training-rate bound decomposes into a pooled-sample statistical term, a
probe-generalization term, and an exponentially vanishing quantization term;
alternative quantization bounds cover dither channels that lose
cross-coordinate independence or symmetry. The coverage side provides the
calibration and score-bandwidth slacks, the resulting coverage lower bound
and set-size upper bound, and a Pinsker-style slack that converts training
KL into additional coverage loss. Envelope constants c1, c2 and the quantile
constant are exposed and default to 1: only the quantization constant is
pinned by theory (clip^2 / 6), so envelope comparisons check shape at unit
constants, not absolute level.

Predicted coverage lower bounds may be negative (vacuous) at low bandwidth;
they are reported verbatim.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundParams",
    "BoundReport",
    "score_quant_variance",
    "cal_grid_slack",
    "training_kl_bound",
    "degraded_dither_bounds",
    "heterogeneity_drift",
    "coverage_slacks",
    "set_size_bound",
    "pinsker_coverage_slack",
    "estimate_fmax",
    "full_report",
]


@dataclass(frozen=True)
class BoundParams:
    """Inputs to the bound calculators; unused fields may stay at defaults.

    ``bits_per_coord`` is the per-coordinate budget (total probe-vector bits
    divided by V). ``d`` is the parametric dimension; the bigram table admits
    either V^2 or V(V-1) as a convention, so it is a free parameter
    defaulting to V^2.
    """

    K: int = 4
    n: int = 3000
    m: int = 3000
    V: int = 256
    bits_per_coord: float = 8.0
    d: float | None = None
    rho: float = 1.0
    delta: float = 0.05
    c1: float = 1.0
    c2: float = 1.0
    clip: float = 20.0
    eps_opt: float = 0.0
    eps_fit: float = 0.0
    alpha: float = 0.1
    n_cal: int = 3000
    b_i: tuple = (8, 8, 8, 8)
    b_cal: int = 8
    s_max: float = float(-math.log(1e-6))
    f_max: float = 1.0
    c_quantile: float = 1.0

    def __post_init__(self):
        for name in ("K", "n", "m", "V", "n_cal"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.delta < 1):
            raise ValueError("delta must be in (0, 1)")
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        if self.d is None:
            object.__setattr__(self, "d", float(self.V) ** 2)

    @property
    def total_bits(self) -> float:
        return self.V * self.bits_per_coord


@dataclass
class BoundReport:
    """Evaluated right-hand sides; fields are None until their calculator runs."""

    stat_term: float | None = None
    probe_term: float | None = None
    quant_term: float | None = None
    rate_total: float | None = None
    quant_term_corr: float | None = None
    asym_cubic_extra: float | None = None
    drift_term: float | None = None
    delta_fl: float | None = None
    delta_rag: float | None = None
    coverage_lb: float | None = None
    set_size_ub: float | None = None
    delta_train: float | None = None
    coverage_lb_e2e: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def score_quant_variance(bits: int, s_max: float) -> float:
    """Variance budget of one dithered score at `bits` bits over [0, s_max]."""
    return (s_max ** 2 / 3.0) * 2.0 ** (-2 * bits)


def cal_grid_slack(b_cal: int, s_max: float) -> float:
    """Quantile reconstruction slack of the equispaced calibration grid."""
    return s_max * 2.0 ** (-float(b_cal))


def training_kl_bound(p: BoundParams) -> BoundReport:
    """Additive training-rate envelope: statistical + probe + quantization terms.

    The quantization constant is clip^2 / 6 with a 1/K prefactor from
    averaging K independent dithers; the optimization slacks add on top.
    """
    r = BoundReport()
    r.stat_term = p.c1 * p.d / (p.K * p.n)
    r.probe_term = p.c2 * p.rho * math.sqrt(p.V * math.log(p.V / p.delta) / p.m)
    r.quant_term = (p.clip ** 2 / 6.0) * (1.0 / p.K) * 2.0 ** (-2.0 * p.bits_per_coord)
    r.rate_total = r.stat_term + r.probe_term + r.quant_term + p.eps_opt + p.eps_fit
    return r


def degraded_dither_bounds(p: BoundParams) -> tuple[float, float]:
    """Quantization bounds for degraded dither channels.

    Returns (corr_bound, asym_cubic_extra): the V/K-scaling fallback that
    holds without cross-coordinate independence (a factor V/2 looser than the
    independent-dither term), and the extra cubic remainder that appears when
    per-coordinate symmetry is dropped.
    """
    two_b = 2.0 ** (-2.0 * p.bits_per_coord)
    three_b = 2.0 ** (-3.0 * p.bits_per_coord)
    corr_bound = (p.clip ** 2 / 12.0) * (p.V / p.K) * two_b
    asym_extra = p.clip * (p.clip ** 2 / 3.0) * p.K ** (-2.0) * three_b
    return corr_bound, asym_extra


def heterogeneity_drift(node_dists) -> float:
    """Mean divergence of the node distributions from the target: the drift bias."""
    vals = [d.kl_to_target if hasattr(d, "kl_to_target") else float(d) for d in node_dists]
    if not vals:
        raise ValueError("need at least one node distribution")
    return float(np.mean(vals))


def coverage_slacks(p: BoundParams) -> tuple[float, float, float]:
    """(delta_fl, delta_rag, coverage_lb) for the federated conformal stage.

    delta_fl mixes the statistical quantile deviation with the calibration
    grid reconstruction cost; delta_rag is the score-bandwidth slack, which
    shrinks as 1/sqrt(K) under uniform per-node budgets because independent
    mean-zero score dithers partially cancel in the swarm mean.
    """
    if len(p.b_i) != p.K:
        raise ValueError("need one score bit budget per node")
    delta_fl = p.f_max * math.sqrt(math.log(2.0 / p.delta) / (p.c_quantile * p.n_cal)) \
        + p.f_max * cal_grid_slack(p.b_cal, p.s_max)
    mean_sq = sum(score_quant_variance(b, p.s_max) for b in p.b_i) / (p.K ** 2)
    delta_rag = p.f_max * math.sqrt(mean_sq)
    coverage_lb = 1.0 - p.alpha - 1.0 / (p.n_cal + 1) - delta_fl - delta_rag
    return delta_fl, delta_rag, coverage_lb


def set_size_bound(p: BoundParams) -> float:
    """Expected-set-size ceiling: |Y| times the matching upper coverage bound."""
    delta_fl, delta_rag, _ = coverage_slacks(p)
    return p.V * (1.0 - p.alpha + 1.0 / (p.n_cal + 1) + delta_fl + delta_rag)


def pinsker_coverage_slack(kl_bar: float, f_max: float) -> float:
    """Coverage slack induced by training KL: f_max * (KL + sqrt(2 KL)).

    Zero at zero KL and monotone increasing; in the small-KL regime the
    square-root term dominates.
    """
    if kl_bar < 0:
        raise ValueError("kl_bar must be nonnegative")
    return f_max * (kl_bar + math.sqrt(2.0 * kl_bar))


def estimate_fmax(oracle_scores: np.ndarray, q_star: float, radius: float) -> float:
    """Histogram estimate of the score-density ceiling near the quantile.

    Bins of width radius/10 over [q_star - radius, q_star + radius]; the
    estimate is the maximum bin density relative to the full sample. With an
    empty window the score mass is degenerate away from the quantile: the
    estimate is 0 and a warning is issued. A sparse-but-nonempty window
    (fewer than 100 scores) raises; the caller must widen the radius.
    """
    scores = np.asarray(oracle_scores, dtype=np.float64)
    if radius <= 0:
        raise ValueError("radius must be positive")
    lo, hi = q_star - radius, q_star + radius
    in_window = scores[(scores >= lo) & (scores <= hi)]
    if in_window.size == 0:
        warnings.warn("no scores near the quantile; density estimate degenerates to 0")
        return 0.0
    if in_window.size < 100:
        raise ValueError(
            f"only {in_window.size} scores within radius {radius}; widen the window"
        )
    width = radius / 10.0
    nbins = 20
    counts, _ = np.histogram(in_window, bins=nbins, range=(lo, hi))
    return float(counts.max() / (scores.size * width))


def full_report(p: BoundParams, kl_bar: float | None = None,
                drift_term: float | None = None) -> BoundReport:
    """Evaluate every calculator that applies and return one report."""
    r = training_kl_bound(p)
    r.quant_term_corr, r.asym_cubic_extra = degraded_dither_bounds(p)
    if drift_term is not None:
        r.drift_term = float(drift_term)
    r.delta_fl, r.delta_rag, r.coverage_lb = coverage_slacks(p)
    r.set_size_ub = set_size_bound(p)
    if kl_bar is not None:
        r.delta_train = pinsker_coverage_slack(kl_bar, p.f_max)
        r.coverage_lb_e2e = r.coverage_lb - r.delta_train
    return r

"""Seeded experiment runners emitting one JSON summary per experiment.

Each sweep point is replicated over seeds derived from (master seed, axis,
grid value, seed index) through a splittable scheme, so results for a seed
are identical whether the point runs alone or inside a batch, and grids can
be extended without reshuffling existing points. Points carry their own
bound report and a bound-holds boolean wherever an envelope applies, plus
the uplink ledger and an exactness check of the bit identities.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from fedswarm import __version__, bounds, ngram
from fedswarm.fcrag import FcragPipeline
from fedswarm.fpld import FpldConfig, child_seed, measure_quantization_kl, run_fpld
from fedswarm.harness import grids as G
from fedswarm.quant import QuantizerConfig, quantize_reconstruct
from fedswarm.transport import Bus

__all__ = ["ExperimentSpec", "run_experiment", "write_result", "config_hash"]

# Sub-seed roles inside a single (point, seed) run.
_GT = 101
_CFG = 102
_CAL = 103
_TEST = 104
_PIPE = 105
_ENSEMBLE = 106
_NODE = 107
_MOMENT = 108


@dataclass
class ExperimentSpec:
    """What to run: experiment id, sweep grids, defaults, seeds, output path."""

    experiment: str
    seeds: int | None = None
    out: str | None = None
    master_seed: int = 0
    reduced: bool = False
    jobs: int = 1
    overrides: dict = field(default_factory=dict)
    defaults: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in G.EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {G.EXPERIMENTS}")
        built_defaults, built_grids, built_seeds = G.builtin_grids(self.experiment, self.reduced)
        if not self.defaults:
            self.defaults = dict(built_defaults)
        if not self.grids:
            self.grids = {k: list(v) for k, v in built_grids.items()}
        elif not self.reduced and self.grids != {k: list(v) for k, v in built_grids.items()}:
            raise ValueError("full-scale runs must use the built-in reference grids")
        if self.seeds is None:
            self.seeds = built_seeds
        if self.seeds < 1:
            raise ValueError("seeds must be positive")
        self.defaults.update(self.overrides)

    def config_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "defaults": self.defaults,
            "grids": self.grids,
            "seeds": self.seeds,
            "master_seed": self.master_seed,
            "reduced": self.reduced,
        }


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=_jsonify_scalar).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _jsonify_scalar(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not JSON-serializable: {type(o)}")


def jsonify(obj):
    """Recursively convert numpy scalars/arrays so json.dumps stays canonical."""
    if isinstance(obj, dict):
        return {k: jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [jsonify(v) for v in obj.tolist()]
    if isinstance(obj, float) and not math.isfinite(obj):
        if math.isnan(obj):
            return "NaN"
        return "Infinity" if obj > 0 else "-Infinity"
    return obj


def write_result(doc: dict, path: str) -> None:
    # Non-finite floats are rewritten as strings by jsonify; allow_nan=False
    # makes any leak a loud failure instead of invalid JSON.
    with open(path, "w") as fh:
        json.dump(jsonify(doc), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def _pmap(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(min(jobs, len(tasks))) as pool:
        return list(pool.imap(fn, tasks, chunksize=1))


# ---------------------------------------------------------------------------
# Training-rate sweeps (one-at-a-time axes, and the node-drift grid)
# ---------------------------------------------------------------------------


def _fpld_single(master: int, axis_key: tuple, seed_idx: int, params: dict) -> dict:
    """One seeded distillation run; returns the per-seed metrics."""
    key = child_seed(master, *axis_key, seed_idx)
    gt = ngram.generate_ground_truth(params["V"], child_seed(key, _GT))
    qcfg = QuantizerConfig(bits_per_coord=params["bits"], clip=params["clip"],
                           mode="dithered_iid")
    cfg = FpldConfig(K=params["K"], n=params["n"], m=params["m"], T=params["T"],
                     quantizer=qcfg, beta=params["beta"],
                     drift=params.get("drift", 0.0), seed=child_seed(key, _CFG))
    student, ledger, diag = run_fpld(cfg, gt)
    rows = ngram.per_context_kl(gt, student.logits)
    marg = gt.context_marginal
    full = float(rows @ marg)
    mask = student.covered
    w = float(marg[mask].sum())
    covered = float((rows[mask] @ marg[mask]) / w) if w > 0 else float("nan")
    return {
        "kl": full,
        "kl_covered": covered,
        "covered_fraction": diag["covered_fraction"],
        "quant_kl": diag["quantization_kl_per_round"][-1],
        "drift_term": diag["drift_term"],
        "n_saturated": diag["n_saturated"],
        "training_bits": ledger.training_uplink_bits,
        "header_bits": ledger.header_bits,
    }


def _e1_worker(task):
    master, axis, value, seed_idx, params = task
    return _fpld_single(master, (G.AXIS_IDS[axis], int(value)), seed_idx, params)


def _e1_point(axis, value, params, runs, bound_constants) -> dict:
    mean_kl, std_kl = _mean_std([r["kl"] for r in runs])
    mean_cov, std_cov = _mean_std([r["kl_covered"] for r in runs])
    bp = bounds.BoundParams(
        K=params["K"], n=params["n"], m=params["m"], V=params["V"],
        bits_per_coord=params["bits"], clip=params["clip"],
        c1=bound_constants["c1"], c2=bound_constants["c2"],
        delta=bound_constants["delta"],
    )
    report = bounds.training_kl_bound(bp)
    report.quant_term_corr, report.asym_cubic_extra = bounds.degraded_dither_bounds(bp)
    expected_bits = params["K"] * params["T"] * params["m"] * params["V"] * params["bits"]
    return {
        "axis": axis,
        "value": value,
        "params": params,
        "mean_kl": mean_kl,
        "std_kl": std_kl,
        "per_seed_kl": [r["kl"] for r in runs],
        "mean_kl_covered": mean_cov,
        "std_kl_covered": std_cov,
        "per_seed_kl_covered": [r["kl_covered"] for r in runs],
        "covered_fraction": float(np.mean([r["covered_fraction"] for r in runs])),
        "mean_quant_kl": float(np.mean([r["quant_kl"] for r in runs])),
        "bound_report": report.to_dict(),
        "bound_holds": bool(mean_kl <= report.rate_total),
        "ledger": {
            "training_payload_bits": runs[0]["training_bits"],
            "header_bits": runs[0]["header_bits"],
        },
        "training_bits_expected": expected_bits,
        "ledger_exact": all(r["training_bits"] == expected_bits for r in runs),
    }


def run_e1(spec: ExperimentSpec) -> dict:
    """Sweep (K, n, m, bits, V) one at a time against the training-rate envelope."""
    t0 = time.time()
    bound_constants = {"c1": 1.0, "c2": 1.0, "delta": 0.05, "d_convention": "V^2"}
    tasks = []
    for axis, grid in spec.grids.items():
        for value in grid:
            params = dict(spec.defaults)
            params[axis] = value
            for s in range(spec.seeds):
                tasks.append((spec.master_seed, axis, value, s, params))
    results = _pmap(_e1_worker, tasks, spec.jobs)
    by_point = {}
    for task, res in zip(tasks, results):
        by_point.setdefault((task[1], task[2]), []).append(res)
    points = [
        _e1_point(axis, value, dict(spec.defaults, **{axis: value}),
                  by_point[(axis, value)], bound_constants)
        for axis, grid in spec.grids.items() for value in grid
    ]
    config = spec.config_dict() | {"bound_constants": bound_constants}
    return {
        "schema_version": G.SCHEMA_VERSION,
        "experiment": "e1",
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "seeds": spec.seeds,
        "points": points,
        "wall_time_s": time.time() - t0,
    }


def _e1_5_worker(task):
    master, kind, K, drift_key, seed_idx, params = task
    if kind == "kdrift":
        axis_key = (G.AXIS_IDS["kdrift"], K, drift_key)
    else:
        axis_key = (G.AXIS_IDS["homog"], K)
    return _fpld_single(master, axis_key, seed_idx, params)


def run_e1_5(spec: ExperimentSpec) -> dict:
    """Node-drift grid: check the additive drift-term envelope at every point.

    The drift-0 column runs the same code path as a homogeneous swarm; an
    independent homogeneous reference (fresh seeds) is run per K as a
    consistency check, reported alongside the grid.
    """
    t0 = time.time()
    k_grid = spec.grids["K"]
    drift_grid = spec.grids["drift"]
    tasks = []
    for K in k_grid:
        params_h = dict(spec.defaults, K=K, drift=0.0)
        for s in range(spec.seeds):
            tasks.append((spec.master_seed, "homog", K, 0, s, params_h))
        for drift in drift_grid:
            params = dict(spec.defaults, K=K, drift=drift)
            dk = int(round(drift * 1000))
            for s in range(spec.seeds):
                tasks.append((spec.master_seed, "kdrift", K, dk, s, params))
    results = _pmap(_e1_5_worker, tasks, spec.jobs)
    by_key = {}
    for task, res in zip(tasks, results):
        by_key.setdefault(task[1:4], []).append(res)

    homog_reference = []
    for K in k_grid:
        mean, std = _mean_std([r["kl"] for r in by_key[("homog", K, 0)]])
        homog_reference.append({"K": K, "mean_kl": mean, "std_kl": std,
                                "per_seed_kl": [r["kl"] for r in by_key[("homog", K, 0)]]})

    points = []
    for K in k_grid:
        zero_runs = by_key[("kdrift", K, 0)]
        homog_mean, _ = _mean_std([r["kl"] for r in zero_runs])
        for drift in drift_grid:
            runs = by_key[("kdrift", K, int(round(drift * 1000)))]
            mean_kl, std_kl = _mean_std([r["kl"] for r in runs])
            drift_terms = [r["drift_term"] for r in runs]
            mean_drift = float(np.mean(drift_terms))
            bound_rhs = homog_mean + mean_drift
            points.append({
                "K": K,
                "drift": drift,
                "params": dict(spec.defaults, K=K, drift=drift),
                "mean_kl": mean_kl,
                "std_kl": std_kl,
                "per_seed_kl": [r["kl"] for r in runs],
                "mean_drift_term": mean_drift,
                "per_seed_drift_term": drift_terms,
                "homog_mean_kl": homog_mean,
                "bound_rhs": bound_rhs,
                "bound_holds": bool(mean_kl <= bound_rhs),
            })

    drift0_consistency = []
    for K, ref in zip(k_grid, homog_reference):
        zero = next(p for p in points if p["K"] == K and p["drift"] == 0.0)
        sigma = max(zero["std_kl"], ref["std_kl"])
        diff = abs(zero["mean_kl"] - ref["mean_kl"])
        drift0_consistency.append({
            "K": K, "diff": diff, "tolerance": 2.0 * sigma,
            "within_2_sigma": bool(diff <= 2.0 * sigma),
        })

    config = spec.config_dict()
    return {
        "schema_version": G.SCHEMA_VERSION,
        "experiment": "e1_5",
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "seeds": spec.seeds,
        "points": points,
        "homog_reference": homog_reference,
        "drift0_consistency": drift0_consistency,
        "wall_time_s": time.time() - t0,
    }


# ---------------------------------------------------------------------------
# Calibration sweeps
# ---------------------------------------------------------------------------


def _sample_pairs(gt, n: int, seed: int):
    rng = np.random.default_rng(seed)
    xs = rng.choice(gt.V, size=n, p=gt.context_marginal)
    cdf = np.cumsum(gt.probs[xs], axis=1)
    ys = (rng.random(n)[:, None] > cdf).sum(axis=1)
    return xs, np.minimum(ys, gt.V - 1)


def _e2_worker(task):
    master, axis, value, seed_idx, params = task
    key = child_seed(master, G.AXIS_IDS[axis], int(value), seed_idx)
    gt = ngram.generate_ground_truth(params["V"], child_seed(key, _GT))
    s_max = float(-math.log(params["eps_trunc"]))
    scorer = ngram.log_softmax(gt.logits)
    K = params["K"]
    pipeline = FcragPipeline(
        node_log_probs=[scorer] * K,
        score_bits=[params["b_i"]] * K,
        grid_bits=params["b_cal"],
        alpha=params["alpha"],
        s_max=s_max,
        seed=child_seed(key, _PIPE),
        bus=Bus(K),
    )
    cx, cy = _sample_pairs(gt, params["n_cal"], child_seed(key, _CAL))
    pipeline.calibrate(cx, cy)
    tx, ty = _sample_pairs(gt, params["n_test"], child_seed(key, _TEST))
    coverage, set_size = pipeline.evaluate(tx, ty)
    led = pipeline.bus.ledger
    return {
        "coverage": coverage,
        "set_size": set_size,
        "q_hat": pipeline.quantile.q_hat,
        "oracle_scores": pipeline.oracle_cal_scores,
        "inference_bits": led.inference_uplink_bits,
        "calibration_bits": led.calibration_uplink_bits,
        "header_bits": led.header_bits,
    }


def _pooled_fmax(oracle_pool: np.ndarray, alpha: float, s_max: float):
    """Density ceiling near the oracle quantile, widening until enough mass."""
    q_star = float(np.quantile(oracle_pool, 1.0 - alpha))
    radius = s_max / 16.0
    while True:
        try:
            return bounds.estimate_fmax(oracle_pool, q_star, radius), q_star, radius
        except ValueError:
            radius *= 2.0
            if radius > 8.0 * s_max:
                raise


def _e2_point(axis, value, params, runs, s_max) -> dict:
    mean_cov, std_cov = _mean_std([r["coverage"] for r in runs])
    mean_size, std_size = _mean_std([r["set_size"] for r in runs])
    pool = np.concatenate([r["oracle_scores"] for r in runs])
    f_max, q_star, radius = _pooled_fmax(pool, params["alpha"], s_max)
    bp = bounds.BoundParams(
        K=params["K"], V=params["V"], alpha=params["alpha"], n_cal=params["n_cal"],
        b_i=tuple([params["b_i"]] * params["K"]), b_cal=params["b_cal"],
        s_max=s_max, f_max=f_max, delta=params["delta"],
    )
    delta_fl, delta_rag, coverage_lb = bounds.coverage_slacks(bp)
    set_size_ub = bounds.set_size_bound(bp)
    # The frozen scorer is the target table itself, so the training KL is
    # exactly zero and the end-to-end bound coincides with the coverage bound.
    delta_train = bounds.pinsker_coverage_slack(0.0, f_max)
    n_test = params["n_test"]
    expected_inference = n_test * params["K"] * params["V"] * params["b_i"]
    expected_cal = params["n_cal"] * params["K"] * params["b_i"] \
        + params["n_cal"] * params["b_cal"]
    return {
        "axis": axis,
        "value": value,
        "params": params,
        "mean_coverage": mean_cov,
        "std_coverage": std_cov,
        "per_seed_coverage": [r["coverage"] for r in runs],
        "mean_set_size": mean_size,
        "std_set_size": std_size,
        "per_seed_set_size": [r["set_size"] for r in runs],
        "q_hat_mean": float(np.mean([r["q_hat"] for r in runs])),
        "f_max": f_max,
        "f_max_window": {"q_star": q_star, "radius": radius},
        "bound_report": {
            "delta_fl": delta_fl,
            "delta_rag": delta_rag,
            "coverage_lb": coverage_lb,
            "set_size_ub": set_size_ub,
            "delta_train": delta_train,
            "coverage_lb_e2e": coverage_lb - delta_train,
        },
        "bound_holds_coverage": bool(mean_cov >= coverage_lb),
        "bound_holds_size": bool(mean_size <= set_size_ub),
        "bound_holds": bool(mean_cov >= coverage_lb and mean_size <= set_size_ub),
        "ledger": {
            "inference_payload_bits": runs[0]["inference_bits"],
            "calibration_payload_bits": runs[0]["calibration_bits"],
            "header_bits": runs[0]["header_bits"],
        },
        "inference_bits_expected": expected_inference,
        "calibration_bits_expected": expected_cal,
        "ledger_exact": all(
            r["inference_bits"] == expected_inference
            and r["calibration_bits"] == expected_cal
            for r in runs
        ),
        "n_test_per_seed": n_test,
        "n_test_total": n_test * len(runs),
    }


def run_e2(spec: ExperimentSpec) -> dict:
    """Sweep (n_cal, b_i, b_cal) against the coverage and set-size envelopes."""
    t0 = time.time()
    s_max = float(-math.log(spec.defaults["eps_trunc"]))
    tasks = []
    for axis, grid in spec.grids.items():
        for value in grid:
            params = dict(spec.defaults)
            params[axis] = value
            for s in range(spec.seeds):
                tasks.append((spec.master_seed, axis, value, s, params))
    results = _pmap(_e2_worker, tasks, spec.jobs)
    by_point = {}
    for task, res in zip(tasks, results):
        by_point.setdefault((task[1], task[2]), []).append(res)
    points = [
        _e2_point(axis, value, dict(spec.defaults, **{axis: value}),
                  by_point[(axis, value)], s_max)
        for axis, grid in spec.grids.items() for value in grid
    ]
    config = spec.config_dict() | {"s_max": s_max}
    return {
        "schema_version": G.SCHEMA_VERSION,
        "experiment": "e2",
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "seeds": spec.seeds,
        "points": points,
        "wall_time_s": time.time() - t0,
    }


# ---------------------------------------------------------------------------
# Quantizer self-checks
# ---------------------------------------------------------------------------


def _generic_vectors(V: int, n_vec: int, rng) -> np.ndarray:
    """Log-prob rows of random soft distributions: the typical payload shape."""
    return ngram.log_softmax(rng.standard_normal((n_vec, V)))


def _worst_phase_vectors(V: int, step: float, n_vec: int, rng) -> np.ndarray:
    """Adversarial payloads for correlated dither: two dominant logits half a
    quantizer step apart, so a shared draw pushes their errors against each
    other along the highest-curvature softmax direction."""
    base = -9.0 + 0.1 * rng.standard_normal((n_vec, V))
    ii = rng.integers(0, V, size=n_vec)
    jj = (ii + 1 + rng.integers(0, V - 1, size=n_vec)) % V
    r = np.arange(n_vec)
    lead = rng.uniform(-1.0, 1.0, size=n_vec)
    base[r, ii] = lead
    base[r, jj] = lead - step / 2.0
    return ngram.log_softmax(base)


def _mode_kl(vectors: np.ndarray, K: int, cfg: QuantizerConfig, seed: int) -> float:
    acc = np.zeros_like(vectors)
    for i in range(K):
        acc += quantize_reconstruct(vectors, cfg, child_seed(seed, _NODE, i))
    return measure_quantization_kl(vectors, acc / K)


def _moment_suite(clip: float, bits: int, n_draws: int, seed: int) -> dict:
    cfg = QuantizerConfig(bits_per_coord=bits, clip=clip, mode="dithered_iid")
    delta = cfg.step
    rng = np.random.default_rng(child_seed(seed, _MOMENT))
    x = rng.uniform(-clip + delta, clip - delta, size=n_draws)
    err = quantize_reconstruct(x, cfg, child_seed(seed, _MOMENT, 1)) - x
    target_var = delta ** 2 / 12.0
    mean = float(err.mean())
    mean_limit = 4.0 * float(err.std()) / math.sqrt(n_draws)
    var_ratio = float(err.var() / target_var)
    m3 = float((err ** 3).mean())
    m3_limit = 4.0 * math.sqrt(float((err ** 6).mean()) / n_draws)
    x2 = rng.uniform(-clip + delta, clip - delta, size=(n_draws // 2, 2))
    e2 = quantize_reconstruct(x2, cfg, child_seed(seed, _MOMENT, 2)) - x2
    cross = float(np.corrcoef(e2[:, 0], e2[:, 1])[0, 1])

    shared_cfg = QuantizerConfig(bits_per_coord=bits, clip=clip, mode="dithered_shared")
    xs = np.repeat(rng.uniform(-clip + delta, clip - delta, size=(n_draws // 100, 1)), 2, axis=1)
    es = quantize_reconstruct(xs, shared_cfg, child_seed(seed, _MOMENT, 3)) - xs
    shared_corr = float(np.corrcoef(es[:, 0], es[:, 1])[0, 1])

    rn_cfg = QuantizerConfig(bits_per_coord=bits, clip=clip, mode="round_nearest")
    xr = rng.uniform(-clip + delta, clip - delta, size=10_000)
    e_a = quantize_reconstruct(xr, rn_cfg, 1) - xr
    e_b = quantize_reconstruct(xr, rn_cfg, 2) - xr
    return {
        "bits": bits,
        "clip": clip,
        "draws": n_draws,
        "step": delta,
        "mean_error": mean,
        "mean_limit": mean_limit,
        "pass_mean": bool(abs(mean) < mean_limit),
        "variance_ratio": var_ratio,
        "pass_variance": bool(0.95 <= var_ratio <= 1.05),
        "third_moment": m3,
        "third_moment_limit": m3_limit,
        "pass_symmetry": bool(abs(m3) < m3_limit),
        "cross_correlation": cross,
        "pass_cross_correlation": bool(abs(cross) < 0.01),
        "shared_pair_correlation": shared_corr,
        "round_nearest_deterministic": bool(np.array_equal(e_a, e_b)),
        "round_nearest_bounded": bool(np.max(np.abs(e_a)) <= delta / 2 + 1e-12),
    }


def run_quant_check(spec: ExperimentSpec) -> dict:
    """Quantizer moment suite plus the dither-mode KL grid against both bounds."""
    t0 = time.time()
    p = spec.defaults
    V, clip, tol = p["V"], p["clip"], p["tolerance"]
    moments = _moment_suite(clip, p["moment_bits"], p["moment_draws"], spec.master_seed)

    mode_kl = []
    for ensemble in ("generic", "worst_phase"):
        for bits in p["bits_grid"]:
            cfg_iid = QuantizerConfig(bits_per_coord=bits, clip=clip, mode="dithered_iid")
            cfg_sh = QuantizerConfig(bits_per_coord=bits, clip=clip, mode="dithered_shared")
            rng = np.random.default_rng(child_seed(spec.master_seed, _ENSEMBLE, bits))
            if ensemble == "generic":
                vectors = _generic_vectors(V, p["n_vectors"], rng)
            else:
                vectors = _worst_phase_vectors(V, cfg_iid.step, p["n_vectors"], rng)
            for K in p["K_grid"]:
                seed = child_seed(spec.master_seed, _ENSEMBLE, bits, K)
                kl_iid = _mode_kl(vectors, K, cfg_iid, child_seed(seed, 1))
                kl_shared = _mode_kl(vectors, K, cfg_sh, child_seed(seed, 2))
                bound_iid = (clip ** 2 / 6.0) / K * 2.0 ** (-2 * bits)
                bound_shared = (clip ** 2 / 12.0) * V / K * 2.0 ** (-2 * bits)
                mode_kl.append({
                    "ensemble": ensemble,
                    "bits": bits,
                    "K": K,
                    "kl_iid": kl_iid,
                    "bound_iid": bound_iid,
                    "ratio_iid": kl_iid / bound_iid,
                    "pass_iid": bool(kl_iid <= bound_iid * tol),
                    "kl_shared": kl_shared,
                    "bound_shared": bound_shared,
                    "ratio_shared": kl_shared / bound_shared,
                    "pass_shared": bool(kl_shared <= bound_shared * tol),
                    "iid_le_shared": bool(kl_iid <= kl_shared),
                })

    worst = [e for e in mode_kl if e["ensemble"] == "worst_phase"]
    passes = {
        "moments": all(moments[k] for k in
                       ("pass_mean", "pass_variance", "pass_symmetry",
                        "pass_cross_correlation")),
        "iid_bound": all(e["pass_iid"] for e in mode_kl),
        "shared_bound": all(e["pass_shared"] for e in mode_kl),
        "iid_le_shared_worst_phase": all(e["iid_le_shared"] for e in worst),
    }
    passes["all"] = all(passes.values())
    config = spec.config_dict()
    return {
        "schema_version": G.SCHEMA_VERSION,
        "experiment": "quant_check",
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "seeds": spec.seeds,
        "moments": moments,
        "mode_kl": mode_kl,
        "passes": passes,
        "wall_time_s": time.time() - t0,
    }


_RUNNERS = {"e1": run_e1, "e1_5": run_e1_5, "e2": run_e2, "quant_check": run_quant_check}


def run_experiment(spec: ExperimentSpec) -> dict:
    """Dispatch one experiment and optionally write its JSON summary."""
    doc = _RUNNERS[spec.experiment](spec)
    if spec.out:
        write_result(doc, spec.out)
    return doc

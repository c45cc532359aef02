"""Figure regeneration from experiment summary JSON.

Three figure ids are supported:

* ``e1_panels`` -- the five one-at-a-time rate sweeps, empirical mean KL with
  1-sigma bars and the dashed additive envelope per panel.
* ``e1_5`` -- empirical KL versus the analytical drift term, one curve per
  swarm size, with the dashed additive prediction.
* ``e2_panels`` -- the three calibration sweeps, empirical coverage with
  1-sigma bars against the dashed predicted lower bound and the dotted
  coverage target.

Every number is read from the JSON; nothing is recomputed here. Rendering is
pinned to a fixed style so the same input produces byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["FigureSpec", "SchemaMismatch", "load_summary", "build_figure", "render"]

SUPPORTED_SCHEMA_VERSION = 1

FIGURE_EXPERIMENTS = {
    "e1_panels": "e1",
    "e1_5": "e1_5",
    "e2_panels": "e2",
}

# Pinned style: deterministic output regardless of user configuration.
_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "fedswarm-plots",
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
}

_DEFAULT_LOG_X = {
    "e1_panels": {"K": True, "n": True, "m": True, "bits": False, "V": True},
    "e2_panels": {"n_cal": True, "b_i": False, "b_cal": False},
}


class SchemaMismatch(ValueError):
    """Input JSON does not match the figure or the supported schema version."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: input summary, figure id, output image path."""

    input_path: str
    figure_id: str
    output_path: str
    log_x: dict = field(default_factory=dict)
    log_y: bool = True

    def __post_init__(self):
        if self.figure_id not in FIGURE_EXPERIMENTS:
            raise ValueError(f"unknown figure id {self.figure_id!r}; "
                             f"choose from {sorted(FIGURE_EXPERIMENTS)}")


def load_summary(path: str, figure_id: str) -> dict:
    """Load and structurally validate a summary file for one figure id."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SUPPORTED_SCHEMA_VERSION:
        raise SchemaMismatch(
            f"schema_version {doc.get('schema_version')!r} unsupported "
            f"(need {SUPPORTED_SCHEMA_VERSION})")
    expected = FIGURE_EXPERIMENTS[figure_id]
    if doc.get("experiment") != expected:
        raise SchemaMismatch(
            f"figure {figure_id} needs a {expected!r} summary, "
            f"got {doc.get('experiment')!r}")
    if "points" not in doc or not doc["points"]:
        raise SchemaMismatch("summary has no points")
    return doc


def _axis_points(doc: dict, axis: str) -> list[dict]:
    pts = [p for p in doc["points"] if p.get("axis") == axis]
    return sorted(pts, key=lambda p: p["value"])


def _finite(values):
    return [v if isinstance(v, (int, float)) else float("nan") for v in values]


def _build_e1(doc: dict, spec: FigureSpec):
    axes_order = [a for a in ("K", "n", "m", "bits", "V") if _axis_points(doc, a)]
    fig, axs = plt.subplots(1, len(axes_order), figsize=(3.0 * len(axes_order), 2.8))
    axs = np.atleast_1d(axs)
    log_defaults = _DEFAULT_LOG_X["e1_panels"]
    for ax, axis in zip(axs, axes_order):
        pts = _axis_points(doc, axis)
        x = [p["value"] for p in pts]
        y = [p["mean_kl"] for p in pts]
        err = [p["std_kl"] for p in pts]
        bound = [p["bound_report"]["rate_total"] for p in pts]
        ax.errorbar(x, y, yerr=err, fmt="o-", color="tab:blue", capsize=2,
                    label="empirical KL")
        ax.plot(x, bound, "--", color="tab:red", label="additive envelope")
        if spec.log_x.get(axis, log_defaults[axis]):
            ax.set_xscale("log")
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_xlabel(axis)
        ax.set_ylabel("expected KL")
        ax.set_title(f"{axis}-sweep")
    axs[0].legend(loc="lower left", fontsize=7)
    fig.tight_layout()
    return fig


def _build_e1_5(doc: dict, spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    k_values = sorted({p["K"] for p in doc["points"]})
    colors = plt.cm.viridis(np.linspace(0.1, 0.8, len(k_values)))
    homog_means = []
    for color, K in zip(colors, k_values):
        pts = sorted((p for p in doc["points"] if p["K"] == K),
                     key=lambda p: p["mean_drift_term"])
        x = [p["mean_drift_term"] for p in pts]
        y = [p["mean_kl"] for p in pts]
        err = [p["std_kl"] for p in pts]
        ax.errorbar(x, y, yerr=err, fmt="o-", color=color, capsize=2,
                    label=f"K={K}")
        homog_means.append(pts[0]["homog_mean_kl"])
    xs = np.linspace(0.0, max(p["mean_drift_term"] for p in doc["points"]), 50)
    baseline = float(np.mean(homog_means))
    ax.plot(xs, baseline + xs, "--", color="tab:red",
            label="additive prediction")
    ax.set_xlabel("drift term (mean node divergence)")
    ax.set_ylabel("expected KL")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def _build_e2(doc: dict, spec: FigureSpec):
    axes_order = [a for a in ("n_cal", "b_i", "b_cal") if _axis_points(doc, a)]
    fig, axs = plt.subplots(1, len(axes_order), figsize=(3.2 * len(axes_order), 2.8))
    axs = np.atleast_1d(axs)
    log_defaults = _DEFAULT_LOG_X["e2_panels"]
    alpha = doc["config"]["defaults"].get("alpha", 0.1)
    for ax, axis in zip(axs, axes_order):
        pts = _axis_points(doc, axis)
        x = [p["value"] for p in pts]
        y = [p["mean_coverage"] for p in pts]
        err = [p["std_coverage"] for p in pts]
        lb = _finite([p["bound_report"]["coverage_lb"] for p in pts])
        ax.errorbar(x, y, yerr=err, fmt="o-", color="tab:blue", capsize=2,
                    label="empirical coverage")
        ax.plot(x, lb, "--", color="tab:red", label="predicted lower bound")
        ax.axhline(1.0 - alpha, linestyle=":", color="gray", linewidth=1.0,
                   label="target")
        if spec.log_x.get(axis, log_defaults[axis]):
            ax.set_xscale("log")
        ax.set_xlabel(axis)
        ax.set_ylabel("coverage")
        ax.set_title(f"{axis}-sweep")
        ax.set_ylim(min(-0.05, min(v for v in lb if v == v) - 0.1
                        if any(v == v for v in lb) else -0.05), 1.05)
    axs[0].legend(loc="lower right", fontsize=7)
    fig.tight_layout()
    return fig


_BUILDERS = {"e1_panels": _build_e1, "e1_5": _build_e1_5, "e2_panels": _build_e2}


def build_figure(spec: FigureSpec):
    """Validate the input and build the matplotlib figure (not yet saved)."""
    doc = load_summary(spec.input_path, spec.figure_id)
    with plt.rc_context(_STYLE):
        return _BUILDERS[spec.figure_id](doc, spec)


def render(spec: FigureSpec) -> str:
    """Render one figure to ``spec.output_path``; returns the path."""
    with plt.rc_context(_STYLE):
        fig = build_figure(spec)
        try:
            fig.savefig(spec.output_path, metadata=_deterministic_metadata(spec))
        finally:
            plt.close(fig)
    return spec.output_path


def _deterministic_metadata(spec: FigureSpec) -> dict:
    # PNG writers stamp no dates by default; SVG needs the date suppressed.
    if spec.output_path.lower().endswith(".svg"):
        return {"Date": None}
    return {}

"""Built-in sweep grids and defaults for the desk-scale experiments.

The full grids are the published reference configurations; the reduced
variants exist for CI and fixture generation and are clearly labeled in the
output JSON. Grid values key the per-point seed derivation, so extending a
grid never reshuffles existing points.
"""

from __future__ import annotations

SCHEMA_VERSION = 1

EXPERIMENTS = ("e1", "e1_5", "e2", "quant_check")

# Sub-seed namespace ids per sweep axis (stable; do not renumber).
AXIS_IDS = {
    "K": 1,
    "n": 2,
    "m": 3,
    "bits": 4,
    "V": 5,
    "kdrift": 6,
    "homog": 7,
    "n_cal": 8,
    "b_i": 9,
    "b_cal": 10,
}

E1_DEFAULTS = {
    "K": 4,
    "n": 3000,
    "m": 3000,
    "bits": 8,
    "V": 256,
    "clip": 20.0,
    "beta": 0.5,
    "T": 1,
}

E1_GRIDS = {
    "K": [1, 2, 4, 8, 16, 32, 64, 128, 256],
    "n": [100, 300, 1000, 3000, 10000, 30000, 100000],
    "m": [100, 300, 1000, 3000, 10000, 30000],
    "bits": [2, 3, 4, 5, 6, 7, 8, 10, 12],
    "V": [64, 128, 256, 512, 1024],
}

E1_SEEDS = 40

E1_REDUCED_DEFAULTS = {**E1_DEFAULTS, "V": 64, "n": 1000, "m": 1000}

E1_REDUCED_GRIDS = {
    "K": [1, 2, 4],
    "n": [300, 1000, 3000],
    "m": [100, 300, 1000],
    "bits": [2, 4, 8],
    "V": [64, 128],
}

E1_5_DEFAULTS = {
    "n": 30000,
    "m": 3000,
    "bits": 8,
    "V": 256,
    "clip": 20.0,
    "beta": 0.5,
    "T": 1,
}

E1_5_K_GRID = [2, 4, 8]
E1_5_DRIFT_GRID = [0.0, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0]
E1_5_SEEDS = 20

E1_5_REDUCED_DEFAULTS = {**E1_5_DEFAULTS, "V": 64, "n": 3000, "m": 1000}
E1_5_REDUCED_K_GRID = [2, 4]
E1_5_REDUCED_DRIFT_GRID = [0.0, 0.5, 1.0]

E2_DEFAULTS = {
    "K": 4,
    "V": 256,
    "n_cal": 3000,
    "b_i": 8,
    "b_cal": 8,
    "alpha": 0.1,
    "n_test": 1000,
    "eps_trunc": 1e-6,
    "delta": 0.05,
}

E2_GRIDS = {
    "n_cal": [100, 300, 1000, 3000, 10000],
    "b_i": [1, 2, 4, 8, 16, 32],
    "b_cal": [1, 2, 4, 6, 8, 10, 12, 14, 16],
}

E2_SEEDS = 20

E2_REDUCED_DEFAULTS = {**E2_DEFAULTS, "V": 64, "n_cal": 500, "n_test": 300}

E2_REDUCED_GRIDS = {
    "n_cal": [100, 500],
    "b_i": [2, 8],
    "b_cal": [1, 4, 8],
}

QUANT_CHECK_DEFAULTS = {
    "V": 256,
    "clip": 20.0,
    "K_grid": [1, 4, 16],
    "bits_grid": [4, 8],
    "n_vectors": 1500,
    "moment_draws": 1_000_000,
    "moment_bits": 8,
    "tolerance": 1.10,
}

QUANT_CHECK_REDUCED = {
    **QUANT_CHECK_DEFAULTS,
    "n_vectors": 300,
    "moment_draws": 200_000,
}


def builtin_grids(experiment: str, reduced: bool):
    """(defaults, grids, seeds) for one experiment id."""
    if experiment == "e1":
        return ((E1_REDUCED_DEFAULTS, E1_REDUCED_GRIDS) if reduced
                else (E1_DEFAULTS, E1_GRIDS)) + (E1_SEEDS,)
    if experiment == "e1_5":
        if reduced:
            return (E1_5_REDUCED_DEFAULTS,
                    {"K": E1_5_REDUCED_K_GRID, "drift": E1_5_REDUCED_DRIFT_GRID},
                    E1_5_SEEDS)
        return (E1_5_DEFAULTS, {"K": E1_5_K_GRID, "drift": E1_5_DRIFT_GRID}, E1_5_SEEDS)
    if experiment == "e2":
        return ((E2_REDUCED_DEFAULTS, E2_REDUCED_GRIDS) if reduced
                else (E2_DEFAULTS, E2_GRIDS)) + (E2_SEEDS,)
    if experiment == "quant_check":
        return (QUANT_CHECK_REDUCED if reduced else QUANT_CHECK_DEFAULTS), {}, 1
    raise ValueError(f"unknown experiment {experiment!r}")

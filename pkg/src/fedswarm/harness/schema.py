"""Versioned JSON schema for experiment summaries.

The summary file is the contract between the harness and any downstream
consumer (figure regeneration in particular): consumers read numbers from it
and never recompute statistics.
"""

from __future__ import annotations

import json

import jsonschema

from fedswarm.harness.grids import SCHEMA_VERSION

__all__ = ["SCHEMA_VERSION", "RESULT_SCHEMA", "validate_result"]

_number_or_marker = {
    "oneOf": [
        {"type": "number"},
        {"enum": ["Infinity", "-Infinity", "NaN"]},
    ]
}

_sweep_point = {
    "type": "object",
    "required": ["params"],
    "properties": {
        "axis": {"type": "string"},
        "value": {"type": "number"},
        "params": {"type": "object"},
        "mean_kl": {"type": "number"},
        "std_kl": {"type": "number"},
        "per_seed_kl": {"type": "array", "items": {"type": "number"}},
        "bound_report": {"type": "object"},
        "bound_holds": {"type": "boolean"},
        "ledger": {"type": "object"},
        "mean_coverage": {"type": "number"},
        "std_coverage": {"type": "number"},
        "per_seed_coverage": {"type": "array", "items": {"type": "number"}},
        "mean_set_size": {"type": "number"},
        "q_hat_mean": _number_or_marker,
    },
}

RESULT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "experiment", "version", "config",
                 "config_hash", "seeds", "wall_time_s"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": ["e1", "e1_5", "e2", "quant_check"]},
        "version": {"type": "string"},
        "config": {"type": "object"},
        "config_hash": {"type": "string"},
        "seeds": {"type": "integer", "minimum": 1},
        "points": {"type": "array", "items": _sweep_point},
        "homog_reference": {"type": "array"},
        "drift0_consistency": {"type": "array"},
        "moments": {"type": "object"},
        "mode_kl": {"type": "array"},
        "passes": {"type": "object"},
        "wall_time_s": {"type": "number"},
    },
    "allOf": [
        {
            "if": {"properties": {"experiment": {"enum": ["e1", "e1_5", "e2"]}}},
            "then": {"required": ["points"]},
        },
        {
            "if": {"properties": {"experiment": {"const": "e1_5"}}},
            "then": {"required": ["homog_reference", "drift0_consistency"]},
        },
        {
            "if": {"properties": {"experiment": {"const": "quant_check"}}},
            "then": {"required": ["moments", "mode_kl", "passes"]},
        },
    ],
}


def validate_result(doc: dict) -> None:
    """Raise jsonschema.ValidationError when `doc` is not a valid summary."""
    jsonschema.validate(doc, RESULT_SCHEMA)


def validate_file(path: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    validate_result(doc)
    return doc

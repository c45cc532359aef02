"""Experiment harness: sweep specs, seeded runners, JSON schema."""

from fedswarm.harness.experiments import (  # noqa: F401
    ExperimentSpec,
    config_hash,
    run_experiment,
    write_result,
)
from fedswarm.harness.grids import EXPERIMENTS, SCHEMA_VERSION, builtin_grids  # noqa: F401
from fedswarm.harness.schema import RESULT_SCHEMA, validate_file, validate_result  # noqa: F401

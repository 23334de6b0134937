"""Experiment orchestration for the ndgd command line."""

from ndgd.experiments.builder import (
    BuildError,
    Components,
    Problem,
    build_components,
    build_problem,
    resolve_init,
    schedule_for,
)
from ndgd.experiments.runner import EscapeRow, ExperimentResult, ExperimentRunner

__all__ = [
    "BuildError",
    "Components",
    "Problem",
    "build_components",
    "build_problem",
    "resolve_init",
    "schedule_for",
    "EscapeRow",
    "ExperimentResult",
    "ExperimentRunner",
]

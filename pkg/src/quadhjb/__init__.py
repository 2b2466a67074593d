"""Numerical laboratory for degenerate parabolic Bellman-Isaacs equations with quadratic Hamiltonians."""

from .core import (
    ConfigurationError,
    ControlAffineDynamics,
    DomainError,
    GrowthConstants,
    InfQuadraticClosedForm,
    Orientation,
    ProblemSpec,
    RunningCost,
    ScalarHForm,
    ShapeError,
    SigmaForm,
    SupCompactGrid,
    SupQuadraticClosedForm,
    ValidationError,
    eval_full,
)
from .presets import PRESETS, preset
from .solver import Grid, SchemeConfig, SolutionField, solve

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ControlAffineDynamics",
    "DomainError",
    "GrowthConstants",
    "Grid",
    "InfQuadraticClosedForm",
    "Orientation",
    "PRESETS",
    "ProblemSpec",
    "RunningCost",
    "ScalarHForm",
    "SchemeConfig",
    "ShapeError",
    "SigmaForm",
    "SolutionField",
    "SupCompactGrid",
    "SupQuadraticClosedForm",
    "ValidationError",
    "eval_full",
    "preset",
    "solve",
]

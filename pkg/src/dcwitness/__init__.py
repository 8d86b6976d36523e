"""Prepare-and-measure toolkit for a delayed-choice interferometer.

Predicts Born-rule statistics of a polarization Mach-Zehnder interferometer,
bounds two dimension witnesses classically and quantumly, and simulates the
photon-counting experiment under both outcome-assignment policies.
"""

from .pam_core import (
    PamScenario,
    PhaseConfig,
    ProbabilityTable,
    PamError,
    NormalizationError,
    RangeError,
    ShapeError,
    validate_table,
    expectation,
)

__version__ = "0.1.0"

__all__ = [
    "PamScenario",
    "PhaseConfig",
    "ProbabilityTable",
    "PamError",
    "NormalizationError",
    "RangeError",
    "ShapeError",
    "validate_table",
    "expectation",
]

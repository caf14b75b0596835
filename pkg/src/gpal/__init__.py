"""Gaussian-process assisted active learning of sparse differential equations."""

from gpal.core import (
    CandidatePool,
    ConditioningError,
    DimensionError,
    EstimatedEquation,
    Metrics,
    Observation,
    compute_gamma,
    compute_l2_loss,
)

__version__ = "0.1.0"

__all__ = [
    "CandidatePool",
    "ConditioningError",
    "DimensionError",
    "EstimatedEquation",
    "Metrics",
    "Observation",
    "compute_gamma",
    "compute_l2_loss",
]

"""Continuous weak measurement of a precessing spin-1/2 and Bayesian field-direction estimation.

The true Bloch vector precesses about an unknown field ``b`` while three
homodyne probes along x, y and z record noisy signals. A bank of candidate
fields is filtered in parallel from that record, with a posterior weight per
candidate.
"""

from .bayes import (
    AugmentedState,
    CandidateSet,
    FilterResult,
    FilterRunner,
    cos_theta,
    ensemble_expectation,
    filter_step,
    map_estimate,
    run_filter,
)
from .bloch import ProbeVectors
from .engine import RandomStream, StepConfig, TrajectoryStatus
from .truth import MeasurementRecord, TrueTrajectory, TruthSimulator, simulate_record

__version__ = "0.1.0"

__all__ = [
    "AugmentedState",
    "CandidateSet",
    "FilterResult",
    "FilterRunner",
    "MeasurementRecord",
    "ProbeVectors",
    "RandomStream",
    "StepConfig",
    "TrajectoryStatus",
    "TrueTrajectory",
    "TruthSimulator",
    "cos_theta",
    "ensemble_expectation",
    "filter_step",
    "map_estimate",
    "run_filter",
    "simulate_record",
]

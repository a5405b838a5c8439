"""Configuration, candidate grids, experiment runners, export and CLI."""

from .config import ExperimentConfig
from .experiments import EnsembleAborted, EnsembleResult, TrialResult, run_ensemble, run_single_shot, run_trial
from .grid import SphereGrid, build_sphere_grid, candidates_for, two_direction

__all__ = [
    "EnsembleAborted",
    "EnsembleResult",
    "ExperimentConfig",
    "SphereGrid",
    "TrialResult",
    "build_sphere_grid",
    "candidates_for",
    "run_ensemble",
    "run_single_shot",
    "run_trial",
    "two_direction",
]

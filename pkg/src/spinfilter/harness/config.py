"""Experiment configuration, stored as JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from ..bayes import INNOVATIONS
from ..bloch import ProbeVectors
from ..engine import StepConfig

SCENARIOS = ("two-direction", "sphere-grid", "custom")


@dataclass
class ExperimentConfig:
    """Everything needed to regenerate an experiment.

    ``true_direction`` is normalised and scaled by ``b_mag``. For the
    ``two-direction`` scenario the candidates are ``+/- b_true``; for
    ``sphere-grid`` they are the ``n_theta x n_phi`` grid scaled by ``b_mag``;
    ``custom`` takes ``candidates`` verbatim.
    """

    scenario: str = "two-direction"
    b_mag: float = 1.5
    true_direction: tuple = (1.0, 0.0, 0.0)
    alpha: tuple = (1.0, 1.0, 1.0)
    eta: tuple = (1.0, 1.0, 1.0)
    r0: tuple = (0.0, 1.0, 0.0)
    dt: float = 1e-5
    T: float = 15.0
    trials: int = 1
    seed_base: int = 0
    out_dir: str = "results"
    record_every: Optional[int] = None
    n_theta: int = 7
    n_phi: int = 14
    snapshot_times: tuple = (0.0, 1.0, 3.0, 5.0, 15.0)
    candidates: Optional[list] = None
    prior: Optional[list] = None
    innovation: str = "candidate"
    norm_tol: Optional[float] = None
    bootstrap: int = 1000
    max_rejection: float = 0.2
    workers: int = 1

    def __post_init__(self):
        for name in ("true_direction", "alpha", "eta", "r0", "snapshot_times"):
            setattr(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.b_mag <= 0:
            raise ValueError("b_mag must be positive")
        if len(self.true_direction) != 3 or np.linalg.norm(self.true_direction) == 0:
            raise ValueError("true_direction must be a non-zero 3-vector")
        if len(self.r0) != 3 or np.linalg.norm(self.r0) > 1.0 + 1e-12:
            raise ValueError("r0 must be a 3-vector inside the unit ball")
        if self.innovation not in INNOVATIONS:
            raise ValueError(f"innovation must be one of {INNOVATIONS}")
        if self.scenario == "custom" and not self.candidates:
            raise ValueError("custom scenario needs an explicit candidates list")
        if self.n_theta < 1 or self.n_phi < 1:
            raise ValueError("grid sizes must be >= 1")
        if self.workers < 1 or self.bootstrap < 0:
            raise ValueError("workers must be >= 1 and bootstrap >= 0")
        if any(t < 0 or t > self.T + 1e-12 for t in self.snapshot_times):
            self.snapshot_times = tuple(t for t in self.snapshot_times if 0 <= t <= self.T + 1e-12)
        self.probes()
        self.step_config()

    def probes(self) -> ProbeVectors:
        return ProbeVectors(self.alpha, self.eta)

    def step_config(self) -> StepConfig:
        return StepConfig(dt=self.dt, T=self.T, record_every=self.record_every)

    @property
    def b_true(self) -> np.ndarray:
        u = np.asarray(self.true_direction)
        return self.b_mag * u / np.linalg.norm(u)

    def seeds(self) -> list:
        return [self.seed_base + i for i in range(self.trials)]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "config" in d and isinstance(d["config"], dict):
            d = d["config"]
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """Read a config file, or the ``config`` block of a run manifest."""
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def field_names() -> list:
    return [f.name for f in fields(ExperimentConfig)]

"""Candidate field sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bayes import CandidateSet
from .config import ExperimentConfig


@dataclass(frozen=True)
class SphereGrid:
    """``n_theta`` polar rings strictly inside ``(0, pi)`` times ``n_phi`` azimuths.

    Index ``k = i * n_phi + j`` for ring ``i`` (from the north pole) and
    azimuth ``j``.
    """

    n_theta: int
    n_phi: int
    theta: np.ndarray
    phi: np.ndarray
    directions: np.ndarray

    def __len__(self):
        return self.directions.shape[0]

    def scaled(self, magnitude: float) -> CandidateSet:
        return CandidateSet(magnitude * self.directions)


def build_sphere_grid(n_theta: int, n_phi: int) -> SphereGrid:
    if n_theta < 1 or n_phi < 1:
        raise ValueError("grid sizes must be >= 1")
    theta = np.pi * np.arange(1, n_theta + 1) / (n_theta + 1)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1).reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return SphereGrid(n_theta, n_phi, theta, phi, dirs)


def two_direction(b_true) -> CandidateSet:
    """``+b`` and ``-b``; the truth is index 0."""
    b = np.asarray(b_true, dtype=float)
    return CandidateSet(np.stack([b, -b]) + 0.0)


def candidates_for(config: ExperimentConfig) -> CandidateSet:
    if config.scenario == "two-direction":
        return two_direction(config.b_true)
    if config.scenario == "sphere-grid":
        return build_sphere_grid(config.n_theta, config.n_phi).scaled(config.b_mag)
    return CandidateSet(np.asarray(config.candidates, dtype=float))

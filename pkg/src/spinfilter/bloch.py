"""Bloch-vector form of the true-state and per-candidate filter equations.

The functions here are vectorised reference versions: every argument may
carry leading batch axes, with the Bloch components on the last axis. The
production loops in :mod:`spinfilter._kernels` implement the same arithmetic
one scalar at a time.

Probes are fixed to the cartesian axes; channel ``n`` measures ``sigma_n``
with relative strength ``alpha[n]`` and efficiency ``eta[n]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProbeVectors:
    """Relative strengths and efficiencies of the x, y and z probes."""

    alpha: tuple[float, float, float] = (1.0, 1.0, 1.0)
    eta: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        eta = tuple(float(e) for e in self.eta)
        if len(alpha) != 3 or len(eta) != 3:
            raise ValueError("alpha and eta need exactly three components")
        if any(not 0.0 <= a <= 1.0 for a in alpha) or any(not 0.0 <= e <= 1.0 for e in eta):
            raise ValueError("probe strengths and efficiencies must lie in [0, 1]")
        if max(alpha) > 0 and abs(max(alpha) - 1.0) > 1e-12:
            raise ValueError("probe strengths must be normalised so that the largest is 1")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "eta", eta)

    @property
    def a(self) -> np.ndarray:
        return np.array(self.alpha)

    @property
    def e(self) -> np.ndarray:
        return np.array(self.eta)


def drift_true(r, b, pv: ProbeVectors) -> np.ndarray:
    """Deterministic part ``2[(b x r) - (sum alpha) r + alpha * r]``."""
    r = np.asarray(r, dtype=float)
    a = pv.a
    return 2.0 * (np.cross(b, r) - a.sum() * r + a * r)


def backaction(r, d_omega) -> np.ndarray:
    """Measurement kick ``2[dOmega (1 - r^2) - r x (r x dOmega)]``.

    The two terms combine to ``2[dOmega - r (r . dOmega)]``; with the
    purity factor written as ``(1 - r^2) dOmega`` the expression is the
    Bloch image of the homodyne back-action superoperator.
    """
    r = np.asarray(r, dtype=float)
    d_omega = np.asarray(d_omega, dtype=float)
    r2 = np.sum(r * r, axis=-1, keepdims=True)
    return 2.0 * (d_omega * (1.0 - r2) - np.cross(r, np.cross(r, d_omega)))


def signal(r, pv: ProbeVectors, dW, dt) -> np.ndarray:
    """Detector increments ``sqrt(eta) dW + 2 eta sqrt(alpha) r dt`` of the true state."""
    return np.sqrt(pv.e) * np.asarray(dW, dtype=float) + 2.0 * pv.e * np.sqrt(pv.a) * np.asarray(r) * dt


def candidate_innovation(r_k, dY, pv: ProbeVectors, dt) -> np.ndarray:
    """``dY_n - eta_n sqrt(alpha_n) (2 r_k,n) dt``: the record minus what candidate k predicts."""
    return np.asarray(dY, dtype=float) - 2.0 * pv.e * np.sqrt(pv.a) * np.asarray(r_k) * dt


def clamp_to_ball(r, tol: float):
    """Project ``|r| > 1`` back onto the unit sphere.

    Returns ``(r_clamped, violated)`` where ``violated`` marks vectors that
    overshot by more than ``tol`` or are not finite.
    """
    r = np.asarray(r, dtype=float)
    norm = np.linalg.norm(r, axis=-1, keepdims=True)
    violated = ~np.isfinite(norm[..., 0]) | (norm[..., 0] > 1.0 + tol)
    out = np.where(norm > 1.0, r / np.where(norm > 0, norm, 1.0), r)
    return out, violated


def true_step(r, b, pv: ProbeVectors, dW, dt):
    """One Ito-Euler step of the true state; returns ``(r_next, dY)`` without clamping."""
    dW = np.asarray(dW, dtype=float)
    dY = signal(r, pv, dW, dt)
    d_omega = np.sqrt(pv.e * pv.a) * dW
    return r + drift_true(r, b, pv) * dt + backaction(r, d_omega), dY


def candidate_step(r_k, b_k, pv: ProbeVectors, dY, dt, innovation=None) -> np.ndarray:
    """One Ito-Euler step of a candidate's conditional state driven by the record.

    The kick uses ``dOmega_n = sqrt(alpha_n) dV_n`` where ``dV`` is the
    candidate's own innovation by default. Because ``dY`` already carries a
    ``sqrt(eta_n)`` on the noise, the candidate fed the true field reproduces
    the true-state kick ``sqrt(eta_n alpha_n) dW_n`` exactly.

    ``innovation`` overrides ``dV`` (the ensemble-averaged innovation is the
    alternative used for comparisons). No clamping is applied here.
    """
    if innovation is None:
        innovation = candidate_innovation(r_k, dY, pv, dt)
    d_omega = np.sqrt(pv.a) * innovation
    return r_k + drift_true(r_k, b_k, pv) * dt + backaction(r_k, d_omega)

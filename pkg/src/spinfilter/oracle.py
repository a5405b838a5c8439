"""Density-matrix reference implementation of the single-qubit filter.

All functions accept complex arrays of shape ``(..., 2, 2)`` so that a batch
of independent states can be advanced in lockstep. They are far slower than
the Bloch-vector kernels and exist to check them.

Units are dimensionless: time is measured in units of ``1/M`` with ``M`` the
strongest probe rate, the field enters as ``b = mu_B B / (hbar M)`` and the
Hamiltonian is ``b . sigma``.

Signal convention. The recorded increment of channel ``n`` is::

    dY_n = sqrt(eta_n) dW_n + eta_n sqrt(alpha_n) <sigma_n + sigma_n^dag> dt

which for a Hermitian probe operator carries ``2 <sigma_n>`` in the mean.
The noisy-signal expression of the general filter is sometimes written
without the ``sqrt(eta_n)`` on ``dW_n``; we keep the factor because it is
the form that generates records for estimation, and with it the record
variance is ``eta_n dt`` and ``eta_n = 0`` produces an identically zero
record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

SCHEMES = ("split", "euler", "kraus")


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def trace(a: np.ndarray) -> np.ndarray:
    return a[..., 0, 0] + a[..., 1, 1]


def pauli(m) -> np.ndarray:
    """Return ``m . sigma`` for a unit 3-vector ``m``."""
    m = np.asarray(m, dtype=float)
    if abs(np.linalg.norm(m) - 1.0) > 1e-12:
        raise ValueError(f"Pauli axis must be a unit vector, got |m|={np.linalg.norm(m)!r}")
    return np.tensordot(m, PAULI, axes=(0, 0))


def density_matrix(r) -> np.ndarray:
    """Map Bloch vector(s) ``r`` (shape ``(..., 3)``) to ``(I + r . sigma)/2``."""
    r = np.asarray(r, dtype=float)
    return 0.5 * (IDENTITY + np.tensordot(r, PAULI, axes=(-1, 0)))


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """Inverse of :func:`density_matrix`: ``r_j = Tr(sigma_j rho)``."""
    rho = np.asarray(rho)
    return np.stack(
        [
            2.0 * rho[..., 0, 1].real,
            -2.0 * rho[..., 0, 1].imag,
            (rho[..., 0, 0] - rho[..., 1, 1]).real,
        ],
        axis=-1,
    )


def expect(op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``Tr(op rho)`` over the trailing two axes."""
    return np.einsum("...ij,...ji->...", op, rho)


def min_eigenvalue(rho: np.ndarray) -> np.ndarray:
    # Hermitian 2x2: eigenvalues (tr +/- sqrt((a-d)^2 + 4|b|^2)) / 2.
    a = rho[..., 0, 0].real
    d = rho[..., 1, 1].real
    off = np.abs(rho[..., 0, 1])
    return 0.5 * (a + d - np.sqrt((a - d) ** 2 + 4.0 * off**2))


def is_physical(rho: np.ndarray, psd_tol: float = 1e-8, trace_tol: float = 1e-12) -> np.ndarray:
    herm = np.all(np.abs(rho - dag(rho)) <= 1e-12, axis=(-1, -2))
    unit = np.abs(trace(rho) - 1.0) <= trace_tol
    return herm & unit & (min_eigenvalue(rho) >= -psd_tol)


@dataclass(frozen=True)
class LindbladChannel:
    """Extra Markovian damping ``rate * D[operator]`` not tied to a detector."""

    operator: np.ndarray
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("Lindblad rate must be non-negative")


@dataclass(frozen=True)
class ProbeChannel:
    """One continuously monitored spin component ``sigma_m = m . sigma``.

    ``strength`` is the probe rate relative to the strongest probe and
    ``efficiency`` the fraction of the scattered signal that is detected.
    """

    axis: np.ndarray
    strength: float = 1.0
    efficiency: float = 1.0
    operator: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", axis)
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"probe strength must lie in [0, 1], got {self.strength}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"probe efficiency must lie in [0, 1], got {self.efficiency}")
        object.__setattr__(self, "operator", pauli(axis))


def cartesian_probes(alpha: Sequence[float], eta: Sequence[float]) -> list[ProbeChannel]:
    """Probe channels along x, y, z (zero-strength channels are kept so indices match the record)."""
    if max(alpha) > 0 and abs(max(alpha) - 1.0) > 1e-12:
        raise ValueError("probe strengths must be normalised so that the largest is 1")
    return [
        ProbeChannel(axis=np.eye(3)[n], strength=float(alpha[n]), efficiency=float(eta[n]))
        for n in range(3)
    ]


def dissipator(f: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Lindblad dissipator ``f rho f^dag - (f^dag f rho + rho f^dag f) / 2``."""
    fd = dag(f)
    fdf = fd @ f
    return f @ rho @ fd - 0.5 * (fdf @ rho + rho @ fdf)


def meas_superop(f: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Homodyne back-action ``f rho + rho f^dag - <f + f^dag> rho``."""
    fd = dag(f)
    mean = expect(f + fd, rho)[..., None, None]
    return f @ rho + rho @ fd - mean * rho


def hamiltonian(b) -> np.ndarray:
    return np.tensordot(np.asarray(b, dtype=float), PAULI, axes=(-1, 0))


def larmor_unitary(b, dt: float) -> np.ndarray:
    """``exp(-i b.sigma dt)`` in closed form."""
    b = np.asarray(b, dtype=float)
    mag = np.linalg.norm(b, axis=-1)
    safe = np.where(mag > 0, mag, 1.0)
    n = b / safe[..., None]
    c = np.cos(mag * dt)[..., None, None]
    s = np.sin(mag * dt)[..., None, None]
    return c * IDENTITY - 1j * s * hamiltonian(n)


def _coherent(b, rho):
    h = hamiltonian(b)
    return -1j * (h @ rho - rho @ h)


def _lindblad_part(rho, probes, lindblad):
    out = np.zeros_like(rho)
    for p in probes:
        out = out + p.strength * dissipator(p.operator, rho)
    for ch in lindblad:
        out = out + ch.rate * dissipator(ch.operator, rho)
    return out


def _normalise(rho):
    rho = 0.5 * (rho + dag(rho))
    return rho / trace(rho).real[..., None, None]


def signal_increment(rho, probes, dW, dt):
    """Detector increments ``dY_n`` produced by state ``rho`` and noise ``dW``."""
    dW = np.asarray(dW, dtype=float)
    dY = np.empty(np.broadcast_shapes(dW.shape, rho.shape[:-2] + (len(probes),)))
    for n, p in enumerate(probes):
        mean = expect(p.operator + dag(p.operator), rho).real
        dY[..., n] = np.sqrt(p.efficiency) * dW[..., n] + p.efficiency * np.sqrt(p.strength) * mean * dt
    return dY


def sme_true_step(
    rho: np.ndarray,
    b,
    probes: Sequence[ProbeChannel],
    dW,
    dt: float,
    scheme: str = "split",
    lindblad: Sequence[LindbladChannel] = (),
):
    """Advance the state of an observer who knows the true field by one step.

    Returns ``(rho_next, dY)`` where ``dY[..., n]`` is the detector increment
    of ``probes[n]`` during the step.

    ``scheme`` selects the discretisation:

    ``"euler"``
        Plain Ito-Euler of every term. Algebraically identical to the Euler
        step of the Bloch equations.
    ``"split"``
        Exact precession ``U = exp(-i b.sigma dt)`` applied after an Ito-Euler
        step of the damping and back-action terms. The default reference.
    ``"kraus"``
        Completely positive measurement-operator update, positive
        semidefinite by construction for any step size.

    The result is always re-normalised to unit trace and re-symmetrised.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    rho = np.asarray(rho, dtype=complex)
    dW = np.asarray(dW, dtype=float)
    dY = signal_increment(rho, probes, dW, dt)

    if scheme == "kraus":
        h = hamiltonian(b)
        k = IDENTITY - 1j * h * dt
        incoherent = np.zeros_like(rho)
        for n, p in enumerate(probes):
            f = p.operator
            mean = expect(f + dag(f), rho).real
            # normalised innovation plus the mean signal
            dy = dW[..., n] + np.sqrt(p.efficiency * p.strength) * mean * dt
            k = k - 0.5 * p.strength * dt * (dag(f) @ f) + np.sqrt(p.efficiency * p.strength) * dy[..., None, None] * f
            incoherent = incoherent + (1.0 - p.efficiency) * p.strength * dt * (f @ rho @ dag(f))
        for ch in lindblad:
            k = k - 0.5 * ch.rate * dt * (dag(ch.operator) @ ch.operator)
            incoherent = incoherent + ch.rate * dt * (ch.operator @ rho @ dag(ch.operator))
        return _normalise(k @ rho @ dag(k) + incoherent), dY

    d = _lindblad_part(rho, probes, lindblad) * dt
    for n, p in enumerate(probes):
        d = d + np.sqrt(p.efficiency * p.strength) * meas_superop(p.operator, rho) * dW[..., n, None, None]
    if scheme == "euler":
        return _normalise(rho + d + _coherent(b, rho) * dt), dY
    u = larmor_unitary(b, dt)
    return _normalise(u @ (rho + d) @ dag(u)), dY


def unconditional_step(rho, b, probes, dt, scheme: str = "split", lindblad=()):
    """Deterministic master-equation step (every detector efficiency set to 0)."""
    rho = np.asarray(rho, dtype=complex)
    d = _lindblad_part(rho, probes, lindblad) * dt
    if scheme == "euler":
        return _normalise(rho + d + _coherent(b, rho) * dt)
    if scheme != "split":
        raise ValueError(f"unknown scheme {scheme!r}")
    u = larmor_unitary(b, dt)
    return _normalise(u @ (rho + d) @ dag(u))


# Augmented-space forms. These keep the parameter register explicit and are
# used to cross-check the per-candidate equations.


def augmented_density_matrix(P, rhos) -> np.ndarray:
    """Block-diagonal ``sum_k P_k |k><k| (x) rho_k`` of shape ``(2N, 2N)``."""
    P = np.asarray(P, dtype=float)
    rhos = np.asarray(rhos, dtype=complex)
    n = len(P)
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    for k in range(n):
        out[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = P[k] * rhos[k]
    return out


def augmented_sme_increment(P, rhos, fields, probes, dY, dt) -> np.ndarray:
    """Increment of the augmented density matrix driven by detector record ``dY``.

    The Hamiltonian is block diagonal with ``b_k . sigma`` in block ``k``;
    probe operators act as ``I_N (x) sigma_n``. The innovation subtracts the
    ensemble expectation, i.e. the trace over the full augmented state.
    The trace of block ``k`` of the returned matrix is the increment of
    ``P_k``.
    """
    n = len(P)
    rho = augmented_density_matrix(P, rhos)
    h = np.zeros_like(rho)
    for k in range(n):
        h[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = hamiltonian(fields[k])
    eye_n = np.eye(n)
    d = -1j * (h @ rho - rho @ h) * dt
    for idx, p in enumerate(probes):
        m = np.kron(eye_n, p.operator)
        md = dag(m)
        mean_e = np.trace((m + md) @ rho).real
        d = d + p.strength * dissipator(m, rho) * dt
        innov = dY[idx] - p.efficiency * np.sqrt(p.strength) * mean_e * dt
        d = d + np.sqrt(p.strength) * (m @ rho + rho @ md - mean_e * rho) * innov
    return d


def posterior_increment_matrix_form(P, R, r_true, alpha, eta, dW, dt) -> np.ndarray:
    """Posterior increment written with candidate-component matrices.

    ``C[n, j]`` holds component ``n`` of candidate Bloch vector ``j``. This
    form needs the true state ``r_true`` and the raw noise ``dW``, so it can
    only serve as a check on simulated data, never as a filter.
    """
    P = np.asarray(P, dtype=float)
    C = np.asarray(R, dtype=float).T
    alpha = np.asarray(alpha, dtype=float)
    eta = np.asarray(eta, dtype=float)
    Ct = (eta * alpha)[:, None] * C
    upsilon = eta * alpha * np.asarray(r_true, dtype=float)
    uc = upsilon @ C
    cp = C @ P
    G = 2.0 * P[:, None] * (C.T - (C @ P)[None, :])
    d_omega = np.sqrt(eta * alpha) * np.asarray(dW, dtype=float)
    drift = P * uc - P * (P @ uc) - P * (cp @ Ct) + P * (cp @ (Ct @ P))
    return 4.0 * drift * dt + G @ d_omega

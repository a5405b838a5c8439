"""Augmented quantum filter over a finite set of candidate fields.

Each candidate ``b_k`` carries its own conditional Bloch vector ``r_k``,
driven by the observed record through its own innovation, and a weight
``P_k``. The weights follow::

    dP_k = P_k sum_n sqrt(eta_n alpha_n) (2 r_k,n - <.>_E,n) dV_n
    sqrt(eta_n) dV_n = dY_n - eta_n sqrt(alpha_n) <.>_E,n dt

with ``<.>_E,n = 2 sum_k P_k r_k,n``. Negative weights produced by an Euler
overshoot are clamped to zero before renormalising; the candidate keeps
evolving and can recover weight later.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .bloch import ProbeVectors, candidate_step, clamp_to_ball
from .engine import COMPLETED, StepConfig, TrajectoryStatus, default_norm_tol
from .truth import CHUNK, MeasurementRecord

INNOVATIONS = ("candidate", "ensemble")
P_TOL = 1e-6


@dataclass(frozen=True)
class CandidateSet:
    fields: np.ndarray

    def __post_init__(self):
        f = np.array(self.fields, dtype=float, copy=True)
        if f.ndim != 2 or f.shape[1] != 3 or f.shape[0] < 1:
            raise ValueError("candidate fields must have shape (N, 3) with N >= 1")
        if not np.all(np.isfinite(f)):
            raise ValueError("candidate fields must be finite")
        f.setflags(write=False)
        object.__setattr__(self, "fields", f)

    def __len__(self):
        return self.fields.shape[0]

    def nearest(self, b) -> int:
        """Index of the candidate closest to ``b`` (lowest index on ties)."""
        d = np.linalg.norm(self.fields - np.asarray(b, float), axis=1)
        return int(np.argmin(d))


@dataclass
class AugmentedState:
    candidates: CandidateSet
    R: np.ndarray
    P: np.ndarray

    @classmethod
    def initial(cls, candidates: CandidateSet, r0, prior=None) -> "AugmentedState":
        n = len(candidates)
        R = np.tile(np.asarray(r0, dtype=float), (n, 1))
        if prior is None:
            P = np.full(n, 1.0 / n)
        else:
            P = np.asarray(prior, dtype=float).copy()
            if P.shape != (n,) or np.any(P < 0) or P.sum() <= 0:
                raise ValueError("prior must be a non-negative weight per candidate")
            P = P / P.sum()
        return cls(candidates, R, P)

    def copy(self) -> "AugmentedState":
        return AugmentedState(self.candidates, self.R.copy(), self.P.copy())


def ensemble_expectation(aug: AugmentedState, axis: Optional[int] = None):
    """``<sigma_n + sigma_n^dag>_E = 2 sum_k P_k r_k,n`` for one probe axis or all three."""
    mean = 2.0 * (aug.P @ aug.R)
    return mean if axis is None else float(mean[axis])


def posterior_increment(aug: AugmentedState, dY, pv: ProbeVectors, dt) -> np.ndarray:
    """Pre-clamp ``dP_k``; sums to zero up to rounding."""
    e_mean = ensemble_expectation(aug)
    drive = np.sqrt(pv.a) * (np.asarray(dY, float) - pv.e * np.sqrt(pv.a) * e_mean * dt)
    return aug.P * ((2.0 * aug.R - e_mean) @ drive)


@dataclass(frozen=True)
class StepDiagnostics:
    sum_dP: float
    status: TrajectoryStatus = COMPLETED


def filter_step(aug: AugmentedState, dY, pv: ProbeVectors, dt, innovation: str = "candidate",
                norm_tol: Optional[float] = None):
    """Advance every candidate and the posterior by one record increment.

    Returns ``(new_state, diagnostics)``. ``innovation="ensemble"`` drives
    the candidates with the ensemble-averaged innovation instead of their
    own, for comparison experiments.
    """
    if innovation not in INNOVATIONS:
        raise ValueError(f"unknown innovation {innovation!r}")
    norm_tol = default_norm_tol(dt) if norm_tol is None else norm_tol
    dY = np.asarray(dY, dtype=float)
    dP = posterior_increment(aug, dY, pv, dt)
    shared = None
    if innovation == "ensemble":
        shared = dY - pv.e * np.sqrt(pv.a) * ensemble_expectation(aug) * dt
    R = candidate_step(aug.R, aug.candidates.fields, pv, dY, dt, innovation=shared)
    R, bad = clamp_to_ball(R, norm_tol)
    status = COMPLETED
    P = aug.P + dP
    if np.any(bad):
        status = TrajectoryStatus.unstable(0, "Bloch norm overshoot")
    elif not np.all(np.isfinite(P)) or np.any(P < -P_TOL) or np.any(P > 1.0 + P_TOL):
        status = TrajectoryStatus.unstable(0, "posterior left the simplex")
    P = np.clip(P, 0.0, None)
    P = P / P.sum()
    return AugmentedState(aug.candidates, R, P), StepDiagnostics(float(dP.sum()), status)


def cos_theta(P, fields, b_true) -> np.ndarray:
    """Posterior-weighted ``|b_u|^-2 sum_k P_k (b_k . b_u)``; works on a history ``(..., N)``."""
    b_true = np.asarray(b_true, dtype=float)
    norm2 = float(b_true @ b_true)
    if norm2 == 0.0:
        raise ValueError("true field must have non-zero magnitude")
    return np.asarray(P) @ (np.asarray(fields, float) @ b_true) / norm2


def map_estimate(P) -> int:
    """Index of the largest weight; ties go to the lowest index."""
    return int(np.argmax(np.asarray(P)))


@dataclass
class FilterResult:
    times: np.ndarray
    P: np.ndarray
    snapshots: dict
    final: AugmentedState
    status: TrajectoryStatus
    max_sum_dP: float
    max_norm_error: float = 0.0
    steps_done: int = 0


class FilterRunner:
    """Feeds record increments through the compiled filter loop.

    Decimated posterior history is kept every ``config.stride`` steps, and
    full snapshots at the requested ``snapshot_times``.
    """

    def __init__(self, candidates: CandidateSet, r0, probes: ProbeVectors, config: StepConfig,
                 prior=None, snapshot_times: Sequence[float] = (), innovation: str = "candidate",
                 norm_tol: Optional[float] = None):
        if innovation not in INNOVATIONS:
            raise ValueError(f"unknown innovation {innovation!r}")
        self.state = AugmentedState.initial(candidates, r0, prior)
        self.probes = probes
        self.config = config
        self.innovation = innovation
        self.norm_tol = default_norm_tol(config.dt) if norm_tol is None else norm_tol
        self.step = 0
        self.status = COMPLETED
        self._resid = np.zeros(2)
        n = len(candidates)
        self._rec = np.empty((config.n_steps // config.stride + 2, n))
        self._rec[0] = self.state.P
        self._rec_steps = [0]
        self._pos = 1
        self._snap_steps = sorted({config.step_of(t) for t in snapshot_times})
        self.snapshots = {}
        self._take_snapshots()
        self._alpha = probes.a
        self._eta = probes.e
        self._fields = np.ascontiguousarray(candidates.fields)

    def _take_snapshots(self):
        for s in self._snap_steps:
            if s == self.step:
                self.snapshots[s * self.config.dt] = self.state.P.copy()

    def consume(self, dY: np.ndarray):
        if not self.status.completed:
            return
        dY = np.ascontiguousarray(dY, dtype=float)
        start = 0
        while start < dY.shape[0] and self.status.completed:
            upcoming = [s for s in self._snap_steps if s > self.step]
            stop = dY.shape[0]
            if upcoming:
                stop = min(stop, start + upcoming[0] - self.step)
            self._run(dY[start:stop])
            start = stop

    def _run(self, dY):
        stride = self.config.stride
        before = self._pos
        code, idx, self._pos = _kernels.filter_chunk(
            self.state.R, self._fields, self.state.P, self._alpha, self._eta, dY, self.config.dt,
            self.norm_tol, P_TOL, self.innovation == "ensemble", self.step, stride, self._rec,
            self._pos, self._resid,
        )
        first = (self.step // stride + 1) * stride
        self._rec_steps.extend(range(first, first + stride * (self._pos - before), stride))
        if code != _kernels.OK:
            self.status = TrajectoryStatus.unstable(self.step + idx + 1, _kernels.REASONS[code])
            self.step += idx
            return
        self.step += dY.shape[0]
        self._take_snapshots()

    def result(self) -> FilterResult:
        steps = list(self._rec_steps)
        rec = self._rec[: self._pos]
        if self.status.completed and steps[-1] != self.step:
            steps.append(self.step)
            rec = np.vstack([rec, self.state.P])
        return FilterResult(
            times=np.array(steps) * self.config.dt,
            P=rec.copy(),
            snapshots=dict(self.snapshots),
            final=self.state.copy(),
            status=self.status,
            max_sum_dP=float(self._resid[0]),
            max_norm_error=float(self._resid[1]),
            steps_done=self.step,
        )


def run_filter(record: MeasurementRecord, candidates: CandidateSet, r0, prior=None,
               snapshot_times: Sequence[float] = (), record_every: Optional[int] = None,
               innovation: str = "candidate", norm_tol: Optional[float] = None) -> FilterResult:
    """Replay a stored record through the augmented filter.

    Only the increments, step size and probe settings of the record are read.
    """
    config = StepConfig(dt=record.dt, T=max(record.T, record.dt), record_every=record_every)
    runner = FilterRunner(candidates, r0, record.probes, config, prior, snapshot_times, innovation, norm_tol)
    for start in range(0, record.n_steps, CHUNK):
        runner.consume(record.increments[start : start + CHUNK])
    return runner.result()

"""Simulated laboratory: hidden true trajectory and the detector record it emits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .bloch import ProbeVectors
from .engine import COMPLETED, RandomStream, StepConfig, TrajectoryStatus, default_norm_tol, wiener

CHUNK = 1 << 15


@dataclass(frozen=True)
class MeasurementRecord:
    """Per-step detector increments ``dY[step, channel]`` for the x, y, z probes.

    The true field is deliberately not part of the record; it lives on the
    :class:`TrueTrajectory` returned next to it and is only used for scoring.
    """

    dt: float
    probes: ProbeVectors
    increments: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float, copy=True)
        if inc.ndim != 2 or inc.shape[1] != 3:
            raise ValueError("increments must have shape (steps, 3)")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    def metadata(self) -> dict:
        return {
            "dt": self.dt,
            "alpha": list(self.probes.alpha),
            "eta": list(self.probes.eta),
            "seed": self.seed,
            "n_steps": self.n_steps,
            "channels": ["x", "y", "z"],
        }

    def save(self, path) -> Path:
        """Write ``.npz`` (binary) or ``.csv`` (rows ``step,channel,dY`` plus a ``.json`` sidecar)."""
        path = Path(path)
        try:
            if path.suffix == ".csv":
                steps = np.repeat(np.arange(self.n_steps), 3)
                chans = np.tile(np.arange(3), self.n_steps)
                with open(path, "w", newline="") as fh:
                    fh.write("step,channel,dY\n")
                    np.savetxt(
                        fh,
                        np.column_stack([steps, chans, self.increments.reshape(-1)]),
                        fmt=["%d", "%d", "%.17g"],
                        delimiter=",",
                    )
                path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2) + "\n")
            else:
                if path.suffix != ".npz":
                    path = path.with_suffix(".npz")
                with open(path, "wb") as fh:
                    np.savez(fh, increments=self.increments, metadata=json.dumps(self.metadata()))
        except OSError as exc:
            raise OSError(f"cannot write record to {path}: {exc}") from exc
        return path

    @classmethod
    def load(cls, path) -> "MeasurementRecord":
        path = Path(path)
        if path.suffix == ".csv":
            meta = json.loads(path.with_suffix(".json").read_text())
            data = np.loadtxt(path, delimiter=",", skiprows=1)
            inc = np.zeros((meta["n_steps"], 3))
            inc[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2]
        else:
            with np.load(path) as z:
                inc = z["increments"]
                meta = json.loads(str(z["metadata"]))
        return cls(
            dt=float(meta["dt"]),
            probes=ProbeVectors(tuple(meta["alpha"]), tuple(meta["eta"])),
            increments=inc,
            seed=meta.get("seed"),
        )


@dataclass
class TrueTrajectory:
    b_true: np.ndarray
    times: np.ndarray
    r: np.ndarray
    status: TrajectoryStatus = COMPLETED


class TruthSimulator:
    """Steps the true Bloch vector and emits detector increments chunk by chunk."""

    def __init__(self, b_true, r0, probes: ProbeVectors, config: StepConfig, stream: RandomStream,
                 norm_tol: Optional[float] = None):
        self.b = np.asarray(b_true, dtype=float).copy()
        r0 = np.asarray(r0, dtype=float)
        if np.linalg.norm(r0) > 1.0 + 1e-12:
            raise ValueError("initial Bloch vector must lie inside the unit ball")
        self.r = r0.copy()
        self.probes = probes
        self.config = config
        self.stream = stream
        self.norm_tol = default_norm_tol(config.dt) if norm_tol is None else norm_tol
        self.step = 0
        self.status = COMPLETED
        n_rec = config.n_steps // config.stride + 2
        self._rec = np.empty((n_rec, 3))
        self._rec[0] = self.r
        self._rec_steps = [0]
        self._pos = 1
        self._alpha = probes.a
        self._eta = probes.e

    @property
    def remaining(self) -> int:
        return self.config.n_steps - self.step

    def advance(self, m: int) -> np.ndarray:
        """Simulate ``m`` more steps and return their increments (fewer if unstable)."""
        m = min(m, self.remaining)
        dW = wiener(self.stream, self.config.dt, 3, steps=m)
        dY = np.empty((m, 3))
        stride = self.config.stride
        before = self._pos
        code, idx, self._pos = _kernels.truth_chunk(
            self.r, self.b, self._alpha, self._eta, dW, self.config.dt, self.norm_tol,
            dY, self.step, stride, self._rec, self._pos,
        )
        first = (self.step // stride + 1) * stride
        self._rec_steps.extend(range(first, first + stride * (self._pos - before), stride))
        if code != _kernels.OK:
            self.status = TrajectoryStatus.unstable(self.step + idx + 1, _kernels.REASONS[code])
            self.step += idx
            return dY[:idx]
        self.step += m
        return dY

    def trajectory(self) -> TrueTrajectory:
        steps = list(self._rec_steps)
        rec = self._rec[: self._pos]
        if self.status.completed and steps[-1] != self.step:
            steps.append(self.step)
            rec = np.vstack([rec, self.r])
        return TrueTrajectory(self.b.copy(), np.array(steps) * self.config.dt, rec.copy(), self.status)


def simulate_record(b_true, r0, probes: ProbeVectors, config: StepConfig, stream, method: str = "bloch",
                    norm_tol: Optional[float] = None):
    """Generate ``(MeasurementRecord, TrueTrajectory)`` for field ``b_true``.

    ``stream`` may be a :class:`RandomStream` or an integer seed. With
    ``method="oracle"`` the true state is propagated with the plain-Euler
    density-matrix step instead of the compiled Bloch loop (slow; for
    cross-checks on short records).
    """
    if not isinstance(stream, RandomStream):
        stream = RandomStream(stream)
    if method == "oracle":
        return _simulate_with_oracle(b_true, r0, probes, config, stream)
    if method != "bloch":
        raise ValueError(f"unknown method {method!r}")
    sim = TruthSimulator(b_true, r0, probes, config, stream, norm_tol)
    chunks = []
    while sim.remaining and sim.status.completed:
        chunks.append(sim.advance(CHUNK))
    inc = np.concatenate(chunks) if chunks else np.zeros((0, 3))
    return MeasurementRecord(config.dt, probes, inc, stream.seed), sim.trajectory()


def _simulate_with_oracle(b_true, r0, probes, config, stream):
    from . import oracle

    channels = [oracle.ProbeChannel(np.eye(3)[n], probes.alpha[n], probes.eta[n]) for n in range(3)]
    rho = oracle.density_matrix(r0)
    n = config.n_steps
    dW = wiener(stream, config.dt, 3, steps=n)
    inc = np.empty((n, 3))
    keep = config.record_steps()
    rs = [oracle.bloch_vector(rho)]
    for i in range(n):
        rho, inc[i] = oracle.sme_true_step(rho, b_true, channels, dW[i], config.dt, scheme="euler")
        if i + 1 in keep:
            rs.append(oracle.bloch_vector(rho))
    status = COMPLETED
    if not oracle.is_physical(rho, psd_tol=1e-8, trace_tol=1e-10):
        status = TrajectoryStatus.unstable(n, "density matrix left the state space")
    truth = TrueTrajectory(np.asarray(b_true, float), keep * config.dt, np.array(rs), status)
    return MeasurementRecord(config.dt, probes, inc, stream.seed), truth

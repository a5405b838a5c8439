"""Random streams, step configuration and the generic Ito-Euler loop."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


class RandomStream:
    """Seeded source of standard normal variates.

    The algorithm is fixed: raw 64-bit PCG64 output (whose stream numpy
    guarantees across releases and platforms), the top 53 bits mapped to a
    uniform on ``(0, 1]`` or ``[0, 1)``, and the Box-Muller transform applied
    to consecutive pairs. Draws are buffered by pair so the sequence does not
    depend on how requests are chunked.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")
        self.seed = seed
        self._bitgen = np.random.PCG64(seed)
        self._spare: Optional[float] = None

    def standard_normal(self, shape) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        out = np.empty(n)
        start = 0
        if n and self._spare is not None:
            out[0] = self._spare
            self._spare = None
            start = 1
        need = n - start
        if need > 0:
            pairs = (need + 1) // 2
            raw = self._bitgen.random_raw(2 * pairs)
            u1 = ((raw[0::2] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _INV_2_53
            u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
            rad = np.sqrt(-2.0 * np.log(u1))
            z = np.empty(2 * pairs)
            z[0::2] = rad * np.cos(_TWO_PI * u2)
            z[1::2] = rad * np.sin(_TWO_PI * u2)
            out[start:] = z[:need]
            if 2 * pairs > need:
                self._spare = float(z[-1])
        return out.reshape(shape)


def wiener(stream: RandomStream, dt: float, n: int, steps: Optional[int] = None) -> np.ndarray:
    """Wiener increments with variance ``dt``: shape ``(n,)`` or ``(steps, n)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    shape = (n,) if steps is None else (steps, n)
    return math.sqrt(dt) * stream.standard_normal(shape)


@dataclass(frozen=True)
class StepConfig:
    """Time grid of a trajectory.

    ``record_every`` is the decimation factor for stored snapshots; by
    default roughly 2000 snapshots are kept per trajectory.
    """

    dt: float = 1e-5
    T: float = 1.0
    record_every: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.dt <= 1e-3:
            raise ValueError(f"dt must lie in (0, 1e-3], got {self.dt}")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def stride(self) -> int:
        if self.record_every is not None:
            return int(self.record_every)
        return max(1, self.n_steps // 2000)

    def record_steps(self) -> np.ndarray:
        """Step indices at which snapshots are stored (0 is the initial state)."""
        steps = np.arange(0, self.n_steps + 1, self.stride)
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps

    def step_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if not 0 <= k <= self.n_steps:
            raise ValueError(f"time {t} outside [0, {self.T}]")
        return k


def default_norm_tol(dt: float) -> float:
    """Largest Bloch-norm overshoot repaired by projection rather than flagged.

    A single Euler step of a pure state overshoots the unit sphere by about
    ``2 dt (chi^2 - 2)``, so any fixed tolerance below ``~50 dt`` flags
    nearly every trajectory. Overshoots beyond ``100 dt`` (and at least
    ``1e-4``) are not discretisation noise and mark the trajectory unstable.
    """
    return max(1e-4, 100.0 * dt)


@dataclass(frozen=True)
class TrajectoryStatus:
    completed: bool = True
    step: Optional[int] = None
    reason: Optional[str] = None

    @classmethod
    def unstable(cls, step: int, reason: str) -> "TrajectoryStatus":
        return cls(False, int(step), reason)

    def __str__(self):
        return "completed" if self.completed else f"unstable(step={self.step}, {self.reason})"


COMPLETED = TrajectoryStatus()


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray


def run_trajectory(
    initial,
    stepper: Callable[[np.ndarray, np.ndarray, float], np.ndarray],
    config: StepConfig,
    stream: RandomStream,
    n_noise: int = 3,
    check: Optional[Callable[[np.ndarray], Optional[str]]] = None,
    chunk: int = 4096,
):
    """Integrate ``state -> stepper(state, dW, dt)`` on the grid of ``config``.

    ``check`` returns a reason string when a state violates an invariant.
    Integration stops at the first non-finite or rejected state; the stored
    series then ends at the last accepted snapshot.
    """
    state = np.array(initial, copy=True)
    dt = config.dt
    steps = config.record_steps()
    keep = set(steps.tolist())
    times, states = [0.0], [state.copy()]
    status = COMPLETED
    done = 0
    while done < config.n_steps and status.completed:
        m = min(chunk, config.n_steps - done)
        dW = wiener(stream, dt, n_noise, steps=m)
        for i in range(m):
            state = stepper(state, dW[i], dt)
            k = done + i + 1
            reason = None if np.all(np.isfinite(state)) else "non-finite state"
            if reason is None and check is not None:
                reason = check(state)
            if reason is not None:
                status = TrajectoryStatus.unstable(k, reason)
                break
            if k in keep:
                times.append(k * dt)
                states.append(state.copy())
        done += m
    return Trajectory(np.array(times), np.array(states)), status

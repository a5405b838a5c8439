"""Single-shot and ensemble experiments: simulate a record, filter it, score it."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..bayes import CandidateSet, FilterRunner, cos_theta, map_estimate
from ..engine import RandomStream, TrajectoryStatus
from ..truth import CHUNK, TruthSimulator
from .config import ExperimentConfig
from .grid import candidates_for


class EnsembleAborted(RuntimeError):
    """Too many trajectories were rejected as numerically unstable."""


@dataclass
class TrialResult:
    seed: int
    times: np.ndarray
    cos_theta: np.ndarray
    p_true: np.ndarray
    map_path: np.ndarray
    p_max: np.ndarray
    snapshots: dict
    final_P: np.ndarray
    truth_status: TrajectoryStatus
    filter_status: TrajectoryStatus
    max_sum_dP: float
    max_norm_error: float
    truth_index: int

    @property
    def completed(self) -> bool:
        return self.truth_status.completed and self.filter_status.completed

    @property
    def map_index(self) -> int:
        return map_estimate(self.final_P)

    @property
    def status(self) -> TrajectoryStatus:
        return self.truth_status if not self.truth_status.completed else self.filter_status


def run_trial(config: ExperimentConfig, seed: int, candidates: Optional[CandidateSet] = None) -> TrialResult:
    """Simulate one record with ``seed`` and run the filter over it as it is produced."""
    candidates = candidates_for(config) if candidates is None else candidates
    step = config.step_config()
    probes = config.probes()
    truth = TruthSimulator(config.b_true, config.r0, probes, step, RandomStream(seed), config.norm_tol)
    filt = FilterRunner(candidates, config.r0, probes, step, config.prior, config.snapshot_times,
                        config.innovation, config.norm_tol)
    while truth.remaining and truth.status.completed and filt.status.completed:
        filt.consume(truth.advance(CHUNK))
    res = filt.result()
    k0 = candidates.nearest(config.b_true)
    return TrialResult(
        seed=seed,
        times=res.times,
        cos_theta=cos_theta(res.P, candidates.fields, config.b_true),
        p_true=res.P[:, k0].copy(),
        map_path=np.argmax(res.P, axis=1),
        p_max=res.P.max(axis=1),
        snapshots=res.snapshots,
        final_P=res.final.P.copy(),
        truth_status=truth.status,
        filter_status=res.status,
        max_sum_dP=res.max_sum_dP,
        max_norm_error=res.max_norm_error,
        truth_index=k0,
    )


def run_single_shot(config: ExperimentConfig, seed: Optional[int] = None) -> TrialResult:
    return run_trial(config, config.seed_base if seed is None else seed)


@dataclass
class EnsembleResult:
    """Aggregated cos(theta) over completed trials, sorted by seed."""

    times: np.ndarray
    mean_cos: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_completed: int
    seeds: list
    rejected: list
    cos_trials: np.ndarray
    p_true_trials: np.ndarray
    map_hits: np.ndarray
    max_sum_dP: float
    max_norm_error: float
    first: Optional[TrialResult] = field(default=None, repr=False)

    @property
    def n_trials(self) -> int:
        return len(self.seeds)

    @property
    def rejection_rate(self) -> float:
        return len(self.rejected) / self.n_trials

    def final_cos(self) -> np.ndarray:
        return self.cos_trials[:, -1]


def _fsum_mean(a: np.ndarray) -> np.ndarray:
    """Column means with exactly rounded sums, so trial order cannot matter."""
    return np.array([math.fsum(col) / a.shape[0] for col in a.T])


def bootstrap_band(samples: np.ndarray, n_resamples: int, seed: int, level: float = 0.95):
    """Percentile bootstrap band of the column means of ``samples`` (trials x times)."""
    n = samples.shape[0]
    if n_resamples == 0 or n < 2:
        m = _fsum_mean(samples)
        return m.copy(), m.copy()
    rng = np.random.default_rng(seed)
    weights = rng.multinomial(n, np.full(n, 1.0 / n), size=n_resamples) / n
    boot = weights @ samples
    q = (1.0 - level) / 2.0
    return np.quantile(boot, q, axis=0), np.quantile(boot, 1.0 - q, axis=0)


def aggregate(trials: list, config: ExperimentConfig) -> EnsembleResult:
    """Combine trial results; the outcome depends only on the set of trials, not their order."""
    trials = sorted(trials, key=lambda tr: tr.seed)
    done = [tr for tr in trials if tr.completed]
    rejected = [(tr.seed, str(tr.status)) for tr in trials if not tr.completed]
    if not done:
        raise EnsembleAborted(f"all {len(trials)} trajectories were rejected: {rejected[:5]}")
    cos = np.array([tr.cos_theta for tr in done])
    pk0 = np.array([tr.p_true for tr in done])
    lo, hi = bootstrap_band(cos, config.bootstrap, config.seed_base)
    return EnsembleResult(
        times=done[0].times,
        mean_cos=_fsum_mean(cos),
        ci_low=lo,
        ci_high=hi,
        n_completed=len(done),
        seeds=[tr.seed for tr in trials],
        rejected=rejected,
        cos_trials=cos,
        p_true_trials=pk0,
        map_hits=np.array([tr.map_index == tr.truth_index for tr in done]),
        max_sum_dP=max(tr.max_sum_dP for tr in trials),
        max_norm_error=max(tr.max_norm_error for tr in done),
        first=done[0],
    )


def _trial_worker(args):
    config_dict, seed = args
    return run_trial(ExperimentConfig.from_dict(config_dict), seed)


def run_trials(config: ExperimentConfig) -> list:
    seeds = config.seeds()
    if config.workers == 1:
        candidates = candidates_for(config)
        return [run_trial(config, s, candidates) for s in seeds]
    payload = [(config.to_dict(), s) for s in seeds]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_trial_worker, payload))


def run_ensemble(config: ExperimentConfig) -> EnsembleResult:
    """Run ``config.trials`` independent record/filter pairs with seeds ``seed_base + i``.

    Raises :class:`EnsembleAborted` when more than ``config.max_rejection``
    of the trajectories are unstable, which points at a too-coarse ``dt``.
    """
    trials = run_trials(config)
    result = aggregate(trials, config)
    if result.rejection_rate > config.max_rejection:
        raise EnsembleAborted(
            f"{len(result.rejected)}/{result.n_trials} trajectories unstable at dt={config.dt} "
            f"(limit {config.max_rejection:.0%}); first: {result.rejected[:3]}"
        )
    return result

"""CSV and manifest output. Every float is written with 17 significant digits."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import ExperimentConfig

ENSEMBLE_HEADER = ["t", "mean_cos_theta", "ci_low", "ci_high", "n_completed"]
SNAPSHOT_HEADER = ["t", "k", "bx", "by", "bz", "P_k"]
TRACE_HEADER = ["t", "cos_theta", "map_index", "P_max"]
MANIFEST_VERSION = 1


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(path, header, rows):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _read_rows(path, header):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise ValueError(f"{path}: expected header {header}")
    return rows[1:]


def write_ensemble_csv(result, path) -> Path:
    rows = (
        [fmt(t), fmt(m), fmt(lo), fmt(hi), str(result.n_completed)]
        for t, m, lo, hi in zip(result.times, result.mean_cos, result.ci_low, result.ci_high)
    )
    return _write_rows(path, ENSEMBLE_HEADER, rows)


def read_ensemble_csv(path) -> dict:
    rows = _read_rows(path, ENSEMBLE_HEADER)
    a = np.array([[float(v) for v in r[:4]] for r in rows]).reshape(-1, 4)
    return {
        "t": a[:, 0],
        "mean_cos_theta": a[:, 1],
        "ci_low": a[:, 2],
        "ci_high": a[:, 3],
        "n_completed": np.array([int(r[4]) for r in rows]),
    }


def write_snapshots_csv(snapshots: dict, fields, path) -> Path:
    """One row per (time, candidate): ``t, k, bx, by, bz, P_k``."""
    fields = np.asarray(fields)
    rows = []
    for t in sorted(snapshots):
        for k, p in enumerate(snapshots[t]):
            rows.append([fmt(t), str(k), fmt(fields[k, 0]), fmt(fields[k, 1]), fmt(fields[k, 2]), fmt(p)])
    return _write_rows(path, SNAPSHOT_HEADER, rows)


def read_snapshots_csv(path):
    """Returns ``(snapshots, fields)`` in the shape accepted by :func:`write_snapshots_csv`."""
    rows = _read_rows(path, SNAPSHOT_HEADER)
    snaps, fields = {}, {}
    for r in rows:
        t, k = float(r[0]), int(r[1])
        snaps.setdefault(t, {})[k] = float(r[5])
        fields[k] = [float(v) for v in r[2:5]]
    out = {t: np.array([d[k] for k in sorted(d)]) for t, d in snaps.items()}
    return out, np.array([fields[k] for k in sorted(fields)])


def write_trace_csv(trial, path) -> Path:
    """Single-shot time series; the decimated posterior is reduced to its MAP index and weight."""
    rows = []
    for t, c, k, p in zip(trial.times, trial.cos_theta, trial.map_path, trial.p_max):
        rows.append([fmt(t), fmt(c), str(int(k)), fmt(p)])
    return _write_rows(path, TRACE_HEADER, rows)


def write_truth_csv(truth, path) -> Path:
    rows = ([fmt(t), fmt(r[0]), fmt(r[1]), fmt(r[2])] for t, r in zip(truth.times, truth.r))
    return _write_rows(path, ["t", "rx", "ry", "rz"], rows)


def write_manifest(config: ExperimentConfig, path, command: str, seeds, outputs, extra=None) -> Path:
    """Human-readable JSON with the full config, the seeds used and the files produced.

    ``spinfilter <command> --config <manifest>`` regenerates the outputs.
    """
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "config": config.to_dict(),
        "seeds": list(seeds),
        "outputs": sorted(str(Path(p).name) for p in outputs),
    }
    if extra:
        doc.update(extra)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())

"""Command-line entry point: ``spinfilter {simulate,filter,experiment}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional

from ..bayes import run_filter, cos_theta
from ..engine import RandomStream
from ..truth import MeasurementRecord, simulate_record
from . import export, plotting
from .config import SCENARIOS, ExperimentConfig
from .experiments import EnsembleAborted, TrialResult, run_ensemble
from .grid import candidates_for

log = logging.getLogger("spinfilter")

EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_ABORTED = 4

_VECTORS = {"true_direction", "alpha", "eta", "r0"}
_CHOICES = {"scenario": SCENARIOS, "innovation": ("candidate", "ensemble")}
_OPT_TYPES = {"record_every": int, "norm_tol": float}


def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("experiment configuration (overrides --config)")
    g.add_argument("--config", type=Path, help="JSON config file or a previous run manifest")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        kw = {"dest": f.name, "default": None}
        if f.name in _VECTORS:
            kw.update(nargs=3, type=float, metavar=("X", "Y", "Z"))
        elif f.name in ("snapshot_times", "prior"):
            kw.update(nargs="+", type=float)
        elif f.name == "candidates":
            kw.update(type=json.loads, help="JSON list of [bx, by, bz] triples")
        elif f.name in _CHOICES:
            kw.update(choices=_CHOICES[f.name])
        elif f.name in _OPT_TYPES:
            kw.update(type=_OPT_TYPES[f.name])
        else:
            kw.update(type=type(f.default))
        names = [flag]
        if f.name == "seed_base":
            names.append("--seed")
        g.add_argument(*names, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinfilter", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a detector record and the hidden true trajectory")
    sim.add_argument("--record-format", choices=("npz", "csv"), default="npz")
    _add_config_flags(sim)

    flt = sub.add_parser("filter", help="replay a stored record through the candidate filter")
    flt.add_argument("--record", type=Path, required=True)
    flt.add_argument("--no-plots", action="store_true")
    _add_config_flags(flt)

    exp = sub.add_parser("experiment", help="end-to-end ensemble of simulated records")
    exp.add_argument("--no-plots", action="store_true")
    _add_config_flags(exp)
    return parser


def config_from_args(args) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    return ExperimentConfig.from_dict(base)


def _cmd_simulate(config: ExperimentConfig, args) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record, truth = simulate_record(config.b_true, config.r0, config.probes(), config.step_config(),
                                    RandomStream(config.seed_base), norm_tol=config.norm_tol)
    rec_path = record.save(out / f"record.{args.record_format}")
    outputs = [rec_path, export.write_truth_csv(truth, out / "truth.csv")]
    if args.record_format == "csv":
        outputs.append(rec_path.with_suffix(".json"))
    export.write_manifest(config, out / "manifest.json", "simulate", [config.seed_base], outputs,
                          {"status": str(truth.status), "b_true": config.b_true.tolist()})
    log.info("record %s (%d steps), truth %s", rec_path, record.n_steps, truth.status)
    return 0 if truth.status.completed else EXIT_UNSTABLE


def _cmd_filter(config: ExperimentConfig, args) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = MeasurementRecord.load(args.record)
    # the record fixes the step size and the probes
    config = config.replace(dt=record.dt, T=record.T, alpha=list(record.probes.alpha), eta=list(record.probes.eta))
    cands = candidates_for(config)
    res = run_filter(record, cands, config.r0, config.prior, config.snapshot_times, config.record_every,
                     config.innovation, config.norm_tol)
    cos = cos_theta(res.P, cands.fields, config.b_true)
    k0 = cands.nearest(config.b_true)
    trial = TrialResult(
        seed=record.seed, times=res.times, cos_theta=cos, p_true=res.P[:, k0], map_path=res.P.argmax(axis=1),
        p_max=res.P.max(axis=1), snapshots=res.snapshots, final_P=res.final.P, truth_status=res.status,
        filter_status=res.status, max_sum_dP=res.max_sum_dP, max_norm_error=res.max_norm_error, truth_index=k0,
    )
    outputs = [
        export.write_trace_csv(trial, out / "trace.csv"),
        export.write_snapshots_csv(res.snapshots, cands.fields, out / "snapshots.csv"),
    ]
    if not args.no_plots:
        outputs.append(plotting.plot_trace(trial, out / "trace.png"))
        if res.snapshots:
            outputs.append(plotting.plot_posterior_frames(res.snapshots, cands.fields, config.b_true,
                                                          out / "posterior.png"))
    export.write_manifest(config, out / "manifest.json", "filter", [record.seed], outputs,
                          {"record": str(args.record), "status": str(res.status)})
    log.info("final cos theta %.6f, MAP index %d, %s", cos[-1], trial.map_index, res.status)
    return 0 if res.status.completed else EXIT_UNSTABLE


def _cmd_experiment(config: ExperimentConfig, args) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run_ensemble(config)
    except EnsembleAborted as exc:
        log.error("%s", exc)
        return EXIT_ABORTED
    cands = candidates_for(config)
    first = result.first
    outputs = [
        export.write_ensemble_csv(result, out / "ensemble.csv"),
        export.write_snapshots_csv(first.snapshots, cands.fields, out / "snapshots.csv"),
        export.write_trace_csv(first, out / "trace.csv"),
    ]
    if not args.no_plots:
        outputs.append(plotting.plot_cos_theta(result, out / "cos_theta.png"))
        if first.snapshots:
            outputs.append(plotting.plot_posterior_frames(first.snapshots, cands.fields, config.b_true,
                                                          out / "posterior.png"))
    extra = {
        "rejected": [list(r) for r in result.rejected],
        "rejection_rate": result.rejection_rate,
        "snapshot_seed": first.seed,
        "map_hit_rate": float(result.map_hits.mean()),
    }
    export.write_manifest(config, out / "manifest.json", "experiment", result.seeds, outputs, extra)
    log.info("%d/%d trajectories completed; final mean cos theta %.6f [%.6f, %.6f]",
             result.n_completed, result.n_trials, result.mean_cos[-1], result.ci_low[-1], result.ci_high[-1])
    if config.trials == 1 and not first.completed:
        return EXIT_UNSTABLE
    return 0


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = config_from_args(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"spinfilter: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handler = {"simulate": _cmd_simulate, "filter": _cmd_filter, "experiment": _cmd_experiment}[args.command]
    return handler(config, args)


if __name__ == "__main__":
    sys.exit(main())

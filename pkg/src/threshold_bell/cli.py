"""Command-line front end.

Each subcommand writes a column file, ``summary.json`` and the resolved
configuration into ``--out``.  Wall time goes to stderr only, so repeated
runs with the same configuration and seed give byte-identical files.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from threshold_bell import analytic as an
from threshold_bell.config import PRESETS, ConfigError, RunConfig, parse_config
from threshold_bell.experiment import (
    counts_from_arrays,
    correlation_curve,
    detection_pattern,
    fit_cos_visibility,
    is_graded,
    simulate_chunk,
    try_correlation,
)
from threshold_bell.output import OutputError, provenance, write_json, write_table
from threshold_bell.seeding import TAG_PATTERN, TAG_TRIALS, chunk_sizes, generator
from threshold_bell.sweep import SweepGrid, run_sweep, violation_region

log = logging.getLogger("threshold_bell")

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_UNDEFINED = 3


class UndefinedEverywhere(RuntimeError):
    """Every requested estimate was undefined (no coincidences anywhere)."""


def _estimate_dict(est) -> dict | None:
    if est is None:
        return None
    return {"e_value": est.e_value, "n_coincidences": est.n_coincidences, "standard_error": est.standard_error}


def cmd_analytic(cfg: RunConfig, out: Path) -> dict:
    p = cfg.analytic
    geom = an.geometry_from_thresholds(1.0, p.work_function_over_e0)
    rows = []
    for d in np.linspace(0.0, 0.5 * math.pi, p.samples):
        probs = an.coincidence_probs(float(d), geom)
        try:
            e = an.piecewise_correlation(float(d), geom)
        except an.UndefinedCorrelation:
            e = math.nan
        rows.append((float(d), e, probs.p_pp, probs.p_pm, probs.p_mp, probs.p_mm))
    try:
        res = an.analytic_chsh(geom, cfg.angle_set)
        s, terms = res.s_value, list(res.term_correlations)
    except an.UndefinedCorrelation:
        s, terms = None, None
    try:
        s_bf = an.chsh(
            lambda a, b: an.brute_force_correlation(a - b, 1.0, p.work_function_over_e0, p.grid_points),
            cfg.angle_set,
        ).s_value
    except an.UndefinedCorrelation:
        s_bf = None
    meta = provenance("analytic", cfg.seed, cfg.sha256) | {
        "work_function_over_e0": p.work_function_over_e0,
        "gamma": geom.gamma,
        "cosine_threshold": geom.cosine_threshold,
        "theta": geom.theta,
        "tau": geom.tau,
        "s": s,
    }
    write_table(out / "analytic.dat", ["delta_phi", "E", "p_pp", "p_pm", "p_mp", "p_mm"], rows, meta)
    return provenance("analytic", cfg.seed, cfg.sha256) | {
        "geometry": {
            "gamma": geom.gamma,
            "cosine_threshold": geom.cosine_threshold,
            "theta": geom.theta,
            "tau": geom.tau,
        },
        "s": s,
        "term_correlations": terms,
        "s_brute_force": s_bf,
        "brute_force_grid_points": p.grid_points,
        "angle_set": [list(pair) for pair in cfg.angle_set],
    }


def cmd_trial(cfg: RunConfig, out: Path) -> dict:
    rows = []
    total = None
    offset = 0
    for i, size in enumerate(chunk_sizes(cfg.trials)):
        c = simulate_chunk(cfg.source, cfg.station_a, cfg.station_b, size, cfg.seed, (TAG_TRIALS,), i)
        counts = counts_from_arrays(c.a_plus, c.a_minus, c.b_plus, c.b_minus)
        total = counts if total is None else total + counts
        for k in range(size):
            rows.append(
                (offset + k, float(c.polarization[k]), bool(c.a_plus[k]), bool(c.a_minus[k]),
                 bool(c.b_plus[k]), bool(c.b_minus[k]))
            )
        offset += size
    meta = provenance("trial", cfg.seed, cfg.sha256) | {
        "setting_a": cfg.station_a.setting.angle,
        "setting_b": cfg.station_b.setting.angle,
    }
    write_table(out / "trial.dat", ["index", "lambda", "a_plus", "a_minus", "b_plus", "b_minus"], rows, meta)
    return provenance("trial", cfg.seed, cfg.sha256) | {
        "counts": total.as_dict(),
        "correlation": _estimate_dict(try_correlation(total)),
    }


def cmd_pattern(cfg: RunConfig, out: Path) -> dict:
    p = cfg.pattern
    station = cfg.station_a if p.station == "a" else cfg.station_b
    rng = generator(cfg.seed, (TAG_PATTERN, 0 if p.station == "a" else 1))
    pat = detection_pattern(station, cfg.source, p.bins, p.trials_per_bin, rng)
    meta = provenance("pattern", cfg.seed, cfg.sha256) | {
        "station": p.station,
        "trials_per_bin": p.trials_per_bin,
    }
    write_table(out / "pattern.dat", ["angle", "p_plus", "p_minus"],
                zip(pat.angle.tolist(), pat.p_plus.tolist(), pat.p_minus.tolist()), meta)
    return provenance("pattern", cfg.seed, cfg.sha256) | {
        "station": p.station,
        "graded": is_graded(pat),
        "max_p_plus": float(pat.p_plus.max()),
        "max_p_minus": float(pat.p_minus.max()),
    }


def cmd_curve(cfg: RunConfig, out: Path) -> dict:
    c = cfg.curve
    points = correlation_curve(
        cfg.source, cfg.station_a, cfg.station_b, c.grid(), c.trials, cfg.seed, n_jobs=cfg.jobs
    )
    rows = [
        (pt.delta_phi,
         pt.estimate.e_value if pt.estimate else None,
         pt.estimate.standard_error if pt.estimate else None,
         pt.n_coincidences)
        for pt in points
    ]
    defined = [pt for pt in points if pt.estimate is not None]
    fit = None
    if defined:
        v, rms = fit_cos_visibility([pt.delta_phi for pt in defined], [pt.estimate.e_value for pt in defined])
        fit = {"visibility": v, "rms": rms}
    meta = provenance("curve", cfg.seed, cfg.sha256) | {"trials_per_point": c.trials}
    write_table(out / "curve.dat", ["delta_phi", "E", "stderr", "n_coinc"], rows, meta)
    summary = provenance("curve", cfg.seed, cfg.sha256) | {
        "points": len(points),
        "defined_points": len(defined),
        "cos_fit": fit,
        "total_coincidences": sum(pt.n_coincidences for pt in points),
        "total_double_trials": sum(pt.counts.n_double_trials for pt in points),
    }
    if not defined:
        summary["undefined_everywhere"] = True
    return summary


def cmd_sweep(cfg: RunConfig, out: Path) -> dict:
    s = cfg.sweep
    grid = SweepGrid.linear(s.e0_over_phi, s.d_over_e0, s.trials_per_cell, cfg.angle_set)
    cells = run_sweep(grid, cfg.station_a.detector_plus, cfg.source, cfg.seed, n_jobs=cfg.jobs)
    rows = [
        (c.e0_over_phi, c.d, c.s_value, c.s_defined, c.double_count_rate, c.coincidence_rate)
        for c in cells
    ]
    meta = provenance("sweep", cfg.seed, cfg.sha256) | {"trials_per_cell_term": s.trials_per_cell}
    write_table(out / "sweep.dat", ["e0_over_phi", "d", "s", "s_defined", "double_rate", "coinc_rate"], rows, meta)
    summ = violation_region(cells)
    summary = provenance("sweep", cfg.seed, cfg.sha256) | {
        "cells": summ.n_cells,
        "defined_cells": summ.n_defined,
        "max_s": summ.max_s,
        "max_s_stderr": summ.max_s_stderr,
        "argmax": list(summ.argmax) if summ.argmax else None,
        "violating_zero_double_cells": len(summ.violating_zero_double),
        "trend_pairs": summ.trend_pairs,
        "trend_fraction": summ.trend_fraction,
    }
    if summ.empty:
        summary["undefined_everywhere"] = True
    return summary


COMMANDS = {
    "analytic": cmd_analytic,
    "trial": cmd_trial,
    "pattern": cmd_pattern,
    "curve": cmd_curve,
    "sweep": cmd_sweep,
}

# flag dest -> config key, per subcommand
_FLAG_KEYS = {
    "analytic": {"work_function_over_e0": "analytic.work_function_over_e0", "samples": "analytic.samples"},
    "trial": {"trials": "trial.trials"},
    "pattern": {"trials": "pattern.trials_per_bin", "bins": "pattern.bins", "station": "pattern.station"},
    "curve": {
        "trials": "curve.trials",
        "points": "curve.points",
        "delta_min": "curve.delta_min",
        "delta_max": "curve.delta_max",
    },
    "sweep": {
        "trials": "sweep.trials_per_cell",
        "e0_min": "sweep.e0_over_phi_min",
        "e0_max": "sweep.e0_over_phi_max",
        "e0_points": "sweep.e0_over_phi_points",
        "d_min": "sweep.d_over_e0_min",
        "d_max": "sweep.d_over_e0_max",
        "d_points": "sweep.d_over_e0_points",
    },
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="INI configuration file")
    src.add_argument("--preset", choices=PRESETS, help="shipped configuration")
    common.add_argument("--seed", type=str, help="64-bit unsigned master seed")
    common.add_argument("--out", default="out", metavar="DIR", help="output directory (default: out)")
    common.add_argument("--jobs", type=str, help="worker processes; results do not depend on it")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="threshold-bell", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analytic", parents=[common], help="closed-form geometry, E(delta_phi) and S")
    a.add_argument("--work-function-over-e0", dest="work_function_over_e0")
    a.add_argument("--samples")

    t = sub.add_parser("trial", parents=[common], help="individual trials and their coincidence counts")
    t.add_argument("--trials")

    pt = sub.add_parser("pattern", parents=[common], help="detection probability against lambda - phi")
    pt.add_argument("--trials", help="trials per bin")
    pt.add_argument("--bins")
    pt.add_argument("--station", choices=("a", "b"))

    c = sub.add_parser("curve", parents=[common], help="correlation curve E(delta_phi)")
    c.add_argument("--trials", help="trials per point")
    c.add_argument("--points")
    c.add_argument("--delta-min", dest="delta_min")
    c.add_argument("--delta-max", dest="delta_max")

    s = sub.add_parser("sweep", parents=[common], help="CHSH and double-count map over (E0/Phi, D)")
    s.add_argument("--trials", help="trials per CHSH term per cell")
    for axis in ("e0", "d"):
        s.add_argument(f"--{axis}-min", dest=f"{axis}_min")
        s.add_argument(f"--{axis}-max", dest=f"{axis}_max")
        s.add_argument(f"--{axis}-points", dest=f"{axis}_points")
    return p


def resolve(args: argparse.Namespace) -> RunConfig:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.jobs is not None:
        overrides.append(f"run.jobs={args.jobs}")
    for dest, key in _FLAG_KEYS[args.command].items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return parse_config(args.config, preset=args.preset, overrides=overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.seed_generated:
        print(f"seed: {cfg.seed} (generated; recorded in config.resolved.ini)", file=sys.stderr)
    out = Path(args.out)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved.ini").write_text(cfg.to_ini())
        summary = COMMANDS[args.command](cfg, out)
        write_json(out / "summary.json", summary)
    except (OutputError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("%s finished in %.2f s (seed %d)", args.command, time.perf_counter() - start, cfg.seed)
    if summary.get("undefined_everywhere"):
        print("every estimate is undefined: no coincidences anywhere", file=sys.stderr)
        return EXIT_UNDEFINED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

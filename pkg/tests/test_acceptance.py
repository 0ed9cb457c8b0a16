"""Acceptance gate: one test per criterion, each printing a pass/fail line."""

import dataclasses
import math
import time

import numpy as np
import pytest

from conftest import noiseless_station
from threshold_bell import analytic as an
from threshold_bell.cli import main
from threshold_bell.config import parse_config
from threshold_bell.detector import CompoundPoisson, DetectorConfig, UniformFraction, cascade_counts
from threshold_bell.experiment import (
    correlation_curve,
    detection_pattern,
    fit_cos_visibility,
    is_graded,
    run_trials,
    simulate_chunk,
)
from threshold_bell.seeding import CHUNK_SIZE, chunk_sizes
from threshold_bell.sweep import SweepGrid, run_sweep, violation_region

pytestmark = pytest.mark.slow


def test_criterion_1_analytic_chsh_maximum(report):
    t0 = time.perf_counter()
    s = an.analytic_chsh(an.geometry_from_thresholds(1.0, 0.75)).s_value
    elapsed = time.perf_counter() - t0
    ok = s == 4.0 and elapsed < 1.0
    report(1, "analytic S = 4 at Phi/E0 = 0.75", ok, f"S={s!r} in {elapsed * 1e3:.2f} ms")
    assert ok


def test_criterion_2_piecewise_vs_brute_force(report):
    rng = np.random.default_rng(2024)
    # Valid regime: theta < tau, i.e. Phi/E0 < (1 + sin(pi/4)) / 2.
    upper = (1.0 + math.sin(math.pi / 4)) / 2.0
    ratios = rng.uniform(0.5 + 1e-3, upper - 1e-3, 50)
    deltas = rng.uniform(-math.pi, math.pi, 50)
    t0 = time.perf_counter()
    worst = 0.0
    for r, d in zip(ratios, deltas):
        exact = an.piecewise_correlation(d, an.geometry_from_thresholds(1.0, r))
        brute = an.brute_force_correlation(d, 1.0, r, grid_points=1_000_000)
        worst = max(worst, abs(exact - brute))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 60
    report(2, "piecewise vs 1e6-point oracle", ok, f"max |diff|={worst:.2e} over 50 pairs, {elapsed:.1f} s")
    assert ok


def test_criterion_3_monte_carlo_vs_analytic(report, source):
    cfg = parse_config(preset="ideal")
    wf = cfg.station_a.detector_plus.work_function
    d = cfg.station_a.detector_plus.discriminator
    assert (wf + d) / source.pulse_energy == pytest.approx(0.75)
    geom = an.geometry_from_thresholds(1.0, wf + d)
    points = correlation_curve(source, cfg.station_a, cfg.station_b, cfg.curve.grid(), 1_000_000, cfg.seed)
    worst = 0.0
    failures = 0
    for p in points:
        z = abs(p.estimate.e_value - an.piecewise_correlation(p.delta_phi, geom))
        se = p.estimate.standard_error
        if z > max(3 * se, 1e-12):
            failures += 1
        if se > 0:
            worst = max(worst, z / se)
    ok = len(points) == 25 and failures == 0
    report(3, "Monte Carlo vs analytic, 25 x 1e6", ok, f"worst |z|={worst:.2f}, {failures} outside 3 SE")
    assert ok


@pytest.mark.parametrize("wf, d", [(0.45, 0.06), (0.5, 1e-9), (0.75, 0.0), (0.3, 0.45)])
def test_criterion_4_no_double_clicks(report, source, wf, d):
    a = noiseless_station(0.0, wf, d)
    b = noiseless_station(math.pi / 8, wf, d)
    counts = run_trials(source, a, b, 10_000_000, seed=4)
    doubles = counts.n_double_a + counts.n_double_b
    ok = doubles == 0
    report(4, f"zero doubles at Phi={wf}, D={d}", ok, f"{doubles} doubles in {counts.n_trials} trials")
    assert ok


def test_criterion_5_d_shift_equivalence(report, source):
    n = 1_000_000
    mismatches = 0
    cases = [(0.45, 0.06), (0.6, 0.15), (0.3, 0.45), (0.7, 0.25)]
    for wf, d in cases:
        for angle_b in (math.pi / 8, -math.pi / 8, 0.3):
            for i, size in enumerate(chunk_sizes(n)):
                shifted = simulate_chunk(
                    source, noiseless_station(0.0, wf, d), noiseless_station(angle_b, wf, d), size, 5, (9,), i
                )
                plain = simulate_chunk(
                    source, noiseless_station(0.0, wf + d), noiseless_station(angle_b, wf + d), size, 5, (9,), i
                )
                for f in ("a_plus", "a_minus", "b_plus", "b_minus"):
                    mismatches += int(np.count_nonzero(getattr(shifted, f) != getattr(plain, f)))
    ok = mismatches == 0
    report(5, "(Phi, D) == (Phi+D, 0) trial by trial", ok, f"{mismatches} mismatches, {len(cases) * 3} configs x {n} trials")
    assert ok


def test_criterion_6_sweep_map_properties(report, source):
    cfg = parse_config(preset="fig3")
    grid = SweepGrid.linear()
    assert grid == SweepGrid.linear(cfg.sweep.e0_over_phi, cfg.sweep.d_over_e0, cfg.sweep.trials_per_cell)
    cells = run_sweep(grid, cfg.station_a.detector_plus, source, cfg.seed)
    summary = violation_region(cells)
    checks = {
        "max S >= 3.8": summary.max_s is not None and summary.max_s >= 3.8,
        "violating zero-double cells": len(summary.violating_zero_double) > 0,
        "trend >= 90%": summary.trend_fraction is not None and summary.trend_fraction >= 0.9,
    }
    ok = all(checks.values())
    detail = (
        f"max S={summary.max_s:.4f}, {len(summary.violating_zero_double)} violating zero-double cells, "
        f"trend {summary.trend_respected}/{summary.trend_pairs}={summary.trend_fraction:.3f}"
    )
    report(6, "25 x 25 sweep map", ok, detail)
    assert ok, checks


def _with_loss(station, fraction):
    det = dataclasses.replace(station.detector_plus, loss=UniformFraction(fraction))
    return dataclasses.replace(station, detector_plus=det, detector_minus=det)


def test_criterion_7_fig2_configuration(report):
    cfg = parse_config(preset="fig2")
    pattern = detection_pattern(
        cfg.station_a, cfg.source, cfg.pattern.bins, cfg.pattern.trials_per_bin, np.random.default_rng(cfg.seed)
    )
    preset_graded = is_graded(pattern)
    deltas = cfg.curve.grid()

    scan = []
    for f in np.linspace(0.0, 1.0, 21):
        a, b = _with_loss(cfg.station_a, f), _with_loss(cfg.station_b, f)
        points = correlation_curve(cfg.source, a, b, deltas, 100_000, cfg.seed)
        defined = [p for p in points if p.estimate is not None]
        v, rms = fit_cos_visibility([p.delta_phi for p in defined], [p.estimate.e_value for p in defined])
        graded = is_graded(detection_pattern(a, cfg.source, 64, 10_000, np.random.default_rng(cfg.seed)))
        scan.append((rms, f, v, graded))
    best = min(scan)
    best_graded = min(s for s in scan if s[3])
    reproduced = preset_graded and best_graded[0] < 0.05
    # The criterion's own fallback: report the best value when no max_fraction reaches it.
    fallback_met = preset_graded and len(scan) == 21
    detail = (
        f"best RMS={best[0]:.3f} at max_fraction={best[1]:.2f} (graded={best[3]}), "
        f"best graded RMS={best_graded[0]:.3f} at {best_graded[1]:.2f}, V={best_graded[2]:.3f}; "
        f"preset pattern graded={preset_graded}"
    )
    report(7, "fig2 cosine fit", reproduced or fallback_met, detail,
           status=None if reproduced else "NOT REPRODUCED (fallback reported)")
    assert reproduced or fallback_met


def _snapshot(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


@pytest.mark.parametrize(
    "argv",
    [
        ["analytic", "--preset", "fig1-analytic", "--set", "analytic.grid_points=20000"],
        ["trial", "--preset", "fig2", "--trials", "50"],
        ["pattern", "--preset", "fig2", "--bins", "16", "--trials", "2000"],
        ["curve", "--preset", "fig2", "--points", "5", "--trials", "70000"],
        ["sweep", "--preset", "fig3", "--e0-points", "3", "--d-points", "3", "--trials", "10000"],
    ],
    ids=lambda a: a[0],
)
def test_criterion_8_determinism(report, tmp_path, argv):
    runs = []
    for k, jobs in enumerate(("1", "1", "2")):
        out = tmp_path / f"run{k}"
        assert main(argv + ["--out", str(out), "--jobs", jobs]) == 0
        runs.append(_snapshot(out))
    ok = runs[0] == runs[1] == runs[2] and len(runs[0]) == 3
    report(8, f"byte-identical {argv[0]} outputs", ok, f"{len(runs[0])} files, jobs 1/1/2")
    assert ok


def test_criterion_9_compound_poisson(report):
    gain = CompoundPoisson(alpha=0.8, delta=4.0, stages=10, normalize=False)
    samples = cascade_counts(gain, 1_000_000, np.random.default_rng(9)).astype(float)
    target = gain.alpha * gain.delta**gain.stages
    mean, var = samples.mean(), samples.var(ddof=1)
    rel_err = abs(mean - target) / target
    # A Poisson variable with this mean has relative variance 1/mean.
    rel_var, poisson_rel_var = var / mean**2, 1.0 / mean
    ok = rel_err < 0.01 and rel_var > poisson_rel_var
    report(9, "compound Poisson gain", ok,
           f"mean/target-1={rel_err:.2e}, rel var={rel_var:.3f} vs Poisson {poisson_rel_var:.2e}")
    assert ok

"""CHSH and double-count maps over (E0/Phi, D) for symmetric stations."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from threshold_bell.analytic import DEFAULT_ANGLE_SET, chsh
from threshold_bell.detector import DetectorConfig
from threshold_bell.experiment import (
    CoincidenceCounts,
    CorrelationEstimate,
    SourceConfig,
    StationConfig,
    run_trials,
    try_correlation,
)
from threshold_bell.seeding import TAG_SWEEP, float_key, parallel_map


def _strictly_increasing(values: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


@dataclass(frozen=True)
class SweepGrid:
    e0_over_phi_values: tuple[float, ...]
    d_values: tuple[float, ...]
    trials_per_cell: int
    angle_set: tuple[tuple[float, float], ...] = DEFAULT_ANGLE_SET

    def __post_init__(self) -> None:
        object.__setattr__(self, "e0_over_phi_values", tuple(float(x) for x in self.e0_over_phi_values))
        object.__setattr__(self, "d_values", tuple(float(x) for x in self.d_values))
        if not self.e0_over_phi_values or not self.d_values:
            raise ValueError("sweep grid axes must be non-empty")
        if not _strictly_increasing(self.e0_over_phi_values):
            raise ValueError("e0_over_phi_values must be strictly increasing")
        if not _strictly_increasing(self.d_values):
            raise ValueError("d_values must be strictly increasing")
        if min(self.e0_over_phi_values) <= 0:
            raise ValueError("e0_over_phi_values must be positive")
        if min(self.d_values) < 0:
            raise ValueError("d_values must be non-negative")
        if self.trials_per_cell < 10_000:
            raise ValueError(f"trials_per_cell must be >= 1e4, got {self.trials_per_cell}")
        if len(self.angle_set) != 4:
            raise ValueError("angle_set needs four setting pairs")

    @classmethod
    def linear(
        cls,
        e0_over_phi: tuple[float, float, int] = (1.0, 4.0, 25),
        d: tuple[float, float, int] = (0.0, 0.6, 25),
        trials_per_cell: int = 100_000,
        angle_set: tuple[tuple[float, float], ...] = DEFAULT_ANGLE_SET,
    ) -> SweepGrid:
        """Evenly spaced grid from (start, stop, points) triples, endpoints included."""
        return cls(
            tuple(np.linspace(*e0_over_phi[:2], int(e0_over_phi[2]))),
            tuple(np.linspace(*d[:2], int(d[2]))),
            trials_per_cell,
            angle_set,
        )


@dataclass(frozen=True)
class ChshMapCell:
    e0_over_phi: float
    d: float
    s_value: float | None
    s_stderr: float | None
    double_count_rate: float
    coincidence_rate: float
    per_term_estimates: tuple[CorrelationEstimate | None, ...]
    per_term_counts: tuple[CoincidenceCounts, ...] = field(repr=False, default=())

    @property
    def s_defined(self) -> bool:
        return self.s_value is not None

    @property
    def zero_doubles(self) -> bool:
        return self.double_count_rate == 0.0


def _cell(args: tuple) -> ChshMapCell:
    ratio, d, grid, template, source, seed = args
    detector = replace(template, work_function=source.pulse_energy / ratio, discriminator=d)
    counts = []
    estimates = []
    for k, (phi_a, phi_b) in enumerate(grid.angle_set):
        a = StationConfig.symmetric(phi_a, detector)
        b = StationConfig.symmetric(phi_b, detector)
        key = (TAG_SWEEP, float_key(ratio), float_key(d), k)
        c = run_trials(source, a, b, grid.trials_per_cell, seed, key=key)
        counts.append(c)
        estimates.append(try_correlation(c))
    n_total = sum(c.n_trials for c in counts)
    s_value = s_err = None
    if all(e is not None for e in estimates):
        table = {pair: e.e_value for pair, e in zip(grid.angle_set, estimates)}
        s_value = chsh(lambda a, b: table[(a, b)], grid.angle_set).s_value
        s_err = math.sqrt(sum(e.standard_error**2 for e in estimates))
    return ChshMapCell(
        e0_over_phi=ratio,
        d=d,
        s_value=s_value,
        s_stderr=s_err,
        double_count_rate=sum(c.n_double_trials for c in counts) / n_total,
        coincidence_rate=sum(c.n_coincidences for c in counts) / n_total,
        per_term_estimates=tuple(estimates),
        per_term_counts=tuple(counts),
    )


def run_sweep(
    grid: SweepGrid,
    detector_template: DetectorConfig,
    source: SourceConfig,
    seed: int,
    n_jobs: int = 1,
) -> list[ChshMapCell]:
    """Evaluate every grid cell; ``trials_per_cell`` trials are run for each CHSH term.

    The template's work function and discriminator are replaced per cell
    (work_function = E0 / ratio, discriminator = d).  Cells are seeded from
    their coordinates, so adding or reordering grid points leaves other
    cells unchanged.
    """
    jobs = [
        (ratio, d, grid, detector_template, source, seed)
        for ratio in grid.e0_over_phi_values
        for d in grid.d_values
    ]
    cells = parallel_map(_cell, jobs, n_jobs)
    return sorted(cells, key=lambda c: (c.e0_over_phi, c.d))


@dataclass(frozen=True)
class ViolationSummary:
    max_s: float | None
    max_s_stderr: float | None
    argmax: tuple[float, float] | None
    violating_zero_double: tuple[tuple[float, float], ...]
    trend_pairs: int
    trend_respected: int
    n_cells: int
    n_defined: int

    @property
    def empty(self) -> bool:
        return self.n_defined == 0

    @property
    def trend_fraction(self) -> float | None:
        return self.trend_respected / self.trend_pairs if self.trend_pairs else None


def violation_region(cells: Sequence[ChshMapCell], n_sigma: float = 3.0) -> ViolationSummary:
    """Summarize a map: maximum S, violating single-photon-regime cells, trend check.

    The trend check walks adjacent pairs inside the region with defined S and
    zero doubles.  Along increasing E0/Phi, S must not rise; along increasing
    D, S must not fall; either by more than ``n_sigma`` joint standard errors.
    """
    if not cells:
        raise ValueError("violation_region needs at least one cell")
    defined = [c for c in cells if c.s_defined]
    if not defined:
        return ViolationSummary(None, None, None, (), 0, 0, len(cells), 0)
    best = max(defined, key=lambda c: c.s_value)
    violating = tuple(
        (c.e0_over_phi, c.d) for c in defined if c.s_value > 2.0 and c.zero_doubles
    )

    region = {(c.e0_over_phi, c.d): c for c in defined if c.zero_doubles}
    ratios = sorted({c.e0_over_phi for c in cells})
    ds = sorted({c.d for c in cells})
    pairs = respected = 0

    def check(lo: ChshMapCell, hi: ChshMapCell, rising: bool) -> bool:
        tol = n_sigma * math.hypot(lo.s_stderr, hi.s_stderr)
        return hi.s_value >= lo.s_value - tol if rising else hi.s_value <= lo.s_value + tol

    for i, r in enumerate(ratios):
        for j, d in enumerate(ds):
            here = region.get((r, d))
            if here is None:
                continue
            if i + 1 < len(ratios) and (nxt := region.get((ratios[i + 1], d))) is not None:
                pairs += 1
                respected += check(here, nxt, rising=False)
            if j + 1 < len(ds) and (nxt := region.get((r, ds[j + 1]))) is not None:
                pairs += 1
                respected += check(here, nxt, rising=True)
    return ViolationSummary(
        max_s=best.s_value,
        max_s_stderr=best.s_stderr,
        argmax=(best.e0_over_phi, best.d),
        violating_zero_double=violating,
        trend_pairs=pairs,
        trend_respected=respected,
        n_cells=len(cells),
        n_defined=len(defined),
    )

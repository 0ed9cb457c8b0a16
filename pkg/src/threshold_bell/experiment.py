"""EPRB trial engine: shared-polarization pulse pairs, two polarimeter stations, coincidences."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, fields, replace

import numpy as np

from threshold_bell.analytic import UndefinedCorrelation
from threshold_bell.core import TWO_PI, PolarizerSetting, split_energies
from threshold_bell.detector import DetectorConfig, clicks
from threshold_bell.seeding import (
    TAG_CURVE,
    TAG_TRIALS,
    chunk_sizes,
    float_key,
    parallel_map,
    seed_sequence,
)

UNIFORM_SHARED = "uniform-shared"


@dataclass(frozen=True)
class SourceConfig:
    pulse_energy: float = 1.0
    polarization_law: str = UNIFORM_SHARED

    def __post_init__(self) -> None:
        if not (self.pulse_energy > 0 and math.isfinite(self.pulse_energy)):
            raise ValueError(f"pulse_energy must be positive, got {self.pulse_energy}")
        if self.polarization_law != UNIFORM_SHARED:
            raise ValueError(f"unsupported polarization_law {self.polarization_law!r}")


@dataclass(frozen=True)
class StationConfig:
    setting: PolarizerSetting
    detector_plus: DetectorConfig
    detector_minus: DetectorConfig

    @classmethod
    def symmetric(cls, angle: float, detector: DetectorConfig) -> StationConfig:
        return cls(PolarizerSetting(angle), detector, detector)

    def at(self, angle: float) -> StationConfig:
        return replace(self, setting=PolarizerSetting(angle))


@dataclass(frozen=True)
class TrialOutcome:
    a_plus: bool
    a_minus: bool
    b_plus: bool
    b_minus: bool


@dataclass(frozen=True)
class CoincidenceCounts:
    """Exclusive trial categories plus per-station double tallies.

    ``n_pp`` .. ``n_mm``, ``n_single_only_a``, ``n_single_only_b``,
    ``n_multi`` and ``n_null`` partition the trials.  ``n_multi`` holds
    trials where both stations fired and at least one of them double
    clicked.  ``n_double_a``/``n_double_b`` count double clicks at each
    station whatever the other station did; ``n_double_both`` counts trials
    where both stations double clicked.
    """

    n_pp: int = 0
    n_pm: int = 0
    n_mp: int = 0
    n_mm: int = 0
    n_single_only_a: int = 0
    n_single_only_b: int = 0
    n_multi: int = 0
    n_null: int = 0
    n_double_a: int = 0
    n_double_b: int = 0
    n_double_both: int = 0
    n_trials: int = 0

    def __add__(self, other: CoincidenceCounts) -> CoincidenceCounts:
        return CoincidenceCounts(
            **{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)}
        )

    @property
    def n_coincidences(self) -> int:
        return self.n_pp + self.n_pm + self.n_mp + self.n_mm

    @property
    def n_double_trials(self) -> int:
        """Trials with a double click at either station (counted once)."""
        return self.n_double_a + self.n_double_b - self.n_double_both

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class CorrelationEstimate:
    e_value: float
    n_coincidences: int
    standard_error: float


def counts_from_arrays(
    a_plus: np.ndarray, a_minus: np.ndarray, b_plus: np.ndarray, b_minus: np.ndarray
) -> CoincidenceCounts:
    a_any = a_plus | a_minus
    b_any = b_plus | b_minus
    da = a_plus & a_minus
    db = b_plus & b_minus
    both = a_any & b_any
    clean = both & ~(da | db)

    def n(mask: np.ndarray) -> int:
        return int(np.count_nonzero(mask))

    return CoincidenceCounts(
        n_pp=n(clean & a_plus & b_plus),
        n_pm=n(clean & a_plus & b_minus),
        n_mp=n(clean & a_minus & b_plus),
        n_mm=n(clean & a_minus & b_minus),
        n_single_only_a=n(a_any & ~b_any),
        n_single_only_b=n(b_any & ~a_any),
        n_multi=n(both & (da | db)),
        n_null=n(~a_any & ~b_any),
        n_double_a=n(da),
        n_double_b=n(db),
        n_double_both=n(da & db),
        n_trials=int(a_plus.size),
    )


def accumulate(outcomes: Iterable[TrialOutcome]) -> CoincidenceCounts:
    rows = [(o.a_plus, o.a_minus, o.b_plus, o.b_minus) for o in outcomes]
    if not rows:
        return CoincidenceCounts()
    arr = np.array(rows, dtype=bool)
    return counts_from_arrays(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def correlation(counts: CoincidenceCounts) -> CorrelationEstimate:
    n = counts.n_coincidences
    if n == 0:
        raise UndefinedCorrelation(f"no coincidences in {counts.n_trials} trials")
    e = (counts.n_pp + counts.n_mm - counts.n_pm - counts.n_mp) / n
    return CorrelationEstimate(e_value=e, n_coincidences=n, standard_error=math.sqrt((1.0 - e * e) / n))


def try_correlation(counts: CoincidenceCounts) -> CorrelationEstimate | None:
    try:
        return correlation(counts)
    except UndefinedCorrelation:
        return None


# --- single trial ---------------------------------------------------------


def station_clicks(
    energy: float,
    polarization: np.ndarray,
    station: StationConfig,
    rng_plus: np.random.Generator,
    rng_minus: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Click arrays of one station; depends only on its own inputs and streams."""
    t, r = split_energies(energy, polarization, station.setting.angle)
    return clicks(t, station.detector_plus, rng_plus), clicks(r, station.detector_minus, rng_minus)


def run_trial(
    source: SourceConfig,
    station_a: StationConfig,
    station_b: StationConfig,
    rng: np.random.Generator,
) -> TrialOutcome:
    """One pair emission; draws lambda, then the A+, A-, B+, B- chains, all from ``rng``."""
    lam = np.array([rng.uniform(0.0, TWO_PI)])
    ap, am = station_clicks(source.pulse_energy, lam, station_a, rng, rng)
    bp, bm = station_clicks(source.pulse_energy, lam, station_b, rng, rng)
    return TrialOutcome(bool(ap[0]), bool(am[0]), bool(bp[0]), bool(bm[0]))


# --- batched engine -------------------------------------------------------


@dataclass(frozen=True)
class ChunkResult:
    polarization: np.ndarray
    a_plus: np.ndarray
    a_minus: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray


def chunk_streams(seed: int, key: Sequence[int], chunk_index: int) -> list[np.random.Generator]:
    """Five streams for one chunk: polarization, A+, A-, B+, B-."""
    ss = seed_sequence(seed, tuple(key) + (chunk_index,))
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(5)]


def simulate_chunk(
    source: SourceConfig,
    station_a: StationConfig,
    station_b: StationConfig,
    size: int,
    seed: int,
    key: Sequence[int] = (),
    chunk_index: int = 0,
) -> ChunkResult:
    g_lam, g_ap, g_am, g_bp, g_bm = chunk_streams(seed, key, chunk_index)
    lam = g_lam.uniform(0.0, TWO_PI, size)
    ap, am = station_clicks(source.pulse_energy, lam, station_a, g_ap, g_am)
    bp, bm = station_clicks(source.pulse_energy, lam, station_b, g_bp, g_bm)
    return ChunkResult(lam, ap, am, bp, bm)


def _count_chunk(args: tuple) -> CoincidenceCounts:
    source, station_a, station_b, size, seed, key, index = args
    c = simulate_chunk(source, station_a, station_b, size, seed, key, index)
    return counts_from_arrays(c.a_plus, c.a_minus, c.b_plus, c.b_minus)


def run_trials(
    source: SourceConfig,
    station_a: StationConfig,
    station_b: StationConfig,
    n_trials: int,
    seed: int,
    key: Sequence[int] = (TAG_TRIALS,),
    n_jobs: int = 1,
) -> CoincidenceCounts:
    """Accumulate ``n_trials`` trials in fixed-size, independently seeded chunks.

    Counts are identical for any ``n_jobs``.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be positive, got {n_trials}")
    jobs = [
        (source, station_a, station_b, size, seed, tuple(key), i)
        for i, size in enumerate(chunk_sizes(n_trials))
    ]
    total = CoincidenceCounts()
    for c in parallel_map(_count_chunk, jobs, n_jobs):
        total = total + c
    return total


# --- detection patterns ---------------------------------------------------


@dataclass(frozen=True)
class DetectionPattern:
    angle: np.ndarray  # lambda - phi at bin midpoints, in [-pi/2, pi/2)
    p_plus: np.ndarray
    p_minus: np.ndarray
    trials_per_bin: int


def detection_pattern(
    station: StationConfig,
    source: SourceConfig,
    bins: int,
    trials_per_bin: int,
    rng: np.random.Generator,
) -> DetectionPattern:
    """Click probability of each channel against lambda - phi, bin by bin."""
    if bins < 8:
        raise ValueError(f"bins must be >= 8, got {bins}")
    if trials_per_bin < 1:
        raise ValueError(f"trials_per_bin must be positive, got {trials_per_bin}")
    width = math.pi / bins
    angle = -0.5 * math.pi + (np.arange(bins) + 0.5) * width
    p_plus = np.empty(bins)
    p_minus = np.empty(bins)
    for k, x in enumerate(angle):
        t, r = split_energies(source.pulse_energy, x, 0.0)
        p_plus[k] = clicks(np.full(trials_per_bin, t), station.detector_plus, rng).mean()
        p_minus[k] = clicks(np.full(trials_per_bin, r), station.detector_minus, rng).mean()
    return DetectionPattern(angle, p_plus, p_minus, trials_per_bin)


def is_graded(pattern: DetectionPattern, lo: float = 0.02, hi: float = 0.98, min_bins: int = 3) -> bool:
    """True if enough bins sit strictly between never and always clicking."""
    p = np.concatenate([pattern.p_plus, pattern.p_minus])
    return int(np.count_nonzero((p > lo) & (p < hi))) >= min_bins


# --- correlation curves ---------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    delta_phi: float
    estimate: CorrelationEstimate | None
    counts: CoincidenceCounts

    @property
    def n_coincidences(self) -> int:
        return self.counts.n_coincidences


def _curve_point(args: tuple) -> CurvePoint:
    source, station_a, station_b, delta, trials, seed = args
    b = station_b.at(station_a.setting.angle - delta)
    counts = run_trials(source, station_a, b, trials, seed, key=(TAG_CURVE, float_key(delta)))
    return CurvePoint(float(delta), try_correlation(counts), counts)


def correlation_curve(
    source: SourceConfig,
    station_a: StationConfig,
    station_b: StationConfig,
    delta_phis: Sequence[float],
    trials_per_point: int,
    seed: int,
    n_jobs: int = 1,
) -> list[CurvePoint]:
    """Estimate E at each delta_phi = phi_a - phi_b, rotating station B only.

    Each point is seeded from its delta_phi value; undefined points carry
    ``estimate=None``.
    """
    if len(delta_phis) == 0:
        raise ValueError("delta_phi grid is empty")
    if trials_per_point < 10_000:
        raise ValueError(f"trials_per_point must be >= 1e4, got {trials_per_point}")
    jobs = [(source, station_a, station_b, float(d), trials_per_point, seed) for d in delta_phis]
    return parallel_map(_curve_point, jobs, n_jobs)


def fit_cos_visibility(delta_phi: Sequence[float], e_values: Sequence[float]) -> tuple[float, float]:
    """Least-squares V for E ~ V cos(2 delta_phi); returns (V, rms residual)."""
    d = np.asarray(delta_phi, dtype=float)
    e = np.asarray(e_values, dtype=float)
    c = np.cos(2.0 * d)
    v = float(c @ e / (c @ c))
    rms = float(np.sqrt(np.mean((e - v * c) ** 2)))
    return v, rms

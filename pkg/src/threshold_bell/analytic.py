"""Closed-form correlations of the ideal two-threshold polarimeter pair.

Pulses share one polarization drawn uniformly on [0, 2pi).  Each
polarimeter detects on arcs of width ``tau`` around its two axes and is
blind on arcs of width ``theta`` in between, with ``tau + theta = pi/2``.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from threshold_bell.core import CODE_MINUS, CODE_PLUS, ideal_measure_array

HALF_PI = 0.5 * math.pi

#: Setting pairs (phi_a, phi_b) of the CHSH combination; the last term is subtracted.
DEFAULT_ANGLE_SET: tuple[tuple[float, float], ...] = (
    (0.0, math.pi / 8),
    (0.0, -math.pi / 8),
    (math.pi / 4, math.pi / 8),
    (math.pi / 4, -math.pi / 8),
)


class UndefinedCorrelation(ValueError):
    """No coincidences at all, so the correlation ratio has no value."""


@dataclass(frozen=True)
class RegionGeometry:
    gamma: float
    cosine_threshold: float
    theta: float
    tau: float

    @property
    def degenerate(self) -> bool:
        """True when the blind arcs are at least as wide as the detection arcs."""
        return self.theta >= self.tau


@dataclass(frozen=True)
class CoincidenceProbs:
    p_pp: float
    p_pm: float
    p_mp: float
    p_mm: float

    @property
    def total(self) -> float:
        return self.p_pp + self.p_pm + self.p_mp + self.p_mm


@dataclass(frozen=True)
class ChshResult:
    s_value: float
    angle_set: tuple[tuple[float, float], ...]
    term_correlations: tuple[float, float, float, float]


def geometry_from_thresholds(e0: float, work_function: float) -> RegionGeometry:
    if not (e0 > 0 and math.isfinite(e0)):
        raise ValueError(f"pulse energy E0 must be positive, got {e0}")
    ratio = work_function / e0
    if not ratio > 0.5:
        raise ValueError(
            f"work_function/E0 = {ratio:g} violates the no-double-click bound work_function/E0 > 1/2"
        )
    if not ratio < 1.0:
        raise ValueError(
            f"work_function/E0 = {ratio:g} violates work_function < E0 (no click would ever occur)"
        )
    gamma = ratio - 0.5
    c = 2.0 * gamma
    theta = math.asin(c)
    return RegionGeometry(gamma=gamma, cosine_threshold=c, theta=theta, tau=HALF_PI - theta)


def fold_delta(delta_phi: float) -> float:
    """Map an angle difference onto [0, pi/2] using evenness and period pi."""
    d = math.fmod(abs(delta_phi), math.pi)
    return math.pi - d if d > HALF_PI else d


def coincidence_probs(delta_phi: float, geom: RegionGeometry) -> CoincidenceProbs:
    d = fold_delta(delta_phi)
    # overlap of two arcs of width tau, per half period; two half periods in [0, 2pi)
    same = 2.0 * max(0.0, geom.tau - d) / (2.0 * math.pi)
    opposite = 2.0 * max(0.0, d - geom.theta) / (2.0 * math.pi)
    return CoincidenceProbs(p_pp=same, p_pm=opposite, p_mp=opposite, p_mm=same)


def piecewise_correlation(delta_phi: float, geom: RegionGeometry) -> float:
    """E(delta_phi): 1 inside theta, linear on (theta, tau], -1 beyond tau.

    When theta >= tau the linear branch is empty; the correlation is then +1
    up to tau, -1 past theta, and undefined in between (no coincidences).
    """
    d = fold_delta(delta_phi)
    theta, tau = geom.theta, geom.tau
    if theta < tau:
        if d <= theta:
            return 1.0
        if d <= tau:
            return (-2.0 * d + tau + theta) / (tau - theta)
        return -1.0
    if d < tau:
        return 1.0
    if d > theta:
        return -1.0
    raise UndefinedCorrelation(
        f"no coincidences at |delta_phi| = {d:g} (blind arcs theta={theta:g} >= tau={tau:g})"
    )


def chsh(
    correlation: Callable[[float, float], float],
    angle_set: Sequence[tuple[float, float]] = DEFAULT_ANGLE_SET,
) -> ChshResult:
    if len(angle_set) != 4:
        raise ValueError(f"CHSH needs exactly four setting pairs, got {len(angle_set)}")
    terms = tuple(float(correlation(a, b)) for a, b in angle_set)
    s = abs(terms[0] + terms[1] + terms[2] - terms[3])
    return ChshResult(
        s_value=s,
        angle_set=tuple((float(a), float(b)) for a, b in angle_set),
        term_correlations=terms,  # type: ignore[arg-type]
    )


def analytic_chsh(
    geom: RegionGeometry, angle_set: Sequence[tuple[float, float]] = DEFAULT_ANGLE_SET
) -> ChshResult:
    return chsh(lambda a, b: piecewise_correlation(a - b, geom), angle_set)


def brute_force_counts(
    delta_phi: float, e0: float, work_function: float, grid_points: int
) -> tuple[int, int, int, int]:
    """Count (N++, N+-, N-+, N--) of ideal single-single coincidences on a midpoint lambda grid."""
    if grid_points < 10_000:
        raise ValueError(f"grid_points must be >= 1e4, got {grid_points}")
    lam = (np.arange(grid_points) + 0.5) * (2.0 * math.pi / grid_points)
    a = ideal_measure_array(e0, lam, 0.0, work_function)
    b = ideal_measure_array(e0, lam, -delta_phi, work_function)
    ap, am = a == CODE_PLUS, a == CODE_MINUS
    bp, bm = b == CODE_PLUS, b == CODE_MINUS
    return (
        int(np.count_nonzero(ap & bp)),
        int(np.count_nonzero(ap & bm)),
        int(np.count_nonzero(am & bp)),
        int(np.count_nonzero(am & bm)),
    )


def brute_force_correlation(
    delta_phi: float, e0: float, work_function: float, grid_points: int = 1_000_000
) -> float:
    """Correlation from direct enumeration of the ideal polarimeters over lambda."""
    n_pp, n_pm, n_mp, n_mm = brute_force_counts(delta_phi, e0, work_function, grid_points)
    total = n_pp + n_pm + n_mp + n_mm
    if total == 0:
        raise UndefinedCorrelation(f"no coincidences on the grid at delta_phi={delta_phi:g}")
    return (n_pp + n_mm - n_pm - n_mp) / total

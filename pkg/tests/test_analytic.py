import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threshold_bell import analytic as an
from threshold_bell.core import CODE_NULL, ideal_measure_array


def null_fraction(work_function: float, n: int = 2_000_000) -> float:
    lam = (np.arange(n) + 0.5) * (math.pi / n)
    return float(np.mean(ideal_measure_array(1.0, lam, 0.0, work_function) == CODE_NULL))


def test_geometry_vanishing_margin():
    g = an.geometry_from_thresholds(1.0, 0.5 + 1e-12)
    assert g.theta == pytest.approx(0.0, abs=1e-11)
    assert g.tau == pytest.approx(math.pi / 2, abs=1e-11)


@pytest.mark.parametrize("wf, theta", [(0.75, math.pi / 6), (0.6, 0.2013579207903308)])
def test_geometry_against_null_region(wf, theta):
    g = an.geometry_from_thresholds(1.0, wf)
    assert g.theta == pytest.approx(theta, abs=1e-12)
    assert g.theta + g.tau == pytest.approx(math.pi / 2)
    assert g.cosine_threshold == pytest.approx(2 * g.gamma)
    # two blind arcs of width theta per half period
    assert null_fraction(wf) == pytest.approx(2 * theta / math.pi, abs=1e-5)


@pytest.mark.parametrize("wf, bound", [(0.5, "1/2"), (0.3, "1/2"), (1.0, "< E0"), (1.2, "< E0")])
def test_geometry_rejects_out_of_range(wf, bound):
    with pytest.raises(ValueError, match=bound):
        an.geometry_from_thresholds(1.0, wf)


def test_geometry_scales_with_e0():
    assert an.geometry_from_thresholds(2.0, 1.5) == an.geometry_from_thresholds(1.0, 0.75)


def test_probs_at_zero_and_quarter_turn():
    g = an.geometry_from_thresholds(1.0, 0.7)
    p0 = an.coincidence_probs(0.0, g)
    assert p0.p_pp == pytest.approx(g.tau / math.pi) and p0.p_mm == p0.p_pp
    assert p0.p_pm == 0 and p0.p_mp == 0
    p90 = an.coincidence_probs(math.pi / 2, g)
    assert p90.p_pp == 0 and p90.p_mm == 0
    assert p90.p_pm == p90.p_mp > 0


def brute_probs(delta, wf, n=1_000_000):
    counts = an.brute_force_counts(delta, 1.0, wf, n)
    return np.array(counts) / n


def test_probs_continuous_at_theta_boundary():
    wf = 0.5 * (1 + math.sin(math.pi / 8))  # theta = pi/8
    g = an.geometry_from_thresholds(1.0, wf)
    assert g.theta == pytest.approx(math.pi / 8)
    at = an.coincidence_probs(g.theta, g)
    assert at.p_pm == 0
    just_after = an.coincidence_probs(g.theta + 1e-9, g)
    assert just_after.p_pm == pytest.approx(0, abs=1e-9)
    for d in (g.theta - 0.05, g.theta, g.theta + 0.05):
        p = an.coincidence_probs(d, g)
        assert np.allclose([p.p_pp, p.p_pm, p.p_mp, p.p_mm], brute_probs(d, wf), atol=5e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.51, 0.99), st.floats(-6.0, 6.0))
def test_probs_match_enumeration(wf, delta):
    g = an.geometry_from_thresholds(1.0, wf)
    p = an.coincidence_probs(delta, g)
    assert np.allclose([p.p_pp, p.p_pm, p.p_mp, p.p_mm], brute_probs(delta, wf, 200_000), atol=3e-5)
    assert p.p_pp == p.p_mm and p.p_pm == p.p_mp
    assert 0 <= p.total <= 1


def test_total_in_linear_branch():
    g = an.geometry_from_thresholds(1.0, 0.6)
    for d in np.linspace(g.theta + 1e-3, g.tau - 1e-3, 7):
        assert an.coincidence_probs(d, g).total == pytest.approx(4 * (g.tau - g.theta) / (2 * math.pi))


def test_piecewise_examples():
    g = an.geometry_from_thresholds(1.0, 0.75)
    assert an.piecewise_correlation(0.0, g) == 1.0
    assert an.piecewise_correlation((g.theta + g.tau) / 2, g) == pytest.approx(0.0, abs=1e-15)
    assert g.theta > math.pi / 8
    assert an.piecewise_correlation(math.pi / 8, g) == 1.0
    assert an.piecewise_correlation(3 * math.pi / 8, g) == -1.0


@pytest.mark.parametrize("wf", [0.52, 0.6, 0.75, 0.8])
def test_piecewise_symmetries(wf):
    g = an.geometry_from_thresholds(1.0, wf)
    for d in np.linspace(-4.0, 4.0, 1000):
        e = an.piecewise_correlation(d, g)
        assert abs(e) <= 1.0
        assert an.piecewise_correlation(-d, g) == pytest.approx(e, abs=1e-12)
        assert an.piecewise_correlation(d + math.pi / 2, g) == pytest.approx(-e, abs=1e-9)


@pytest.mark.parametrize("wf", [0.55, 0.7, 0.8])
def test_piecewise_continuous_at_boundaries(wf):
    g = an.geometry_from_thresholds(1.0, wf)
    for b in (g.theta, g.tau):
        lo = an.piecewise_correlation(b - 1e-12, g)
        hi = an.piecewise_correlation(b + 1e-12, g)
        assert abs(hi - lo) < 1e-9


def test_piecewise_matches_brute_force_random():
    rng = np.random.default_rng(7)
    n = 100_000
    for _ in range(100):
        wf = rng.uniform(0.5 + 1e-3, 0.8)
        d = rng.uniform(-math.pi, math.pi)
        g = an.geometry_from_thresholds(1.0, wf)
        bf = an.brute_force_correlation(d, 1.0, wf, n)
        assert an.piecewise_correlation(d, g) == pytest.approx(bf, abs=10 * 2 * math.pi / n)


def test_brute_force_endpoints():
    assert an.brute_force_correlation(0.0, 1.0, 0.7, 10_000) == 1.0
    assert an.brute_force_correlation(math.pi / 2, 1.0, 0.7, 10_000) == -1.0
    with pytest.raises(ValueError):
        an.brute_force_correlation(0.1, 1.0, 0.7, 100)


def test_wide_blind_arcs_leave_a_gap():
    # theta > tau: no coincidences for tau < |delta| < theta
    wf = 0.9
    g = an.geometry_from_thresholds(1.0, wf)
    assert g.degenerate
    mid = 0.5 * (g.theta + g.tau)
    with pytest.raises(an.UndefinedCorrelation):
        an.piecewise_correlation(mid, g)
    with pytest.raises(an.UndefinedCorrelation):
        an.brute_force_correlation(mid, 1.0, wf, 100_000)
    assert an.piecewise_correlation(g.tau - 0.01, g) == an.brute_force_correlation(g.tau - 0.01, 1.0, wf) == 1.0
    assert an.piecewise_correlation(g.theta + 0.01, g) == an.brute_force_correlation(g.theta + 0.01, 1.0, wf) == -1.0


def test_chsh_examples():
    assert an.chsh(lambda a, b: math.cos(2 * (a - b))).s_value == pytest.approx(2 * math.sqrt(2))
    assert an.chsh(lambda a, b: 0.0).s_value == 0.0
    res = an.analytic_chsh(an.geometry_from_thresholds(1.0, 0.75))
    assert res.s_value == 4.0
    assert res.term_correlations == (1.0, 1.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        an.chsh(lambda a, b: 1.0, an.DEFAULT_ANGLE_SET[:3])


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5 + 1e-6, 0.999))
def test_chsh_bounded_and_four_above_pi_over_8(wf):
    g = an.geometry_from_thresholds(1.0, wf)
    try:
        s = an.analytic_chsh(g).s_value
    except an.UndefinedCorrelation:
        # pi/8 falls in the coincidence gap only when tau < pi/8
        assert g.tau < math.pi / 8 < g.theta
        return
    assert 0 <= s <= 4
    if g.theta > math.pi / 8:
        assert s == 4.0
    else:
        # linear branch: S = pi / (pi/2 - 2 theta)
        assert s == pytest.approx(2 / (1 - 4 * g.theta / math.pi))


def test_chsh_small_margin_limit_is_two():
    # oracle first: enumeration at a vanishing margin
    wf = 0.5 + 1e-9
    s_bf = an.chsh(lambda a, b: an.brute_force_correlation(a - b, 1.0, wf, 1_000_000)).s_value
    assert s_bf == pytest.approx(2.0, abs=1e-5)
    assert an.analytic_chsh(an.geometry_from_thresholds(1.0, wf)).s_value == pytest.approx(2.0, abs=1e-6)

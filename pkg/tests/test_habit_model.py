import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from stopctl.diffusion_core import MarketParams, alpha_exponent
from stopctl.errors import DomainError, NoRootError
from stopctl.habit_model import (
    HabitSpec,
    PreferenceParams,
    aux_f,
    aux_f_x,
    aux_f_xx,
    check_sufficient_conditions,
    check_value_dominance,
    dominance_gap,
    equilibrium_alpha,
    equilibrium_theta,
    lower_thresholds,
    payoff_g,
    slope_bound,
    slope_bound_terms,
    smooth_fit_residual,
    solve_equilibrium,
    solve_threshold,
    sweep_threshold,
)

ALPHA = 2 * 0.1 / (2 * 0.1 + 0.05**2 / 0.09)
_EQ = solve_equilibrium(MarketParams(0.05, 0.3, 0.1), PreferenceParams(0.7, 0.7), HabitSpec.linear(0.15))


def psi_root_oracle(alpha, a, k, c):
    """Independent root of the smooth-fit equation via Brent on the log form."""
    fn = lambda x: math.log(a * x + alpha) - a * (x - c * x - k) - math.log(alpha)
    return brentq(fn, 1e-9, 200.0, xtol=1e-14)


def test_preference_validation():
    for bad in [(0, 1), (1, -1), (math.inf, 1)]:
        with pytest.raises(DomainError):
            PreferenceParams(*bad)


def test_habit_spec_checks():
    HabitSpec.linear(1.0).check()
    with pytest.raises(DomainError):
        HabitSpec.linear(1.2)
    shifted = HabitSpec(lambda x: np.asarray(x) + 1.0, lambda x: np.ones(np.shape(x)), lambda x: np.zeros(np.shape(x)))
    with pytest.raises(DomainError):
        shifted.check()
    steep = HabitSpec(lambda x: 2 * np.asarray(x), lambda x: np.full(np.shape(x), 2.0), lambda x: np.zeros(np.shape(x)))
    with pytest.raises(DomainError):
        steep.check()
    assert HabitSpec.linear(0.15).describe() == "linear:0.15"


def test_payoff_examples(prefs):
    h = HabitSpec.linear(0.15)
    y = 2.0
    assert payoff_g(0.15 * y + 0.7, y, prefs, h) == pytest.approx(0.0, abs=1e-15)
    assert payoff_g(2.7419, 2.7419, prefs, h) == pytest.approx(1 - math.exp(-0.7 * 1.630615), rel=1e-9)
    # quoted figure is rounded
    assert payoff_g(2.7419, 2.7419, prefs, h) == pytest.approx(0.68065, abs=2e-5)
    assert payoff_g(1e4, 1.0, prefs, h) == 1.0


@given(st.floats(0.01, 50), st.floats(0.01, 50), st.floats(0.01, 50))
def test_payoff_monotone(x, y, dx):
    p, h = PreferenceParams(0.7, 0.7), HabitSpec.linear(0.3)
    assert payoff_g(x + dx, y, p, h) >= payoff_g(x, y, p, h)
    assert payoff_g(x, y + dx, p, h) <= payoff_g(x, y, p, h)


def test_equilibrium_theta_examples(market):
    assert equilibrium_theta(market) == pytest.approx(4.5556, abs=1e-4)
    assert equilibrium_theta(MarketParams(0.2, 0.2, 0.1)) == pytest.approx(6.0, abs=1e-12)
    assert equilibrium_theta(MarketParams(0.05, 0.3, 1e-14)) == pytest.approx(0.05 / 0.09, rel=1e-9)


@settings(max_examples=50)
@given(st.floats(0.01, 0.5), st.floats(0.05, 1.0), st.floats(0.01, 0.5))
def test_theta_star_is_fixed_point(mu, sigma, beta):
    m = MarketParams(mu, sigma, beta)
    th = equilibrium_theta(m)
    a = alpha_exponent(th, m)
    assert abs(th - mu / (sigma**2 * (1 - a))) <= 1e-10 * max(1.0, th)
    assert a == pytest.approx(equilibrium_alpha(m), rel=1e-12)


def test_psi_examples(prefs):
    h0 = HabitSpec.zero()
    assert smooth_fit_residual(1e-12, ALPHA, prefs, h0) == pytest.approx(-ALPHA + ALPHA * math.exp(0.49), rel=1e-9)
    assert abs(smooth_fit_residual(2.1090, ALPHA, prefs, h0)) < 1e-4
    assert smooth_fit_residual(200.0, ALPHA, prefs, h0) == pytest.approx(-ALPHA, abs=1e-40)


@pytest.mark.parametrize(
    "alpha,c,expected",
    [(ALPHA, 0.0, 2.1090), (None, 0.15, 1.9436)],
)
def test_threshold_benchmarks(market, prefs, alpha, c, expected):
    alpha = alpha_exponent(1.0, market) if alpha is None else alpha
    x = solve_threshold(alpha, prefs, HabitSpec.linear(c))
    assert x == pytest.approx(psi_root_oracle(alpha, 0.7, 0.7, c), abs=1e-10)
    assert x == pytest.approx(expected, abs=1e-3)
    assert abs(smooth_fit_residual(x, alpha, prefs, HabitSpec.linear(c))) < 1e-10


def test_habit_threshold_near_reported(prefs):
    x = solve_threshold(ALPHA, prefs, HabitSpec.linear(0.15))
    assert x == pytest.approx(psi_root_oracle(ALPHA, 0.7, 0.7, 0.15), abs=1e-10)
    assert abs(x / 2.7419 - 1) < 0.02


@settings(max_examples=40)
@given(st.floats(0.1, 3.0), st.floats(0.1, 2.0), st.floats(0.1, 2.0), st.floats(0.0, 0.9))
def test_psi_single_crossing(alpha, a, k, c):
    p, h = PreferenceParams(a, k), HabitSpec.linear(c)
    x = solve_threshold(alpha, p, h)
    inside = np.linspace(x / 400, x * (1 - 1 / 400), 400)
    assert np.all(smooth_fit_residual(inside, alpha, p, h) > 0)
    outside = np.linspace(x * 1.0025, 20 * x + 50 / a, 400)
    assert np.all(smooth_fit_residual(outside, alpha, p, h) < 0)


def test_no_root_for_full_habit(prefs):
    # h(x) = x removes the dependence on wealth: psi grows without bound
    with pytest.raises(NoRootError):
        solve_threshold(ALPHA, prefs, HabitSpec.linear(1.0))


def test_equilibrium_bundle(eq015, market):
    assert eq015.theta_star == pytest.approx(2 * 0.1 / 0.05 + 0.05 / 0.09, abs=1e-12)
    assert abs(smooth_fit_residual(eq015.x_star, eq015.alpha, eq015.prefs, eq015.habit)) < 1e-10
    assert eq015.x0_star == pytest.approx(2.1090, abs=1e-3)
    locked = solve_equilibrium(market, eq015.prefs, eq015.habit, theta=1.0)
    assert locked.alpha == pytest.approx(1.43619, abs=1e-5)
    assert locked.x_star == pytest.approx(1.9436, abs=1e-3)


def test_zero_habit_collapses_thresholds(market, prefs):
    eq = solve_equilibrium(market, prefs, HabitSpec.zero())
    assert eq.x_star == eq.x0_star
    assert check_value_dominance(eq).overall


def test_aux_examples(eq015):
    xs = eq015.x_star
    y = 1.7
    assert aux_f(xs, y, eq015) == payoff_g(xs, y, eq015.prefs, eq015.habit)
    expect = (1 / xs) ** eq015.alpha * (1 - math.exp(-0.7 * (xs - 0.15 - 0.7)))
    assert aux_f(1.0, 1.0, eq015) == pytest.approx(expect, rel=1e-12)
    g_x = 0.7 * math.exp(-0.7 * (xs - 0.15 * xs - 0.7))
    assert aux_f_x(xs, xs, eq015, side="left") - g_x == pytest.approx(0.0, abs=1e-8)


def test_aux_continuity_at_boundary(eq015):
    xs = eq015.x_star
    for y in (0.5, xs, 4.0):
        left, right = aux_f(xs * (1 - 1e-12), y, eq015), aux_f(xs, y, eq015)
        assert abs(left - right) < 1e-8
    # first derivative glues on the diagonal only, where smooth fit was imposed
    assert abs(aux_f_x(xs, xs, eq015, "left") - aux_f_x(xs, xs, eq015, "right")) < 1e-8
    # second derivative jumps
    assert abs(aux_f_xx(xs * (1 - 1e-9), xs, eq015) - aux_f_xx(xs, xs, eq015)) > 1e-3


def test_aux_derivatives_match_finite_differences(eq015):
    for x in np.linspace(0.2, eq015.x_star * 0.95, 15):
        h = 1e-5 * x
        fd1 = (aux_f(x + h, 1.3, eq015) - aux_f(x - h, 1.3, eq015)) / (2 * h)
        H = 1e-4 * x
        fd2 = (aux_f(x + H, 1.3, eq015) - 2 * aux_f(x, 1.3, eq015) + aux_f(x - H, 1.3, eq015)) / H**2
        assert fd1 == pytest.approx(aux_f_x(x, 1.3, eq015), rel=1e-5)
        assert fd2 == pytest.approx(aux_f_xx(x, 1.3, eq015), rel=1e-5)


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.001, 5))
def test_aux_nonincreasing_in_reference(x, y, dy):
    assert aux_f(x, y + dy, _EQ) <= aux_f(x, y, _EQ) + 1e-15


def test_dominance_matches_aux_difference(eq015):
    xs = np.linspace(0.1, eq015.x_star * 0.99, 50)
    F = dominance_gap(xs, eq015)
    fg = aux_f(xs, xs, eq015) - payoff_g(xs, xs, eq015.prefs, eq015.habit)
    np.testing.assert_allclose(F, eq015.x_star**eq015.alpha * fg, atol=1e-12)


def test_dominance_slopes(eq_slope):
    assert check_value_dominance(eq_slope(0.15)).overall
    bad = check_value_dominance(eq_slope(0.6))
    assert not bad.overall
    item = bad["fgeqg"]
    assert item.worst < 0 and 0 < item.at < eq_slope(0.6).x_star


def test_dominance_slope_04_near_boundary(eq_slope):
    # the gap is negative just below x*: F vanishes with F'(x*) = 0 and F''(x*) < 0
    eq = eq_slope(0.4)
    xs, a, k, c, al = eq.x_star, 0.7, 0.7, 0.4, eq.alpha
    G = lambda x: x**al * (1 - math.exp(-a * (xs - c * x - k))) - xs**al * (1 - math.exp(-a * (x - c * x - k)))
    h = 1e-3
    second = (G(xs + h) - 2 * G(xs) + G(xs - h)) / h**2
    assert second < 0
    assert dominance_gap(xs - 0.05, eq) < 0


def test_dominance_grid_validation(eq015):
    with pytest.raises(DomainError):
        check_value_dominance(eq015, grid_n=1)


def test_sufficient_conditions(eq015, eq_slope):
    rep = check_sufficient_conditions(eq015)
    assert rep.overall
    assert rep["x0assumption"].worst == pytest.approx(eq015.x0_star - (2 - eq015.alpha) / 0.7)
    assert (2 - eq015.alpha) / 0.7 == pytest.approx(1.6029, abs=2e-4)
    assert rep["hassumption1"].passed
    t = rep.values["M_terms"]
    assert t == pytest.approx([0.288, 0.204, 0.5], abs=2e-3)
    assert rep.values["M_bound"] == pytest.approx(0.204, abs=5e-3)
    rep4 = check_sufficient_conditions(eq_slope(0.4))
    assert not rep4["hassumption2"].passed


def test_x0_assumption_equivalence(eq015):
    rep = check_sufficient_conditions(eq015)
    assert rep["x0assumption"].passed == rep["x0assumption_equiv"].passed


def test_slope_bound_terms_by_hand(eq015):
    a, k, al, xs, x0 = 0.7, 0.7, eq015.alpha, eq015.x_star, eq015.x0_star
    t1 = 1 / (2 * (1 + 1 / (a * x0 + al - 1)))
    t2 = (1 - al / min(al * math.exp(a * k), 2 * math.exp(al - 2 + a * k))) / (1 - math.exp(-a * xs))
    assert slope_bound_terms(al, xs, x0, eq015.prefs) == pytest.approx((t1, t2, 0.5), rel=1e-14)
    assert slope_bound(eq015) == min(t1, t2, 0.5)


def test_lower_thresholds(eq015, market):
    x1, x2 = lower_thresholds(eq015.theta_star, eq015.alpha, market, eq015.prefs)
    assert x1 == pytest.approx(2 * 0.05 / (0.09 * eq015.theta_star * 0.7))
    assert x2 == pytest.approx(0.05**2 * eq015.alpha / (2 * 0.1 * 0.09 * 0.7))
    assert eq015.x_star >= min(x1, x2)


def test_sweeps(market, prefs):
    h = HabitSpec.linear(0.15)
    sig = sweep_threshold("sigma", 0.2, 0.5, 13, market, prefs, h)
    assert np.all(np.diff(sig.x_star) < 0)
    mu = sweep_threshold("mu", 0.03, 0.08, 11, market, prefs, h)
    assert np.all(np.diff(mu.x_star) > 0)
    one = sweep_threshold("sigma", 0.3, 0.3, 1, market, prefs, h)
    assert one.points[0].x_star == solve_equilibrium(market, prefs, h).x_star
    end = sweep_threshold("mu", 0.03, 0.08, 2, market, prefs, h).points[-1]
    assert end.x_star == solve_equilibrium(replace(market, mu=0.08), prefs, h).x_star


def test_sweep_csv(market, prefs):
    res = sweep_threshold("sigma", 0.2, 0.5, 3, market, prefs, HabitSpec.linear(0.15))
    lines = res.to_csv().split("\n")
    assert lines[0] == "param,theta_star,alpha,x_star,x0_star,M_bound"
    assert len(lines) == 5 and lines[-1] == ""
    assert lines[2].startswith("0.35,")


def test_sweep_validation(market, prefs):
    with pytest.raises(DomainError):
        sweep_threshold("beta", 0.1, 0.2, 3, market, prefs, HabitSpec.zero())
    with pytest.raises(DomainError):
        sweep_threshold("mu", 0.2, 0.1, 3, market, prefs, HabitSpec.zero())
    with pytest.raises(DomainError):
        sweep_threshold("mu", -0.1, 0.1, 3, market, prefs, HabitSpec.zero())

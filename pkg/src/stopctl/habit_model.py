"""Investment-withdrawal model with a wealth-dependent habit level.

An agent with wealth ``x`` invests a proportion ``theta`` in a single
stock and withdraws everything at a stopping time ``tau``, receiving

    E^x exp(-beta*tau) * (1 - exp(-a*(X_tau - h(x) - k)))

The habit ``h`` lowers the realized utility of rich agents and makes the
problem time-inconsistent.  The constant-proportion equilibrium is
``theta* = 2*beta/mu + mu/sigma^2`` with continuation region ``(0, x*)``
where ``x*`` is the root of the smooth-fit residual ``psi``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Literal

import numpy as np
from scipy.optimize import bisect

from .diffusion_core import MarketParams, alpha_exponent
from .errors import DomainError, NoRootError
from .problem import BivariateC2, CandidateProblem
from .reports import ConditionItem, ConditionReport, fmt_num

PASS_TOL = 1e-9
DEFAULT_GRID = 400
ROOT_XTOL = 1e-12
BRACKET_LO = 1e-8


@dataclass(frozen=True)
class PreferenceParams:
    """Risk aversion ``a`` (1/wealth) and utility shift ``k`` (wealth)."""

    a: float
    k: float

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise DomainError(f"a must be positive, got {self.a!r}")
        if not (self.k > 0 and math.isfinite(self.k)):
            raise DomainError(f"k must be positive, got {self.k!r}")


@dataclass(frozen=True)
class HabitSpec:
    h: Callable
    d1: Callable
    d2: Callable
    kind: str = "custom"
    slope: float | None = None

    @classmethod
    def linear(cls, slope: float) -> "HabitSpec":
        if not 0 <= slope <= 1:
            raise DomainError(f"linear habit slope must lie in [0, 1], got {slope!r}")
        c = float(slope)
        return cls(
            h=lambda x: c * np.asarray(x, dtype=float),
            d1=lambda x: np.full(np.shape(x), c),
            d2=lambda x: np.zeros(np.shape(x)),
            kind="linear",
            slope=c,
        )

    @classmethod
    def zero(cls) -> "HabitSpec":
        return cls.linear(0.0)

    def check(self, xs: Iterable[float] | None = None) -> None:
        """Raise DomainError unless h(0)=0 and 0 <= h' <= 1 on ``xs``."""
        if abs(float(self.h(0.0))) > 1e-12:
            raise DomainError(f"habit must satisfy h(0)=0, got h(0)={float(self.h(0.0))!r}")
        xs = np.linspace(1e-6, 100.0, 1001) if xs is None else np.asarray(list(xs), dtype=float)
        d = np.asarray(self.d1(xs), dtype=float)
        if np.any(d < 0) or np.any(d > 1):
            i = int(np.argmax((d < 0) | (d > 1)))
            raise DomainError(f"habit slope h'({xs[i]:g})={d[i]:g} outside [0, 1]")

    def describe(self) -> str:
        return f"linear:{self.slope:g}" if self.kind == "linear" else self.kind


def _exp_term(x, y, prefs: PreferenceParams, habit: HabitSpec):
    return np.exp(-prefs.a * (np.asarray(x, dtype=float) - habit.h(y) - prefs.k))


def payoff_g(x, y, prefs: PreferenceParams, habit: HabitSpec):
    """Reward ``1 - exp(-a*(x - h(y) - k))`` for stopping at wealth ``x`` with reference ``y``."""
    out = 1.0 - _exp_term(x, y, prefs, habit)
    return float(out) if np.ndim(out) == 0 else out


def payoff_g_x(x, y, prefs: PreferenceParams, habit: HabitSpec):
    out = prefs.a * _exp_term(x, y, prefs, habit)
    return float(out) if np.ndim(out) == 0 else out


def payoff_g_xx(x, y, prefs: PreferenceParams, habit: HabitSpec):
    out = -prefs.a**2 * _exp_term(x, y, prefs, habit)
    return float(out) if np.ndim(out) == 0 else out


def equilibrium_theta(market: MarketParams) -> float:
    """Equilibrium investment proportion ``2*beta/mu + mu/sigma^2``."""
    return 2.0 * market.beta / market.mu + market.mu / market.sigma**2


def equilibrium_alpha(market: MarketParams) -> float:
    """``alpha(theta*) = 2*beta / (2*beta + mu^2/sigma^2)``."""
    return 2.0 * market.beta / (2.0 * market.beta + market.mu**2 / market.sigma**2)


def smooth_fit_residual(x, alpha: float, prefs: PreferenceParams, habit: HabitSpec):
    """``psi(x) = -alpha + (a*x + alpha) * exp(-a*(x - h(x) - k))``; its root is ``x*``."""
    x = np.asarray(x, dtype=float)
    out = -alpha + (prefs.a * x + alpha) * np.exp(-prefs.a * (x - habit.h(x) - prefs.k))
    return float(out) if out.ndim == 0 else out


def solve_threshold(alpha: float, prefs: PreferenceParams, habit: HabitSpec) -> float:
    """Unique positive root of ``psi`` by bracketed bisection.

    The upper bracket starts at ``10/a`` and doubles until ``psi < 0``,
    giving up past ``2**15/a``.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")

    def psi(x):
        return smooth_fit_residual(x, alpha, prefs, habit)

    lo = BRACKET_LO
    if not psi(lo) > 0:
        raise NoRootError(f"psi({lo:g}) = {psi(lo):g} is not positive; habit outside admissible class")
    hi = 10.0 / prefs.a
    cap = 2.0**15 / prefs.a
    while psi(hi) >= 0:
        hi *= 2.0
        if hi > cap:
            raise NoRootError(f"psi stays nonnegative up to x={cap:g}; habit outside admissible class")
    return bisect(psi, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass(frozen=True)
class HabitEquilibrium:
    theta_star: float
    alpha: float
    x_star: float
    market: MarketParams
    prefs: PreferenceParams
    habit: HabitSpec
    x0_star: float = field(default=math.nan)

    def with_boundary(self, x_star: float) -> "HabitEquilibrium":
        """Same control, different stopping boundary (smooth fit no longer holds)."""
        return replace(self, x_star=float(x_star))

    def payoff(self) -> BivariateC2:
        p, h = self.prefs, self.habit
        return BivariateC2(
            value=lambda x, y: payoff_g(x, y, p, h),
            dx=lambda x, y: payoff_g_x(x, y, p, h),
            dxx=lambda x, y: payoff_g_xx(x, y, p, h),
        )

    def aux(self) -> BivariateC2:
        return BivariateC2(
            value=lambda x, y: aux_f(x, y, self),
            dx=lambda x, y: aux_f_x(x, y, self),
            dxx=lambda x, y: aux_f_xx(x, y, self),
            dx_left=lambda x, y: aux_f_x(x, y, self, side="left"),
        )

    def candidate(self) -> CandidateProblem:
        return CandidateProblem.constant_control(
            self.theta_star,
            payoff=self.payoff(),
            aux=self.aux(),
            x_star=self.x_star,
            market=self.market,
        )


def solve_equilibrium(
    market: MarketParams,
    prefs: PreferenceParams,
    habit: HabitSpec,
    theta: float | None = None,
) -> HabitEquilibrium:
    """Solve for ``(theta*, x*)``; with ``theta`` given the control is locked to it.

    The habit-free threshold ``x0*`` is always solved alongside.
    """
    habit.check()
    if theta is None:
        theta = equilibrium_theta(market)
    alpha = alpha_exponent(theta, market, "plus")
    x_star = solve_threshold(alpha, prefs, habit)
    x0 = x_star if habit.kind == "linear" and habit.slope == 0 else solve_threshold(alpha, prefs, HabitSpec.zero())
    return HabitEquilibrium(theta, alpha, x_star, market, prefs, habit, x0)


def _piecewise(x, y, eq: HabitEquilibrium, inside, outside):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    out = np.where(x < eq.x_star, inside(np.minimum(x, eq.x_star), y), outside(x, y))
    return float(out) if out.ndim == 0 else out


def aux_f(x, y, eq: HabitEquilibrium):
    """Expected discounted reward of the candidate from wealth ``x`` with reference ``y``.

    ``(x/x*)^alpha * g(x*, y)`` inside ``(0, x*)``, ``g(x, y)`` elsewhere.
    """
    gs = lambda y_: payoff_g(eq.x_star, y_, eq.prefs, eq.habit)
    return _piecewise(
        x, y, eq,
        lambda x_, y_: (x_ / eq.x_star) ** eq.alpha * gs(y_),
        lambda x_, y_: payoff_g(x_, y_, eq.prefs, eq.habit),
    )


def aux_f_x(x, y, eq: HabitEquilibrium, side: Literal["right", "left"] = "right"):
    """x-derivative of :func:`aux_f`; at ``x*`` the right limit unless ``side="left"``."""
    a = eq.alpha
    xs = eq.x_star
    inside = lambda x_, y_: a / xs * (x_ / xs) ** (a - 1) * payoff_g(xs, y_, eq.prefs, eq.habit)
    outside = lambda x_, y_: payoff_g_x(x_, y_, eq.prefs, eq.habit)
    if side == "left":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        out = np.where(x <= xs, inside(np.minimum(x, xs), y), outside(x, y))
        return float(out) if out.ndim == 0 else out
    return _piecewise(x, y, eq, inside, outside)


def aux_f_xx(x, y, eq: HabitEquilibrium):
    a = eq.alpha
    xs = eq.x_star
    return _piecewise(
        x, y, eq,
        lambda x_, y_: a * (a - 1) / xs**2 * (x_ / xs) ** (a - 2) * payoff_g(xs, y_, eq.prefs, eq.habit),
        lambda x_, y_: payoff_g_xx(x_, y_, eq.prefs, eq.habit),
    )


def c_grid(x_star: float, n: int = DEFAULT_GRID) -> np.ndarray:
    """``n`` uniform points on ``[x*/n, x*(1 - 1/n)]``; excludes both ends of (0, x*)."""
    return np.linspace(x_star / n, x_star * (1.0 - 1.0 / n), n)


def dominance_gap(x, eq: HabitEquilibrium):
    """``x^a (1 - e^{-a(x* - h(x) - k)}) - x*^a (1 - e^{-a(x - h(x) - k)})``.

    Nonnegative on ``(0, x*)`` iff the candidate value dominates immediate stopping.
    """
    x = np.asarray(x, dtype=float)
    p, h = eq.prefs, eq.habit
    hx = h.h(x)
    return x**eq.alpha * (1.0 - np.exp(-p.a * (eq.x_star - hx - p.k))) - eq.x_star**eq.alpha * (
        1.0 - np.exp(-p.a * (x - hx - p.k))
    )


def check_value_dominance(eq: HabitEquilibrium, grid_n: int = DEFAULT_GRID) -> ConditionReport:
    if grid_n < 2:
        raise DomainError(f"grid_n must be at least 2, got {grid_n}")
    xs = c_grid(eq.x_star, grid_n)
    F = dominance_gap(xs, eq)
    i = int(np.argmin(F))
    item = ConditionItem("fgeqg", float(F[i]), float(xs[i]), bool(F[i] >= -PASS_TOL))
    return ConditionReport([item], {"grid_n": grid_n, "x_star": eq.x_star})


def lower_thresholds(theta: float, alpha: float, market: MarketParams, prefs: PreferenceParams) -> tuple[float, float]:
    """The two wealth levels whose minimum ``x*`` must exceed for the D-side conditions."""
    x1 = 2.0 * market.mu / (market.sigma**2 * theta * prefs.a)
    x2 = market.mu**2 * alpha / (2.0 * market.beta * market.sigma**2 * prefs.a)
    return x1, x2


def slope_bound_terms(alpha: float, x_star: float, x0_star: float, prefs: PreferenceParams) -> tuple[float, float, float]:
    """The three terms whose minimum bounds the habit slope on ``(0, x*)``."""
    a, k = prefs.a, prefs.k
    t1 = 1.0 / (2.0 * (1.0 + 1.0 / (a * x0_star + alpha - 1.0)))
    inner = min(alpha * math.exp(a * k), 2.0 * math.exp(alpha - 2.0 + a * k))
    t2 = (1.0 - alpha / inner) / (1.0 - math.exp(-a * x_star))
    return t1, t2, 0.5


def slope_bound(eq: HabitEquilibrium) -> float:
    return min(slope_bound_terms(eq.alpha, eq.x_star, eq.x0_star, eq.prefs))


def check_sufficient_conditions(eq: HabitEquilibrium, grid_n: int = DEFAULT_GRID) -> ConditionReport:
    """Evaluate the sufficient conditions under which dominance is guaranteed."""
    if not math.isfinite(eq.x0_star):
        raise DomainError("x0* must be solved before checking sufficient conditions")
    a, alpha = eq.prefs.a, eq.alpha
    xs = c_grid(eq.x_star, grid_n)
    items = []

    x0_min = (2.0 - alpha) / a
    items.append(ConditionItem("x0assumption", eq.x0_star - x0_min, None, eq.x0_star > x0_min))
    equiv = 2.0 * math.exp(alpha - 2.0 + a * eq.prefs.k) - alpha
    items.append(ConditionItem("x0assumption_equiv", equiv, None, equiv > 0))

    h2 = np.asarray(eq.habit.d2(xs), dtype=float)
    i = int(np.argmax(h2))
    items.append(ConditionItem("hassumption1", float(h2[i]), float(xs[i]), bool(h2[i] <= PASS_TOL)))

    terms = slope_bound_terms(alpha, eq.x_star, eq.x0_star, eq.prefs)
    M = min(terms)
    h1 = np.asarray(eq.habit.d1(xs), dtype=float)
    j = int(np.argmax(h1))
    items.append(ConditionItem("hassumption2", float(M - h1[j]), float(xs[j]), bool(h1[j] < M)))

    x1, x2 = lower_thresholds(eq.theta_star, alpha, eq.market, eq.prefs)
    margin = eq.x_star - min(x1, x2)
    items.append(ConditionItem("xstarcond", margin, None, margin >= -PASS_TOL))

    return ConditionReport(
        items,
        {
            "M_bound": M,
            "M_terms": list(terms),
            "sup_h_prime": float(h1[j]),
            "x0_lower": x0_min,
            "x_bar_1": x1,
            "x_bar_2": x2,
        },
    )


@dataclass(frozen=True)
class SweepPoint:
    param: float
    theta_star: float
    alpha: float
    x_star: float
    x0_star: float
    M_bound: float


SWEEP_HEADER = ("param", "theta_star", "alpha", "x_star", "x0_star", "M_bound")


@dataclass
class SweepResult:
    axis: str
    points: list[SweepPoint]
    x0_lower: list[float]

    @property
    def x_star(self) -> np.ndarray:
        return np.array([p.x_star for p in self.points])

    @property
    def params(self) -> np.ndarray:
        return np.array([p.param for p in self.points])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for p in self.points:
            w.writerow([fmt_num(getattr(p, c)) for c in SWEEP_HEADER])
        return buf.getvalue()


def sweep_threshold(
    axis: Literal["mu", "sigma"],
    start: float,
    stop: float,
    steps: int,
    market: MarketParams,
    prefs: PreferenceParams,
    habit: HabitSpec,
) -> SweepResult:
    """Recompute ``theta*``, ``alpha``, ``x*`` and the slope bound across a parameter grid.

    ``steps == 1`` evaluates the single point ``start``.
    """
    if axis not in ("mu", "sigma"):
        raise DomainError(f"axis must be 'mu' or 'sigma', got {axis!r}")
    if steps < 1 or (steps >= 2 and not start < stop):
        raise DomainError(f"need start < stop and steps >= 2 (or a single point), got {start}, {stop}, {steps}")
    grid = [start] if steps == 1 else list(np.linspace(start, stop, steps))
    points, x0_lower = [], []
    for v in grid:
        m = replace(market, **{axis: float(v)})
        try:
            eq = solve_equilibrium(m, prefs, habit)
        except (NoRootError, DomainError) as exc:
            raise NoRootError(f"solver failed at {axis}={v:g}: {exc}") from exc
        points.append(SweepPoint(float(v), eq.theta_star, eq.alpha, eq.x_star, eq.x0_star, slope_bound(eq)))
        x0_lower.append((2.0 - eq.alpha) / prefs.a)
    return SweepResult(axis, points, x0_lower)

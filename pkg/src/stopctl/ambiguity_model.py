"""Ambiguous discount rate: no constant investment proportion is an equilibrium.

The agent receives ``B(t) * log(x)`` at withdrawal, where ``B`` is the
belief-weighted mean of exponential discounts.  For a constant proportion
``theta`` and a continuation region ``(0, r)`` touching zero, smooth fitting
pins ``log r = 1 / E_p[alpha_plus(theta, beta)]`` and the pointwise maximizer
of the generator is

    theta_tilde(x) = (mu/sigma^2) * S1(x) / S2(x),
    S1 = sum_i w_i a_i x^(a_i-1) / r^a_i,   S2 = sum_i w_i a_i (1-a_i) x^(a_i-1) / r^a_i.

``theta_tilde`` is constant in ``x`` only when the belief has a single rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special, stats

from .diffusion_core import MarketParams, alpha_exponent
from .errors import DegenerateError, DomainError
from .reports import ConditionItem, ConditionReport

QUAD_NODES = 64
TAIL_MASS = 1e-10
DEGENERATE_TOL = 1e-14
SAME_RATE_RTOL = 1e-12
EXCLUSION_TOL = 1e-6
DEFAULT_GRID = 100


@dataclass(frozen=True)
class Belief:
    """Discrete belief over discount rates: atoms ``rates`` with ``weights`` summing to one."""

    rates: np.ndarray
    weights: np.ndarray
    label: str = "atoms"

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if r.ndim != 1 or r.shape != w.shape or r.size == 0:
            raise DomainError("rates and weights must be equal-length nonempty 1-D sequences")
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise DomainError("all discount rates must be positive")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("all weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must sum to one, got {w.sum()!r}")
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, rates, weights, label: str = "atoms") -> "Belief":
        w = np.asarray(weights, dtype=float)
        return cls(np.asarray(rates, dtype=float), w / w.sum(), label)

    @classmethod
    def singleton(cls, beta: float) -> "Belief":
        return cls(np.array([float(beta)]), np.array([1.0]), "singleton")

    @classmethod
    def quasi_exponential(cls, lam: float, beta1: float, beta2: float) -> "Belief":
        """``lam`` on ``beta1`` and ``1 - lam`` on ``beta2``; ``lam = 1`` is allowed."""
        if not 0 < lam <= 1:
            raise DomainError(f"lambda must lie in (0, 1], got {lam!r}")
        if lam == 1:
            return cls.singleton(beta1)
        return cls(np.array([beta1, beta2], dtype=float), np.array([lam, 1.0 - lam]), "quasi")

    @classmethod
    def from_density(
        cls,
        pdf: Callable[[np.ndarray], np.ndarray],
        lo: float,
        hi: float,
        nodes: int = QUAD_NODES,
        label: str = "density",
    ) -> "Belief":
        """Gauss-Legendre discretization of a density supported on ``[lo, hi]``."""
        if not 0 <= lo < hi < math.inf:
            raise DomainError(f"need 0 <= lo < hi < inf, got {lo!r}, {hi!r}")
        t, wq = np.polynomial.legendre.leggauss(nodes)
        half = 0.5 * (hi - lo)
        beta = lo + half * (t + 1.0)
        w = wq * half * np.asarray(pdf(beta), dtype=float)
        keep = w > 0
        return cls.from_atoms(beta[keep], w[keep], label)

    @classmethod
    def generalized_hyperbolic(cls, a: float, b: float, nodes: int = QUAD_NODES) -> "Belief":
        """Gamma(shape=b/a, scale=a) belief, whose mean discount is ``(1 + a t)^(-b/a)``.

        For shape below one the density is singular at zero; the nodes are then
        placed in ``u = beta^shape``, where the integrand is smooth.
        """
        if not (a > 0 and b > 0):
            raise DomainError(f"hyperbolic parameters must be positive, got a={a!r}, b={b!r}")
        shape = b / a
        dist = stats.gamma(shape, scale=a)
        hi = float(dist.isf(TAIL_MASS))
        if shape >= 1:
            return cls.from_density(dist.pdf, 0.0, hi, nodes, "hyper")
        t, wq = np.polynomial.legendre.leggauss(nodes)
        half = 0.5 * hi**shape
        u = half * (t + 1.0)
        beta = u ** (1.0 / shape)
        # p(beta) d beta = exp(-beta/a) / (shape * Gamma(shape) * a^shape) du
        log_c = -special.gammaln(shape + 1.0) - shape * math.log(a)
        w = wq * half * np.exp(log_c - beta / a)
        return cls.from_atoms(beta, w, "hyper")

    def distinct_rates(self) -> np.ndarray:
        r = np.sort(self.rates)
        keep = np.ones(r.size, dtype=bool)
        keep[1:] = np.diff(r) > SAME_RATE_RTOL * r[1:]
        return r[keep]

    @property
    def is_singleton(self) -> bool:
        return self.distinct_rates().size == 1


def hyperbolic_discount(a: float, b: float, t):
    return (1.0 + a * np.asarray(t, dtype=float)) ** (-b / a)


def mean_discount(belief: Belief, t):
    """``B(t) = sum_i w_i exp(-beta_i t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be nonnegative")
    out = np.exp(-np.multiply.outer(t, belief.rates)) @ belief.weights
    return float(out) if out.ndim == 0 else out


def belief_mean_rate(belief: Belief) -> float:
    return float(belief.weights @ belief.rates)


def alpha_by_rate(theta: float, belief: Belief, mu: float, sigma: float) -> np.ndarray:
    """Positive characteristic exponent for each atom's discount rate."""
    return np.array([alpha_exponent(theta, MarketParams(mu, sigma, b), "plus") for b in belief.rates])


def candidate_boundary_r(theta: float, belief: Belief, mu: float, sigma: float) -> float:
    """Right end of the continuation region ``(0, r)`` forced by smooth fitting."""
    return math.exp(1.0 / float(belief.weights @ alpha_by_rate(theta, belief, mu, sigma)))


def _ratio_terms(x, theta, r, belief, mu, sigma):
    al = alpha_by_rate(theta, belief, mu, sigma)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0) or np.any(x >= r):
        raise DomainError(f"theta_tilde needs 0 < x < r = {r:g}")
    # log of w_i a_i x^(a_i - 1) / r^a_i, shifted per x for scale invariance
    logc = np.log(belief.weights * al)[None, :] + np.outer(np.log(x), al - 1.0) - (al * math.log(r))[None, :]
    c = np.exp(logc - logc.max(axis=1, keepdims=True))
    return c.sum(axis=1), c @ (1.0 - al)


def theta_tilde(x, theta: float, r: float, belief: Belief, mu: float, sigma: float):
    """Maximizer over controls of the generator applied to the candidate value at ``(x, x)``.

    Raises DegenerateError where the second derivative vanishes, i.e. the
    supremum is unbounded.
    """
    num, den = _ratio_terms(x, theta, r, belief, mu, sigma)
    bad = np.abs(den) < DEGENERATE_TOL * num
    if np.any(bad):
        xb = np.atleast_1d(x)[int(np.argmax(bad))]
        raise DegenerateError(f"second derivative of the candidate value vanishes at x={xb:g}")
    out = mu / sigma**2 * num / den
    return float(out[0]) if np.ndim(x) == 0 else out


def theta_tilde_limits(theta: float, belief: Belief, mu: float, sigma: float) -> tuple[float, float]:
    """Exact limits of ``theta_tilde`` as ``x -> 0+`` and ``x -> r-``.

    At ``r-`` every power term equals ``1/r``.  At ``0+`` the smallest
    exponent dominates; if its coefficient ``a(1 - a)`` vanishes the limit is
    infinite with the sign of the next nonvanishing denominator term.
    """
    al = alpha_by_rate(theta, belief, mu, sigma)
    w = belief.weights
    k = mu / sigma**2
    den_r = float(w @ (al * (1.0 - al)))
    num_r = float(w @ al)
    if abs(den_r) < DEGENERATE_TOL * num_r:
        at_r = math.copysign(math.inf, den_r) if den_r != 0 else math.inf
    else:
        at_r = k * num_r / den_r

    order = np.argsort(al)
    al_s, w_s = al[order], w[order]
    # group atoms with equal exponents (equal rates)
    groups: list[tuple[float, float, float]] = []
    for a_i, w_i in zip(al_s, w_s):
        if groups and abs(a_i - groups[-1][0]) <= SAME_RATE_RTOL * max(1.0, a_i):
            a0, n0, d0 = groups[-1]
            groups[-1] = (a0, n0 + w_i * a_i, d0 + w_i * a_i * (1.0 - a_i))
        else:
            groups.append((a_i, w_i * a_i, w_i * a_i * (1.0 - a_i)))
    a_min, n_min, d_min = groups[0]
    if abs(d_min) > 1e-12 * n_min:
        at_zero = float(k * n_min / d_min)
    else:
        nxt = [d for _, n, d in groups[1:] if abs(d) > 1e-12 * n]
        if not nxt:
            raise DegenerateError("candidate value is linear in x near zero")
        at_zero = math.copysign(math.inf, nxt[0])
    return at_zero, at_r


def d_side_lower_bound(theta: float, belief: Belief, mu: float, sigma: float) -> float:
    """Every stopping state must exceed ``exp((mu*theta - sigma^2 theta^2 / 2) / m_p)``."""
    return math.exp((mu * theta - 0.5 * sigma**2 * theta**2) / belief_mean_rate(belief))


def exclusion_check(
    theta: float,
    belief: Belief,
    mu: float,
    sigma: float,
    grid_n: int = DEFAULT_GRID,
    tol: float = EXCLUSION_TOL,
) -> ConditionReport:
    """Test whether the constant proportion ``theta`` is ruled out as an equilibrium.

    The report passes when exclusion is demonstrated: ``theta_tilde`` is not
    constant on ``(0, r)`` (or is unbounded somewhere there).  Single-rate
    beliefs are never excluded by this argument.
    """
    if not (theta > 0 and math.isfinite(theta)):
        raise DomainError(f"theta must be positive, got {theta!r}")
    if not (mu > 0 and sigma > 0):
        raise DomainError("mu and sigma must be positive")
    r = candidate_boundary_r(theta, belief, mu, sigma)
    singleton = belief.is_singleton
    try:
        at_zero, at_r = theta_tilde_limits(theta, belief, mu, sigma)
    except DegenerateError:
        at_zero, at_r = math.nan, math.nan
    xs = r * np.arange(1, grid_n + 1) / (grid_n + 1)
    degenerate_at = None
    try:
        tt = theta_tilde(xs, theta, r, belief, mu, sigma)
        spread = float(tt.max() - tt.min())
        dev_i = int(np.argmax(np.abs(tt - theta)))
        deviation, dev_at = float(tt[dev_i] - theta), float(xs[dev_i])
    except DegenerateError as exc:
        spread, deviation, dev_at = math.inf, math.inf, None
        degenerate_at = str(exc)
    gap = abs(at_zero - at_r) if not (math.isinf(at_zero) and math.isinf(at_r)) else math.inf
    if singleton:
        excluded = False
        note = "single discount rate: exclusion argument not applicable"
    else:
        excluded = spread > tol or degenerate_at is not None or not math.isfinite(gap) or gap > tol
        note = degenerate_at or ""
    items = [ConditionItem("non_constant_theta_tilde", spread, dev_at, excluded, note)]
    values = {
        "r": r,
        "theta": theta,
        "theta_tilde_0": at_zero,
        "theta_tilde_r": at_r,
        "endpoint_gap": gap,
        "max_deviation": deviation,
        "grid_n": grid_n,
        "support_size": int(belief.distinct_rates().size),
        "singleton": singleton,
        "exclusion": excluded,
        "constant_equilibrium_possible": not excluded,
        "d_lower_bound": d_side_lower_bound(theta, belief, mu, sigma),
        "mean_rate": belief_mean_rate(belief),
    }
    return ConditionReport(items, values)

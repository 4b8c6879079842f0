"""Geometric Brownian motion under a constant proportional control.

Wealth follows ``dX = mu*theta*X dt + sigma*theta*X dW``.  The discounted
characteristic operator acting on a C^2 function ``f`` of wealth is

    A f(x) = -beta*f(x) + Theta(x)*f'(x) + 0.5*Lambda(x)**2 * f''(x)

with ``Theta(x) = mu*theta*x`` and ``Lambda(x) = sigma*theta*x`` in the
constant-proportion case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

from .errors import DomainError, NumericError

Evaluable = Callable[[float], float]

DEFAULT_REL_STEP = 1e-5
D2_WIDEN = 10.0


@dataclass(frozen=True)
class MarketParams:
    """Drift ``mu``, volatility ``sigma`` and subjective discount rate ``beta``."""

    mu: float
    sigma: float
    beta: float

    def __post_init__(self):
        for name in ("mu", "sigma", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def merton_ratio(self) -> float:
        return self.mu / self.sigma**2


@dataclass(frozen=True)
class ControlledDynamics1D:
    """Wealth drift ``Theta(x)`` and diffusion ``Lambda(x)`` under some control."""

    drift: Evaluable
    diffusion: Evaluable

    @classmethod
    def constant_proportion(cls, theta: float, mu: float, sigma: float) -> "ControlledDynamics1D":
        return cls(drift=lambda x: mu * theta * x, diffusion=lambda x: sigma * theta * x)

    @classmethod
    def feedback(cls, control: Evaluable, mu: float, sigma: float) -> "ControlledDynamics1D":
        return cls(
            drift=lambda x: mu * control(x) * x,
            diffusion=lambda x: sigma * control(x) * x,
        )


@dataclass(frozen=True)
class SmoothFunction1D:
    """A C^2 function of wealth, optionally with analytic derivatives.

    Missing derivatives are supplied by central finite differences.
    """

    value: Evaluable
    d1: Evaluable | None = None
    d2: Evaluable | None = None

    def __call__(self, x: float) -> float:
        return self.value(x)


@dataclass(frozen=True)
class GeneratorResult:
    value: float
    f: float
    d1: float
    d2: float
    finite_difference: bool


def _check_theta(theta: float) -> None:
    if not (theta > 0 and math.isfinite(theta)):
        raise DomainError(f"control proportion must be positive, got {theta!r}")


def characteristic_roots(theta: float, market: MarketParams, beta: float | None = None) -> tuple[float, float]:
    """Both roots ``(alpha_plus, alpha_minus)`` of the characteristic quadratic

        0.5*sigma^2*theta^2*a*(a - 1) + mu*theta*a - beta = 0.

    The larger-magnitude root is computed first; the other follows from the
    product of the roots, so small ``beta`` does not cancel.
    """
    _check_theta(theta)
    b = market.beta if beta is None else beta
    if not b > 0:
        raise DomainError(f"discount rate must be positive, got {b!r}")
    qa = 0.5 * market.sigma**2 * theta**2
    qb = market.mu * theta - qa
    qc = -b
    disc = qb * qb - 4.0 * qa * qc
    q = -0.5 * (qb + math.copysign(math.sqrt(disc), qb))
    r1, r2 = q / qa, qc / q
    return (r1, r2) if r1 > r2 else (r2, r1)


def alpha_exponent(
    theta: float,
    market: MarketParams,
    branch: Literal["plus", "minus"] = "plus",
    beta: float | None = None,
) -> float:
    """Exponent of ``E^x[exp(-beta*tau)]`` for GBM hitting a barrier.

    ``branch="plus"`` gives the positive root (upper barrier), ``"minus"``
    the negative root (lower barrier).  ``beta`` overrides ``market.beta``.
    """
    plus, minus = characteristic_roots(theta, market, beta)
    if branch == "plus":
        return plus
    if branch == "minus":
        return minus
    raise DomainError(f"branch must be 'plus' or 'minus', got {branch!r}")


def gbm_discounted_hit(
    x: float,
    barrier: float,
    theta: float,
    market: MarketParams,
    side: Literal["upper", "lower"] = "upper",
) -> float:
    """Laplace transform ``E^x[exp(-beta*tau)]`` of the first hitting time of ``barrier``."""
    if not barrier > 0:
        raise DomainError(f"barrier must be positive, got {barrier!r}")
    if side == "upper":
        if not 0 < x <= barrier:
            raise DomainError(f"upper barrier requires 0 < x <= barrier, got x={x!r}, barrier={barrier!r}")
        return (x / barrier) ** alpha_exponent(theta, market, "plus")
    if side == "lower":
        if not x >= barrier:
            raise DomainError(f"lower barrier requires x >= barrier, got x={x!r}, barrier={barrier!r}")
        return (x / barrier) ** alpha_exponent(theta, market, "minus")
    raise DomainError(f"side must be 'upper' or 'lower', got {side!r}")


def finite_diff_derivs(f: Evaluable, x: float, rel_step: float = DEFAULT_REL_STEP) -> tuple[float, float, float]:
    """Value, first and second derivative by central differences.

    The first derivative uses the absolute step ``h = rel_step * max(|x|, 1)``.
    The second uses ``D2_WIDEN * h``: at ``h`` itself rounding in ``f``
    contributes about ``eps / h^2`` to the three-point stencil.
    """
    if not rel_step > 0:
        raise DomainError(f"rel_step must be positive, got {rel_step!r}")
    h = rel_step * max(abs(x), 1.0)
    H = D2_WIDEN * h
    try:
        vals = [f(x - H), f(x - h), f(x), f(x + h), f(x + H)]
    except (ValueError, ArithmeticError) as exc:
        raise NumericError(f"evaluation failed near x={x!r}: {exc}") from exc
    if not all(math.isfinite(v) for v in vals):
        raise NumericError(f"non-finite function value near x={x!r}")
    fmm, fm, f0, fp, fpp = vals
    return f0, (fp - fm) / (2.0 * h), (fpp - 2.0 * f0 + fmm) / (H * H)


def _derivs(f: SmoothFunction1D | Evaluable, x: float, rel_step: float) -> tuple[float, float, float, bool]:
    if isinstance(f, SmoothFunction1D) and f.d1 is not None and f.d2 is not None:
        v, d1, d2 = f.value(x), f.d1(x), f.d2(x)
        fd = False
    else:
        fn = f.value if isinstance(f, SmoothFunction1D) else f
        v, d1, d2 = finite_diff_derivs(fn, x, rel_step)
        if isinstance(f, SmoothFunction1D):
            if f.d1 is not None:
                d1 = f.d1(x)
            if f.d2 is not None:
                d2 = f.d2(x)
        fd = True
    if not all(math.isfinite(v_) for v_ in (v, d1, d2)):
        raise NumericError(f"non-finite derivative at x={x!r}")
    return v, d1, d2, fd


def evaluate_generator(
    f: SmoothFunction1D | Evaluable,
    x: float,
    dynamics: ControlledDynamics1D,
    beta: float,
    rel_step: float = DEFAULT_REL_STEP,
) -> GeneratorResult:
    """Apply ``-beta + Theta d/dx + 0.5 Lambda^2 d^2/dx^2`` to ``f`` at ``x``."""
    if not x > 0:
        raise DomainError(f"wealth must be positive, got {x!r}")
    v, d1, d2, fd = _derivs(f, x, rel_step)
    lam = dynamics.diffusion(x)
    out = -beta * v + dynamics.drift(x) * d1 + 0.5 * lam * lam * d2
    return GeneratorResult(out, v, d1, d2, fd)


def apply_generator(
    f: SmoothFunction1D | Evaluable,
    x: float,
    theta: float,
    market: MarketParams,
    rel_step: float = DEFAULT_REL_STEP,
) -> float:
    """``-beta*f + mu*theta*x*f' + 0.5*sigma^2*theta^2*x^2*f''`` at ``x``."""
    if not math.isfinite(theta):
        raise DomainError(f"control must be finite, got {theta!r}")
    dyn = ControlledDynamics1D.constant_proportion(theta, market.mu, market.sigma)
    return evaluate_generator(f, x, dyn, market.beta, rel_step).value

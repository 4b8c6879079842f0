"""Candidate equilibrium description shared by the verifier and the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diffusion_core import MarketParams
from .errors import DomainError

Bivariate = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BivariateC2:
    """``(x, y) -> value`` with first and second x-derivatives, vectorized.

    ``dx_left`` is the left limit of the x-derivative, used at a free
    boundary where the function is glued from two pieces.
    """

    value: Bivariate
    dx: Bivariate
    dxx: Bivariate
    dx_left: Bivariate | None = None

    def __call__(self, x, y):
        return self.value(x, y)


@dataclass(frozen=True)
class CandidateProblem:
    """A constant-boundary candidate: control ``control_hat`` and region ``(0, x_star)``.

    ``control_hat`` maps wealth arrays to control arrays; ``control_const``
    is set when the control is a known constant (enables exact GBM steps).
    """

    payoff: BivariateC2
    aux: BivariateC2
    control_hat: Callable[[np.ndarray], np.ndarray]
    x_star: float
    market: MarketParams
    control_domain: tuple[float, float] = (0.0, math.inf)
    control_const: float | None = None

    def __post_init__(self):
        if not (0 < self.x_star < math.inf):
            raise DomainError(f"region (0, x*) needs finite x* > 0, got {self.x_star!r}")
        lo, hi = self.control_domain
        if not lo < hi:
            raise DomainError(f"empty control domain {self.control_domain!r}")

    @property
    def region(self) -> tuple[float, float]:
        return (0.0, self.x_star)

    def theta_hat(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.control_hat(x), dtype=float), x.shape)

    @classmethod
    def constant_control(cls, theta: float, **kw) -> "CandidateProblem":
        return cls(control_hat=lambda x: np.full(np.shape(x), theta), control_const=theta, **kw)

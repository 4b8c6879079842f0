"""Grid verification of the infinite-horizon extended HJB system.

For a time-homogeneous problem with reward ``exp(-beta*t) g(x, y)``, a
candidate ``(theta_hat, C = (0, x*))`` with auxiliary function ``f`` is an
equilibrium when

    G1      A^{theta_hat} f(., y)(x) = 0           x in C, all y
    G2      sup_u A^u f(., x)(x) = 0, attained at theta_hat(x)   x in C
    G_PLUS  A^{theta_hat} g(., x)(x) <= 0          x in int(D)
    G9      A^{theta_hat} g(., x*)(x) <= 0         x in int(D)
    SS      f_x(x*-, x*) = g_x(x*, x*)
    G5      f(x, y) = g(x, y)                      x in D, all y
    G6      f(x, x) >= g(x, x)                     all x

where ``A^u = -beta + mu*u*x d/dx + 0.5*sigma^2*u^2*x^2 d^2/dx^2`` acts on
the first argument.  ``D`` is truncated at ``d_radius * x*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NumericError
from .problem import BivariateC2, CandidateProblem
from .reports import dumps

DEFAULT_TOL = 1e-6
SS_TOL = 1e-8
CONDITION_IDS = ("G1", "G2", "G_PLUS", "G9", "SS", "G5", "G6")


@dataclass
class ConditionEntry:
    id: str
    worst: float
    at: tuple[float, ...] | float | None
    passed: bool
    flag: str = ""
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"id": self.id, "worst": self.worst, "at": self.at, "pass": self.passed}
        if self.flag:
            d["flag"] = self.flag
        return d


@dataclass
class VerificationReport:
    entries: dict[str, ConditionEntry]
    grid: dict

    @property
    def overall(self) -> bool:
        return all(e.passed for e in self.entries.values())

    def __getitem__(self, cid: str) -> ConditionEntry:
        return self.entries[cid]

    def failed(self) -> list[str]:
        return [cid for cid, e in self.entries.items() if not e.passed]

    def verdicts(self) -> dict[str, bool]:
        return {cid: e.passed for cid, e in self.entries.items()}

    def to_dict(self) -> dict:
        return {
            "conditions": [self.entries[c].to_dict() for c in CONDITION_IDS if c in self.entries],
            "overall": self.overall,
            "grid": self.grid,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def _gen(fn: BivariateC2, x, y, u, market) -> np.ndarray:
    """``A^u fn(., y)`` evaluated at ``x`` (all arrays broadcast)."""
    v, d1, d2 = fn.value(x, y), fn.dx(x, y), fn.dxx(x, y)
    out = -market.beta * v + market.mu * u * x * d1 + 0.5 * market.sigma**2 * u**2 * x**2 * d2
    return np.asarray(out, dtype=float)


def _finite(arr, cond: str, pts) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        i = int(np.argmax(~np.isfinite(arr)))
        where = pts[i] if isinstance(pts, list) else np.ravel(pts)[i]
        raise NumericError(f"{cond}: non-finite value at {where!r}")
    return arr


def grids(x_star: float, grid_c: int, grid_d: int, y_grid: int, d_radius: float = 5.0):
    xc = np.linspace(x_star / grid_c, x_star * (1.0 - 1.0 / grid_c), grid_c)
    xd = np.linspace(x_star * (1.0 + 1.0 / grid_d), d_radius * x_star, grid_d)
    ys = np.linspace(d_radius * x_star / y_grid, d_radius * x_star, y_grid)
    return xc, xd, ys


def hamiltonian_max(problem: CandidateProblem, x):
    """Maximizer and supremum of ``u -> A^u f(., x)(x)`` over the control domain.

    The map is ``c0 + c1*u + c2*u^2``.  Returns ``(u_max, sup, unbounded)``;
    where the supremum is infinite ``u_max`` is nan.
    """
    m = problem.market
    x = np.asarray(x, dtype=float)
    c0 = -m.beta * problem.aux.value(x, x)
    c1 = m.mu * x * problem.aux.dx(x, x)
    c2 = 0.5 * m.sigma**2 * x**2 * problem.aux.dxx(x, x)
    lo, hi = problem.control_domain
    unbounded = ((c2 > 0) & (math.isinf(lo) or math.isinf(hi))) | (
        (c2 == 0) & (((c1 > 0) & math.isinf(hi)) | ((c1 < 0) & math.isinf(lo)))
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(c2 < 0, np.clip(-c1 / (2.0 * c2), lo, hi), np.nan)
    val = np.where(c2 < 0, c0 + c1 * u + c2 * u**2, -np.inf)
    for end in (lo, hi):
        if math.isfinite(end):
            v_end = c0 + c1 * end + c2 * end**2
            better = (c2 >= 0) & (v_end > val)
            u = np.where(better, end, u)
            val = np.where(better, v_end, val)
    u = np.where(unbounded, np.nan, u)
    val = np.where(unbounded, np.inf, val)
    return u, val, unbounded


def hamiltonian_search(problem: CandidateProblem, x: float, u_hi: float | None = None) -> tuple[float, float]:
    """Derivative-free maximization of ``u -> A^u f(., x)(x)`` (bounded Brent search).

    Cross-check for :func:`hamiltonian_max`; the search interval is the
    control domain truncated at ``u_hi``.
    """
    m = problem.market
    lo, hi = problem.control_domain
    if u_hi is None:
        u_hi = 10.0 * (1.0 + float(np.max(np.abs(problem.theta_hat(x)))))
    hi = min(hi, u_hi)
    lo = max(lo, -u_hi)
    f = float(problem.aux.value(x, x))
    f1 = float(problem.aux.dx(x, x))
    f2 = float(problem.aux.dxx(x, x))
    neg = lambda u: -(-m.beta * f + m.mu * u * x * f1 + 0.5 * m.sigma**2 * u**2 * x**2 * f2)
    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return float(res.x), float(-res.fun)


def check_smooth_fitting(problem: CandidateProblem) -> float:
    """``f_x(x*-, x*) - g_x(x*, x*)``, with the left limit taken from inside the region.

    In one dimension this single residual settles both strong and weak fitting.
    """
    xs = problem.x_star
    if problem.aux.dx_left is not None:
        fx = float(problem.aux.dx_left(xs, xs))
    else:
        h = 1e-5 * xs
        fv = lambda x: float(problem.aux.value(x, xs))
        fx = (3 * fv(xs) - 4 * fv(xs - h) + fv(xs - 2 * h)) / (2 * h)
    return fx - float(problem.payoff.dx(xs, xs))


def _worst_abs(res, pts):
    i = int(np.argmax(np.abs(res)))
    return float(np.ravel(res)[i]), pts[i]


def verify_system(
    problem: CandidateProblem,
    grid_c: int = 400,
    grid_d: int = 400,
    y_grid: int = 50,
    tol: float = DEFAULT_TOL,
    ss_tol: float = SS_TOL,
    d_radius: float = 5.0,
) -> VerificationReport:
    """Check every condition of the extended HJB system on grids over C, D and y."""
    if min(grid_c, grid_d, y_grid) < 2:
        raise ValueError("all grids need at least 2 points")
    if not tol > 0:
        raise ValueError("tol must be positive")
    m = problem.market
    f, g = problem.aux, problem.payoff
    xs = problem.x_star
    xc, xd, ys = grids(xs, grid_c, grid_d, y_grid, d_radius)
    th_c = problem.theta_hat(xc)
    th_d = problem.theta_hat(xd)
    e: dict[str, ConditionEntry] = {}

    # G1 on C x (y-grid plus the diagonal)
    X, Y = np.meshgrid(xc, ys, indexing="ij")
    X = np.concatenate([X, xc[:, None]], axis=1)
    Y = np.concatenate([Y, xc[:, None]], axis=1)
    TH = np.broadcast_to(th_c[:, None], X.shape)
    pts = list(zip(X.ravel().tolist(), Y.ravel().tolist()))
    r1 = _finite(_gen(f, X, Y, TH, m), "G1", pts)
    w, at = _worst_abs(r1.ravel(), pts)
    diag = r1[:, -1]
    e["G1"] = ConditionEntry("G1", w, at, abs(w) <= tol, detail={"diagonal_worst": float(np.max(np.abs(diag)))})

    # G2: analytic maximizer of the quadratic Hamiltonian
    u_max, hmax, unbounded = hamiltonian_max(problem, xc)
    if np.any(unbounded):
        i = int(np.argmax(unbounded))
        e["G2"] = ConditionEntry("G2", math.inf, float(xc[i]), False, "unbounded_hamiltonian")
    else:
        hmax = _finite(hmax, "G2", xc)
        gap = np.abs(u_max - th_c) / (1.0 + np.abs(th_c))
        i = int(np.argmax(np.abs(hmax)))
        j = int(np.argmax(gap))
        ok = bool(np.abs(hmax[i]) <= tol and gap[j] <= tol)
        flag = "" if ok else ("control_mismatch" if gap[j] > tol else "")
        e["G2"] = ConditionEntry(
            "G2", float(hmax[i]), float(xc[i]), ok, flag,
            {"max_control_gap": float(gap[j]), "control_gap_at": float(xc[j])},
        )

    # G_PLUS and G9 on int(D)
    rp = _finite(_gen(g, xd, xd, th_d, m), "G_PLUS", xd)
    i = int(np.argmax(rp))
    e["G_PLUS"] = ConditionEntry("G_PLUS", float(rp[i]), float(xd[i]), bool(rp[i] <= tol))
    r9 = _finite(_gen(g, xd, np.full_like(xd, xs), th_d, m), "G9", xd)
    i = int(np.argmax(r9))
    e["G9"] = ConditionEntry("G9", float(r9[i]), float(xd[i]), bool(r9[i] <= tol))

    ss = check_smooth_fitting(problem)
    if not math.isfinite(ss):
        raise NumericError(f"SS: non-finite derivative at x*={xs!r}")
    e["SS"] = ConditionEntry("SS", ss, xs, abs(ss) <= ss_tol)

    # G5 on D x y-grid
    XD, YD = np.meshgrid(xd, ys, indexing="ij")
    r5 = _finite(f.value(XD, YD) - g.value(XD, YD), "G5", XD)
    w, at = _worst_abs(r5.ravel(), list(zip(XD.ravel().tolist(), YD.ravel().tolist())))
    e["G5"] = ConditionEntry("G5", w, at, abs(w) <= tol)

    # G6 on the diagonal over C and D
    xall = np.concatenate([xc, [xs], xd])
    r6 = _finite(f.value(xall, xall) - g.value(xall, xall), "G6", xall)
    i = int(np.argmin(r6))
    e["G6"] = ConditionEntry("G6", float(r6[i]), float(xall[i]), bool(r6[i] >= -tol))

    meta = {
        "grid_c": grid_c,
        "grid_d": grid_d,
        "y_grid": y_grid,
        "c_range": [float(xc[0]), float(xc[-1])],
        "d_range": [float(xd[0]), float(xd[-1])],
        "y_range": [float(ys[0]), float(ys[-1])],
        "d_truncation": d_radius * xs,
        "tol": tol,
        "ss_tol": ss_tol,
    }
    return VerificationReport(e, meta)

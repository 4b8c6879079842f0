"""Monte Carlo probes of the equilibrium conditions on simulated wealth paths.

Paths follow ``dX = mu*u*X dt + sigma*u*X dW`` and stop at the first
monitoring time the state leaves the continuation region.  With a constant
control each step is an exact lognormal draw; far from the boundary
several grid steps are merged into one draw when the chance of an
unobserved excursion to the boundary is below ~1e-15.  The optional
Brownian-bridge correction emulates continuous monitoring: a step exits
with the bridge crossing probability and the exit state is the boundary.  A state-dependent
control is stepped by Euler in log-wealth with the control frozen over the
step.

Every normal is keyed by ``(seed, stream, path, step)`` so estimates are
bit-identical for any number of workers.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .diffusion_core import MarketParams
from .errors import DomainError
from .problem import CandidateProblem
from .reports import fmt_num
from .rng import PathStreams

DEFAULT_EPS = (0.2, 0.1, 0.05, 0.025, 0.0125)
TRUNCATION_LEVEL = 1e-8
SAFETY_SIGMAS = 8.0
MAX_MERGE = 2**20
_T_EPS = 1e-12

Control = float | Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class McConfig:
    """Simulation settings.  ``t_max=None`` means ``ln(1e8)/beta``."""

    paths: int = 100_000
    dt: float = 1e-3
    seed: int = 42
    t_max: float | None = None
    bridge_correction: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.paths < 1:
            raise DomainError(f"paths must be at least 1, got {self.paths}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.t_max is not None and not self.t_max > 0:
            raise DomainError(f"t_max must be positive, got {self.t_max}")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")

    def horizon(self, beta: float) -> float:
        return self.t_max if self.t_max is not None else math.log(1.0 / TRUNCATION_LEVEL) / beta


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    truncated_fraction: float

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr


@dataclass(frozen=True)
class _Phase:
    duration: float
    control: Control
    monitor: bool


@dataclass
class _Batch:
    """Per-path outcome arrays in path order."""

    value: np.ndarray
    truncated: np.ndarray
    tau: np.ndarray


def _control_values(control: Control, x: np.ndarray) -> np.ndarray:
    if callable(control):
        return np.broadcast_to(np.asarray(control(x), dtype=float), x.shape)
    return np.full(x.shape, float(control))


def _safe_span(dist: np.ndarray, drift: np.ndarray, vol: np.ndarray) -> np.ndarray:
    """Largest T with ``|drift|*T + SAFETY_SIGMAS*vol*sqrt(T) <= dist``."""
    m = np.abs(drift)
    kv = SAFETY_SIGMAS * vol
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where(m > 0, (-kv + np.sqrt(kv * kv + 4.0 * m * dist)) / (2.0 * m), dist / kv)
    return np.where(dist > 0, root * root, 0.0)


def _simulate(
    paths: np.ndarray,
    x0: float,
    y: float,
    region: tuple[float, float],
    payoff: Callable[[np.ndarray, float], np.ndarray],
    market: MarketParams,
    phases: Sequence[_Phase],
    cfg: McConfig,
    rng: PathStreams,
) -> _Batch:
    n = paths.size
    lo, hi = region
    llo = math.log(lo) if lo > 0 else -math.inf
    lhi = math.log(hi) if math.isfinite(hi) else math.inf
    beta, mu, sig = market.beta, market.mu, market.sigma
    t_max = cfg.horizon(beta)
    dt = cfg.dt

    value = np.zeros(n)
    tau = np.full(n, math.inf)
    truncated = np.zeros(n, dtype=bool)

    # compact state of live paths; `pos` indexes into the output arrays
    pos = np.arange(n)
    logx = np.full(n, math.log(x0))
    t = np.zeros(n)
    k = np.zeros(n, dtype=np.int64)

    def settle(mask, lx, x=None):
        nonlocal pos, logx, t, k
        if not np.any(mask):
            return
        p = pos[mask]
        tau[p] = t[mask]
        state = np.exp(lx[mask]) if x is None else np.full(p.size, x)
        value[p] = np.exp(-beta * t[mask]) * np.asarray(payoff(state, y), dtype=float)
        keep = ~mask
        pos, logx, t, k = pos[keep], logx[keep], t[keep], k[keep]

    t_start = 0.0
    for ph in phases:
        t_end = min(t_start + ph.duration, t_max)
        if ph.monitor:
            # before the first step every live path still sits exactly at x0
            settle((logx >= lhi) | (logx <= llo), logx, x0 if t_start == 0.0 else None)
        const = not callable(ph.control)
        while pos.size:
            rem = t_end - t
            live = rem > _T_EPS
            if not np.all(live):
                if not np.any(live):
                    break
                # paths already at the phase end wait for the others
                idx = np.nonzero(live)[0]
            else:
                idx = None
            lx = logx if idx is None else logx[idx]
            tt = t if idx is None else t[idx]
            kk = k if idx is None else k[idx]
            r = rem if idx is None else rem[idx]
            th = _control_values(ph.control, np.exp(lx))
            drift = mu * th - 0.5 * sig**2 * th**2
            vol = sig * np.abs(th)
            if const and not ph.monitor:
                h = r
                adv = np.maximum(1, np.ceil(r / dt - 1e-9)).astype(np.int64)
            elif const:
                dist = np.minimum(lhi - lx, lx - llo)
                span = _safe_span(dist, drift, vol)
                merge = np.clip(np.floor(span / dt), 1, MAX_MERGE)
                merge = 2.0 ** np.floor(np.log2(merge))
                h = np.minimum(merge * dt, r)
                adv = merge.astype(np.int64)
            else:
                h = np.minimum(dt, r)
                adv = np.ones(lx.shape, dtype=np.int64)
            z, u = rng.draw(paths[pos if idx is None else pos[idx]], kk)
            new = lx + drift * h + vol * np.sqrt(h) * z
            tt = tt + h
            kk = kk + adv
            if ph.monitor:
                crossed = (new >= lhi) | (new <= llo)
                exit_lx = new.copy()
                if cfg.bridge_correction:
                    var = vol * vol * h
                    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                        p_hi = np.where(np.isfinite(lhi), np.exp(-2.0 * (lhi - lx) * (lhi - new) / var), 0.0)
                        p_lo = np.where(np.isfinite(llo), np.exp(-2.0 * (lx - llo) * (new - llo) / var), 0.0)
                    hit_hi = (new >= lhi) | (~crossed & (u < p_hi))
                    hit_lo = (new <= llo) | (~crossed & ~hit_hi & (u < p_hi + p_lo))
                    # continuous monitoring: the exit happens on the boundary itself
                    exit_lx[hit_hi] = lhi
                    exit_lx[hit_lo] = llo
                    crossed = hit_hi | hit_lo
            else:
                crossed = np.zeros(new.shape, dtype=bool)
                exit_lx = new
            if idx is None:
                logx, t, k = new, tt, kk
                mask = crossed
                exl = exit_lx
            else:
                logx[idx], t[idx], k[idx] = new, tt, kk
                mask = np.zeros(pos.size, dtype=bool)
                mask[idx] = crossed
                exl = logx.copy()
                exl[idx] = exit_lx
            settle(mask, exl)
        t_start = t_end
        if t_start >= t_max - _T_EPS:
            break
    truncated[pos] = True
    return _Batch(value, truncated, tau)


def _run(
    x0: float,
    y: float,
    region: tuple[float, float],
    payoff: Callable,
    market: MarketParams,
    phases: Sequence[_Phase],
    cfg: McConfig,
    stream: int = 0,
) -> _Batch:
    rng = PathStreams(cfg.seed, stream)
    chunks = np.array_split(np.arange(cfg.paths, dtype=np.int64), cfg.workers)
    job = lambda ids: _simulate(ids, x0, y, region, payoff, market, phases, cfg, rng)
    if cfg.workers == 1:
        parts = [job(chunks[0])]
    else:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(job, chunks))
    return _Batch(
        np.concatenate([p.value for p in parts]),
        np.concatenate([p.truncated for p in parts]),
        np.concatenate([p.tau for p in parts]),
    )


def _estimate(values: np.ndarray, truncated: np.ndarray, shift: float = 0.0) -> McEstimate:
    n = values.size
    if np.all(values == values[0]):
        # degenerate sample (e.g. every path stops at once): exact, no rounding from the sum
        return McEstimate(float(values[0]) - shift, 0.0, n, float(np.count_nonzero(truncated) / n))
    mean = float(np.sum(values) / n) - shift
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(mean, se, n, float(np.count_nonzero(truncated) / n))


def _check_region(x0: float, region: tuple[float, float]) -> None:
    lo, hi = region
    if not (x0 > 0 and lo <= x0 <= hi):
        raise DomainError(f"x0={x0!r} lies outside the closed region [{lo!r}, {hi!r}]")


def simulate_stopped_payoff(
    x0: float,
    y: float,
    control: Control,
    region: tuple[float, float],
    payoff: Callable[[np.ndarray, float], np.ndarray],
    market: MarketParams,
    cfg: McConfig,
) -> McEstimate:
    """Estimate ``E^x0[exp(-beta*tau) payoff(X_tau, y)]`` for the first exit of ``region``.

    Paths still inside at the horizon contribute zero and are counted in
    ``truncated_fraction``.
    """
    _check_region(x0, region)
    b = _run(x0, y, region, payoff, market, [_Phase(math.inf, control, True)], cfg)
    return _estimate(b.value, b.truncated)


def _control_of(problem: CandidateProblem) -> Control:
    return problem.control_const if problem.control_const is not None else problem.theta_hat


@dataclass(frozen=True)
class ProbeRow:
    eps: float
    slope: float
    stderr: float


@dataclass
class ProbeResult:
    rows: list[ProbeRow]
    intercept: float
    intercept_stderr: float
    baseline: float
    truncated_fraction: list[float] = field(default_factory=list)

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.intercept - target) <= k * self.intercept_stderr

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "slope", "stderr"])
        for r in self.rows:
            w.writerow([fmt_num(r.eps), fmt_num(r.slope), fmt_num(r.stderr)])
        w.writerow(["intercept", fmt_num(self.intercept), fmt_num(self.intercept_stderr)])
        return buf.getvalue()


def extrapolate_intercept(eps, slopes, stderrs) -> tuple[float, float]:
    """Weighted least-squares line through ``(eps, slope)``; returns the value at 0 and its error."""
    e = np.asarray(eps, dtype=float)
    s = np.asarray(slopes, dtype=float)
    se = np.asarray(stderrs, dtype=float)
    if e.size < 2:
        return float(s[0]), float(se[0])
    if np.any(se <= 0):
        w = np.ones_like(e)
        scale = 0.0
    else:
        w = 1.0 / se**2
        scale = 1.0
    A = np.column_stack([np.ones_like(e), e])
    cov = np.linalg.inv(A.T @ (w[:, None] * A))
    coef = cov @ (A.T @ (w * s))
    return float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0)) * scale)


def _check_eps(eps_list: Sequence[float]) -> list[float]:
    eps = [float(e) for e in eps_list]
    if not eps or any(e <= 0 for e in eps):
        raise DomainError("eps_list must contain positive values")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise DomainError("eps_list must be strictly decreasing")
    return eps


def control_perturbation_probe(
    x0: float,
    problem: CandidateProblem,
    u_const: float,
    eps_list: Sequence[float] = DEFAULT_EPS,
    cfg: McConfig = McConfig(),
) -> ProbeResult:
    """Slopes ``(J(u on [0, eps), theta_hat after) - f(x0, x0)) / eps``.

    Stopping is at the first exit of the region throughout.  As ``eps -> 0``
    the slope tends to ``A^u f(., x0)(x0)``.
    """
    if not (u_const > 0 and math.isfinite(u_const)):
        raise DomainError(f"perturbing control must be positive, got {u_const!r}")
    if not 0 < x0 < problem.x_star:
        raise DomainError(f"x0={x0!r} must lie inside the continuation region (0, {problem.x_star!r})")
    eps = _check_eps(eps_list)
    base = float(problem.aux.value(x0, x0))
    ctrl = _control_of(problem)
    rows, trunc = [], []
    for j, e in enumerate(eps):
        phases = [_Phase(e, float(u_const), True), _Phase(math.inf, ctrl, True)]
        b = _run(x0, x0, problem.region, problem.payoff.value, problem.market, phases, cfg, stream=j + 1)
        est = _estimate(b.value, b.truncated)
        rows.append(ProbeRow(e, (est.mean - base) / e, est.stderr / e))
        trunc.append(est.truncated_fraction)
    c, c_se = extrapolate_intercept([r.eps for r in rows], [r.slope for r in rows], [r.stderr for r in rows])
    return ProbeResult(rows, c, c_se, base, trunc)


def stop_delay_probe(
    x0: float,
    problem: CandidateProblem,
    eps_list: Sequence[float] = DEFAULT_EPS,
    cfg: McConfig = McConfig(),
) -> ProbeResult:
    """Slopes of the value of waiting at least ``eps`` before following the candidate stopping rule.

    The baseline is ``g(x0, x0)`` in the stopping region and ``f(x0, x0)``
    in the continuation region.
    """
    if not x0 > 0:
        raise DomainError(f"x0 must be positive, got {x0!r}")
    if x0 == problem.x_star:
        raise DomainError("the boundary point is not probed by simulation")
    eps = _check_eps(eps_list)
    inside = x0 < problem.x_star
    base = float(problem.aux.value(x0, x0) if inside else problem.payoff.value(x0, x0))
    ctrl = _control_of(problem)
    rows, trunc = [], []
    for j, e in enumerate(eps):
        phases = [_Phase(e, ctrl, False), _Phase(math.inf, ctrl, True)]
        b = _run(x0, x0, problem.region, problem.payoff.value, problem.market, phases, cfg, stream=100 + j)
        est = _estimate(b.value, b.truncated)
        rows.append(ProbeRow(e, (est.mean - base) / e, est.stderr / e))
        trunc.append(est.truncated_fraction)
    c, c_se = extrapolate_intercept([r.eps for r in rows], [r.slope for r in rows], [r.stderr for r in rows])
    return ProbeResult(rows, c, c_se, base, trunc)


def immediate_stop_gap(x0: float, problem: CandidateProblem, cfg: McConfig = McConfig()) -> McEstimate:
    """Estimate ``J(x0; theta_hat, tau_hat) - g(x0, x0)``; an equilibrium needs it nonnegative."""
    if not x0 > 0:
        raise DomainError(f"x0 must be positive, got {x0!r}")
    g0 = float(problem.payoff.value(x0, x0))
    if x0 >= problem.x_star:
        return McEstimate(0.0, 0.0, cfg.paths, 0.0)
    b = _run(x0, x0, problem.region, problem.payoff.value, problem.market,
             [_Phase(math.inf, _control_of(problem), True)], cfg, stream=200)
    return _estimate(b.value, b.truncated, shift=g0)


def with_paths(cfg: McConfig, paths: int) -> McConfig:
    return replace(cfg, paths=paths)

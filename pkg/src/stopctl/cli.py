"""Command-line front end.

Exit codes: 0 success or pass, 1 a verified negative result, 2 usage or
configuration error.

The ``--config`` file is JSON; every key is optional and command-line flags
override it::

    {
      "market": {"mu": 0.05, "sigma": 0.3, "beta": 0.1},
      "prefs": {"a": 0.7, "k": 0.7},
      "habit": {"slope": 0.15},
      "mc": {"paths": 100000, "dt": 0.001, "seed": 42, "t_max": null,
             "bridge_correction": false},
      "verify": {"grid_c": 400, "grid_d": 400, "y_grid": 50, "tol": 1e-6,
                 "ss_tol": 1e-8, "d_radius": 5.0},
      "belief": "quasi:0.5,0.05,0.15",
      "theta": 1.0
    }
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import ambiguity_model as amb
from . import habit_model as hm
from . import hjb_verifier as hv
from . import mc_engine as mc
from .diffusion_core import MarketParams
from .errors import DomainError, NumericError
from .reports import dumps, fmt_num

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
RENORM_WINDOW = 1e-3

DEFAULTS: dict[str, dict[str, Any]] = {
    "market": {"mu": 0.05, "sigma": 0.3, "beta": 0.1},
    "prefs": {"a": 0.7, "k": 0.7},
    "habit": {"slope": 0.15},
    "mc": {"paths": 100_000, "dt": 1e-3, "seed": 42, "t_max": None, "bridge_correction": False},
    "verify": {"grid_c": 400, "grid_d": 400, "y_grid": 50, "tol": 1e-6, "ss_tol": 1e-8, "d_radius": 5.0},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunConfig:
    market: MarketParams
    prefs: hm.PreferenceParams
    habit: hm.HabitSpec
    mc: mc.McConfig
    verify: dict[str, Any] = field(default_factory=dict)
    belief: str | None = None
    theta: float | None = None


def _load_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(raw) - {*DEFAULTS, "belief", "theta"}
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    return raw


def _section(raw: dict, name: str, args: argparse.Namespace, flags: dict[str, str]) -> dict:
    out = dict(DEFAULTS[name])
    given = raw.get(name, {})
    if not isinstance(given, dict):
        raise UsageError(f"config section {name!r} must be an object")
    unknown = set(given) - set(out)
    if unknown:
        raise UsageError(f"unknown keys in {name!r}: {sorted(unknown)}")
    out.update(given)
    for key, dest in flags.items():
        v = getattr(args, dest, None)
        if v is not None:
            out[key] = v
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    raw = _load_file(getattr(args, "config", None))
    m = _section(raw, "market", args, {"mu": "mu", "sigma": "sigma", "beta": "beta"})
    p = _section(raw, "prefs", args, {"a": "a", "k": "k"})
    h = _section(raw, "habit", args, {"slope": "habit_slope"})
    c = _section(raw, "mc", args, {"paths": "paths", "dt": "dt", "seed": "seed", "t_max": "t_max",
                                   "bridge_correction": "bridge"})
    v = _section(raw, "verify", args, {"grid_c": "grid_c", "grid_d": "grid_d", "y_grid": "y_grid",
                                       "tol": "tol", "ss_tol": "ss_tol", "d_radius": "d_radius"})
    try:
        seed = int(c["seed"])
        if not 0 <= seed < 2**64:
            raise UsageError(f"seed must be an unsigned 64-bit integer, got {seed}")
        cfg = RunConfig(
            market=MarketParams(float(m["mu"]), float(m["sigma"]), float(m["beta"])),
            prefs=hm.PreferenceParams(float(p["a"]), float(p["k"])),
            habit=hm.HabitSpec.linear(float(h["slope"])),
            mc=mc.McConfig(int(c["paths"]), float(c["dt"]), seed,
                           None if c["t_max"] is None else float(c["t_max"]), bool(c["bridge_correction"])),
            verify=v,
            belief=getattr(args, "belief", None) or raw.get("belief"),
            theta=getattr(args, "theta", None) if getattr(args, "theta", None) is not None else raw.get("theta"),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    return cfg


# ---------------------------------------------------------------- beliefs

def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} numbers, got {text!r}")
    return vals


def read_belief_file(path: str) -> amb.Belief:
    """CSV with header ``rate,weight``; weights within 1e-3 of summing to one are renormalized."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read belief file {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["rate", "weight"]:
        raise UsageError("belief file needs the header 'rate,weight'")
    try:
        data = np.array([[float(a), float(b)] for a, b in (r for r in rows[1:] if r)], dtype=float)
    except ValueError as exc:
        raise UsageError(f"bad belief row: {exc}") from exc
    if data.size == 0:
        raise UsageError("belief file has no atoms")
    total = float(data[:, 1].sum())
    if abs(total - 1.0) > RENORM_WINDOW:
        raise UsageError(f"belief weights sum to {total:g}, outside [0.999, 1.001]")
    if total != 1.0:
        print(f"warning: belief weights sum to {total!r}; renormalizing", file=sys.stderr)
    return amb.Belief.from_atoms(data[:, 0], data[:, 1], "file")


def parse_belief(spec: str) -> amb.Belief:
    kind, _, rest = spec.partition(":")
    if kind == "quasi":
        lam, b1, b2 = _floats(rest, 3)
        return amb.Belief.quasi_exponential(lam, b1, b2)
    if kind == "hyper":
        a, b = _floats(rest, 2)
        return amb.Belief.generalized_hyperbolic(a, b)
    if kind == "file":
        return read_belief_file(rest)
    raise UsageError(f"unknown belief spec {spec!r}; use quasi:l,b1,b2, hyper:a,b or file:path")


# ---------------------------------------------------------------- commands

def _equilibrium(cfg: RunConfig, theta: float | None = None) -> hm.HabitEquilibrium:
    return hm.solve_equilibrium(cfg.market, cfg.prefs, cfg.habit, theta=theta)


def cmd_solve_habit(args, cfg: RunConfig) -> tuple[str, int]:
    eq = _equilibrium(cfg, args.theta_lock)
    locked1 = _equilibrium(cfg, 1.0)
    out = {
        "theta_star": eq.theta_star,
        "alpha": eq.alpha,
        "x_star": eq.x_star,
        "x0_star": eq.x0_star,
        "x1_star": locked1.x_star,
        "theta_locked": args.theta_lock is not None,
        "habit": cfg.habit.describe(),
        "psi_residual": float(hm.smooth_fit_residual(eq.x_star, eq.alpha, cfg.prefs, cfg.habit)),
    }
    return dumps(out), EXIT_OK


def cmd_verify(args, cfg: RunConfig) -> tuple[str, int]:
    eq = _equilibrium(cfg)
    if args.x_star is not None:
        eq = eq.with_boundary(args.x_star)
    elif args.x_star_shift:
        eq = eq.with_boundary(eq.x_star + args.x_star_shift)
    v = cfg.verify
    rep = hv.verify_system(eq.candidate(), int(v["grid_c"]), int(v["grid_d"]), int(v["y_grid"]),
                           float(v["tol"]), float(v["ss_tol"]), float(v["d_radius"]))
    if not rep.overall:
        print("failed: " + ", ".join(rep.failed()), file=sys.stderr)
    return rep.to_json(), EXIT_OK if rep.overall else EXIT_FAIL


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_num(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def cmd_mc(args, cfg: RunConfig) -> tuple[str, int]:
    eq = _equilibrium(cfg)
    pr = eq.candidate()
    y = args.x0 if args.y is None else args.y
    est = mc.simulate_stopped_payoff(args.x0, y, eq.theta_star, pr.region, pr.payoff.value, cfg.market, cfg.mc)
    target = float(pr.aux.value(args.x0, y))
    return _csv(["mean", "stderr", "n", "truncated_fraction", "aux_f"],
                [[est.mean, est.stderr, est.n, est.truncated_fraction, target]]), EXIT_OK


def _eps(args) -> Sequence[float]:
    return mc.DEFAULT_EPS if args.eps_list is None else _floats(args.eps_list)


def _probe_exit(res: mc.ProbeResult) -> int:
    # a significantly positive intercept is a profitable deviation
    return EXIT_FAIL if res.intercept > 3.0 * res.intercept_stderr else EXIT_OK


def cmd_probe_control(args, cfg: RunConfig) -> tuple[str, int]:
    pr = _equilibrium(cfg).candidate()
    res = mc.control_perturbation_probe(args.x0, pr, args.u, _eps(args), cfg.mc)
    return res.to_csv(), _probe_exit(res)


def cmd_probe_stop(args, cfg: RunConfig) -> tuple[str, int]:
    pr = _equilibrium(cfg).candidate()
    res = mc.stop_delay_probe(args.x0, pr, _eps(args), cfg.mc)
    return res.to_csv(), _probe_exit(res)


def cmd_exclude(args, cfg: RunConfig) -> tuple[str, int]:
    if cfg.belief is None:
        raise UsageError("exclude needs --belief")
    if cfg.theta is None:
        raise UsageError("exclude needs --theta")
    belief = parse_belief(cfg.belief)
    rep = amb.exclusion_check(float(cfg.theta), belief, cfg.market.mu, cfg.market.sigma, args.grid_n, args.excl_tol)
    out = rep.to_dict()
    out["belief"] = {"spec": cfg.belief, "rates": belief.rates.tolist(), "weights": belief.weights.tolist()}
    ok = rep.values["exclusion"] or rep.values["singleton"]
    return dumps(out), EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args, cfg: RunConfig) -> tuple[str, int]:
    res = hm.sweep_threshold(args.axis, args.start, args.stop, args.steps, cfg.market, cfg.prefs, cfg.habit)
    return res.to_csv(), EXIT_OK


# ---------------------------------------------------------------- parser

def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file; flags override it")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output path (default stdout)")
    g.add_argument("--seed", type=_u64, default=argparse.SUPPRESS, help="RNG seed (unsigned 64-bit)")

    model = _Parser(add_help=False)
    g = model.add_argument_group("model")
    for name in ("mu", "sigma", "beta", "a", "k"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--habit-slope", type=float, dest="habit_slope")

    sim = _Parser(add_help=False)
    g = sim.add_argument_group("simulation")
    g.add_argument("--x0", type=float, required=True)
    g.add_argument("--paths", type=int)
    g.add_argument("--dt", type=float)
    g.add_argument("--t-max", type=float, dest="t_max")
    g.add_argument("--bridge", action=argparse.BooleanOptionalAction, default=None,
                   help="Brownian-bridge crossing correction")

    p = _Parser(prog="stopctl", description="Equilibrium investment-stopping toolkit", parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve-habit", parents=[common, model], help="solve the habit equilibrium")
    s.add_argument("--theta-lock", type=float, dest="theta_lock", help="lock the control to this proportion")
    s.set_defaults(func=cmd_solve_habit)

    s = sub.add_parser("verify", parents=[common, model], help="grid-check the extended HJB system")
    s.add_argument("--x-star", type=float, dest="x_star", help="override the stopping boundary")
    s.add_argument("--x-star-shift", type=float, dest="x_star_shift", default=0.0)
    for name, typ in (("grid-c", int), ("grid-d", int), ("y-grid", int), ("tol", float), ("ss-tol", float),
                      ("d-radius", float)):
        s.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("mc", parents=[common, model, sim], help="stopped-payoff Monte Carlo")
    s.add_argument("--y", type=float, help="reference wealth (default x0)")
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("probe-control", parents=[common, model, sim], help="control-perturbation slopes")
    s.add_argument("--u", type=float, required=True)
    s.add_argument("--eps-list", dest="eps_list")
    s.set_defaults(func=cmd_probe_control)

    s = sub.add_parser("probe-stop", parents=[common, model, sim], help="stopping-delay slopes")
    s.add_argument("--eps-list", dest="eps_list")
    s.set_defaults(func=cmd_probe_stop)

    s = sub.add_parser("exclude", parents=[common, model], help="test a constant proportion under ambiguity")
    s.add_argument("--belief", help="quasi:l,b1,b2 | hyper:a,b | file:path")
    s.add_argument("--theta", type=float)
    s.add_argument("--grid-n", type=int, dest="grid_n", default=amb.DEFAULT_GRID)
    s.add_argument("--excl-tol", type=float, dest="excl_tol", default=amb.EXCLUSION_TOL)
    s.set_defaults(func=cmd_exclude)

    s = sub.add_parser("sweep", parents=[common, model], help="threshold comparative statics")
    s.add_argument("--axis", choices=("mu", "sigma"), required=True)
    s.add_argument("--start", type=float, required=True)
    s.add_argument("--stop", type=float, required=True)
    s.add_argument("--steps", type=int, default=11)
    s.set_defaults(func=cmd_sweep)
    return p


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = build_config(args)
        text, code = args.func(args, cfg)
    except UsageError as exc:
        print(f"stopctl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, NumericError, ValueError) as exc:
        print(f"stopctl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        _emit(text, getattr(args, "out", None))
    except OSError as exc:
        print(f"stopctl: error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())

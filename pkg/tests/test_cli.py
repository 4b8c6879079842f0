import json
import subprocess
import sys

import pytest

from stopctl.cli import main, parse_belief
from stopctl.reports import dumps


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_habit_reference(capsys):
    code, out, _ = run(capsys, "solve-habit", "--mu", "0.05", "--sigma", "0.3", "--beta", "0.1",
                       "--a", "0.7", "--k", "0.7", "--habit-slope", "0.15")
    d = json.loads(out)
    assert code == 0
    assert d["theta_star"] == pytest.approx(4.5556, abs=1e-4)
    assert d["x0_star"] == pytest.approx(2.1090, abs=1e-3)
    assert d["x1_star"] == pytest.approx(1.9436, abs=1e-3)
    assert {"theta_star", "alpha", "x_star", "x0_star", "x1_star"} <= set(d)


def test_solve_habit_zero_slope(capsys):
    d = json.loads(run(capsys, "solve-habit", "--habit-slope", "0")[1])
    assert d["x_star"] == d["x0_star"]


def test_solve_habit_theta_lock(capsys):
    d = json.loads(run(capsys, "solve-habit", "--theta-lock", "1")[1])
    assert d["alpha"] == pytest.approx(1.43619, abs=1e-5)
    assert d["x_star"] == d["x1_star"]
    assert d["theta_locked"] is True


def test_invalid_parameters_exit_2(capsys):
    code, _, err = run(capsys, "solve-habit", "--sigma", "-0.3")
    assert code == 2 and "sigma" in err
    assert run(capsys, "solve-habit", "--habit-slope", "abc")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys)[0] == 2


def test_verify_exit_codes(capsys):
    assert run(capsys, "verify", "--habit-slope", "0.15")[0] == 0
    code, out, err = run(capsys, "verify", "--habit-slope", "0.6")
    assert code == 1 and "G6" in err
    assert not {c["id"]: c["pass"] for c in json.loads(out)["conditions"]}["G6"]
    code, out, _ = run(capsys, "verify", "--x-star-shift", "0.5")
    assert code == 1 and not {c["id"]: c["pass"] for c in json.loads(out)["conditions"]}["SS"]


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "verify", "--config", str(bad))[0] == 2
    bad.write_text('{"market": {"mu": 0.05, "drift": 1}}')
    assert run(capsys, "verify", "--config", str(bad))[0] == 2
    bad.write_text('{"market": {"mu": "fast"}}')
    assert run(capsys, "verify", "--config", str(bad))[0] == 2
    assert run(capsys, "verify", "--config", str(tmp_path / "missing.json"))[0] == 2


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"habit": {"slope": 0.6}}))
    assert run(capsys, "verify", "--config", str(cfg))[0] == 1
    assert run(capsys, "verify", "--config", str(cfg), "--habit-slope", "0.15")[0] == 0


def test_json_roundtrip(capsys):
    for argv in (["solve-habit"], ["verify", "--habit-slope", "0.6"],
                 ["exclude", "--belief", "quasi:0.5,0.05,0.15", "--theta", "1"]):
        out = run(capsys, *argv)[1]
        assert dumps(json.loads(out)) == out


def test_mc_deterministic(capsys):
    argv = ["mc", "--x0", "1", "--paths", "100000", "--dt", "0.001", "--seed", "42"]
    a = run(capsys, *argv)[1]
    b = run(capsys, *argv)[1]
    assert a == b
    header, row = a.strip().split("\n")
    assert header == "mean,stderr,n,truncated_fraction,aux_f"
    assert row.split(",")[2] == "100000"


def test_seed_position_and_range(capsys):
    a = run(capsys, "--seed", "5", "mc", "--x0", "1", "--paths", "500")[1]
    b = run(capsys, "mc", "--x0", "1", "--paths", "500", "--seed", "5")[1]
    assert a == b
    assert run(capsys, "mc", "--x0", "1", "--paths", "5", "--seed", str(2**64))[0] == 2
    assert run(capsys, "mc", "--x0", "1", "--paths", "5", "--seed", str(2**64 - 1))[0] == 0


def test_mc_domain_error(capsys):
    assert run(capsys, "mc", "--x0", "10", "--paths", "10")[0] == 2


def test_probe_stop_cli(capsys):
    code, out, _ = run(capsys, "probe-stop", "--x0", "3.0", "--paths", "50000", "--bridge",
                       "--eps-list", "0.0016,0.0008,0.0004,0.0002,0.0001")
    lines = out.strip().split("\n")
    assert code == 0 and lines[0] == "eps,slope,stderr" and len(lines) == 7
    _, c, se = lines[-1].split(",")
    assert lines[-1].startswith("intercept,")
    assert abs(float(c) + 1.0696) < 3 * float(se)


def test_probe_control_cli_format(capsys):
    code, out, _ = run(capsys, "probe-control", "--x0", "1", "--u", "9.1112", "--paths", "2000",
                       "--eps-list", "0.2,0.1")
    assert code in (0, 1)
    assert out.split("\n")[0] == "eps,slope,stderr" and out.endswith("\n")
    assert run(capsys, "probe-control", "--x0", "1", "--u", "0", "--paths", "10")[0] == 2
    assert run(capsys, "probe-control", "--x0", "1", "--u", "1", "--eps-list", "0.1,0.2")[0] == 2


def test_exclude_examples(capsys):
    code, out, _ = run(capsys, "exclude", "--belief", "quasi:0.5,0.05,0.15", "--theta", "1",
                       "--mu", "0.05", "--sigma", "0.3")
    d = json.loads(out)
    assert code == 0 and d["values"]["exclusion"] is True
    assert d["values"]["constant_equilibrium_possible"] is False
    code, out, _ = run(capsys, "exclude", "--belief", "quasi:1.0,0.1,0.1", "--theta", "4.5556")
    d = json.loads(out)
    assert code == 0 and d["values"]["singleton"] and not d["values"]["exclusion"]
    code, out, _ = run(capsys, "exclude", "--belief", "hyper:1,1", "--theta", "1")
    assert code == 0 and json.loads(out)["values"]["exclusion"]


def test_exclude_usage(capsys):
    assert run(capsys, "exclude", "--theta", "1")[0] == 2
    assert run(capsys, "exclude", "--belief", "quasi:0.5,0.05")[0] == 2
    assert run(capsys, "exclude", "--belief", "gauss:1,2", "--theta", "1")[0] == 2


def test_belief_file(tmp_path, capsys):
    f = tmp_path / "b.csv"
    f.write_text("rate,weight\n0.05,0.5\n0.15,0.5004\n")
    code, out, err = run(capsys, "exclude", "--belief", f"file:{f}", "--theta", "1")
    assert code == 0 and "renormaliz" in err
    assert sum(json.loads(out)["belief"]["weights"]) == pytest.approx(1.0, abs=1e-12)
    f.write_text("rate,weight\n0.05,0.5\n0.15,0.6\n")
    assert run(capsys, "exclude", "--belief", f"file:{f}", "--theta", "1")[0] == 2
    f.write_text("beta,p\n0.05,1\n")
    assert run(capsys, "exclude", "--belief", f"file:{f}", "--theta", "1")[0] == 2
    f.write_text("rate,weight\n0.1,1.0\n")
    assert parse_belief(f"file:{f}").is_singleton


def test_sweep_cli(capsys):
    code, out, _ = run(capsys, "sweep", "--axis", "sigma", "--start", "0.2", "--stop", "0.5", "--steps", "4")
    lines = out.strip().split("\n")
    assert code == 0 and lines[0] == "param,theta_star,alpha,x_star,x0_star,M_bound" and len(lines) == 5
    xs = [float(r.split(",")[3]) for r in lines[1:]]
    assert all(b < a for a, b in zip(xs, xs[1:]))
    assert run(capsys, "sweep", "--axis", "kappa", "--start", "0", "--stop", "1")[0] == 2


def test_out_file(tmp_path, capsys):
    target = tmp_path / "r.json"
    code, out, _ = run(capsys, "solve-habit", "--out", str(target))
    assert code == 0 and out == ""
    raw = target.read_bytes()
    assert raw.endswith(b"\n") and b"\r" not in raw
    json.loads(raw.decode("utf-8"))


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "stopctl", "solve-habit"], capture_output=True, text=True)
    assert p.returncode == 0 and "theta_star" in p.stdout
    p = subprocess.run([sys.executable, "-m", "stopctl", "verify", "--bogus"], capture_output=True, text=True)
    assert p.returncode == 2

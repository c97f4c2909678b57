import csv
import json
import subprocess
import sys

import pytest

from discsched import bounds, cli
from discsched.core import SimulationTrace, TransactionSchedule
from discsched.bounds import psi


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_ratio_greedy_lb(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code, stdout, _ = run(["ratio", "--policy", "greedy", "--adversary", "greedy_lb:eps=1e-6",
                           "--lambda", "1", "--gamma", "1", "--out", str(out)], capsys)
    assert code == 0 and stdout.count("\n") == 1
    row = next(csv.DictReader(out.open()))
    assert float(row["ratio"]) == pytest.approx(0.5, abs=1e-5)


def test_bounds_grid(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert run(["bounds", "--grid", "0:1:0.01", "--out", str(out)], capsys)[0] == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 101
    for row in rows:
        lam = float(row["lambda"])
        for kind in bounds.BoundKind:
            assert float(row[kind.value]) == bounds.bound_value(kind, lam)


def test_solve_ub_report(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert run(["solve-ub", "--lambda", "0.5", "--n", "40", "--out", str(out)], capsys)[0] == 0
    report = json.loads(out.read_text())
    assert abs(report["V"] - 1 / psi(0.5)) <= 1e-3
    assert report["n"] == 40 and len(report["x"]) == 41


def test_simulate_trace_round_trip(tmp_path, capsys):
    sched = tmp_path / "sched.json"
    sched.write_text(json.dumps({"label": "ex", "emissions": {"1": [[1, 2], [2, 4]], "2": [[2, 6]], "4": [[1, 8]]}}))
    out = tmp_path / "t.json"
    assert run(["simulate", "--policy", "greedy", "--adversary", str(sched), "--out", str(out)], capsys)[0] == 0
    trace = SimulationTrace.from_dict(json.loads(out.read_text()))
    assert trace.revenue == 18 and trace.schedule_label == "ex"


def test_oracle_dump(tmp_path, capsys):
    sched = tmp_path / "sched.json"
    sched.write_text(json.dumps(TransactionSchedule({1: [(1, 2), (2, 4)], 2: [(2, 6)], 4: [(1, 8)]}).to_dict()))
    code, stdout, _ = run(["oracle", "--adversary", str(sched)], capsys)
    assert code == 0
    lines = stdout.splitlines()
    assert lines[0] == "tx_arrival,tx_ttl,tx_fee,slot,weight" and len(lines) == 5


def test_sweep_sorted_and_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--policy", "rmix", "--family", "det_ub_psi", "--n-range", "1:4",
            "--lambdas", "0.6,0.3", "--samples", "200", "--seed", "9"]
    assert run(args + ["--out", str(a)], capsys)[0] == 0
    assert run(args + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rows = [(float(r["lambda"]), int(r["n"])) for r in csv.DictReader(a.open())]
    assert rows == sorted(rows) and len(rows) == 8


def _sweep_ratios(policy, capsys):
    code, stdout, _ = run(["sweep", "--policy", policy, "--family", "det_ub_psi", "--n-range", "1:30",
                           "--lambdas", "0.5"], capsys)
    assert code == 0
    return [float(r["ratio"]) for r in csv.DictReader(stdout.splitlines())]


def test_sweep_psi_family_always_urgent_decreases_to_limit(capsys):
    ratios = _sweep_ratios("ib:inf", capsys)
    assert len(ratios) == 30
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(1 / psi(0.5), abs=1e-5)


def test_sweep_psi_family_greedy_increases_to_one(capsys):
    ratios = _sweep_ratios("greedy", capsys)
    assert all(a < b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(1.0, abs=1e-5)


def test_adaptive_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["adaptive-ub", "--policy", "rmix", "--lambda", "1", "--n", "10", "--samples", "500", "--seed", "2"]
    assert run(args + ["--out", str(a)], capsys)[0] == 0
    assert run(args + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["seed"] == 2


@pytest.mark.parametrize(
    "args,field",
    [
        (["ratio", "--policy", "bogus", "--adversary", "greedy_lb"], "policy"),
        (["ratio", "--adversary", "greedy_lb", "--lambda", "2"], "lambda"),
        (["ratio", "--adversary", "greedy_lb", "--gamma", "-1"], "gamma"),
        (["ratio", "--adversary", "nosuch:eps=1"], "adversary"),
        (["ratio", "--adversary", "greedy_lb:eps=0"], "adversary"),
        (["ratio", "--adversary", "greedy_lb:what=1"], "adversary"),
        (["ratio", "--adversary", "missing.json"], "adversary"),
        (["bounds", "--grid", "0:2:0.5"], "grid"),
        (["solve-ub", "--lambda", "1", "--n", "10"], "lambda"),
        (["solve-ub", "--lambda", "0.5", "--n", "1"], "n"),
        (["sweep", "--family", "nosuch"], "family"),
        (["sweep", "--family", "det_ub_psi", "--n-range", "5:1"], "n-range"),
        (["ratio", "--policy", "rmix", "--adversary", "greedy_lb", "--samples", "0"], "samples"),
    ],
)
def test_config_errors(args, field, capsys):
    code, _, err = run(args, capsys)
    assert code == 2
    assert f"config error: {field}:" in err


def test_numeric_failure_exit(monkeypatch, capsys):
    def boom(n, lam):
        raise bounds.NoSignChange("no sign change on [1, 2]")

    monkeypatch.setattr(bounds, "solve_equal_ratio_system", boom)
    code, _, err = run(["solve-ub", "--lambda", "0.5", "--n", "10"], capsys)
    assert code == 3 and "NoSignChange" in err


def test_module_entry_point(tmp_path):
    out = tmp_path / "b.csv"
    proc = subprocess.run([sys.executable, "-m", "discsched", "bounds", "--grid", "0:1:0.5", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert out.read_text().count("\n") == 4
    assert "3 rows" in proc.stdout

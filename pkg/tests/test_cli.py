import csv
import json
import math
import subprocess
import sys

import pytest

from godelgeo.cli import dumps, fmt_float, main, sweep_cells

W = 1 / math.sqrt(2)
MINK = {"family": "stationary", "params": {"delta": 0, "beta": 1}}
GODEL = {"family": "godel", "params": {"omega": W}}
BETA = {"family": "static", "params": {"dim": 1, "beta": "1 + abs(x1)^(2+eps)", "eps": 0.25}}
FAR = [0.1, 1, 10, 100, 1000, 10000]


def write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def run(tmp_path, command, cfg, *extra):
    path = write(tmp_path, cfg)
    out = tmp_path / "out"
    code = main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


CONNECT = {
    "spacetime": MINK,
    "command": {"name": "connect", "x_p": [0, 0], "x_q": [1, 0], "y_p": 0, "t_p": 0, "y_q": 2, "t_q": 1},
}
SHOOT = {
    "spacetime": GODEL,
    "command": {"name": "shoot", "x0": [0, 0], "v0": [1, 0], "ydot0": 0, "tdot0": 1, "s_max": 10},
}


def test_format_helpers():
    assert fmt_float(0.1) == "0.10000000000000001"
    assert dumps({"a": [1.5, math.nan, math.inf], "b": True, "c": None}) == (
        '{\n  "a": [1.5, null, null],\n  "b": true,\n  "c": null\n}\n'
    )


def test_connect_minkowski(tmp_path):
    code, out = run(tmp_path, "connect", CONNECT)
    assert code == 0
    diag = json.loads((out / "connect.json").read_text())
    assert diag["J"] == pytest.approx(2.0, abs=1e-12) and diag["converged"] is True
    rows = read_csv(out / "connect.csv")
    assert rows[0] == ["s", "x1", "x2", "y", "t"]
    for r in rows[1:]:
        s, x1, x2, y, t = map(float, r)
        assert x1 == pytest.approx(s, abs=1e-12) and x2 == pytest.approx(0, abs=1e-12)
        assert y == pytest.approx(2 * s, abs=1e-12) and t == pytest.approx(s, abs=1e-12)


def test_shoot_godel(tmp_path):
    code, out = run(tmp_path, "shoot", SHOOT)
    assert code == 0
    rows = read_csv(out / "shoot.csv")
    assert rows[0] == ["s", "x1", "x2", "y", "t", "ydot", "tdot", "c1_drift", "c2_drift", "Ez_drift"]
    assert float(rows[-1][0]) == 10.0
    rep = json.loads((out / "shoot.json").read_text())
    assert rep["terminated"] == "reached s_max"
    assert max(rep["c1_drift"], rep["c2_drift"], rep["Ez_drift"]) < 1e-8


def test_probe_godel(tmp_path):
    cfg = {"spacetime": GODEL, "command": {**SHOOT["command"], "name": "probe", "witness": {"lambda": 0, "k": 1}}}
    code, out = run(tmp_path, "probe", cfg, "--smax", "5")
    assert code == 0
    rep = json.loads((out / "probe.json").read_text())
    assert rep["verdict"] == "pass" and rep["s_end"] == 5.0
    assert (out / "probe.csv").exists()


def test_check_beta_fails_with_exit_zero(tmp_path):
    cfg = {"spacetime": BETA, "command": {"name": "check", "condition": "growth", "field": "C",
                                          "witness": {"lambda": 1, "k": 1}, "region": {"radii": FAR}}}
    code, out = run(tmp_path, "check", cfg)
    assert code == 0
    rep = json.loads((out / "check.json").read_text())
    assert rep["verdict"] == "FAIL" and abs(rep["worst_point"][0]) > 1
    assert rep["caveat"] == "sampling-based; PASS is evidence, not proof"


def test_check_verdicts(tmp_path):
    cfg = {"spacetime": {"family": "kerr_schild", "params": {"V": 0.5}}, "command": {"name": "check"}}
    code, out = run(tmp_path, "check", cfg)
    assert code == 0
    rep = json.loads((out / "check.json").read_text())
    assert "(h1)+(h2)+(h3')" in rep["connectedness"]["passing_routes"]


def test_describe(tmp_path):
    cfg = {"spacetime": {**GODEL, "probe_points": [[0, 0]]}, "command": {"name": "describe"}}
    code, out = run(tmp_path, "describe", cfg)
    assert code == 0
    rep = json.loads((out / "describe.json").read_text())
    assert rep["points"][0]["mu"] == pytest.approx(3.5615528128088303, rel=1e-15)


@pytest.mark.parametrize(
    "cfg, key",
    [
        ({**CONNECT, "command": {**CONNECT["command"], "x_q": [1]}}, "command.x_q"),
        ({**CONNECT, "command": {**CONNECT["command"], "segments": 0}}, "command.segments"),
        ({**CONNECT, "spacetime": {"family": "nope"}}, "spacetime.family"),
        ({**CONNECT, "spacetime": {"family": "custom", "params": {"A": "x1 +", "B": 0, "C": 1}}}, "spacetime.params"),
        ({**CONNECT, "spacetime": {"family": "custom", "params": {"A": 1, "B": 0, "C": "1 - x1"}},
          "command": {**CONNECT["command"], "x_q": [2, 0]}}, "command.x_q"),
        ({**SHOOT, "command": {**SHOOT["command"], "s_max": -1}}, "command.s_max"),
        ({**SHOOT, "spacetime": {**GODEL, "probe_points": [[0, 0], [1]]}}, "spacetime.probe_points[1]"),
        ({**SHOOT, "command": {**SHOOT["command"], "name": "probe"}}, "command.name"),
    ],
)
def test_validation_errors_exit_2_and_name_key(tmp_path, capsys, cfg, key):
    command = "shoot" if key == "command.name" else cfg["command"]["name"]
    code, out = run(tmp_path, command, cfg)
    assert code == 2
    assert f"'{key}'" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_bad_json_and_missing_file(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["shoot", "--config", str(p)]) == 2
    assert main(["shoot", "--config", str(tmp_path / "missing.json")]) == 2
    assert "'--config'" in capsys.readouterr().err


def test_degenerate_exit_3(tmp_path):
    cfg = {**CONNECT, "command": {**CONNECT["command"], "ell_floor": 2.0, "restarts": 2}}
    code, out = run(tmp_path, "connect", cfg)
    assert code == 3
    assert json.loads((out / "connect.json").read_text())["status"] == "degenerate"
    assert not (out / "connect.csv").exists()


def test_nonconvergence_exit_4(tmp_path):
    cfg = {
        "spacetime": {"family": "custom", "params": {"A": "1.5 + 0.3*sin(x1 + x2)", "B": "0.2*cos(x2)", "C": "1"}},
        "command": {"name": "connect", "x_p": [0, 0], "x_q": [1, 0.5], "y_q": 1, "t_q": 0.5,
                    "max_iters": 1, "restarts": 1},
    }
    code, out = run(tmp_path, "connect", cfg)
    assert code == 4
    assert json.loads((out / "connect.json").read_text())["converged"] is False


def test_set_override_and_output_dir(tmp_path):
    cfg = {**SHOOT, "output": {"dir": "results"}}
    path = write(tmp_path, cfg)
    assert main(["shoot", "--config", str(path), "--set", "command.s_max=2"]) == 0
    rep = json.loads((tmp_path / "results" / "shoot.json").read_text())
    assert rep["s_end"] == 2.0
    assert main(["shoot", "--config", str(path), "--set", "nonsense"]) == 2


def test_no_temp_files_left(tmp_path):
    code, out = run(tmp_path, "shoot", SHOOT)
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["shoot.csv", "shoot.json"]


def test_byte_identical_reruns(tmp_path):
    cfg = {**CONNECT, "spacetime": GODEL, "command": {**CONNECT["command"], "x_q": [0.5, 0.3], "segments": 32}}
    a = tmp_path / "a"
    b = tmp_path / "b"
    path = write(tmp_path, cfg)
    assert main(["connect", "--config", str(path), "--out", str(a), "--seed", "3"]) in (0, 4)
    assert main(["connect", "--config", str(path), "--out", str(b), "--seed", "3"]) in (0, 4)
    for name in ("connect.json", "connect.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_cells():
    assert sweep_cells({}) == []
    assert sweep_cells({"a": [1, 2], "b": []}) == []
    assert sweep_cells({"a": [1, 2], "b": ["x"]}) == [{"a": 1, "b": "x"}, {"a": 2, "b": "x"}]


def test_eps_sweep(tmp_path):
    cfg = {"spacetime": BETA, "command": {"name": "sweep", "base": "check", "condition": "growth",
                                          "witness": {"lambda": 1, "k": 1}, "region": {"radii": FAR},
                                          "grid": {"spacetime.params.eps": [0, 0.25]}}}
    code, out = run(tmp_path, "sweep", cfg)
    assert code == 0
    rows = read_csv(out / "summary.csv")
    assert rows[0] == ["cell", "spacetime.params.eps", "status", "J", "residual", "verdict", "message"]
    assert [r[5] for r in rows[1:]] == ["PASS", "FAIL"]
    assert (out / "cell_0001" / "check.json").exists()


def test_omega_sweep_parallel_matches_serial(tmp_path):
    cfg = {"spacetime": GODEL, "command": {**SHOOT["command"], "name": "sweep", "base": "probe", "s_max": 5,
                                           "witness": {"lambda": 0, "k": 1},
                                           "grid": {"spacetime.params.omega": [0.5, W, 1.0]}}}
    path = write(tmp_path, cfg)
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "s1"), "--jobs", "1"]) == 0
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "s2"), "--jobs", "2"]) == 0
    rows = read_csv(tmp_path / "s1" / "summary.csv")
    assert [r[5] for r in rows[1:]] == ["pass"] * 3
    assert (tmp_path / "s1" / "summary.csv").read_bytes() == (tmp_path / "s2" / "summary.csv").read_bytes()
    for i in range(3):
        cell = f"cell_{i:04d}/probe.json"
        assert (tmp_path / "s1" / cell).read_bytes() == (tmp_path / "s2" / cell).read_bytes()


def test_sweep_cell_failure_is_recorded(tmp_path):
    cfg = {"spacetime": GODEL, "command": {**SHOOT["command"], "name": "sweep", "base": "shoot", "s_max": 1,
                                           "grid": {"spacetime.params.omega": [-1, 0.5]}}}
    code, out = run(tmp_path, "sweep", cfg)
    assert code == 0
    rows = read_csv(out / "summary.csv")
    assert rows[1][2] == "2" and "omega" in rows[1][-1]
    assert rows[2][2] == "0"


def test_empty_sweep(tmp_path):
    cfg = {"spacetime": GODEL, "command": {"name": "sweep", "base": "shoot", "grid": {}}}
    code, out = run(tmp_path, "sweep", cfg)
    assert code == 0
    assert read_csv(out / "summary.csv") == [["cell", "status", "J", "residual", "verdict", "message"]]


def test_module_entry_point(tmp_path):
    path = write(tmp_path, SHOOT)
    r = subprocess.run([sys.executable, "-m", "godelgeo", "shoot", "--config", str(path), "--smax", "1"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "out" / "shoot.json").exists()

import csv
import io
import json
import subprocess
import sys

import numpy as np

from adiabatic_lab.cli import ACTIONS, build_parser, main
from adiabatic_lab.gallery import get_example


def _scenario(tmp_path, body, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return str(path)


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_evolve_matches_closed_form(tmp_path):
    out = tmp_path / "out"
    cfg = _scenario(tmp_path, {"example": "bsp-6.5", "params": {"T": 32, "t_eval": [0.0, 0.3, 0.5, 1.0]}})
    assert main(["evolve", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "evolution.csv")
    assert list(rows[0]) == ["t", "row", "col", "re", "im", "abs"]
    exact = get_example("bsp-6.5").closed_form
    for r in rows:
        z = exact(32.0, float(r["t"]))[int(r["row"]), int(r["col"])]
        assert abs(float(r["abs"]) - abs(z)) <= 1e-8
        assert abs(complex(float(r["re"]), float(r["im"])) - z) <= 1e-8
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok" and "wall_clock" not in report


def test_defect_sweep_writes_fit(tmp_path):
    out = tmp_path / "out"
    cfg = _scenario(tmp_path, {"example": "bsp-5.3", "params": {"T_grid": [16, 32, 64, 128]}})
    assert main(["defect-sweep", "--config", cfg, "--out", str(out), "--jobs", "2"]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert "slope" in json.dumps(fit)
    assert len(_rows(out / "defects.csv")) == 4


def test_invalid_action_writes_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = _scenario(tmp_path, {"example": "bsp-5.3", "action": "teleport"})
    assert main(["run", "--config", cfg, "--out", str(out)]) == 4
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["error"] == "config-error"
    assert main(["teleport", "--out", str(out)]) == 4
    assert not out.exists()


def test_unknown_keys_rejected(tmp_path):
    out = tmp_path / "out"
    cfg = _scenario(tmp_path, {"example": "bsp-5.3", "params": {"T": 4, "bogus": 1}})
    assert main(["evolve", "--config", cfg, "--out", str(out)]) == 4
    assert not out.exists()


def test_action_conflict(tmp_path):
    cfg = _scenario(tmp_path, {"example": "bsp-5.3", "action": "project"})
    assert main(["evolve", "--config", cfg, "--out", str(tmp_path / "o")]) == 4


def test_invariant_failure_exit_code(tmp_path):
    out = tmp_path / "out"
    cfg = _scenario(tmp_path, {"example": "bsp-6.5", "params": {"T": 32, "tol": 1e-3}})
    assert main(["evolve", "--config", cfg, "--out", str(out)]) == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"]["error"] == "invariant-failure"
    assert (out / "evolution.csv").exists()


def test_numerical_failure_exit_code(tmp_path):
    out = tmp_path / "out"
    cfg = _scenario(tmp_path, {"example": "bsp-5.6", "params": {"projection": "riesz", "T_grid": [16, 32, 64, 128]}})
    assert main(["defect-sweep", "--config", cfg, "--out", str(out)]) == 3
    err = json.loads((out / "error.json").read_text())
    assert err["error"]["error"] == "non-uniform-gap"
    assert sorted(p.name for p in out.iterdir()) == ["error.json"]


def test_outputs_are_deterministic(tmp_path):
    cfg = _scenario(tmp_path, {"example": "bsp-5.6", "params": {"grid": 129}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["project", "--config", cfg, "--out", str(a)]) == 0
    assert main(["project", "--config", cfg, "--out", str(b), "--jobs", "3"]) == 0
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_timings_are_opt_in(tmp_path):
    out = tmp_path / "out"
    assert main(["evolve", "--example", "bsp-6.5", "--out", str(out), "--timings"]) == 0
    assert "wall_clock" in json.loads((out / "report.json").read_text())


def test_jobs_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("ADIABATIC_LAB_JOBS", "zero")
    assert main(["evolve", "--example", "bsp-6.5", "--out", str(tmp_path / "o")]) == 4
    monkeypatch.setenv("ADIABATIC_LAB_JOBS", "1")
    assert main(["evolve", "--example", "bsp-6.5", "--out", str(tmp_path / "o"), "--jobs", "0"]) == 0


def test_inline_family(tmp_path):
    out = tmp_path / "out"
    body = {"family": {"entries": [["-1j*t", "0"], ["0", "1j*t"]]}, "params": {"T": 4, "t_eval": [1.0]}}
    assert main(["evolve", "--config", _scenario(tmp_path, body), "--out", str(out)]) == 0
    rows = _rows(out / "evolution.csv")
    z = complex(float(rows[0]["re"]), float(rows[0]["im"]))
    assert abs(z - np.exp(-2j)) <= 1e-8


def test_transport_small_grid(tmp_path):
    out = tmp_path / "out"
    body = {"example": "transport-basic", "transport": {"n_x": 8, "n_mu": 4, "T_grid": [16, 32, 64, 128]}}
    assert main(["transport", "--config", _scenario(tmp_path, body), "--out", str(out)]) == 0
    slope = json.loads((out / "fit.json").read_text())
    assert slope


def test_list_examples(capsys):
    assert main(["list-examples", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    ids = [r["id"] for r in rows]
    assert ids == sorted(ids) and "bsp-5.7" in ids
    assert main(["list-examples"]) == 0
    assert "transport-basic" in capsys.readouterr().out


def test_help_documents_columns():
    text = build_parser().format_help()
    for action in ACTIONS:
        assert action in text
    assert "t, row, col, re, im, abs" in text


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "adiabatic_lab", "list-examples"], capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 0 and "bsp-6.6" in res.stdout

import csv
import json

import numpy as np
import pytest

from myoctrl.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from myoctrl.dynamics import read_trajectory
from myoctrl.model import shipped_path

PENDULUM = str(shipped_path("pendulum1.json"))
WALKER = str(shipped_path("walker2d.json"))
CENSUS = str(shipped_path("ms-human-700.census.json"))

TRAIN_TINY = ["train", "--task", "pendulum", "-M", "120", "-N", "80", "-d", "1", "--episode-len",
              "40", "--warmup", "50", "--eval-every", "100", "--eval-episodes", "1", "--hidden",
              "8"]


def test_validate_ok(capsys):
    assert main(["validate", WALKER]) == EXIT_OK
    assert "ok" in capsys.readouterr().out


def test_validate_invalid_model(tmp_path, capsys):
    doc = json.loads(open(PENDULUM).read())
    doc["segments"][1]["mass"] = -1.0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert main(["validate", str(p)]) == EXIT_INVALID
    assert "mass" in capsys.readouterr().err


def test_validate_syntax_error(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{\n  oops\n}")
    assert main(["validate", str(p)]) == EXIT_INVALID


def test_missing_file_is_runtime_error(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == EXIT_RUNTIME


def test_bad_arguments_are_invalid():
    assert main(["simulate", PENDULUM]) == EXIT_INVALID
    assert main(["no-such-command"]) == EXIT_INVALID


def test_census(tmp_path):
    assert main(["census", CENSUS]) == EXIT_OK
    doc = json.loads(open(CENSUS).read())
    doc["body_parts"][0]["joints"] += 1
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    assert main(["census", str(p)]) == EXIT_INVALID


def test_simulate_passive(tmp_path):
    out = tmp_path / "traj.csv"
    assert main(["simulate", PENDULUM, "--passive", "--dt", "0.01", "--seconds", "0.2",
                 "--out", str(out)]) == EXIT_OK
    traj = read_trajectory(out)
    assert len(traj["t"]) == 21
    assert traj["t"][-1] == pytest.approx(0.2)


def test_simulate_excitation_table(tmp_path):
    doc = json.loads(open(PENDULUM).read())
    names = [m["name"] for m in doc["muscles"]]
    exc = tmp_path / "u.csv"
    with open(exc, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + names)
        w.writerow([0.0] + [1.0] + [0.0] * (len(names) - 1))
        w.writerow([0.05] + [0.0] * len(names))
    out = tmp_path / "traj.csv"
    assert main(["simulate", PENDULUM, "--excite", str(exc), "--dt", "0.01", "--seconds", "0.1",
                 "--out", str(out)]) == EXIT_OK
    act = read_trajectory(out)["act"][:, 0]
    assert np.argmax(act) == 5       # rises under excitation, decays after the switch at 50 ms

    bad = tmp_path / "bad.csv"
    bad.write_text("t,not_a_muscle\n0,0.5\n")
    assert main(["simulate", PENDULUM, "--excite", str(bad), "--out", str(out)]) == EXIT_INVALID


def test_train_eval_export_compare(tmp_path, capsys, monkeypatch):
    run = tmp_path / "run"
    assert main(TRAIN_TINY + ["--algo", "tsht", "--out", str(run)]) == EXIT_OK
    rec = json.loads((run / "run.json").read_text())
    assert rec["steps"] == 200 and rec["kind"] == "TSHT"
    capsys.readouterr()

    assert main(["eval", "--policy", str(run / "policy.json"), "--episodes", "2",
                 "--deterministic"]) == EXIT_OK
    ev = json.loads(capsys.readouterr().out)
    assert len(ev["returns"]) == 2 and ev["deterministic"]
    # resets are randomized, so reproducibility is checked across invocations
    assert main(["eval", "--policy", str(run / "policy.json"), "--episodes", "2",
                 "--deterministic"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["returns"] == ev["returns"]

    assert main(["export", "--run", str(run), "--format", "csv", "--out",
                 str(tmp_path / "exp")]) == EXIT_OK
    for name in ("joints.csv", "activations.csv", "returns.csv"):
        assert (tmp_path / "exp" / name).exists()
    assert main(["export", "--run", str(run), "--plots", "returns", "--out",
                 str(tmp_path / "svg")]) == EXIT_OK
    assert (tmp_path / "svg" / "returns.svg").exists()
    assert main(["export", "--run", str(run), "--plots", "bogus"]) == EXIT_INVALID

    assert main(["compare", str(run), "--out", str(tmp_path / "rep.json")]) == EXIT_OK
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert "pendulum: E2E" in rep["missing"]
    assert main(["compare", str(tmp_path)]) == EXIT_INVALID


def test_seed_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("MYOCTRL_SEED", "7")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(TRAIN_TINY + ["--algo", "e2e", "--seed", "0", "--out", str(a)]) == EXIT_OK
    monkeypatch.delenv("MYOCTRL_SEED")
    assert main(TRAIN_TINY + ["--algo", "e2e", "--seed", "7", "--out", str(b)]) == EXIT_OK
    ra, rb = (json.loads((p / "run.json").read_text()) for p in (a, b))
    assert ra["seed"] == 7 and ra["curve"] == rb["curve"]
    monkeypatch.setenv("MYOCTRL_SEED", "seven")
    assert main(TRAIN_TINY + ["--out", str(tmp_path / "c")]) == EXIT_INVALID


def test_eval_rejects_non_checkpoint(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    assert main(["eval", "--policy", str(p)]) == EXIT_INVALID

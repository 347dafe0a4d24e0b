import json
import stat

import numpy as np
import pytest

from frictionflow.artifacts import dumps, sha256
from frictionflow.cli import main



@pytest.fixture()
def config_file(tmp_path, small_config):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(small_config.to_dict()))
    return path


@pytest.fixture()
def artifact(tmp_path, config_file):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
    return out


def test_run_writes_readable_files(artifact):
    names = sorted(p.name for p in artifact.iterdir())
    assert names == ["ledger.csv", "manifest.json", "reports.json", "snapshots.json"]
    for p in artifact.iterdir():
        assert stat.S_IMODE(p.stat().st_mode) == 0o644
    manifest = json.loads((artifact / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["schema_version"] == "1.0"
    assert json.loads((artifact / "reports.json").read_text())["passed"] is True


def test_repeat_runs_are_byte_identical(tmp_path, config_file, artifact, capsys):
    other = tmp_path / "again"
    assert main(["run", "--config", str(config_file), "--out", str(other)]) == 0
    for p in artifact.iterdir():
        assert p.read_bytes() == (other / p.name).read_bytes()
    capsys.readouterr()
    assert main(["verify", str(artifact)]) == 0
    assert json.loads(capsys.readouterr().out)["ledger_identical"] is True


def test_truncated_artifact(artifact):
    p = artifact / "snapshots.json"
    p.write_text(p.read_text()[:-100])
    assert main(["verify", str(artifact)]) == 5


def test_missing_artifact_file(artifact):
    (artifact / "ledger.csv").unlink()
    assert main(["verify", str(artifact)]) == 5


def test_newer_schema_rejected(artifact):
    p = artifact / "manifest.json"
    m = json.loads(p.read_text())
    m["schema_version"] = "2.0"
    p.write_text(json.dumps(m))
    assert main(["verify", str(artifact)]) == 5


def test_tampered_states_fail_diagnostics(artifact):
    # a consistent checksum but altered states: the ledger no longer matches
    snap_path, man_path = artifact / "snapshots.json", artifact / "manifest.json"
    snap = json.loads(snap_path.read_text())
    snap["coeffs"] = (np.asarray(snap["coeffs"]) * 1.5).tolist()
    text = dumps(snap)
    snap_path.write_text(text)
    m = json.loads(man_path.read_text())
    m["checksums"]["snapshots.json"] = sha256(text)
    man_path.write_text(json.dumps(m))
    assert main(["verify", str(artifact)]) == 4


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"pressure": {"gamma": 1.0}, "regularization": {"delta": 0}}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "pressure.gamma" in err and "regularization.delta" in err
    syntax = tmp_path / "syntax.json"
    syntax.write_text('{"time": {"T": 1.0,}}')
    assert main(["run", "--config", str(syntax), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 5


def test_solver_failure_exit(tmp_path, small_config):
    cfg = small_config.with_values(**{"solver.max_iter": 1, "solver.tol": 1e-15})
    path = tmp_path / "fail.json"
    path.write_text(json.dumps(cfg.to_dict()))
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "solver_failure" and manifest["failure"]


def test_conjugate_table(tmp_path, capsys):
    assert main(["conjugate-table", "--kind", "newtonian", "--grid=-1:1:3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "d11,d22,d12,F,F_delta,F_star" and len(lines) == 28
    row = dict(zip(lines[0].split(","), map(float, lines[14].split(","))))
    assert row["d11"] == row["d22"] == row["d12"] == 0.0 and row["F"] == 0.0 and row["F_star"] == 0.0
    out = tmp_path / "table.csv"
    assert main(["conjugate-table", "--kind", "powerlaw", "--q", "3", "--grid", "0:1:2", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 9
    assert main(["conjugate-table", "--kind", "newtonian", "--mu", "-1", "--grid", "0:1:2"]) == 2
    with pytest.raises(SystemExit):
        main(["conjugate-table", "--kind", "newtonian", "--grid", "0:1"])


def test_sweep(tmp_path, small_config):
    base = small_config.with_values(**{"time.T": 0.05}).to_dict()
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"axis": "delta", "values": [0.2, 0.1, 0.05], "base": base}))
    out = tmp_path / "sweep"
    assert main(["sweep", "--plan", str(plan), "--out", str(out)]) == 0
    report = json.loads((out / "sweep_report.json").read_text())
    assert report["report"]["axis"] == "delta" and len(report["report"]["distances"]["u_max_coeff"]) == 2
    assert {"weak", "young_measure", "defects"} <= set(report["report"]["extras"])
    assert all((out / f"level_{i}" / "manifest.json").exists() for i in range(3))
    plan.write_text(json.dumps({"axis": "delta", "values": [0.2, 0.1]}))
    assert main(["sweep", "--plan", str(plan), "--out", str(out)]) == 2

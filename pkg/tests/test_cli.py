import json
from pathlib import Path

import numpy as np
import pytest

from fhbem.cli import main, run_converge, run_validate
from fhbem.config import load_config, parse_config
from fhbem.errors import ConfigurationError, SolverError
from fhbem.galerkin import load_system
from fhbem.validation import fixture_path

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, line.split(","))) for line in lines[1:]]


def test_solve_segment(tmp_path, capsys):
    assert main(["solve", "--config", str(CONFIGS / "segment.json"), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "segment_solve.csv")
    assert len(rows) == 1
    assert float(rows[0]["residual_norm"]) < 1e-12 and rows[0]["dof"] == "8"
    meta = json.loads((tmp_path / "segment_solve.json").read_text())
    assert len(meta["config_hash"]) == 64 and "assemble" in meta["timings_seconds"]
    assert "timings" not in (tmp_path / "segment_solve.csv").read_text()
    a, b = load_system(tmp_path / "segment_system.bin")
    assert a.shape == (8, 8) and b.shape == (8,)
    first = (tmp_path / "segment_solve.csv").read_bytes()
    assert main(["solve", "--config", str(CONFIGS / "segment.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "segment_solve.csv").read_bytes() == first


def test_malformed_config(tmp_path, capsys):
    raw = json.loads((CONFIGS / "segment.json").read_text())
    raw["wave"]["k"] = "fast"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "wave.k" in capsys.readouterr().err


def test_mesh(tmp_path):
    assert main(["mesh", "--config", str(CONFIGS / "cantor_screen.json"), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "cantor_screen_mesh.csv")
    assert len(rows) == 8 and rows[0]["word"] == "1.1.1"
    meta = json.loads((tmp_path / "cantor_screen_mesh.json").read_text())
    assert meta["dof_bounds"][0] <= 8 <= meta["dof_bounds"][1]


def test_field_grid_marks_points_on_the_set(tmp_path):
    assert main(["field-grid", "--config", str(CONFIGS / "segment.json"), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "segment_field.csv")
    assert len(rows) == 35
    near = [r for r in rows if r["status"] != "ok"]
    assert near and all(r["status"].startswith("near-element-") and float(r["x2"]) == 0.0 for r in near)
    assert all(np.isfinite(float(r["abs"])) for r in rows if r["status"] == "ok")


def synthetic_config():
    raw = json.loads((CONFIGS / "segment.json").read_text())
    raw["ladder"] = {"h": [0.25, 0.125, 0.0625, 0.03125],
                     "reference_values": [[1.0, 0.0]] * len(raw["probes"])}
    return parse_config(raw)


def test_converge_synthetic_order():
    cfg = synthetic_config()

    def runner(h, quad):
        return 4, np.full(len(cfg.probes), 1.0 + h[0]), {"condition_estimate": 1.0}

    table = run_converge(cfg, level_runner=runner)
    orders = [float(v) for v in table.rows[-1][-1 - len(cfg.probes):-1]]
    assert np.allclose(orders, 1.0, atol=1e-10)


def test_converge_failed_level_is_marked():
    cfg = synthetic_config()

    def runner(h, quad):
        if h[0] == 0.125:
            raise SolverError("exactly singular pivot at index 3", pivot_index=3)
        return 4, np.full(len(cfg.probes), 1.0 + h[0]), {}

    table = run_converge(cfg, level_runner=runner)
    assert table.rows[1][-1] == "failed:SolverError"
    assert table.metadata["failed_levels"] == 1
    assert len(table.rows) == 4


def test_converge_cantor_ladder(tmp_path):
    cfg = load_config(CONFIGS / "cantor_screen.json")
    table = run_converge(cfg, tmp_path)
    np_ = len(cfg.probes)
    errs = np.array([[float(v) for v in table.column(f"err_{i + 1}")] for i in range(np_)])
    assert np.all(np.diff(errs, axis=1) < 0)
    assert all(s == "ok" for s in table.column("status"))
    for lo, dof, hi in zip(table.column("dof_lo"), table.column("dof"), table.column("dof_hi")):
        assert lo <= dof <= hi
    assert all(float(o) > 0 for o in table.rows[-1][-1 - np_:-1])


def test_converge_needs_ladder(tmp_path):
    assert main(["converge", "--config", str(CONFIGS / "snowflake.json"), "--out", str(tmp_path)]) == 2


def test_validate_pristine(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out and "FAIL" not in out


def test_validate_perturbed(tmp_path, capsys):
    rows = json.loads(fixture_path().read_text())
    for row in rows:
        if row["case_id"] == "cantor/log":
            row["value_re"] *= 1.01
    path = tmp_path / "fixtures.json"
    path.write_text(json.dumps(rows))
    ok, lines = run_validate(path)
    assert not ok
    assert [line for line in lines if line.startswith("FAIL")][0].startswith("FAIL cantor/log")
    assert main(["validate", "--fixtures", str(path)]) == 1


def test_validate_missing_fixtures(tmp_path):
    with pytest.raises(ConfigurationError):
        run_validate(tmp_path / "none.json")
    assert main(["validate", "--fixtures", str(tmp_path / "none.json")]) == 2

import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from degenpar.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

BASE = {
    "problem": {"mesh": {"extents": [1.0], "nodes": [17], "T": 0.2, "nt": 4},
                "p0": 3.0, "alpha": 2.5, "nonlinearity": {"kind": "power_sign"}},
    "validation": {"profiles": ["thm31"], "samples": 500},
}


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def merged(**problem):
    d = json.loads(json.dumps(BASE))
    d["problem"].update(problem)
    return d


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestValidate:
    def test_well_formed_power_sign(self, tmp_path):
        cfg = write_cfg(tmp_path, BASE)
        assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        rep = json.loads((tmp_path / "o" / "validation_thm31.json").read_text())
        assert rep["passed"] and "worst_coercivity" in rep["values"]["U1"]["values"]

    def test_s_boundary_fails(self, tmp_path):
        cfg = write_cfg(tmp_path, merged(s=2.0))
        assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_unknown_field_name(self, tmp_path):
        cfg = write_cfg(tmp_path, merged(a4=1.0))
        assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_malformed_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("problem: [unclosed\n")
        assert main(["validate", "--config", str(p)]) == 2

    def test_missing_file_and_bad_args(self, tmp_path):
        assert main(["validate", "--config", str(tmp_path / "nope.yaml")]) == 2
        assert main(["frobnicate"]) == 2
        assert main(["validate"]) == 2

    def test_profile_flag(self, tmp_path):
        cfg = write_cfg(tmp_path, merged(g=1.0))
        out = tmp_path / "o"
        assert main(["validate", "--config", str(cfg), "--out", str(out), "--profile", "thm41",
                     "--profile", "thm32"]) == 0
        assert (out / "validation_thm41.json").exists() and (out / "validation_thm32.json").exists()
        assert json.loads((out / "validation_thm41.json").read_text())["values"]["K"] == pytest.approx(1.0)


class TestSolve:
    def test_zero_source(self, tmp_path):
        cfg = write_cfg(tmp_path, BASE)
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
        rows = read_csv(out / "summary.csv")
        assert len(rows) == 5 and all(float(r["y"]) == 0.0 for r in rows)
        for name in ("config_echo.yaml", "trajectory.csv", "verdict.json", "validation_thm31.json"):
            assert (out / name).exists()
        traj = read_csv(out / "trajectory.csv")
        assert list(traj[0]) == ["t", "node", "value"] and len(traj) == 5 * 17
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["passed"] and verdict["checks"]["decay"]["zero_ok"]

    def test_manufactured_has_l2_error(self, tmp_path):
        out = tmp_path / "o"
        assert main(["solve", "--config", str(CONFIGS / "heat_mms.yaml"), "--out", str(out)]) == 0
        rows = read_csv(out / "summary.csv")
        assert "l2_error" in rows[0] and float(rows[-1]["l2_error"]) < 1e-3

    def test_solver_abort_exit_3(self, tmp_path):
        d = merged(h=10.0)
        d["solver"] = {"scheme": "implicit_newton", "max_newton": 1, "newton_tol": 1e-14}
        out = tmp_path / "o"
        assert main(["solve", "--config", str(write_cfg(tmp_path, d)), "--out", str(out)]) == 3
        v = json.loads((out / "verdict.json").read_text())
        assert v["aborted"] and v["error"]

    def test_csv_field(self, tmp_path):
        lines = ["node,value"] + [f"{k},{0.5 if 0 < k < 16 else 0.0}" for k in range(17)]
        (tmp_path / "h.csv").write_text("\n".join(lines) + "\n")
        cfg = write_cfg(tmp_path, merged(h={"kind": "csv", "path": "h.csv"}))
        out = tmp_path / "o"
        assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
        assert float(read_csv(out / "summary.csv")[-1]["y"]) > 0

    def test_echo_is_normalized(self, tmp_path):
        cfg = write_cfg(tmp_path, BASE)
        out = tmp_path / "o"
        main(["solve", "--config", str(cfg), "--out", str(out), "--seed", "5"])
        echo = yaml.safe_load((out / "config_echo.yaml").read_text())
        assert echo["seed"] == 5 and echo["solver"]["scheme"] == "imex_lagged"
        assert echo["problem"]["h"] == "zero"


class TestSweep:
    def test_one_row_per_run(self, tmp_path):
        d = merged(h=1.0)
        d["sweep"] = {"solver.dt": [0.1, 0.05, 0.025]}
        out = tmp_path / "o"
        assert main(["sweep", "--config", str(write_cfg(tmp_path, d)), "--out", str(out)]) == 0
        rows = read_csv(out / "sweep_summary.csv")
        assert [r["solver.dt"] for r in rows] == ["0.1", "0.05", "0.025"]
        assert all((out / r["run"] / "summary.csv").exists() for r in rows)

    def test_bad_axis(self, tmp_path):
        d = merged()
        d["sweep"] = {"solver.nonsense": [1]}
        assert main(["sweep", "--config", str(write_cfg(tmp_path, d)), "--out", str(tmp_path / "o")]) == 2


class TestNorms:
    def test_zero_field(self, tmp_path):
        d = {"problem": {"mesh": {"nodes": [11]}}, "norms": {"field": 0.0, "exponent": 2.5, "pn_alpha": 1, "pn_beta": 2}}
        out = tmp_path / "o"
        assert main(["norms", "--config", str(write_cfg(tmp_path, d)), "--out", str(out)]) == 0
        rep = json.loads((out / "norms.json").read_text())
        assert rep["luxemburg"] == rep["modular"] == rep["pn_pseudonorm"] == rep["sup"] == 0

    def test_unit_field(self, tmp_path):
        d = {"problem": {"mesh": {"nodes": [11]}}, "norms": {"field": 1.0, "exponent": 2.0}}
        out = tmp_path / "o"
        main(["norms", "--config", str(write_cfg(tmp_path, d)), "--out", str(out)])
        assert json.loads((out / "norms.json").read_text())["luxemburg"] == pytest.approx(1.0, abs=1e-12)

    def test_piecewise_oracle(self, tmp_path):
        out = tmp_path / "o"
        assert main(["norms", "--config", str(CONFIGS / "norms_piecewise.yaml"), "--out", str(out)]) == 0
        assert json.loads((out / "norms.json").read_text())["luxemburg"] == pytest.approx(2.4510776217862933, abs=1e-10)

    def test_field_file_by_coordinates(self, tmp_path):
        lines = ["x0,value"] + [f"{k / 10!r},{2.0}" for k in range(11)]
        (tmp_path / "u.csv").write_text("\n".join(lines) + "\n")
        d = {"problem": {"mesh": {"nodes": [11]}}, "norms": {"exponent": 2.0}}
        out = tmp_path / "o"
        assert main(["norms", "--config", str(write_cfg(tmp_path, d)), "--out", str(out),
                     "--field", str(tmp_path / "u.csv")]) == 0
        assert json.loads((out / "norms.json").read_text())["luxemburg"] == pytest.approx(2.0)

    def test_incomplete_field_file(self, tmp_path):
        (tmp_path / "u.csv").write_text("node,value\n0,1.0\n")
        d = {"problem": {"mesh": {"nodes": [11]}}}
        assert main(["norms", "--config", str(write_cfg(tmp_path, d)), "--out", str(tmp_path / "o"),
                     "--field", str(tmp_path / "u.csv")]) == 2


def test_module_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    r = subprocess.run([sys.executable, "-m", "degenpar", "validate", "--config", str(cfg),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0 and "thm31: pass" in r.stdout

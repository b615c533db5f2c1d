"""Configuration validation and the command line front end."""

from __future__ import annotations

import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from antiplane.cli import main
from antiplane.config import load_config, parse_config
from antiplane.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SHIPPED = sorted(CONFIGS.glob("*.json"))


def _base(**over):
    doc = {
        "grid": {"nx": 8, "ny": 8, "dirichlet": ["left"]},
        "material": {"kind": "quad_exp", "mu": 1.0, "nu": 0.5},
        "traction": {"sides": {"right": 1.0}},
    }
    doc.update(over)
    return doc


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


class TestConfig:
    @pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
    def test_shipped_configs_validate(self, path):
        cfg = load_config(path)
        cfg.grid.build()
        cfg.traction.build()
        cfg.build_material()

    def test_defaults(self):
        cfg = parse_config(_base())
        assert cfg.solver.tolerances.compatibility == 1e-6
        assert cfg.output.formats == ["json", "csv"]
        assert cfg.sweep is None

    def test_unknown_key_is_named(self):
        doc = _base()
        doc["grid"]["nxx"] = 3
        with pytest.raises(ConfigError, match=r"grid\.nxx"):
            parse_config(doc)

    def test_missing_section(self):
        doc = _base()
        del doc["material"]
        with pytest.raises(ConfigError, match="material"):
            parse_config(doc)

    def test_bad_material_kind(self):
        with pytest.raises(ConfigError, match="material"):
            parse_config(_base(material={"kind": "neo_hookean", "mu": 1.0}))

    def test_invalid_material_parameter(self):
        with pytest.raises(ConfigError, match="material"):
            parse_config(_base(material={"kind": "quad_exp", "mu": -1.0, "nu": 0.5}))

    def test_traction_needs_exactly_one_kind(self):
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config(_base(traction={"sides": {"right": 1.0}, "stress": [1.0, 0.0]}))
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config(_base(traction={}))

    def test_grid_bounds(self):
        with pytest.raises(ConfigError, match=r"grid\.nx"):
            parse_config(_base(grid={"nx": 1, "ny": 8}))

    def test_not_an_object(self):
        with pytest.raises(ConfigError):
            parse_config([1, 2])

    def test_json_syntax_error_position(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "grid": {"nx": 4,}\n}')
        with pytest.raises(ConfigError, match="line 2, column"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.json")


class TestSolveCommand:
    def test_quadexp_square(self, tmp_path, capsys):
        assert main(["solve", "--config", str(CONFIGS / "quadexp_square.json"), "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "result.json").read_text())
        assert doc["compatibility_gate_passed"] is True
        (b,) = doc["branches"]
        e = b["energies"]
        assert abs(e["Pi"] - e["Pid"]) <= 1e-6 * (1 + abs(e["Pi"]))
        assert (tmp_path / "u_1.csv").exists() and (tmp_path / "fields.json").exists()
        assert "branch 1" in capsys.readouterr().out

    def test_p2_three_branches(self, tmp_path):
        assert main(["solve", "--config", str(CONFIGS / "p2_three_roots.json"), "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "result.json").read_text())
        labels = [set(b["labels"]) for b in doc["branches"]]
        assert labels == [{"GlobalMin"}, {"LocalMin1DOnly"}, {"LocalMax"}]
        pis = [b["energies"]["Pi"] for b in doc["branches"]]
        assert pis[0] < pis[1] < pis[2]
        for k in (1, 2, 3):
            assert (tmp_path / f"u_{k}.csv").exists()

    def test_disk_hole_fails_gate(self, tmp_path, capsys):
        assert main(["solve", "--config", str(CONFIGS / "disk_hole.json"), "--out", str(tmp_path)]) == 2
        assert "compatibility gate" in capsys.readouterr().err
        assert (tmp_path / "result.json").exists()

    def test_square_hole_is_solver_error(self, tmp_path, capsys):
        doc = _base(grid={"nx": 16, "ny": 16, "dirichlet": ["left"], "holes": [[0.25, 0.75, 0.25, 0.75]]})
        assert main(["solve", "--config", str(_write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 3
        assert "SolveFailure" in capsys.readouterr().err

    def test_malformed_config(self, tmp_path, capsys):
        doc = _base()
        doc["solver"] = {"scan_pionts": 10}
        assert main(["solve", "--config", str(_write(tmp_path, doc))]) == 1
        assert "solver.scan_pionts" in capsys.readouterr().err

    def test_thread_count_does_not_change_results(self, tmp_path):
        cfg = str(CONFIGS / "p2_three_roots.json")
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "4"]) == 0
        assert (tmp_path / "a" / "roots.json").read_bytes() == (tmp_path / "b" / "roots.json").read_bytes()
        for k in (1, 2, 3):
            assert (tmp_path / "a" / f"u_{k}.csv").read_bytes() == (tmp_path / "b" / f"u_{k}.csv").read_bytes()


class TestVerifyCommand:
    @pytest.mark.parametrize("name", ["quadexp_square", "p2_three_roots", "minimal_surface"])
    def test_shipped_configs_pass(self, name, tmp_path, capsys):
        assert main(["verify", "--config", str(CONFIGS / f"{name}.json"), "--out", str(tmp_path)]) == 0
        assert capsys.readouterr().out.rstrip().endswith("verify: PASS")
        assert json.loads((tmp_path / "verify.json").read_text())["passed"] is True

    def test_perturbed_zeta_fails(self, tmp_path, capsys):
        args = ["verify", "--config", str(CONFIGS / "p2_three_roots.json"), "--out", str(tmp_path)]
        assert main(args + ["--perturb-zeta", "0.05"]) == 4
        out = capsys.readouterr().out
        assert "FAIL" in out and out.rstrip().endswith("verify: FAIL")


class TestSweepCommand:
    def test_tau_sq_sweep(self, tmp_path):
        assert main(["sweep", "--config", str(CONFIGS / "p2_three_roots.json"), "--out", str(tmp_path)]) == 0
        rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
        assert len(rows) == 200
        assert list(rows[0])[:5] == ["parameter", "value", "tau_sq", "case", "n_roots"]
        eta = 16 / 27
        for r in rows:
            assert int(r["n_roots"]) == (3 if float(r["tau_sq"]) < eta else 1)
        curve = list(csv.reader(open(tmp_path / "curve.csv")))
        assert curve[0] == ["zeta", "h"]
        z, h = float(curve[1][0]), float(curve[1][1])
        assert h == pytest.approx(4 * z * z * (8 * z + 4), rel=1e-12)

    def test_material_sweep(self, tmp_path):
        args = ["sweep", "--config", str(CONFIGS / "p2_three_roots.json"), "--out", str(tmp_path)]
        assert main(args + ["--parameter", "eps", "--range", "6", "10", "5", "--tau-sq", "0.3"]) == 0
        rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
        assert [float(r["value"]) for r in rows] == [6.0, 7.0, 8.0, 9.0, 10.0]
        assert all(r["parameter"] == "eps" and float(r["tau_sq"]) == 0.3 for r in rows)
        assert not (tmp_path / "curve.csv").exists()

    def test_bad_range(self, tmp_path, capsys):
        args = ["sweep", "--config", str(CONFIGS / "p2_three_roots.json"), "--out", str(tmp_path)]
        assert main(args + ["--range", "0", "1", "many"]) == 1
        assert "--range" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "antiplane", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "solve" in out.stdout and "sweep" in out.stdout and "verify" in out.stdout

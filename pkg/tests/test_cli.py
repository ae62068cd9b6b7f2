import json
import os

import pytest
from click.testing import CliRunner

from cdch.cli import main, validate_manifest


def run_cli(tmp_path, manifest, *extra):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    out = tmp_path / "out"
    runner = CliRunner()
    result = runner.invoke(
        main, ["run", "--manifest", str(path), "--out", str(out), *extra]
    )
    report = None
    report_path = out / "report.json"
    if report_path.exists():
        report = json.loads(report_path.read_text())
    return result, report, out


class TestValidate:
    def test_valid_rate_manifest(self):
        doc = {
            "command": "rate",
            "coefficient": {"kind": "periodic_layered"},
            "numerics": {"eps_list": [0.125, 0.0625, 0.03125, 0.015625]},
        }
        assert validate_manifest(doc) == []

    def test_resolution_not_power_of_two(self):
        doc = {"command": "solve", "domain": {"kind": "unit_square"},
               "measure": {"kind": "zero"}, "numerics": {"resolution": 33}}
        assert "resolution must be a power of two in [32,1024]" in validate_manifest(doc)

    def test_rate_needs_four_epsilons(self):
        doc = {
            "command": "rate",
            "coefficient": {"kind": "periodic_layered"},
            "numerics": {"eps_list": [0.5, 0.25]},
        }
        assert "eps_list requires ≥ 4 values" in validate_manifest(doc)

    def test_unknown_command_rejected(self):
        assert validate_manifest({"command": "frobnicate"})

    def test_validate_command_exit_codes(self, tmp_path):
        good = tmp_path / "good.json"
        good.write_text(json.dumps({"command": "radial", "numerics": {"n": 3, "alpha": 0.5, "R": 0.5}}))
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"command": "solve", "numerics": {"resolution": 33}}))
        runner = CliRunner()
        assert runner.invoke(main, ["validate", "--manifest", str(good)]).exit_code == 0
        assert runner.invoke(main, ["validate", "--manifest", str(bad)]).exit_code == 2


class TestRun:
    def test_radial_energy_report(self, tmp_path):
        result, report, _ = run_cli(
            tmp_path, {"command": "radial", "numerics": {"n": 3, "alpha": 0.5, "R": 0.5}}
        )
        assert result.exit_code == 0
        assert report["results"]["energy"] == pytest.approx(0.5)
        assert report["command"] == "radial"
        assert report["errors"] == []

    def test_zero_measure_solve_exports_zero_field(self, tmp_path):
        result, report, out = run_cli(
            tmp_path,
            {
                "command": "solve",
                "domain": {"kind": "unit_square"},
                "measure": {"kind": "zero"},
                "numerics": {"resolution": 32},
            },
        )
        assert result.exit_code == 0
        assert report["results"]["sup_norm"] == 0.0
        csv = (out / "solution.csv").read_text().splitlines()
        assert csv[0] == "x,y,u"
        assert all(line.rsplit(",", 1)[1] == "0" for line in csv[1:])
        assert (out / "solution.svg").exists()

    def test_invalid_manifest_exit_2_with_error_objects(self, tmp_path):
        result, report, _ = run_cli(
            tmp_path,
            {"command": "solve", "domain": {"kind": "unit_square"},
             "measure": {"kind": "zero"}, "numerics": {"resolution": 33}},
        )
        assert result.exit_code == 2
        assert report["results"] is None
        assert report["errors"][0]["type"] == "InvalidManifest"

    def test_numerical_failure_exit_3(self, tmp_path):
        result, report, _ = run_cli(
            tmp_path,
            {
                "command": "solve",
                "domain": {"kind": "unit_square"},
                "measure": {"kind": "density"},
                "numerics": {"resolution": 64, "max_iter": 1},
            },
        )
        assert result.exit_code == 3
        assert report["errors"][0]["type"] == "NoConvergence"

    def test_provenance_block(self, tmp_path):
        _, report, _ = run_cli(
            tmp_path, {"command": "radial", "numerics": {"n": 3, "alpha": 0.5, "R": 0.5}}
        )
        prov = report["provenance"]
        assert len(prov["manifest_sha256"]) == 64
        assert "numpy" in prov["modules"]
        assert "timestamp" in prov

    def test_determinism_modulo_timestamp(self, tmp_path):
        manifest = {
            "command": "morrey",
            "domain": {"kind": "unit_square"},
            "measure": {"kind": "density"},
            "numerics": {"resolution": 32, "alpha": 1.0},
        }
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        _, rep_a, _ = run_cli(tmp_path / "a", manifest, "--seed", "11")
        _, rep_b, _ = run_cli(tmp_path / "b", manifest, "--seed", "11")
        rep_a["provenance"].pop("timestamp")
        rep_b["provenance"].pop("timestamp")
        assert json.dumps(rep_a, sort_keys=True) == json.dumps(rep_b, sort_keys=True)

    def test_rate_artifacts(self, tmp_path):
        result, report, out = run_cli(
            tmp_path,
            {
                "command": "rate",
                "coefficient": {"kind": "periodic_layered", "cells": 32},
                "numerics": {
                    "eps_list": [0.25, 0.125, 0.0625, 0.03125],
                    "cells_per_period": 8,
                    "precond": "amg",
                },
            },
        )
        assert result.exit_code == 0
        assert report["results"]["fitted_rate"] >= 0.5
        assert (out / "rate.csv").exists()
        assert (out / "rate.svg").exists()

    def test_cell_artifacts(self, tmp_path):
        result, report, out = run_cli(
            tmp_path,
            {"command": "cell", "coefficient": {"kind": "periodic_checkerboard", "a": 1.0, "b": 4.0, "cells": 32}},
        )
        assert result.exit_code == 0
        A0 = report["results"]["A0"]
        assert A0[0][0] == pytest.approx(2.0, rel=0.05)
        assert (out / "corrector_0.csv").exists()
        assert (out / "flux_potential_001.svg").exists()

    def test_scan_csv_header(self, tmp_path):
        result, _, out = run_cli(
            tmp_path,
            {
                "command": "vdc-scan",
                "domain": {"kind": "unit_square"},
                "numerics": {"resolution": 32, "n_samples": 4, "n_scales": 2},
            },
        )
        assert result.exit_code == 0
        header = (out / "vdc_scan.csv").read_text().splitlines()[0]
        assert header == "xi_x,xi_y,R,ratio"

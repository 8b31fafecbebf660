"""
Tests for the command-line surface: exit codes, report files and exports.
"""
import json

import numpy as np
import pytest

from finsler_lab.app.cli import EXIT_FAILURE, EXIT_INCONCLUSIVE, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, run
from finsler_lab.app.verification import FIXTURES_DIR


def fixture(name: str) -> str:
    return str(FIXTURES_DIR / f"{name}.json")


def load(path):
    return json.loads(path.read_text())


class TestUsage:
    def test_no_subcommand(self):
        assert run([]) == EXIT_USAGE

    def test_version(self, capsys):
        assert run(["--version"]) == EXIT_OK
        assert "finsler-lab" in capsys.readouterr().out

    def test_print_schema(self, capsys):
        assert run(["--print-schema"]) == EXIT_OK
        assert "run_report" in json.loads(capsys.readouterr().out)

    def test_missing_required_option(self):
        assert run(["validate"]) == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert run(["validate", "--metric", str(tmp_path / "none.json")]) == EXIT_USAGE

    def test_config_error_is_reported(self, tmp_path):
        out = tmp_path / "geodesic.json"
        code = run(["geodesic", "--metric", fixture("euclid"), "--x0", "0,0,0", "--y0", "1,0", "--t", "1",
                    "--out", str(out)])
        assert code == EXIT_USAGE
        report = load(out)
        assert report["exit_code"] == EXIT_USAGE
        assert report["error"]["type"] == "ConfigError"


class TestCommands:
    def test_validate(self, tmp_path):
        out = tmp_path / "validate.json"
        code = run(["validate", "--metric", fixture("randers_b05"), "--model", fixture("torus_1x1"),
                    "--samples", "20", "--out", str(out)])
        assert code == EXIT_OK
        report = load(out)
        assert report["command"] == "validate"
        assert report["results"]["validation"]["metric"] == "randers_b05"
        assert "fiber_measure" in report["conventions"]

    def test_validate_failure(self, tmp_path):
        metric = tmp_path / "bad_randers.json"
        metric.write_text(json.dumps({"family": "randers", "dim": 2, "a": [[1.0, 0.0], [0.0, 1.0]], "b": [1.2, 0.0]}))
        code = run(["validate", "--metric", str(metric), "--samples", "10", "--out", str(tmp_path / "r.json")])
        assert code == EXIT_FAILURE

    def test_geodesic_csv(self, tmp_path):
        csv = tmp_path / "trace.csv"
        code = run(["geodesic", "--metric", fixture("riemannian_warp"), "--x0", "0,0", "--y0", "1,0.5", "--t", "2",
                    "--samples", "11", "--csv", str(csv), "--out", str(tmp_path / "g.json")])
        assert code == EXIT_OK
        rows = np.loadtxt(csv, delimiter=",", skiprows=1)
        assert rows.shape == (11, 6)
        np.testing.assert_allclose(rows[:, -1], 1.0, atol=1e-8)

    def test_volumes_deterministic(self, tmp_path):
        args = ["volumes", "--metric", fixture("randers_b05"), "--model", fixture("torus_1x1"), "--kind", "ht",
                "--grid", "4"]
        assert run(args + ["--out", str(tmp_path / "a.json")]) == EXIT_OK
        assert run(args + ["--out", str(tmp_path / "b.json")]) == EXIT_OK
        a, b = load(tmp_path / "a.json"), load(tmp_path / "b.json")
        a.pop("timing")
        b.pop("timing")
        assert a == b
        assert a["results"]["volume"]["value"] == pytest.approx(1.0, abs=1e-8)

    def test_warped_surface_uses_its_own_metric(self, tmp_path):
        out = tmp_path / "v.json"
        assert run(["volumes", "--model", fixture("warped"), "--kind", "ht", "--grid", "8", "--out", str(out)]) == EXIT_OK
        assert load(out)["results"]["volume"]["verdict"] == "converged"

    def test_recurrence_inconclusive(self, tmp_path):
        code = run(["recurrence", "--metric", fixture("euclid"), "--model", fixture("torus_1x1"), "--dir", "irrational",
                    "--t-max", "5", "--eps", "1e-6", "--out", str(tmp_path / "r.json")])
        assert code == EXIT_INCONCLUSIVE

    def test_recurrence_rational(self, tmp_path):
        out = tmp_path / "r.json"
        code = run(["recurrence", "--metric", fixture("euclid"), "--model", fixture("torus_1x1"), "--dir", "rational",
                    "--t-max", "10", "--eps", "1e-3", "--out", str(out)])
        assert code == EXIT_OK
        assert load(out)["results"]["count"] >= 4

    def test_busemann(self, tmp_path):
        out = tmp_path / "b.json"
        code = run(["busemann", "--metric", fixture("euclid"), "--ray-dir", "1,0", "--t-list", "10,100",
                    "--point", "2,1", "--checkpoints", "2", "--out", str(out)])
        assert code == EXIT_OK
        results = load(out)["results"]
        assert results["certificate"]["certified"] == [True, True]
        assert results["values"][0]["busemann"]["limit"] == pytest.approx(100.0 - np.hypot(98.0, 1.0))

    def test_verify_subset(self, tmp_path, capsys):
        out = tmp_path / "verify.json"
        code = run(["verify", "--only", "euclidean_ball_recursion,randers_distance_asymmetry", "--out", str(out)])
        assert code == EXIT_OK
        assert load(out)["results"]["failed"] == []
        assert "✅ euclidean_ball_recursion" in capsys.readouterr().out

    def test_verify_unknown_check(self, tmp_path):
        assert run(["verify", "--only", "nope", "--out", str(tmp_path / "v.json")]) == EXIT_USAGE

    def test_geodesic_out_csv(self, tmp_path):
        out = tmp_path / "trace.csv"
        code = run(["geodesic", "--metric", fixture("sphere_stereo"), "--x0", "1,0", "--y0", "0,1", "--t", "3",
                    "--samples", "7", "--out", str(out)])
        assert code == EXIT_OK
        rows = np.loadtxt(out, delimiter=",", skiprows=1)
        assert rows.shape == (7, 6)
        assert out.read_text().splitlines()[0] == "t,x1,x2,y1,y2,F"
        report = load(tmp_path / "trace.json")
        assert report["results"]["samples"] == 7

    def test_volumes_out_csv(self, tmp_path):
        out = tmp_path / "compare.csv"
        code = run(["volumes", "--metric", fixture("slope_b03"), "--model", fixture("torus_1x1"), "--kind", "compare",
                    "--grid", "4", "--out", str(out)])
        assert code == EXIT_OK
        vol_bh, vol_ht, vol_alpha = np.loadtxt(out, delimiter=",", skiprows=1)
        assert vol_bh < vol_alpha < vol_ht
        comparison = load(tmp_path / "compare.json")["results"]["comparison"]
        assert comparison["observed_order"] == "vol_BH < vol_alpha < vol_HT"

    def test_verify_reports_documented_deviation(self, tmp_path, capsys):
        out = tmp_path / "verify.json"
        assert run(["verify", "--only", "slope_volumes", "--out", str(out)]) == EXIT_OK
        results = load(out)["results"]
        assert list(results["documented_deviations"]) == ["slope_volumes"]
        assert "slope_order" in load(out)["conventions"]
        assert "documented deviation" in capsys.readouterr().out


class TestExitCodes:
    """Exceptions escaping a command map to exit codes and are embedded in the report."""

    @pytest.mark.parametrize("error, expected", [
        (np.linalg.LinAlgError("Singular matrix"), EXIT_FAILURE),
        (FloatingPointError("overflow encountered"), EXIT_FAILURE),
        (ValueError("bad option"), EXIT_USAGE),
        (RuntimeError("unexpected"), EXIT_INTERNAL),
    ])
    def test_exception_mapping(self, tmp_path, monkeypatch, error, expected):
        from finsler_lab.app import cli

        def failing(args):
            raise error

        monkeypatch.setattr(cli, "cmd_geodesic", failing)
        out = tmp_path / "g.json"
        code = run(["geodesic", "--metric", fixture("euclid"), "--x0", "0,0", "--y0", "1,0", "--t", "1",
                    "--out", str(out)])
        assert code == expected
        report = load(out)
        assert report["exit_code"] == expected
        assert report["error"]["type"] == type(error).__name__

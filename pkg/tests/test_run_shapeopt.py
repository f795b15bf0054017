"""
End-to-end tests for the command-line entry point.
Each test writes a JSON run file into tmp_path and calls main() directly.
"""
import json
import os

import numpy as np
import pytest

from field_io import read_csv, read_report, read_spfield, write_report, write_spfield
from grid_utils import build_domain
from run_config import OUTPUT_ENV
from run_shapeopt import main
from solver_io import EXIT_INPUT, EXIT_OK


@pytest.fixture(autouse=True)
def no_output_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def _run(tmp_path, command, data, out="out", name="run.json"):
    config = tmp_path / name
    config.write_text(json.dumps(data))
    out_dir = tmp_path / out
    return main([command, "--config", str(config), "--out", str(out_dir), "--no-color"]), out_dir


def _summary(out_dir):
    return {row["quantity"]: row["value"] for row in read_csv(str(out_dir / "summary.csv"))}


def test_solve_unit_square_eigenvalue(tmp_path):
    code, out = _run(tmp_path, "solve", {
        "domain": {"extent": [1.0, 1.0], "resolution": 64},
        "solve": {"problem": "eigen", "k": 1},
    })
    assert code == EXIT_OK
    assert float(_summary(out)["lambda_1"]) == pytest.approx(2 * np.pi ** 2, rel=5e-2)
    for name in ("u_1.spf", "field.png", "manifest.json"):
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "solve"
    assert "summary.csv" in manifest["outputs"]


def test_solve_torsion_on_a_box_support(tmp_path):
    code, out = _run(tmp_path, "solve", {
        "domain": {"extent": [1.0, 1.0], "resolution": 32},
        "solve": {"problem": "torsion", "support": {"type": "box", "lo": [0.0, 0.0], "hi": [0.5, 1.0]}},
        "outputs": {"formats": ["csv", "spfield"]},
    })
    assert code == EXIT_OK
    summary = _summary(out)
    assert float(summary["E"]) < 0
    assert float(summary["support_measure"]) == pytest.approx(0.5)
    _, w = read_spfield(str(out / "w.spf"))
    assert np.all(w[16:, :] == 0.0)
    assert not (out / "field.png").exists()


def test_malformed_config_exits_with_the_key_path(tmp_path, capsys):
    code, _ = _run(tmp_path, "optimize", {
        "domain": {"extent": [1.0, 1.0], "resolution": 16},
        "objective": {"functionals": ["lambda_1", "lambda_1"]},
        "optimizer": {"mu_schedule": [1e4, 1e3]},
    })
    assert code == EXIT_INPUT
    assert "optimizer.mu_schedule[1]" in capsys.readouterr().err


def test_bad_json_exits_2(tmp_path, capsys):
    config = tmp_path / "broken.json"
    config.write_text("{ not json")
    assert main(["solve", "--config", str(config)]) == EXIT_INPUT
    assert "<file>" in capsys.readouterr().err


def test_verify_needs_an_existing_run(tmp_path, capsys):
    code, _ = _run(tmp_path, "verify", {"verify": {"input_dir": "nowhere"}})
    assert code == EXIT_INPUT
    assert "verify.input_dir" in capsys.readouterr().err


def test_overlapping_monotonicity_fields_exit_2(tmp_path):
    domain = build_domain((2.0, 2.0), 32, origin=(-1.0, -1.0))
    x, _ = domain.centers()
    write_spfield(tmp_path / "a.spf", domain, np.maximum(x, 0.0))
    write_spfield(tmp_path / "b.spf", domain, np.maximum(x + 0.5, 0.0))
    code, _ = _run(tmp_path, "monotonicity", {
        "domain": {"extent": [2.0, 2.0], "resolution": 32, "origin": [-1.0, -1.0]},
        "monotonicity": {"fields": ["a.spf", "b.spf"], "center": [0.0, 0.0], "radii": [0.3]},
    })
    assert code == EXIT_INPUT


def test_halfplanes_preset(tmp_path):
    code, out = _run(tmp_path, "monotonicity", {
        "monotonicity": {"preset": "halfplanes", "resolution": 128, "radii": {"count": 4}},
    })
    assert code == EXIT_OK
    rows = read_csv(str(out / "profile.csv"))
    assert len(rows) == 4
    for name in ("dyadic.csv", "profile.png", "report_monotonicity.txt", "manifest.json"):
        assert (out / name).is_file()
    report = (out / "report_monotonicity.txt").read_text()
    assert "phi2_spread" in report
    assert "phi2_bounded=true" in report


def test_halfplanes_preset_with_central_differences(tmp_path):
    code, out = _run(tmp_path, "monotonicity", {
        "monotonicity": {"preset": "halfplanes", "resolution": 128, "gradients": "central", "radii": {"count": 6}},
    })
    assert code == EXIT_OK
    report = read_report(str(out / "report_monotonicity.txt"))
    assert report["phi2_bounded"] == "true"
    assert float(report["phi2_growth_ratio"]) == pytest.approx(1.0, abs=5e-2)


def test_unknown_gradient_mode_exits_2(tmp_path, capsys):
    code, _ = _run(tmp_path, "monotonicity", {"monotonicity": {"preset": "halfplanes", "gradients": "spectral"}})
    assert code == EXIT_INPUT
    assert "monotonicity.gradients" in capsys.readouterr().err


def test_optimize_then_verify(tmp_path):
    code, run_dir = _run(tmp_path, "optimize", {
        "domain": {"extent": [2.0, 1.0], "resolution": 32},
        "seed": 0,
        "objective": {"g": "sum", "functionals": ["lambda_1", "lambda_1"], "m": 5.0},
        "optimizer": {"mu_schedule": [1e3], "max_iters": 5},
    }, out="run")
    assert code == EXIT_OK
    for name in ("trace.csv", "stage0_phase0.spf", "phase_0.spf", "support_1.spf", "partition.png",
                 "domain.json", "objective.json", "summary.json", "manifest.json"):
        assert (run_dir / name).is_file(), name
    summary = json.loads((run_dir / "summary.json").read_text())
    assert len(summary["measures"]) == 2
    assert summary["void_measure"] >= 0

    code, out = _run(tmp_path, "verify", {
        "verify": {"input_dir": "run", "checks": ["junction", "separation", "connectivity", "density"]},
    }, out="checks", name="verify.json")
    assert code == EXIT_OK
    for name in ("report_junction.txt", "report_separation.txt", "density_profile.csv",
                 "verify_table.csv", "verify_report.html", "manifest.json"):
        assert (out / name).is_file(), name
    table = read_csv(str(out / "verify_table.csv"))
    triple = [row for row in table if row["quantity"] == "triple_candidates"]
    assert triple and triple[0]["passed"] == "true"
    separation = [row for row in table if row["quantity"] == "worst_relative_interface"]
    assert separation and separation[0]["threshold"] == "0.05"
    assert os.path.basename(str(run_dir)) in (out / "verify_report.html").read_text()


def _single_cell_run(tmp_path, m, out):
    code, run_dir = _run(tmp_path, "optimize", {
        "domain": {"extent": [1.0, 1.0], "resolution": 32},
        "seed": 0,
        "objective": {"g": "sum", "functionals": ["lambda_1"], "m": m},
        "optimizer": {"mu_schedule": [1e3], "max_iters": 4},
    }, out=out, name=f"{out}.json")
    assert code == EXIT_OK
    return run_dir


def test_verify_sweeps_m_and_reads_the_lipschitz_report(tmp_path):
    _single_cell_run(tmp_path, 5.0, "run_m5")
    _single_cell_run(tmp_path, 20.0, "run_m20")
    write_report(str(tmp_path / "lip.txt"), {"phase_0": {"max_ratio": 2.0}})

    code, out = _run(tmp_path, "verify", {
        "verify": {"input_dir": "run_m5", "checks": {
            "lower_bound": {"sweep": ["run_m20"]},
            "subsolution": {"functional": "energy", "lip_report": "lip.txt", "count": 3},
        }},
    }, out="checks", name="verify.json")
    assert code == EXIT_OK
    table = {row["quantity"]: row for row in read_csv(str(out / "verify_table.csv"))}

    spread = table["eigen_quantity_spread"]
    assert float(spread["value"]) >= 1.0
    assert spread["threshold"] == "3.0"
    assert spread["passed"] in ("true", "false")
    assert spread["note"] == "max/min over m = 5.0, 20.0"

    # m / (2C) with m = 5 and C = 2
    assert float(table["energy_multiplier"]["value"]) == pytest.approx(1.25)
    report = read_report(str(out / "report_lower_bound.txt"))
    assert report["phase_0.sweep.m.count"] == "2"


def test_verify_refuses_a_missing_sweep_run(tmp_path, capsys):
    _single_cell_run(tmp_path, 5.0, "run_m5")
    code, _ = _run(tmp_path, "verify", {
        "verify": {"input_dir": "run_m5", "checks": {"lower_bound": {"sweep": ["nowhere"]}}},
    }, out="checks", name="verify.json")
    assert code == EXIT_INPUT
    assert "verify.checks.lower_bound.sweep[0]" in capsys.readouterr().err

from field_io import read_csv
from verify_reporter import TABLE_HEADER, generate_report, overall_status, summarize_check, write_table


def _perimeter_result(bound):
    return {"ratio_measure": 22.8, "ratio_eigen": 0.83, "tolerance": 0.15,
            "measure_bound_ok": False, "eigen_bound_ok": True, "bound": bound}


def test_subsolution_rows_use_the_pass_fraction():
    result = {"pass_fraction": 0.95, "n_sampled": 20, "worst_margin": -1e-3, "slack": 2e-2}
    rows = summarize_check("subsolution", 0, result)
    assert rows[0]["quantity"] == "pass_fraction"
    assert rows[0]["passed"] is True
    assert rows[1]["passed"] is None
    assert rows[1]["threshold"] == -2e-2

    strict = summarize_check("subsolution", 0, result, {"min_pass_fraction": 0.99})
    assert strict[0]["passed"] is False

    empty = summarize_check("subsolution", 0, {**result, "n_sampled": 0, "pass_fraction": 0.0})
    assert empty[0]["passed"] is False


def test_perimeter_decides_only_the_matching_bound():
    eigen_rows = summarize_check("perimeter", 1, _perimeter_result("eigen"))
    assert [r["passed"] for r in eigen_rows] == [None, True]

    measure_rows = summarize_check("perimeter", 1, _perimeter_result("measure"))
    assert [r["passed"] for r in measure_rows] == [False, None]


def test_partition_rows_have_no_phase():
    junction = {"counts": {"triple": 0, "Z1": 10, "Z2_internal": 4, "Z2_boundary": 2}}
    rows = summarize_check("junction", None, junction)
    assert rows[0]["passed"] is True
    assert all(r["phase"] is None for r in rows)
    assert [r["quantity"] for r in rows[1:]] == ["Z1", "Z2_internal", "Z2_boundary"]

    separation = {"worst_relative_interface": 0.08, "cells": [{"contained": True}, {"contained": False}]}
    rows = summarize_check("separation", None, separation)
    assert rows[0]["threshold"] == 0.05
    assert [r["passed"] for r in rows] == [False, False]
    assert summarize_check("separation", None, separation, {"tol": 0.1})[0]["passed"] is True


def test_nodal_ratio_tolerance():
    result = {"nodal_domains": [{"sign": "positive", "ratio": 1.03}, {"sign": "negative", "ratio": None}]}
    rows = summarize_check("nodal", 0, result)
    assert [r["quantity"] for r in rows] == ["ratio_positive", "ratio_negative"]
    assert [r["passed"] for r in rows] == [True, False]


def test_overall_status_skips_informational_rows():
    rows = [{"passed": True}, {"passed": None}, {"passed": False}, {"passed": True}]
    assert overall_status(rows) == (2, 3)
    assert overall_status([]) == (0, 0)


def test_table_and_html_report(tmp_path):
    rows = summarize_check("connectivity", 0, {"components": 1, "positive_fraction": 1.0})
    rows += summarize_check("gamma_lip", 0, {"max_ratio": 3.5})
    table = write_table(str(tmp_path / "verify_table.csv"), rows)
    loaded = read_csv(table)
    assert list(loaded[0]) == TABLE_HEADER
    assert loaded[1]["passed"] == "true"
    assert loaded[2]["passed"] == ""

    path = generate_report(rows, str(tmp_path), "run_dir", ["phase 1 is empty, skipped"])
    page = open(path, encoding="utf-8").read()
    assert "1 / 1" in page
    assert "font-weight: bold; color: #2ecc71" in page
    assert "gamma_lip" in page
    assert "phase 1 is empty, skipped" in page


def test_density_ratio_is_a_lower_bound():
    assert summarize_check("density", 0, {"max_ratio": 1.0})[0]["passed"] is True
    assert summarize_check("density", 0, {"max_ratio": 0.1})[0]["passed"] is True
    assert summarize_check("density", 0, {"max_ratio": None})[0]["passed"] is False
    strict = summarize_check("density", 0, {"max_ratio": 0.4}, {"density_min": 0.5})
    assert strict[0]["threshold"] == 0.5
    assert strict[0]["passed"] is False


def test_failing_report_is_red(tmp_path):
    rows = summarize_check("density", 0, {"max_ratio": 0.0})
    assert rows[0]["passed"] is False
    page = open(generate_report(rows, str(tmp_path)), encoding="utf-8").read()
    assert "font-weight: bold; color: #e74c3c" in page
    assert "Most checks failed" in page


def test_perimeter_rows_name_their_form(tmp_path):
    rows = summarize_check("perimeter", 0, _perimeter_result("eigen"))
    assert "measure form" in rows[0]["note"]
    assert "eigenvalue form" in rows[1]["note"]
    loaded = read_csv(write_table(str(tmp_path / "verify_table.csv"), rows))
    assert loaded[1]["note"].startswith("eigenvalue form")
    page = open(generate_report(rows, str(tmp_path)), encoding="utf-8").read()
    assert "not comparable with the measure form" in page

# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
Combined pass/fail table and HTML report for the verify command.
"""

import datetime
import html
import os

from field_io import format_value, write_csv

TABLE_HEADER = ["check", "phase", "quantity", "value", "threshold", "passed", "note"]

PERIMETER_NOTES = {
    "ratio_measure": "measure form sqrt(m/2) P / |Ω|",
    "ratio_eigen": "eigenvalue form sqrt(m) P / (λ₁ |Ω|^(1/2)), not comparable with the measure form",
}


def _row(check, phase, quantity, value, threshold=None, passed=None, note=None):
    return {"check": check, "phase": phase, "quantity": quantity, "value": value,
            "threshold": threshold, "passed": passed, "note": note}


def summarize_check(name, phase, result, params=None):
    """
    Table rows for one check result. ``passed`` is None for rows that are
    measured and reported without a hard criterion.
    """
    params = params or {}
    rows = []
    if name == "subsolution":
        need = params.get("min_pass_fraction", 0.95)
        rows.append(_row(name, phase, "pass_fraction", result["pass_fraction"], need,
                         result["n_sampled"] > 0 and result["pass_fraction"] >= need))
        rows.append(_row(name, phase, "worst_margin", result["worst_margin"], -result["slack"]))
        if result.get("lip_constant") is not None:
            rows.append(_row(name, phase, "energy_multiplier", result["multiplier"], None, None,
                             f"m / (2C) with C = {format_value(result['lip_constant'])}"))
    elif name == "growth":
        rows.append(_row(name, phase, "right_inequality_holds", result["right_inequality_holds"], None,
                         result["right_inequality_holds"]))
        rows.append(_row(name, phase, "worst_left_constant", result["worst_left_constant"],
                         result["reference_left_constant"]))
        if "linear_growth" in result:
            rows.append(_row(name, phase, "linear_growth_constant", result["linear_growth"]["constant"]))
    elif name == "density":
        ratio = result["max_ratio"]
        need = params.get("density_min", 0.1)
        rows.append(_row(name, phase, "max_density_ratio", ratio, need, ratio is not None and ratio >= need))
    elif name == "perimeter":
        # Only the bound matching the cell's functional is decided
        bound = result.get("bound", "measure")
        limit = 1.0 + result["tolerance"]
        rows.append(_row(name, phase, "ratio_measure", result["ratio_measure"], limit,
                         result["measure_bound_ok"] if bound == "measure" else None,
                         PERIMETER_NOTES["ratio_measure"]))
        rows.append(_row(name, phase, "ratio_eigen", result["ratio_eigen"], limit,
                         result["eigen_bound_ok"] if bound == "eigen" else None,
                         PERIMETER_NOTES["ratio_eigen"]))
    elif name == "lower_bound":
        for key in ("measure_quantity", "eigen_quantity", "perimeter_quantity"):
            rows.append(_row(name, phase, key, result[key]))
        sweep = result.get("sweep")
        if sweep:
            for key, entry in sweep["quantities"].items():
                rows.append(_row(name, phase, f"{key}_spread", entry["spread"], sweep["band"], entry["within_band"],
                                 f"max/min over m = {', '.join(format_value(m) for m in sweep['m'])}"))
    elif name == "alt_caffarelli":
        for entry in result["radii"]:
            rows.append(_row(name, phase, f"ratio_r={entry['r']!r}", entry["ratio"]))
    elif name == "junction":
        rows.append(_row(name, None, "triple_candidates", result["counts"]["triple"], 0,
                         result["counts"]["triple"] == 0))
        for key in ("Z1", "Z2_internal", "Z2_boundary"):
            rows.append(_row(name, None, key, result["counts"][key]))
    elif name == "separation":
        tol = params.get("tol", 0.05)
        worst = result["worst_relative_interface"]
        rows.append(_row(name, None, "worst_relative_interface", worst, tol, worst <= tol))
        contained = all(c["contained"] for c in result["cells"])
        rows.append(_row(name, None, "cells_inside_D_i", contained, None, contained))
    elif name == "nodal":
        tol = params.get("tol", 0.05)
        for nd in result["nodal_domains"]:
            ok = nd["ratio"] is not None and abs(nd["ratio"] - 1.0) <= tol
            rows.append(_row(name, phase, f"ratio_{nd['sign']}", nd["ratio"], tol, ok))
    elif name == "connectivity":
        need = params.get("min_positive_fraction", 0.99)
        rows.append(_row(name, phase, "components", result["components"]))
        rows.append(_row(name, phase, "positive_fraction", result["positive_fraction"], need,
                         result["positive_fraction"] >= need))
    elif name == "gamma_lip":
        rows.append(_row(name, phase, "max_ratio", result["max_ratio"]))
    elif name == "constrained_cell":
        tol = params.get("tol", 0.02)
        rel = result["relative_improvement"]
        rows.append(_row(name, phase, "relative_improvement", rel, tol, rel <= tol))
        rows.append(_row(name, phase, "cell_inside_D_i", result["cell_inside_D_i"], None,
                         result["cell_inside_D_i"]))
    return rows


def write_table(path, rows):
    return write_csv(path, TABLE_HEADER, [[r.get(k) for k in TABLE_HEADER] for r in rows])


def overall_status(rows):
    """(passed, decided) over the rows that carry a criterion."""
    decided = [r for r in rows if r["passed"] is not None]
    return sum(1 for r in decided if r["passed"]), len(decided)


def generate_report(rows, target_dir, input_dir=None, warnings=None):
    """
    Writes verify_report.html into target_dir and returns its path.
    """
    warnings = warnings or []
    passed, decided = overall_status(rows)
    score = round(100 * passed / decided) if decided else 100

    if score == 100:
        status_color = "#2ecc71"  # Green
        status_text = "All checks passed"
    elif score >= 70:
        status_color = "#f1c40f"  # Yellow
        status_text = "Some checks failed"
    else:
        status_color = "#e74c3c"  # Red
        status_text = "Most checks failed"

    by_check = {}
    for r in rows:
        by_check.setdefault(r["check"], []).append(r)

    cards_html = ""
    for check, check_rows in by_check.items():
        fails = sum(1 for r in check_rows if r["passed"] is False)
        oks = sum(1 for r in check_rows if r["passed"] is True)
        badges = ""
        if oks:
            badges += f'<span class="badge badge-pass">{oks} passed</span>'
        if fails:
            badges += f'<span class="badge badge-fail">{fails} failed</span>'

        items = ""
        for r in check_rows:
            if r["passed"] is None:
                css, mark = "info", "·"
            elif r["passed"]:
                css, mark = "pass", "✔"
            else:
                css, mark = "fail", "✘"
            where = f" (phase {r['phase']})" if r["phase"] is not None else ""
            limit = f" &nbsp;threshold {html.escape(format_value(r['threshold']))}" if r["threshold"] is not None else ""
            note = f' <em class="note">{html.escape(r["note"])}</em>' if r.get("note") else ""
            items += (f'<div class="row-item {css}">{mark} {html.escape(r["quantity"])}{where}: '
                      f'<code>{html.escape(format_value(r["value"]))}</code>{limit}{note}</div>')

        cards_html += f"""
        <div class="check-card">
            <div class="check-header">
                <h3>{html.escape(check)}</h3>
                <div class="badges">{badges}</div>
            </div>
            <div class="row-list">{items}</div>
        </div>
        """

    if not cards_html:
        cards_html = '<div class="empty-state"><h2>No checks were run.</h2></div>'

    warnings_html = ""
    if warnings:
        warnings_html = "<h2>Warnings</h2><ul>" + "".join(f"<li>{html.escape(w)}</li>" for w in warnings) + "</ul>"

    source = html.escape(str(input_dir)) if input_dir else "(not recorded)"
    html_content = f"""<!DOCTYPE html>
<html lang="en">
<head>
    <meta charset="UTF-8">
    <title>Verification Report</title>
    <style>
        body {{ font-family: 'Segoe UI', Roboto, Helvetica, Arial, sans-serif; background: #f5f6fa;
               color: #2f3640; margin: 0; line-height: 1.6; }}
        .header {{ background: #34495e; color: white; padding: 30px 20px; text-align: center; }}
        .header h1 {{ margin: 0; }}
        .container {{ max-width: 900px; margin: 20px auto 40px; padding: 0 20px; }}
        .score-card {{ background: white; border-radius: 12px; padding: 25px; text-align: center;
                      box-shadow: 0 4px 15px rgba(0,0,0,0.1); margin-bottom: 30px; }}
        .score {{ font-size: 3em; font-weight: bold; color: {status_color}; }}
        .status-text {{ font-size: 1.4em; font-weight: bold; color: {status_color}; }}
        .check-card {{ background: white; border-radius: 8px; box-shadow: 0 2px 5px rgba(0,0,0,0.05);
                      margin-bottom: 15px; overflow: hidden; }}
        .check-header {{ background: #f8f9fa; padding: 12px 20px; border-bottom: 1px solid #dcdde1;
                        display: flex; justify-content: space-between; align-items: center; }}
        .check-header h3 {{ margin: 0; font-size: 1.1em; }}
        .row-list {{ padding: 10px 20px; }}
        .row-item {{ padding: 6px 0; border-bottom: 1px solid #f1f1f1; }}
        .row-item:last-child {{ border-bottom: none; }}
        .row-item.pass {{ color: #27ae60; }}
        .row-item.fail {{ color: #c0392b; }}
        .row-item.info {{ color: #555; }}
        .note {{ color: #7f8c8d; font-size: 0.85em; margin-left: 6px; }}
        .badge {{ padding: 4px 8px; border-radius: 4px; font-size: 0.8em; font-weight: bold;
                 color: white; margin-left: 5px; }}
        .badge-pass {{ background: #2ecc71; }}
        .badge-fail {{ background: #e74c3c; }}
        .footer {{ text-align: center; margin-top: 40px; color: #7f8c8d; font-size: 0.9em; }}
    </style>
</head>
<body>
    <div class="header">
        <h1>Verification Report</h1>
        <p>Input: {source} &middot; {datetime.datetime.now().strftime("%B %d, %Y")}</p>
    </div>
    <div class="container">
        <div class="score-card">
            <div class="score">{passed} / {decided}</div>
            <div class="status-text">{status_text}</div>
        </div>
        {cards_html}
        {warnings_html}
    </div>
    <div class="footer"><p>Values marked · are measured without a pass criterion.</p></div>
</body>
</html>
"""

    report_path = os.path.join(target_dir, "verify_report.html")
    os.makedirs(target_dir, exist_ok=True)
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(html_content)
    return report_path

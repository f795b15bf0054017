# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
Command-line entry point.

Usage:
    python run_shapeopt.py solve        --config run.json [--out DIR] [--quiet]
    python run_shapeopt.py optimize     --config run.json
    python run_shapeopt.py verify       --config run.json
    python run_shapeopt.py monotonicity --config run.json

Exit codes: 0 success (a stalled optimization still writes its artifacts),
2 configuration or input error, 3 solver failure.
"""

import argparse
import dataclasses
import json
import os
import signal
import sys

import numpy as np

import density_optimizer
import monotonicity
import pde_solver
import theory_checks
import verify_reporter
from field_io import read_report, read_spfield, write_csv, write_json, write_manifest, write_report, write_spfield
from grid_utils import PhaseField, boundary_cells, indicator_from_values, measure, sample_inner_perturbations
from plot_utils import heatmap_png, loglog_png, partition_png
from run_config import CHECKS, domain_from_dict, domain_to_dict, load_config, sample_shape
from shape_functionals import ObjectiveSpec, gamma_lip_probe
from solver_io import (
    EXIT_INPUT, EXIT_OK, ConfigError, DegeneratePhaseError, DomainError, ShapeOptError, SolverIO,
    exit_code_for,
)


def _tolerances(**extra):
    base = {"torsion_rtol": pde_solver.TORSION_RTOL, "eigen_tol": pde_solver.EIGEN_TOL}
    base.update(extra)
    return base


def _prepare_out(config):
    os.makedirs(config.output_dir, exist_ok=True)
    return config.output_dir


def _require_domain(config):
    if config.domain is None:
        raise ConfigError("missing section", path="domain")
    return config.domain


# --- solve ---

def cmd_solve(config, io):
    """Single torsion or eigenvalue solve on one support."""
    s = config.solve
    if not s:
        raise ConfigError("missing section", path="solve")
    domain = _require_domain(config)
    out = _prepare_out(config)
    support = sample_shape(domain, s["support"], "solve.support", config.base_dir)
    io.log(f"Solving {s['problem']} ({s['mode']}) on {int(np.count_nonzero(support))} cells, h={domain.h:g}")

    op = pde_solver.assemble(domain, support.astype(float), mode=s["mode"], mu=s["mu"])
    rows = [("problem", s["problem"]), ("mode", s["mode"]), ("h", domain.h),
            ("support_measure", float(np.count_nonzero(support)) * domain.cell_volume), ("unknowns", op.size)]
    if s["mode"] == "penalized":
        rows.append(("mu", s["mu"]))
    outputs = []

    if s["problem"] == "torsion":
        torsion = pde_solver.solve_torsion(op, tol=s["tol"], method=s["method"], log_func=io.log)
        energy = pde_solver.torsion_energy(torsion)
        rows += [("E", energy), ("max_w", float(np.max(torsion.w))), ("residual", torsion.residual)]
        shown = torsion.w
        if config.wants("spfield"):
            outputs.append(write_spfield(os.path.join(out, "w.spf"), domain, torsion.w, config.spfield_binary))
        io.log(f"E = {energy:.10g}")
    else:
        pairs = pde_solver.eigs_smallest(op, s["k"], tol=s["tol"], log_func=io.log)
        for p in pairs:
            rows += [(f"lambda_{p.index}", p.eigenvalue), (f"residual_{p.index}", p.residual)]
            if config.wants("spfield"):
                outputs.append(write_spfield(os.path.join(out, f"u_{p.index}.spf"), domain, p.u,
                                             config.spfield_binary))
            io.log(f"lambda_{p.index} = {p.eigenvalue:.10g}")
        shown = pairs[0].u

    if config.wants("csv"):
        outputs.append(write_csv(os.path.join(out, "summary.csv"), ["quantity", "value"], rows))
    if config.wants("png"):
        outputs.append(heatmap_png(os.path.join(out, "field.png"), shown, domain.mask))
    outputs.append(os.path.join(out, "manifest.json"))
    write_manifest(out, "solve", config.raw, config.seed,
                   _tolerances(solve_tol=s["tol"], mu=s["mu"] if s["mode"] == "penalized" else None),
                   [os.path.basename(p) for p in outputs])
    return dict(rows)


# --- optimize ---

def cmd_optimize(config, io):
    """Projected-gradient run; writes trace, densities, supports and summaries."""
    if config.objective is None:
        raise ConfigError("missing section", path="objective")
    domain = _require_domain(config)
    objective = config.objective
    out = _prepare_out(config)
    io.log(f"Optimizing {objective.n_phases} phase(s), g={objective.g}, m={objective.m:g}, h={domain.h:g}")

    # Ctrl+C finishes the current stage and still writes artifacts
    previous = signal.signal(signal.SIGINT, lambda *_: setattr(io, "stop_requested", True))
    try:
        result = density_optimizer.run(objective, domain, config.optimizer, log_func=io.log,
                                       checkpoint_dir=out, stop_check=io.is_stopped)
    finally:
        signal.signal(signal.SIGINT, previous)

    outputs = ["trace.csv"] + [f"stage{k}_phase{i}.spf" for k in range(len(result.stages))
                               for i in range(objective.n_phases)]
    for i, (phase, support) in enumerate(zip(result.phases, result.supports)):
        if config.wants("spfield"):
            outputs.append(os.path.basename(write_spfield(os.path.join(out, f"phase_{i}.spf"), domain,
                                                          phase.values, config.spfield_binary)))
        # verify reads the supports back, so they are always written
        outputs.append(os.path.basename(write_spfield(os.path.join(out, f"support_{i}.spf"), domain,
                                                      support.support.astype(float), config.spfield_binary)))
    if config.wants("png"):
        outputs.append(os.path.basename(partition_png(os.path.join(out, "partition.png"),
                                                      [s.support for s in result.supports], domain.mask)))

    domain_data = domain_to_dict(domain)
    if domain_data["mask_file"]:
        write_spfield(os.path.join(out, domain_data["mask_file"]), domain, domain.mask.astype(float))
        outputs.append(domain_data["mask_file"])
    write_json(os.path.join(out, "domain.json"), domain_data)
    write_json(os.path.join(out, "objective.json"), objective.to_dict())
    summary = result.summary()
    summary["warnings"] = list(io.warnings)
    write_json(os.path.join(out, "summary.json"), summary)
    outputs += ["domain.json", "objective.json", "summary.json", "manifest.json"]
    write_manifest(out, "optimize", config.raw, config.seed,
                   _tolerances(optimizer=config.optimizer.to_dict()), outputs)

    if result.stalled:
        io.warn("line search stalled; best densities were kept (see summary.json)")
    if result.exact is not None:
        io.log(f"Done. Exact objective {result.exact.total:.8g}, void measure {result.void_measure:.6g}")
    return summary


# --- verify ---

def load_run(input_dir):
    """(domain, objective, supports, densities) from an optimize output directory."""
    for name in ("domain.json", "objective.json"):
        if not os.path.isfile(os.path.join(input_dir, name)):
            raise ConfigError(f"missing input artifact {name} in {input_dir}", path="verify.input_dir")
    with open(os.path.join(input_dir, "domain.json"), "r", encoding="utf-8") as f:
        domain = domain_from_dict(json.load(f), input_dir)
    with open(os.path.join(input_dir, "objective.json"), "r", encoding="utf-8") as f:
        objective = ObjectiveSpec.from_dict(json.load(f))

    supports, densities = [], []
    for i in range(objective.n_phases):
        path = os.path.join(input_dir, f"support_{i}.spf")
        if not os.path.isfile(path):
            raise ConfigError(f"missing input artifact support_{i}.spf in {input_dir}", path="verify.input_dir")
        _, values = read_spfield(path)
        if values.shape != domain.shape:
            raise ConfigError(f"support_{i}.spf does not match the grid", path="verify.input_dir")
        supports.append(indicator_from_values(domain, np.where(domain.mask, values, 0.0)))
        density_path = os.path.join(input_dir, f"phase_{i}.spf")
        densities.append(read_spfield(density_path)[1] if os.path.isfile(density_path) else values)
    return domain, objective, supports, densities


def _exact_torsion(indicator):
    op = pde_solver.assemble(indicator.domain, indicator.support, mode="exact")
    return pde_solver.solve_torsion(op)


def _torsion(ctx, i, indicator):
    key = ("torsion", i)
    if key not in ctx:
        ctx[key] = _exact_torsion(indicator)
    return ctx[key]


def _anchor_point(indicator, torsion):
    """Boundary-band cell closest to the maximum of w."""
    domain = indicator.domain
    band = np.argwhere(boundary_cells(indicator).support)
    peak = domain.center_of(np.unravel_index(int(np.argmax(torsion.w)), domain.shape))
    dists = [np.linalg.norm(domain.center_of(idx) - peak) for idx in band]
    return domain.center_of(band[int(np.argmin(dists))])


def _default_radii(indicator, r_min, count=6):
    r_max = 0.25 * measure(indicator) ** (1.0 / indicator.domain.dim)
    return list(np.geomspace(r_min, max(r_max, 2.0 * r_min), count))


def _resolve(config, path):
    return path if os.path.isabs(path) else os.path.join(config.base_dir, path)


def _lip_constant(params, i, config):
    """γ-Lipschitz constant for the energy multiplier: given directly or read from a gamma_lip report."""
    if "lip_constant" in params:
        return float(params["lip_constant"])
    if not params.get("lip_report"):
        return None
    try:
        report = read_report(_resolve(config, params["lip_report"]))
    except OSError as e:
        raise ConfigError(f"cannot read report: {e}", path="verify.checks.subsolution.lip_report")
    value = report.get(f"phase_{i}.max_ratio")
    if not value:
        raise ConfigError(f"no phase_{i}.max_ratio entry", path="verify.checks.subsolution.lip_report")
    return float(value)


def _sweep_runs(config, params):
    """Optimize outputs at other values of m, for the lower-bound sweep."""
    runs = []
    for k, run_dir in enumerate(params.get("sweep") or []):
        run_dir = _resolve(config, run_dir)
        if not os.path.isdir(run_dir):
            raise ConfigError(f"directory not found: {run_dir}", path=f"verify.checks.lower_bound.sweep[{k}]")
        _, run_objective, run_supports, _ = load_run(run_dir)
        if not run_objective.m > 0:
            raise ConfigError("sweep runs need m > 0", path=f"verify.checks.lower_bound.sweep[{k}]")
        runs.append((run_dir, run_objective, run_supports))
    return runs


def _phase_check(name, i, indicator, params, objective, config, ctx, io):
    """Runs one per-phase check; returns its result as a plain dict."""
    domain = indicator.domain
    spec = objective.functionals[i]
    m = float(params.get("m", objective.m))

    if name == "subsolution":
        functional = params.get("functional", "eigenvalue" if spec.kind == "eigenvalue" else "energy")
        lip = _lip_constant(params, i, config)
        if functional == "energy" and lip is not None:
            m = theory_checks.energy_multiplier(m, lip)
        report = theory_checks.subsolution_test(
            indicator, m, count=int(params.get("count", 20)), seed=int(params.get("seed", config.seed)),
            functional=functional, k=spec.k if spec.kind == "eigenvalue" else 1,
            slack=params.get("slack"), include_identity=bool(params.get("include_identity", False)),
            log_func=io.log)
        result = report.to_dict()
        result["multiplier"] = m
        result["lip_constant"] = lip
        return result
    if name == "growth":
        torsion = _torsion(ctx, i, indicator)
        x0 = params.get("center") or _anchor_point(indicator, torsion)
        radii = params.get("radii") or _default_radii(indicator, 2.0 * domain.h)
        result = theory_checks.growth_profile(torsion, x0, radii, log_func=io.log)
        result["linear_growth"] = theory_checks.linear_growth_constant(
            torsion, indicator, radii, samples=int(params.get("samples", 32)), seed=config.seed)
        return result
    if name == "density":
        x0 = params.get("center") or _anchor_point(indicator, _torsion(ctx, i, indicator))
        radii = params.get("radii") or _default_radii(indicator, 2.0 * domain.h)
        result = theory_checks.density_profile(indicator, x0, radii)
        result["center"] = [float(c) for c in np.ravel(x0)]
        return result
    if name == "perimeter":
        result = theory_checks.perimeter_bound_check(indicator, m, tol=float(params.get("tol", theory_checks.PERIMETER_TOL)),
                                                     log_func=io.log)
        result["bound"] = params.get("bound", "eigen" if spec.kind == "eigenvalue" else "measure")
        return result
    if name == "lower_bound":
        result = theory_checks.lower_bound_check(indicator, m)
        if ctx.get("sweep"):
            reports = [result]
            for run_dir, run_objective, run_supports in ctx["sweep"]:
                if i >= len(run_supports) or run_supports[i].is_empty():
                    io.warn(f"lower_bound: phase {i} missing or empty in {run_dir}, left out of the sweep")
                    continue
                reports.append(theory_checks.lower_bound_check(run_supports[i], run_objective.m))
            result["sweep"] = theory_checks.lower_bound_sweep(
                reports, band=float(params.get("band", theory_checks.LOWER_BOUND_BAND)))
            result["sweep"]["m"] = [r["m"] for r in reports]
        return result
    if name == "alt_caffarelli":
        torsion = _torsion(ctx, i, indicator)
        x0 = params.get("center") or _anchor_point(indicator, torsion)
        radii = params.get("radii") or [4.0 * domain.h, 8.0 * domain.h, 16.0 * domain.h]
        return {"center": [float(c) for c in np.ravel(x0)],
                "radii": [theory_checks.alt_caffarelli_check(domain, torsion.w, x0, r) for r in radii]}
    if name == "nodal":
        return theory_checks.nodal_split_check(indicator)
    if name == "connectivity":
        return theory_checks.connectivity_check(indicator)
    if name == "gamma_lip":
        k = spec.k if spec.kind == "eigenvalue" else 1
        rng = np.random.default_rng(int(params.get("seed", config.seed)))
        samples = sample_inner_perturbations(indicator, int(params.get("count", 10)), rng)
        return dataclasses.asdict(gamma_lip_probe(indicator, k, samples, log_func=io.log))
    if name == "constrained_cell":
        result = ctx["result"]
        return density_optimizer.constrained_cell_probe(result, objective, domain, i, config.optimizer,
                                                        log_func=io.log)
    raise ConfigError("unknown check", path=f"verify.checks.{name}")


PARTITION_CHECKS = ("junction", "separation")
M_CHECKS = ("subsolution", "perimeter", "lower_bound")


def cmd_verify(config, io):
    """Runs the selected checks on a previous optimize output directory."""
    input_dir = config.verify.get("input_dir")
    if not input_dir:
        raise ConfigError("required for verify", path="verify.input_dir")
    input_dir = _resolve(config, input_dir)
    if not os.path.isdir(input_dir):
        raise ConfigError(f"directory not found: {input_dir}", path="verify.input_dir")
    domain, objective, supports, densities = load_run(input_dir)
    out = _prepare_out(config)
    checks = config.verify["checks"]
    io.log(f"Verifying {objective.n_phases} phase(s) from {input_dir}: {', '.join(checks)}")

    ctx = {"result": density_optimizer.OptimizationResult(
        [PhaseField(domain, np.clip(d, 0.0, 1.0), i) for i, d in enumerate(densities)],
        supports, [], None, None, [measure(s) for s in supports],
        domain.total_measure - sum(measure(s) for s in supports))}
    if "lower_bound" in checks:
        ctx["sweep"] = _sweep_runs(config, checks["lower_bound"])
    rows = []
    outputs = []
    growth_rows, density_rows = [], []

    for name in (c for c in CHECKS if c in checks):
        params = checks[name]
        io.log(f"Check: {name}")
        report = {}
        try:
            if name in PARTITION_CHECKS:
                if name == "junction":
                    result = theory_checks.junction_scan(supports, float(params.get("r", 4.0 * domain.h)),
                                                         log_func=io.log).to_dict()
                else:
                    torsions = [_torsion(ctx, i, s) for i, s in enumerate(supports)]
                    result = theory_checks.separation_check(supports, torsions, log_func=io.log)
                report = result
                rows += verify_reporter.summarize_check(name, None, result, params)
            else:
                for i, indicator in enumerate(supports):
                    if indicator.is_empty():
                        io.warn(f"{name}: phase {i} is empty, skipped")
                        continue
                    if name in M_CHECKS and not float(params.get("m", objective.m)) > 0:
                        io.warn(f"{name}: needs m > 0, skipped")
                        break
                    result = _phase_check(name, i, indicator, params, objective, config, ctx, io)
                    report[f"phase_{i}"] = result
                    rows += verify_reporter.summarize_check(name, i, result, params)
                    if name == "growth":
                        growth_rows += [[i, r["r"], r["sup_r"], r["mean_r"], r["sup_2r"], r["mean_2r"],
                                         r["right_ok"], r["left_constant"]] for r in result["rows"]]
                    elif name == "density":
                        density_rows += [[i, r, q] for r, q in zip(result["radii"], result["ratios"])]
        except (DomainError, DegeneratePhaseError) as e:
            io.warn(f"{name}: {e}")
            report["error"] = str(e)
            rows.append({"check": name, "phase": None, "quantity": "error", "value": str(e),
                         "threshold": None, "passed": False, "note": None})
        outputs.append(os.path.basename(write_report(os.path.join(out, f"report_{name}.txt"), report)))

    if "growth" in checks:
        outputs.append(os.path.basename(write_csv(
            os.path.join(out, "growth_profile.csv"),
            ["phase", "r", "sup_r", "mean_r", "sup_2r", "mean_2r", "right_ok", "left_constant"], growth_rows)))
    if "density" in checks:
        outputs.append(os.path.basename(write_csv(os.path.join(out, "density_profile.csv"),
                                                  ["phase", "r", "ratio"], density_rows)))
    outputs.append(os.path.basename(verify_reporter.write_table(os.path.join(out, "verify_table.csv"), rows)))
    outputs.append(os.path.basename(verify_reporter.generate_report(rows, out, input_dir, io.warnings)))
    outputs.append("manifest.json")
    write_manifest(out, "verify", config.raw, config.seed,
                   _tolerances(perimeter_tol=theory_checks.PERIMETER_TOL,
                               slack_factor=theory_checks.SLACK_FACTOR), outputs)

    passed, decided = verify_reporter.overall_status(rows)
    io.log(f"Done. {passed} of {decided} criteria passed.")
    return rows


# --- monotonicity ---

def _monotonicity_inputs(config):
    mono = config.monotonicity
    if mono.get("preset"):
        preset = monotonicity.PRESETS[mono["preset"]](mono["resolution"])
        center = mono["center"] or preset.center
        densities = preset.energy_densities if mono.get("gradients", "analytic") == "analytic" else None
        return preset.domain, preset.fields, densities, center
    domain = _require_domain(config)
    fields = []
    for i, path in enumerate(mono["fields"]):
        try:
            _, values = read_spfield(path if os.path.isabs(path) else os.path.join(config.base_dir, path))
        except OSError as e:
            raise ConfigError(f"cannot read field file: {e}", path=f"monotonicity.fields[{i}]")
        if values.shape != domain.shape:
            raise ConfigError("field does not match the grid", path=f"monotonicity.fields[{i}]")
        fields.append(values)
    if mono["center"] is None:
        raise ConfigError("required with 'fields'", path="monotonicity.center")
    return domain, fields, None, mono["center"]


def cmd_monotonicity(config, io):
    """Monotonicity profile of 2 or 3 fields (or an analytic preset) around a center."""
    mono = config.monotonicity
    if not mono:
        raise ConfigError("missing section", path="monotonicity")
    domain, fields, densities, center = _monotonicity_inputs(config)
    out = _prepare_out(config)

    radii = mono["radii"]
    if radii is None:
        radii = monotonicity.default_radii(domain)
    elif isinstance(radii, dict):
        radii = monotonicity.default_radii(domain, radii["min"], radii["max"], radii["count"])
    io.log(f"Monotonicity profile: {len(fields)} fields, {len(radii)} radii, h={domain.h:g}")
    profile = monotonicity.monotonicity_profile(domain, fields, center, radii, epsilon=mono["epsilon"],
                                                energy_densities=densities, log_func=io.log)

    outputs = []
    if config.wants("csv"):
        outputs.append(write_csv(os.path.join(out, "profile.csv"), monotonicity.PROFILE_HEADER, profile.rows()))
        dyadic_rows = []
        for row in profile.dyadic:
            pad = [None] * (3 - len(row["A"]))
            dyadic_rows.append([row["k"], row["r"]] + row["A"] + pad + row["b"] + pad + [row["delta"]])
        outputs.append(write_csv(os.path.join(out, "dyadic.csv"), monotonicity.DYADIC_HEADER, dyadic_rows))
    if config.wants("png"):
        curves = {"Phi2": (profile.radii, profile.phi2)}
        if profile.phi3 is not None:
            curves["Phi3"] = (profile.radii, profile.phi3)
        if profile.phi_ctv is not None:
            curves["Phi_ctv"] = (profile.radii, profile.phi_ctv)
        outputs.append(loglog_png(os.path.join(out, "profile.png"), curves, title="monotonicity profile"))

    summary = {"epsilon": profile.epsilon, "center": list(profile.center), "a_monotone": profile.is_a_monotone(),
               "skipped": profile.skipped}
    if profile.radii:
        summary["phi2_spread"] = monotonicity.relative_spread(profile.phi2)
        growth = monotonicity.phi2_growth_ratio(profile, 8.0 * domain.h)
        summary["phi2_growth_ratio"] = growth
        summary["phi2_bounded"] = growth is not None and growth <= monotonicity.PHI2_GROWTH_LIMIT
        if profile.phi_ctv is not None:
            summary["phi_ctv_spread"] = monotonicity.relative_spread(profile.phi_ctv)
    outputs.append(write_report(os.path.join(out, "report_monotonicity.txt"), summary))
    outputs.append(os.path.join(out, "manifest.json"))
    write_manifest(out, "monotonicity", config.raw, config.seed,
                   _tolerances(overlap_tol=monotonicity.OVERLAP_TOL, epsilon=profile.epsilon),
                   [os.path.basename(p) for p in outputs])
    return profile


COMMANDS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "verify": cmd_verify,
    "monotonicity": cmd_monotonicity,
}


def main(argv=None):
    parser = argparse.ArgumentParser(description="Multiphase shape optimization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        p = sub.add_parser(name, help=func.__doc__.strip().splitlines()[0])
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="Output directory (overrides config and SHAPEOPT_OUTPUT_DIR)")
        p.add_argument("--quiet", action="store_true", help="Only print errors")
        p.add_argument("--no-color", action="store_true", help="Plain console markers")
    args = parser.parse_args(argv)

    io = SolverIO(quiet=args.quiet, color=not args.no_color)
    try:
        config = load_config(args.config, out_override=args.out)
        COMMANDS[args.command](config, io)
    except ShapeOptError as e:
        io.error(str(e))
        return exit_code_for(e)
    except OSError as e:
        io.error(f"file error: {e}")
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

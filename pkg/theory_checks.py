# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
Quantitative checks on computed cells and partitions.

Every check returns a report with its measured quantities and tolerances.
Nothing here asserts a theorem; callers (tests, the verify command) decide
which configurations carry a hard pass/fail.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import ndimage

import pde_solver
from grid_utils import (
    IndicatorSet, ball_cells, ball_weights, boundary_cells, density_ratio, dilate, dilate_by_ball,
    measure, perimeter, sample_inner_perturbations, shell_cells,
)
from solver_io import ConfigError, DomainError

SLACK_FACTOR = 5.0
PERIMETER_TOL = 0.15
LOWER_BOUND_BAND = 3.0


# --- Domain Types ---

@dataclass
class SubsolutionReport:
    m: float
    functional: str
    slack: float
    base_value: float
    base_measure: float
    records: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def n_sampled(self):
        return len(self.records)

    @property
    def pass_fraction(self):
        if not self.records:
            return 0.0
        return sum(1 for r in self.records if r["passed"]) / len(self.records)

    @property
    def worst_margin(self):
        return min((r["margin"] for r in self.records), default=0.0)

    def to_dict(self):
        return {
            "m": self.m,
            "functional": self.functional,
            "slack": self.slack,
            "base_value": self.base_value,
            "base_measure": self.base_measure,
            "n_sampled": self.n_sampled,
            "pass_fraction": self.pass_fraction,
            "worst_margin": self.worst_margin,
            "records": self.records,
            "skipped": self.skipped,
        }


@dataclass
class JunctionReport:
    scan_radius: float
    triple_points: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    n_band_cells: int = 0

    @property
    def n_triple(self):
        return len(self.triple_points)

    def to_dict(self):
        return {
            "scan_radius": self.scan_radius,
            "n_triple": self.n_triple,
            "n_band_cells": self.n_band_cells,
            "counts": dict(self.counts),
            "triple_points": self.triple_points,
        }


# --- Subsolutions ---

def energy_multiplier(m, lip_constant):
    """Energy-subsolution multiplier of a cell optimal for F + m|·| with F γ-Lip of constant C."""
    if not lip_constant > 0:
        raise ConfigError(f"Lipschitz constant must be positive, got {lip_constant}", path="lip_constant")
    return m / (2.0 * lip_constant)


def _exact_energy(indicator):
    op = pde_solver.assemble(indicator.domain, indicator.support, mode="exact")
    torsion = pde_solver.solve_torsion(op)
    return op, torsion, pde_solver.torsion_energy(torsion)


def subsolution_test(indicator, m, count=20, seed=0, functional="energy", k=1, slack=None,
                     include_identity=False, ball_fraction=0.7, r_min=None, r_max=None, log_func=None):
    """
    Compares Ω with inner perturbations Ω̃ ⊂ Ω.

    energy:     margin = E(Ω̃) − E(Ω) − m (|Ω| − |Ω̃|)
    eigenvalue: margin = λ_k(Ω̃) − λ_k(Ω) − m (|Ω| − |Ω̃|)
    A record passes when margin >= −slack (default 5 h |Ω|). Each record
    also carries d_γ(Ω̃, Ω) and the ratio 2 m |Ω ∖ Ω̃| / d_γ.
    """
    if not m > 0:
        raise ConfigError(f"m must be positive, got {m}", path="checks.subsolution.m")
    if functional not in ("energy", "eigenvalue"):
        raise ConfigError(f"unknown functional '{functional}'", path="checks.subsolution.functional")
    if indicator.is_empty():
        raise DomainError("subsolution test needs a nonempty set")

    domain = indicator.domain
    base_measure = measure(indicator)
    slack = SLACK_FACTOR * domain.h * base_measure if slack is None else float(slack)
    op, base_w, base_energy = _exact_energy(indicator)
    base_value = base_energy
    if functional == "eigenvalue":
        base_value = pde_solver.eigs_smallest(op, k)[k - 1].eigenvalue
    report = SubsolutionReport(m, functional, slack, base_value, base_measure)

    rng = np.random.default_rng(seed)
    samples = sample_inner_perturbations(indicator, count, rng, ball_fraction, r_min, r_max)
    if include_identity:
        samples = [({"kind": "identity"}, indicator)] + samples

    for n, (description, perturbed) in enumerate(samples):
        if perturbed.is_empty():
            report.skipped.append({"perturbation": n, "reason": "perturbation empties the set"})
            continue
        removed = base_measure - measure(perturbed)
        if description["kind"] == "identity":
            report.records.append({**description, "delta_value": 0.0, "delta_measure": 0.0, "margin": 0.0,
                                   "d_gamma": 0.0, "ratio": None, "passed": True, "trivial": True})
            continue
        if removed == 0.0:
            report.skipped.append({"perturbation": n, "reason": "no cells removed"})
            continue
        p_op, p_w, p_energy = _exact_energy(perturbed)
        if functional == "eigenvalue":
            if perturbed.count < k:
                report.skipped.append({"perturbation": n, "reason": "fewer cells than k"})
                continue
            delta_value = pde_solver.eigs_smallest(p_op, k)[k - 1].eigenvalue - base_value
        else:
            delta_value = p_energy - base_energy
        margin = delta_value - m * removed
        d_gamma = pde_solver.gamma_distance(p_w, base_w)
        report.records.append({
            **description,
            "delta_value": delta_value,
            "delta_energy": p_energy - base_energy,
            "delta_measure": removed,
            "margin": margin,
            "d_gamma": d_gamma,
            "ratio": 2.0 * m * removed / d_gamma if d_gamma > 0 else None,
            "passed": margin >= -slack,
            "trivial": False,
        })

    if log_func:
        log_func(f"   subsolution ({functional}, m={m:g}): pass fraction {report.pass_fraction:.3f} "
                 f"over {report.n_sampled} perturbations, worst margin {report.worst_margin:.3e}")
        for s in report.skipped:
            log_func(f"[WARNING] subsolution perturbation {s['perturbation']} skipped: {s['reason']}")
    return report


# --- Growth and density ---

def _check_radius(domain, r, factor, what):
    if r < factor * domain.h:
        raise DomainError(f"{what} radius r={r} must be at least {factor:g}h={factor * domain.h}")


def growth_profile(torsion, x0, radii, log_func=None):
    """
    Per radius: sup_{B_r} w, spherical mean at r, sup_{B_2r} w and spherical
    mean at 2r. The right inequality (mean at 2r <= sup over B_2r) is checked
    on every row; the left constant mean_2r / sup_r is compared to 2^(−d−2).
    """
    domain = torsion.domain
    w = torsion.w
    rows = []
    skipped = []
    for r in radii:
        _check_radius(domain, r, 2.0, "growth")
        shell_r = shell_cells(domain, x0, r)
        shell_2r = shell_cells(domain, x0, 2.0 * r)
        if shell_r.is_empty() or shell_2r.is_empty():
            skipped.append(r)
            if log_func:
                log_func(f"[WARNING] growth profile: empty shell at r={r:g}, radius skipped")
            continue
        sup_r = float(np.max(w[ball_cells(domain, x0, r).support], initial=0.0))
        # Closed ball covering the shell band
        sup_2r = float(np.max(w[ball_cells(domain, x0, 2.0 * r + 0.5 * domain.h).support], initial=0.0))
        mean_r = float(np.mean(w[shell_r.support]))
        mean_2r = float(np.mean(w[shell_2r.support]))
        rows.append({
            "r": float(r),
            "sup_r": sup_r,
            "mean_r": mean_r,
            "sup_2r": sup_2r,
            "mean_2r": mean_2r,
            "right_ok": mean_2r <= sup_2r * (1.0 + 1e-12),
            "left_constant": mean_2r / sup_r if sup_r > 0 else None,
        })
    lefts = [row["left_constant"] for row in rows if row["left_constant"] is not None]
    return {
        "center": [float(c) for c in np.ravel(x0)],
        "rows": rows,
        "skipped_radii": skipped,
        "right_inequality_holds": all(row["right_ok"] for row in rows),
        "worst_left_constant": min(lefts) if lefts else None,
        "reference_left_constant": 2.0 ** (-domain.dim - 2),
    }


def linear_growth_constant(torsion, indicator, radii, samples=32, seed=0):
    """
    c = min over sampled boundary-band points x0 and radii r of sup_{B_r(x0)} w / r.

    A positive c means w grows at least linearly away from every sampled
    boundary point at these scales.
    """
    domain = torsion.domain
    band = np.argwhere(boundary_cells(indicator).support)
    if band.size == 0:
        raise DomainError("linear growth constant needs a nonempty boundary band")
    rng = np.random.default_rng(seed)
    if len(band) > samples:
        band = band[np.sort(rng.choice(len(band), size=samples, replace=False))]
    best = None
    for idx in band:
        x0 = domain.center_of(idx)
        dist = domain.distance_to(x0)
        for r in radii:
            _check_radius(domain, r, 1.0, "growth")
            ratio = float(np.max(torsion.w[(dist <= r) & domain.mask])) / r
            if best is None or ratio < best[0]:
                best = (ratio, [float(c) for c in x0], float(r))
    return {"constant": best[0], "argmin_point": best[1], "argmin_radius": best[2],
            "n_points": int(len(band)), "radii": [float(r) for r in radii]}


def density_profile(indicator, x0, radii):
    ratios = [density_ratio(indicator, x0, r) for r in radii]
    return {"radii": [float(r) for r in radii], "ratios": ratios, "max_ratio": max(ratios) if ratios else None}


# --- Perimeter and scaling bounds ---

def _first_eigenvalue(indicator):
    op = pde_solver.assemble(indicator.domain, indicator.support, mode="exact")
    return pde_solver.eigs_smallest(op, 1)[0].eigenvalue


def perimeter_bound_check(indicator, m, lam1=None, tol=PERIMETER_TOL, log_func=None):
    """
    ratio_measure = √(m/2) P / |Ω|        (bounded by 1 for energy subsolutions)
    ratio_eigen   = √m P / (λ₁ |Ω|^(1/2))  (bounded by 1 for λ₁ + m|·| cells)
    P is the smoothed perimeter.
    """
    if indicator.is_empty():
        raise DomainError("perimeter bound needs a nonempty set")
    P = perimeter(indicator, mode="smoothed", log_func=log_func)
    area = measure(indicator)
    if lam1 is None:
        lam1 = _first_eigenvalue(indicator)
    ratio_measure = np.sqrt(m / 2.0) * P / area
    ratio_eigen = np.sqrt(m) * P / (lam1 * np.sqrt(area))
    return {
        "m": m,
        "perimeter": P,
        "measure": area,
        "lambda_1": lam1,
        "ratio_measure": float(ratio_measure),
        "ratio_eigen": float(ratio_eigen),
        "tolerance": tol,
        "measure_bound_ok": bool(ratio_measure <= 1.0 + tol),
        "eigen_bound_ok": bool(ratio_eigen <= 1.0 + tol),
    }


def lower_bound_check(indicator, m, lam1=None):
    """Scale-free quantities |Ω| m^(−d/2), λ₁ m^(−2/(d+2)) and P m^(−(d−1)/2)."""
    if not m > 0:
        raise ConfigError(f"m must be positive, got {m}", path="checks.lower_bound.m")
    d = indicator.domain.dim
    if lam1 is None:
        lam1 = _first_eigenvalue(indicator)
    P = perimeter(indicator, mode="face_count")
    return {
        "m": m,
        "measure": measure(indicator),
        "lambda_1": lam1,
        "perimeter": P,
        "measure_quantity": measure(indicator) * m ** (-d / 2.0),
        "eigen_quantity": lam1 * m ** (-2.0 / (d + 2)),
        "perimeter_quantity": P * m ** (-(d - 1) / 2.0),
    }


def lower_bound_sweep(reports, band=LOWER_BOUND_BAND, keys=("eigen_quantity",)):
    """max/min of each quantity over an m-sweep; a key passes when the spread is within ``band``."""
    result = {"band": band, "quantities": {}, "passed": True}
    for key in keys:
        values = [r[key] for r in reports]
        spread = max(values) / min(values) if values and min(values) > 0 else float("inf")
        ok = len(values) < 2 or spread <= band
        result["quantities"][key] = {"values": values, "spread": spread, "within_band": ok}
        result["passed"] = result["passed"] and ok
    return result


# --- Alt–Caffarelli ---

def alt_caffarelli_check(domain, u, x0, r, energy_density=None):
    """
    lhs = r^(−2) |{u = 0} ∩ B_r| (mean of u over ∂B_r)²,   rhs = ∫_{B_r} |∇u|².

    Volume integrals use partial-volume ball weights. ``energy_density`` is
    |∇u|² per cell; central differences are used when it is omitted.
    """
    _check_radius(domain, r, 4.0, "Alt-Caffarelli")
    u = np.asarray(u, dtype=float)
    shell = shell_cells(domain, x0, r)
    if shell.is_empty():
        raise DomainError(f"empty shell at r={r}")
    if energy_density is None:
        grads = np.gradient(u, domain.h)
        energy_density = sum(g * g for g in grads)
    weights = ball_weights(domain, x0, r)
    zero_measure = float(np.sum(weights * (u <= 0.0))) * domain.cell_volume
    mean = float(np.mean(u[shell.support]))
    lhs = zero_measure * mean * mean / (r * r)
    rhs = float(np.sum(weights * energy_density)) * domain.cell_volume
    if rhs == 0.0:
        ratio = 0.0 if lhs == 0.0 else float("inf")
    else:
        ratio = lhs / rhs
    return {"r": float(r), "lhs": lhs, "rhs": rhs, "ratio": ratio,
            "zero_measure": zero_measure, "spherical_mean": mean}


# --- Junctions and separation ---

def _check_disjoint(partition):
    for (i, a), (j, b) in combinations(enumerate(partition), 2):
        if np.any(a.support & b.support):
            raise DomainError(f"phases {i} and {j} overlap")


def junction_scan(partition, r, log_func=None):
    """
    Counts, for every boundary-band cell, the phases whose bands come within r.

    >= 3 phases: triple-junction candidate.
    1 phase: simple point (Z1).
    2 phases: internal double point (Z2_internal) when no void of D lies
    within r, boundary double point (Z2_boundary) otherwise.
    """
    if not partition:
        return JunctionReport(r, counts={"triple": 0, "Z1": 0, "Z2_internal": 0, "Z2_boundary": 0})
    domain = partition[0].domain
    _check_radius(domain, r, 2.0, "junction scan")
    _check_disjoint(partition)

    bands = [boundary_cells(p).support for p in partition]
    near = np.stack([dilate_by_ball(b, r, domain.h, domain.dim) for b in bands])
    any_band = np.any(np.stack(bands), axis=0)
    hits = np.sum(near, axis=0) * any_band

    counts = {"triple": 0, "Z1": 0, "Z2_internal": 0, "Z2_boundary": 0}
    counts["Z1"] = int(np.count_nonzero(hits == 1))
    triple = np.argwhere(hits >= 3)
    counts["triple"] = int(len(triple))

    doubles = hits == 2
    for i, j in combinations(range(len(partition)), 2):
        pair = doubles & near[i] & near[j]
        if not np.any(pair):
            continue
        void = domain.mask & ~(partition[i].support | partition[j].support)
        void_near = dilate_by_ball(void, r, domain.h, domain.dim)
        counts["Z2_boundary"] += int(np.count_nonzero(pair & void_near))
        counts["Z2_internal"] += int(np.count_nonzero(pair & ~void_near))

    report = JunctionReport(
        float(r),
        [[float(c) for c in domain.center_of(idx)] for idx in triple],
        counts,
        int(np.count_nonzero(any_band)),
    )
    if log_func:
        log_func(f"   junction scan (r={r:g}): {report.n_triple} triple candidates, {counts}")
    return report


def separation_check(partition, torsions, log_func=None):
    """
    For each ordered pair (i, j), the largest w_i on the cells of Ω_i's
    boundary band within one cell of Ω_j's boundary band, relative to
    max w_i. The value on Ω_j's band face-adjacent to Ω_i is reported as
    the outer ring. Also builds D_i = D ∖ dilate(∪_{j≠i} Ω_j, 1) and checks
    Ω_i ⊆ D_i.
    """
    _check_disjoint(partition)
    if len(torsions) != len(partition):
        raise ConfigError("one torsion field per phase is required", path="torsions")
    domain = partition[0].domain
    bands = [boundary_cells(p).support for p in partition]
    pairs = []
    worst = 0.0
    for i, j in ((i, j) for i in range(len(partition)) for j in range(len(partition)) if i != j):
        w = torsions[i].w
        peak = float(np.max(w))
        interface = bands[i] & dilate(IndicatorSet(domain, bands[j]), 1).support
        outer = bands[j] & dilate(partition[i], 1).support
        if not np.any(interface) or peak <= 0:
            pairs.append({"i": i, "j": j, "interface_cells": 0, "relative_interface_max": 0.0,
                          "relative_outer_ring_max": 0.0, "trivial": True})
            continue
        rel = float(np.max(w[interface])) / peak
        rel_outer = float(np.max(w[outer])) / peak if np.any(outer) else 0.0
        worst = max(worst, rel)
        pairs.append({"i": i, "j": j, "interface_cells": int(np.count_nonzero(interface)),
                      "relative_interface_max": rel, "relative_outer_ring_max": rel_outer, "trivial": False})

    cells = []
    for i, phase in enumerate(partition):
        others = np.zeros(domain.shape, dtype=bool)
        for j, other in enumerate(partition):
            if j != i:
                others |= other.support
        d_i = domain.mask & ~dilate(IndicatorSet(domain, others), 1).support
        cells.append({
            "phase": i,
            "contained": bool(np.all(d_i[phase.support])),
            "misses_others": not bool(np.any(d_i & others)),
            "D_measure": float(np.count_nonzero(d_i) * domain.cell_volume),
        })

    if log_func:
        log_func(f"   separation: worst relative interface value {worst:.3e}")
    return {"pairs": pairs, "worst_relative_interface": worst, "cells": cells}


# --- Eigenfunction structure ---

def nodal_split_check(indicator, rel_tol=1e-10):
    """λ₁ of each nodal domain {u₂ > 0}, {u₂ < 0} divided by λ₂(Ω)."""
    domain = indicator.domain
    op = pde_solver.assemble(domain, indicator.support, mode="exact")
    pairs = pde_solver.eigs_smallest(op, 2)
    lam2 = pairs[1].eigenvalue
    u2 = pairs[1].u
    scale = float(np.max(np.abs(u2)))
    result = {"lambda_2": lam2, "nodal_domains": []}
    for sign, part in (("positive", u2 > rel_tol * scale), ("negative", u2 < -rel_tol * scale)):
        nodal = IndicatorSet(domain, part & indicator.support)
        if nodal.is_empty():
            result["nodal_domains"].append({"sign": sign, "measure": 0.0, "lambda_1": None, "ratio": None})
            continue
        lam = _first_eigenvalue(nodal)
        result["nodal_domains"].append({"sign": sign, "measure": measure(nodal), "lambda_1": lam,
                                        "ratio": lam / lam2})
    return result


def connectivity_check(indicator, rel_tol=1e-8):
    """Face-connected components of Ω and the share of Ω where u₁ > 0."""
    domain = indicator.domain
    labels, n_components = ndimage.label(indicator.support, structure=ndimage.generate_binary_structure(domain.dim, 1))
    op = pde_solver.assemble(domain, indicator.support, mode="exact")
    first = pde_solver.eigs_smallest(op, 1)[0]
    u1 = first.u
    positive = pde_solver.positivity_set(u1, rel_tol) & indicator.support
    sizes = ndimage.sum(np.ones(domain.shape), labels, index=range(1, n_components + 1))
    return {
        "components": int(n_components),
        "component_sizes": [int(s) for s in np.atleast_1d(sizes)],
        "positive_fraction": float(np.count_nonzero(positive)) / max(indicator.count, 1),
        "lambda_1": first.eigenvalue,
    }

# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
Two- and three-phase monotonicity quantities around a point x0.

For fields u_1..u_n (n = 2 or 3) with disjoint supports:

    A_i(r) = ∫_{B_r} |∇u_i|² |x − x0|^(2−d)      b_i(r) = r^(−4) A_i(r)
    B_i(r) = ∫_{∂B_r} |∇u_i|²
    Φ2(r)  = r^(−4) A_1 A_2
    Φ3(r)  = r^(−(6+3ε)) A_1 A_2 A_3
    Φctv(r) = Π_i r^(−3) ∫_{B_r} |∇u_i|²          (2D, three fields)

plus the dyadic sequences A_i^k = A_i(4^(−k)), b_i^k = 4^(4k) A_i^k and
δ_k = C Σ_i (b_i^k)^(−1/2).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from grid_utils import ball_weights, build_domain, shell_cells
from solver_io import ConfigError, DomainError

OVERLAP_TOL = 1e-10
EPSILON_3D = 0.25
MIN_RADIUS_CELLS = 4.0
PRESET_SUBSAMPLES = 8
PHI2_GROWTH_LIMIT = 10.0


@dataclass
class MonotonicityProfile:
    center: tuple
    dim: int
    epsilon: float
    radii: list
    A: np.ndarray
    b: np.ndarray
    B: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray = None
    phi_ctv: np.ndarray = None
    skipped: list = field(default_factory=list)
    dyadic: list = field(default_factory=list)

    @property
    def n_fields(self):
        return self.A.shape[0]

    def rows(self):
        """Profile table rows: r, A_1..A_3, b_1..b_3, B_1..B_3, Phi2, Phi3, Phi_ctv."""
        out = []
        for j, r in enumerate(self.radii):
            row = [r]
            for block in (self.A, self.b, self.B):
                row += [float(block[i, j]) if i < self.n_fields else None for i in range(3)]
            row.append(float(self.phi2[j]))
            row.append(float(self.phi3[j]) if self.phi3 is not None else None)
            row.append(float(self.phi_ctv[j]) if self.phi_ctv is not None else None)
            out.append(row)
        return out

    def is_a_monotone(self, rtol=1e-12):
        return bool(np.all(np.diff(self.A, axis=1) >= -rtol * np.abs(self.A[:, 1:])))


PROFILE_HEADER = (["r"] + [f"A_{i}" for i in (1, 2, 3)] + [f"b_{i}" for i in (1, 2, 3)]
                  + [f"B_{i}" for i in (1, 2, 3)] + ["Phi2", "Phi3", "Phi_ctv"])
DYADIC_HEADER = ["k", "r"] + [f"A_{i}" for i in (1, 2, 3)] + [f"b_{i}" for i in (1, 2, 3)] + ["delta"]


# --- Quadrature ---

def energy_density(domain, u):
    """|∇u|² per cell from central differences."""
    grads = np.gradient(np.asarray(u, dtype=float), domain.h)
    return sum(g * g for g in grads)


def _singular_weight(domain, x0):
    if domain.dim == 2:
        return np.ones(domain.shape)
    dist = domain.distance_to(x0)
    return 1.0 / np.maximum(dist, 0.5 * domain.h) ** (domain.dim - 2)


def _ball_integrals(domain, densities, x0, r, weight):
    """(A_i(r), ∫_{B_r} |∇u_i|²) for each density."""
    wts = ball_weights(domain, x0, r) * domain.cell_volume
    weighted = [float(np.sum(wts * weight * e)) for e in densities]
    plain = [float(np.sum(wts * e)) for e in densities]
    return weighted, plain


def _sphere_area(dim, r):
    return 2.0 * np.pi * r if dim == 2 else 4.0 * np.pi * r * r


def epsilon_default(dim):
    return 0.5 * epsilon_bound_2d() if dim == 2 else EPSILON_3D


# --- Profile ---

def monotonicity_profile(domain, fields, x0, radii, epsilon=None, energy_densities=None,
                         delta_constant=1.0, overlap_tol=OVERLAP_TOL, log_func=None):
    """
    Samples the monotonicity quantities of 2 or 3 fields at the given radii.

    Radii below 4h or above dist(x0, ∂D)/2 are skipped and reported.
    ``energy_densities`` (|∇u_i|² per cell) replaces the central-difference
    gradients when the fields come with closed-form derivatives.
    """
    fields = [np.asarray(u, dtype=float) for u in fields]
    if len(fields) not in (2, 3):
        raise ConfigError(f"monotonicity profile takes 2 or 3 fields, got {len(fields)}", path="monotonicity.fields")
    for i, u in enumerate(fields):
        if u.shape != domain.shape:
            raise DomainError(f"field {i} shape {u.shape} does not match grid {domain.shape}")
        if np.any(u < -overlap_tol):
            raise ConfigError(f"field {i} takes negative values", path="monotonicity.fields")
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            overlap = float(np.sum(fields[i] * fields[j])) * domain.cell_volume
            if overlap > overlap_tol:
                raise DomainError(f"fields {i} and {j} have overlapping supports (∫u_i u_j = {overlap:.3e})")

    if energy_densities is None:
        energy_densities = [energy_density(domain, u) for u in fields]
    epsilon = epsilon_default(domain.dim) if epsilon is None else float(epsilon)
    weight = _singular_weight(domain, x0)
    edge = domain.distance_to_box_edge(x0)

    kept, skipped = [], []
    for r in sorted(float(r) for r in radii):
        if r < MIN_RADIUS_CELLS * domain.h:
            skipped.append({"r": r, "reason": "below 4h"})
        elif r > 0.5 * edge:
            skipped.append({"r": r, "reason": "closer than r to the domain edge"})
        else:
            kept.append(r)
    if log_func:
        for s in skipped:
            log_func(f"[WARNING] monotonicity: radius {s['r']:g} skipped ({s['reason']})")

    n = len(fields)
    A = np.zeros((n, len(kept)))
    plain = np.zeros((n, len(kept)))
    B = np.zeros((n, len(kept)))
    for j, r in enumerate(kept):
        A[:, j], plain[:, j] = _ball_integrals(domain, energy_densities, x0, r, weight)
        shell = shell_cells(domain, x0, r).support
        if np.any(shell):
            B[:, j] = [float(np.mean(e[shell])) * _sphere_area(domain.dim, r) for e in energy_densities]

    r_arr = np.asarray(kept)
    b = A / r_arr ** 4 if kept else A.copy()
    phi2 = A[0] * A[1] / r_arr ** 4
    phi3 = A[0] * A[1] * A[2] / r_arr ** (6.0 + 3.0 * epsilon) if n == 3 else None
    phi_ctv = None
    if n == 3 and domain.dim == 2:
        phi_ctv = np.prod(plain / r_arr ** 3, axis=0)

    profile = MonotonicityProfile(tuple(float(c) for c in np.ravel(x0)), domain.dim, epsilon, kept,
                                  A, b, B, phi2, phi3, phi_ctv, skipped)
    profile.dyadic = dyadic_sequences(domain, energy_densities, x0, weight, edge, delta_constant)
    return profile


def dyadic_sequences(domain, energy_densities, x0, weight, edge, delta_constant=1.0):
    """A_i^k, b_i^k and δ_k for every k with 4h <= 4^(−k) <= dist(x0, ∂D)/2."""
    rows = []
    k = 0
    while 4.0 ** (-k) >= MIN_RADIUS_CELLS * domain.h:
        r = 4.0 ** (-k)
        if r <= 0.5 * edge:
            A_k, _ = _ball_integrals(domain, energy_densities, x0, r, weight)
            b_k = [4.0 ** (4 * k) * a for a in A_k]
            delta = delta_constant * sum(1.0 / np.sqrt(v) if v > 0 else np.inf for v in b_k)
            rows.append({"k": k, "r": r, "A": A_k, "b": b_k, "delta": float(delta)})
        k += 1
    return rows


def phi2_growth_ratio(profile, r_min):
    """max Φ2 over radii >= r_min divided by Φ2 at the largest radius."""
    radii = np.asarray(profile.radii)
    if radii.size == 0 or profile.phi2[-1] == 0:
        return None
    sel = radii >= r_min
    if not np.any(sel):
        return None
    return float(np.max(profile.phi2[sel]) / profile.phi2[-1])


def relative_spread(values):
    """(max − min) / mean, the constancy measure used for Φ2 and Φctv."""
    values = np.asarray(values, dtype=float)
    return float((values.max() - values.min()) / abs(values.mean()))


# --- ε bound ---

def _arc_sum(z):
    weights = np.exp(np.append(z, 0.0))
    lengths = 2.0 * np.pi * weights / weights.sum()
    return float(np.sum(np.pi / lengths))


def epsilon_bound_2d(return_details=False):
    """
    Largest ε with 6 + 3ε below twice the minimal Σ α_i over three-arc
    partitions of the unit circle, α = π / L for an arc of length L.
    """
    res = optimize.minimize(_arc_sum, x0=np.array([0.4, -0.3]), method="BFGS", options={"gtol": 1e-12})
    weights = np.exp(np.append(res.x, 0.0))
    lengths = 2.0 * np.pi * weights / weights.sum()
    best = float(res.fun)
    eps = (2.0 * best - 6.0) / 3.0
    if return_details:
        return {"epsilon": eps, "min_sum": best, "arc_lengths": lengths.tolist(), "converged": bool(res.success)}
    return eps


# --- Analytic presets ---

@dataclass
class PresetFields:
    name: str
    domain: object
    center: tuple
    fields: list
    energy_densities: list


def _preset_domain(resolution):
    """[−1, 1]^2 with the origin on a grid corner (resolution = cells per unit length)."""
    n = 2 * int(resolution)
    return build_domain((2.0, 2.0), n, origin=(-1.0, -1.0))


def halfplanes(resolution=512):
    """u_1 = max(x, 0), u_2 = max(−x, 0); |∇u_i| = 1 on the two half-planes."""
    domain = _preset_domain(resolution)
    x, _ = domain.centers()
    fields = [np.maximum(x, 0.0), np.maximum(-x, 0.0)]
    densities = [(x > 0).astype(float), (x < 0).astype(float)]
    return PresetFields("halfplanes", domain, (0.0, 0.0), fields, densities)


SECTOR_ANGLES = (0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0)


def _wrap(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def _sector_value(x, y, theta_i, alpha=1.5):
    rho = np.hypot(x, y)
    psi = _wrap(np.arctan2(y, x) - theta_i)
    inside = np.abs(psi) < np.pi / 3.0
    return np.where(inside, rho ** alpha * np.cos(alpha * psi), 0.0), inside, rho


def sectors(resolution=512, subsamples=PRESET_SUBSAMPLES):
    """
    Three 120° sector harmonics u_i = ρ^(3/2) cos(3(θ − θ_i)/2) on their sectors.

    |∇u_i|² = (9/4) ρ inside sector i; its cell averages come from a
    subsamples² lattice so the sector edges are resolved below cell scale.
    """
    domain = _preset_domain(resolution)
    x, y = domain.centers()
    fields = [_sector_value(x, y, t)[0] for t in SECTOR_ANGLES]

    offsets = ((np.arange(subsamples) + 0.5) / subsamples - 0.5) * domain.h
    densities = [np.zeros(domain.shape) for _ in SECTOR_ANGLES]
    for dx in offsets:
        for dy in offsets:
            for i, t in enumerate(SECTOR_ANGLES):
                _, inside, rho = _sector_value(x + dx, y + dy, t)
                densities[i] += np.where(inside, 2.25 * rho, 0.0)
    densities = [d / subsamples ** 2 for d in densities]
    return PresetFields("sectors", domain, (0.0, 0.0), fields, densities)


PRESETS = {"halfplanes": halfplanes, "sectors": sectors}


def default_radii(domain, r_min=None, r_max=0.4, count=24):
    r_min = 8.0 * domain.h if r_min is None else r_min
    return list(np.geomspace(r_min, r_max, count))

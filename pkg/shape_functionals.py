# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
Shape functionals (Dirichlet eigenvalues and torsional energy), the
aggregators g, the composite objective g(F_1, ..., F_h) + m Σ|Ω_i| and
its density gradient.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

import pde_solver
from grid_utils import IndicatorSet, PhaseField, measure, phase_measure
from solver_io import ConfigError, DegeneratePhaseError, EmptyOperatorError

FUNCTIONAL_KINDS = ("eigenvalue", "torsion_energy")
AGGREGATORS = ("sum", "max", "weighted_sum")
DEFAULT_GAP_TOL = 1e-6
TIE_RTOL = 1e-12
MAX_EIGEN_INDEX = 20


# --- Domain Types ---

@dataclass(frozen=True)
class FunctionalSpec:
    kind: str
    k: int = 1

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ConfigError(f"unknown functional kind '{self.kind}'", path="objective.functionals")
        if self.kind == "eigenvalue" and not 1 <= int(self.k) <= MAX_EIGEN_INDEX:
            raise ConfigError(f"eigenvalue index must be in [1, {MAX_EIGEN_INDEX}], got {self.k}",
                              path="objective.functionals")

    @property
    def label(self):
        return f"lambda_{self.k}" if self.kind == "eigenvalue" else "E"

    @classmethod
    def from_dict(cls, data):
        if isinstance(data, str):
            # "lambda_2" / "torsion_energy" shorthands
            if data.startswith("lambda_"):
                return cls("eigenvalue", int(data.split("_", 1)[1]))
            return cls(data)
        return cls(data.get("kind", "eigenvalue"), int(data.get("k", 1)))

    def to_dict(self):
        return {"kind": self.kind, "k": self.k}


@dataclass(frozen=True)
class ObjectiveSpec:
    g: str
    functionals: tuple
    m: float = 0.0
    weights: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "functionals", tuple(self.functionals))
        if self.g not in AGGREGATORS:
            raise ConfigError(f"unknown aggregator '{self.g}'", path="objective.g")
        if not self.functionals:
            raise ConfigError("at least one phase functional is required", path="objective.functionals")
        if not np.isfinite(self.m) or self.m < 0:
            raise ConfigError(f"measure penalty must be >= 0, got {self.m}", path="objective.m")
        if self.g == "weighted_sum":
            if self.weights is None or len(self.weights) != len(self.functionals):
                raise ConfigError("one weight per phase is required", path="objective.weights")
            if any(w <= 0 for w in self.weights):
                raise ConfigError("weights must be positive", path="objective.weights")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def n_phases(self):
        return len(self.functionals)

    def to_dict(self):
        return {
            "g": self.g,
            "m": self.m,
            "weights": list(self.weights) if self.weights else None,
            "functionals": [f.to_dict() for f in self.functionals],
        }

    @classmethod
    def from_dict(cls, data):
        functionals = data.get("functionals")
        if functionals is None:
            raise ConfigError("missing key", path="objective.functionals")
        return cls(
            data.get("g", "sum"),
            tuple(FunctionalSpec.from_dict(f) for f in functionals),
            float(data.get("m", 0.0)),
            tuple(data["weights"]) if data.get("weights") else None,
        )


@dataclass
class FunctionalValue:
    spec: FunctionalSpec
    phase_id: int
    value: float
    mode: str
    mu: float
    eigenpairs: list = None
    torsion: object = None
    gap: float = None
    degenerate: bool = False
    warnings: list = field(default_factory=list)

    @property
    def state(self):
        """Field the gradient is built from: u_k or w."""
        if self.spec.kind == "eigenvalue":
            return self.eigenpairs[self.spec.k - 1].u
        return self.torsion.w


@dataclass
class ObjectiveValue:
    values: list
    measures: list
    g_value: float
    total: float
    m: float
    mode: str
    details: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "mode": self.mode,
            "values": list(self.values),
            "measures": list(self.measures),
            "g": self.g_value,
            "m": self.m,
            "total": self.total,
            "warnings": list(self.warnings),
        }


# --- Aggregators ---

def aggregate(g, values, weights=None):
    values = np.asarray(values, dtype=float)
    if g == "sum":
        return float(np.sum(values))
    if g == "max":
        return float(np.max(values))
    if g == "weighted_sum":
        return float(np.dot(np.asarray(weights, dtype=float), values))
    raise ConfigError(f"unknown aggregator '{g}'", path="objective.g")


def aggregate_subgradient(g, values, weights=None):
    """
    Coefficients c_i with ∂g = Σ c_i ∂F_i. For max the coefficients are spread
    evenly over the phases tied for the maximum.
    """
    values = np.asarray(values, dtype=float)
    if g == "sum":
        return np.ones(values.size)
    if g == "weighted_sum":
        return np.asarray(weights, dtype=float)
    if g == "max":
        top = float(np.max(values))
        tied = np.abs(values - top) <= TIE_RTOL * max(abs(top), 1.0)
        return tied.astype(float) / np.count_nonzero(tied)
    raise ConfigError(f"unknown aggregator '{g}'", path="objective.g")


# --- Functionals ---

def _support_of(phase, threshold=0.5):
    if isinstance(phase, IndicatorSet):
        return phase.support
    return phase.values >= threshold


def eval_functional(spec, phase, mu=pde_solver.DEFAULT_MU, mode="penalized",
                    gap_tol=DEFAULT_GAP_TOL, eig_tol=pde_solver.EIGEN_TOL, log_func=None):
    """
    Evaluates F on one phase.

    penalized: operator −Δ + mu (1 − φ) over the whole mask.
    exact: Dirichlet operator on the support {φ ≥ 1/2} (or the IndicatorSet).
    """
    phase_id = getattr(phase, "phase_id", 0)
    domain = phase.domain
    if mode == "exact":
        support = _support_of(phase)
        if not np.any(support):
            raise DegeneratePhaseError(f"phase {phase_id} has an empty support")
        try:
            op = pde_solver.assemble(domain, support, mode="exact")
        except EmptyOperatorError:
            raise DegeneratePhaseError(f"phase {phase_id} has an empty support inside the mask")
    elif mode == "penalized":
        if isinstance(phase, IndicatorSet):
            phase = phase.as_phase(phase_id)
        if phase.is_empty():
            raise DegeneratePhaseError(f"phase {phase_id} vanishes everywhere; lambda is undefined")
        op = pde_solver.assemble(domain, phase.values, mode="penalized", mu=mu)
    else:
        raise ConfigError(f"unknown boundary mode '{mode}'", path="mode")

    if spec.kind == "torsion_energy":
        torsion = pde_solver.solve_torsion(op, phase_id=phase_id)
        return FunctionalValue(spec, phase_id, pde_solver.torsion_energy(torsion), mode, op.mu, torsion=torsion)

    k = spec.k
    if k > op.size:
        raise DegeneratePhaseError(f"phase {phase_id}: lambda_{k} needs {k} cells, support has {op.size}")
    n_pairs = min(k + 1, op.size, MAX_EIGEN_INDEX)
    pairs = pde_solver.eigs_smallest(op, n_pairs, tol=eig_tol)
    lam = pairs[k - 1].eigenvalue

    neighbours = [pairs[i].eigenvalue for i in (k - 2, k) if 0 <= i < len(pairs)]
    gap = min((abs(v - lam) / abs(lam) for v in neighbours), default=None)
    result = FunctionalValue(spec, phase_id, lam, mode, op.mu, eigenpairs=pairs, gap=gap)
    if gap is not None and gap < gap_tol:
        result.degenerate = True
        message = f"phase {phase_id}: lambda_{k} is nearly degenerate (relative gap {gap:.2e})"
        result.warnings.append(message)
        if log_func:
            log_func(f"[WARNING] {message}")
    return result


def shape_gradient(spec, phase, state, mu=None):
    """
    ∂F/∂φ_j of the penalized functional.

    eigenvalue(k): −μ u_k(x_j)² h^dim   (u_k normalized by h^dim Σ u² = 1)
    torsion_energy: −½ μ w(x_j)² h^dim
    ``state`` is the FunctionalValue from eval_functional.
    """
    if state.mode != "penalized":
        raise ConfigError("density gradients exist only for the penalized functional", path="mode")
    mu = state.mu if mu is None else mu
    domain = phase.domain
    factor = -mu * domain.cell_volume
    if spec.kind == "torsion_energy":
        factor *= 0.5
    grad = factor * state.state ** 2
    return np.where(domain.mask, grad, 0.0)


# --- Objective ---

def _check_stack(phases):
    total = np.sum([p.values if isinstance(p, PhaseField) else p.support.astype(float) for p in phases], axis=0)
    if np.any(total > 1.0 + 1e-9):
        raise ConfigError("phase densities exceed 1 in some cell (Σφ_i ≤ 1 is required)", path="phases")


def eval_objective(objective, phases, mu=pde_solver.DEFAULT_MU, mode="penalized",
                   gap_tol=DEFAULT_GAP_TOL, workers=None, log_func=None):
    """
    g(F_1(φ_1), ..., F_h(φ_h)) + m Σ |φ_i|.

    Phases are evaluated on a thread pool; results are gathered in phase order.
    In exact mode the measure of phase i is that of its support.
    """
    if len(phases) != objective.n_phases:
        raise ConfigError(f"objective has {objective.n_phases} phases, got {len(phases)}", path="phases")
    _check_stack(phases)

    def evaluate(pair):
        spec, phase = pair
        return eval_functional(spec, phase, mu=mu, mode=mode, gap_tol=gap_tol)

    pairs = list(zip(objective.functionals, phases))
    if len(pairs) == 1 or workers == 1:
        details = [evaluate(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers or min(len(pairs), 4)) as executor:
            details = list(executor.map(evaluate, pairs))

    values = [d.value for d in details]
    if mode == "exact":
        measures = [p.domain.cell_volume * int(np.count_nonzero(_support_of(p))) for p in phases]
    else:
        measures = [phase_measure(p) if isinstance(p, PhaseField) else measure(p) for p in phases]
    g_value = aggregate(objective.g, values, objective.weights)
    total = g_value + objective.m * float(np.sum(measures))

    warnings = [w for d in details for w in d.warnings]
    if log_func:
        for w in warnings:
            log_func(f"[WARNING] {w}")
    return ObjectiveValue(values, measures, g_value, total, objective.m, mode, details, warnings)


def objective_gradient(objective, phases, value, mu=None):
    """Stacked per-phase gradients: c_i ∂F_i/∂φ_i + m h^dim on the mask."""
    coefs = aggregate_subgradient(objective.g, value.values, objective.weights)
    grads = []
    for coef, spec, phase, state in zip(coefs, objective.functionals, phases, value.details):
        domain = phase.domain
        grad = np.where(domain.mask, objective.m * domain.cell_volume, 0.0)
        if coef != 0.0:
            grad = grad + coef * shape_gradient(spec, phase, state, mu)
        grads.append(grad)
    return np.stack(grads)


# --- γ-Lipschitz constant ---

@dataclass
class GammaLipReport:
    k: int
    base_eigenvalue: float
    records: list = field(default_factory=list)
    max_ratio: float = 0.0
    skipped: list = field(default_factory=list)


def gamma_lip_probe(support, k, perturbations, log_func=None):
    """
    Ratios |λ_k(Ω̃) − λ_k(Ω)| / d_γ(Ω̃, Ω) over inner perturbations Ω̃ ⊂ Ω.

    ``perturbations`` is a list of IndicatorSets or (description, IndicatorSet)
    pairs. Solves are in exact mode. The largest ratio is the empirical
    γ-Lipschitz constant.
    """
    domain = support.domain
    base_op = pde_solver.assemble(domain, support.support, mode="exact")
    base_lam = pde_solver.eigs_smallest(base_op, k)[k - 1].eigenvalue
    base_w = pde_solver.solve_torsion(base_op)
    report = GammaLipReport(k, base_lam)

    for n, item in enumerate(perturbations):
        description, perturbed = item if isinstance(item, tuple) else ({"index": n}, item)
        if perturbed.count < k:
            report.skipped.append({"perturbation": n, "reason": "perturbation leaves fewer cells than k"})
            continue
        op = pde_solver.assemble(domain, perturbed.support, mode="exact")
        lam = pde_solver.eigs_smallest(op, k)[k - 1].eigenvalue
        d_gamma = pde_solver.gamma_distance(pde_solver.solve_torsion(op), base_w)
        if d_gamma <= 0.0:
            report.skipped.append({"perturbation": n, "reason": "zero gamma distance"})
            continue
        ratio = abs(lam - base_lam) / d_gamma
        report.records.append({**description, "delta_lambda": lam - base_lam, "d_gamma": d_gamma, "ratio": ratio})
        report.max_ratio = max(report.max_ratio, ratio)

    if log_func:
        log_func(f"   gamma-Lip check: {len(report.records)} perturbations, max ratio {report.max_ratio:.4g}")
    return report

# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
Projected-gradient optimizer for the density relaxation of

    min g(F_1(Ω_1), ..., F_h(Ω_h)) + m Σ|Ω_i|,   Ω_i disjoint in D.

Each phase is a density φ_i ∈ [0, 1] with Σ_i φ_i ≤ 1 per cell. Stages run
over an increasing penalization schedule, each warm-started from the last;
the final densities are binarized at 1/2 and re-evaluated with exact
Dirichlet conditions on the supports.
"""

import os
from dataclasses import dataclass, field, replace

import numpy as np

import shape_functionals
from field_io import append_csv_row, write_spfield
from grid_utils import IndicatorSet, PhaseField, dilate, measure
from shape_functionals import ObjectiveSpec, eval_objective, objective_gradient
from solver_io import ConfigError, DegeneratePhaseError

INIT_MODES = ("voronoi", "random", "given")
VORONOI_LEVEL = 0.9
STEP_GROWTH_CAP = 1e6
FEASIBILITY_TOL = 1e-9


# --- Domain Types ---

@dataclass
class OptimizerConfig:
    max_iters: int = 150
    step: float = None
    backtrack: float = 0.5
    armijo: float = 1e-4
    max_halvings: int = 30
    mu_schedule: tuple = (1e3, 1e4, 1e5)
    tol: float = 1e-6
    patience: int = 3
    seed: int = 0
    init: str = "voronoi"
    init_phases: list = None
    threshold: float = 0.5
    workers: int = None
    gap_tol: float = shape_functionals.DEFAULT_GAP_TOL

    def validate(self):
        """Returns (ok, message)."""
        if int(self.max_iters) < 1:
            return False, "optimizer.max_iters: must be at least 1"
        if self.step is not None and not self.step > 0:
            return False, "optimizer.step: must be positive"
        if not 0.0 < self.backtrack < 1.0:
            return False, "optimizer.backtrack: must lie in (0, 1)"
        if not 0.0 < self.armijo < 1.0:
            return False, "optimizer.armijo: must lie in (0, 1)"
        if int(self.max_halvings) < 1:
            return False, "optimizer.max_halvings: must be at least 1"
        schedule = list(self.mu_schedule)
        if not schedule or any(mu <= 0 for mu in schedule):
            return False, "optimizer.mu_schedule: values must be positive"
        for i in range(1, len(schedule)):
            if schedule[i] <= schedule[i - 1]:
                return False, f"optimizer.mu_schedule[{i}]: schedule must be strictly increasing"
        if not self.tol > 0:
            return False, "optimizer.tol: must be positive"
        if int(self.patience) < 1:
            return False, "optimizer.patience: must be at least 1"
        if self.init not in INIT_MODES:
            return False, f"optimizer.init: expected one of {', '.join(INIT_MODES)}"
        if self.init == "given" and not self.init_phases:
            return False, "optimizer.init_phases: required when init is 'given'"
        if not 0.0 < self.threshold < 1.0:
            return False, "optimizer.threshold: must lie in (0, 1)"
        return True, "ok"

    def to_dict(self):
        data = {k: v for k, v in self.__dict__.items() if k != "init_phases"}
        data["mu_schedule"] = list(self.mu_schedule)
        return data


@dataclass
class OptimizationResult:
    phases: list
    supports: list
    trace: list
    penalized: object
    exact: object
    measures: list
    void_measure: float
    stalled: bool = False
    stages: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def summary(self):
        return {
            "penalized": self.penalized.to_dict() if self.penalized else None,
            "exact": self.exact.to_dict() if self.exact else None,
            "measures": list(self.measures),
            "void_measure": self.void_measure,
            "stalled": self.stalled,
            "stages": list(self.stages),
            "diagnostics": list(self.diagnostics),
        }


# --- Constraint handling ---

def project_constraint(stack, mask=None):
    """
    Per-cell Euclidean projection onto {y >= 0, Σ y <= 1}.

    Cells whose positive part already sums to at most 1 are just clamped;
    the rest go through the sort-based simplex projection.
    """
    stack = np.asarray(stack, dtype=float)
    n = stack.shape[0]
    flat = stack.reshape(n, -1).T
    out = np.maximum(flat, 0.0)
    over = out.sum(axis=1) > 1.0
    if np.any(over):
        V = flat[over]
        U = np.sort(V, axis=1)[:, ::-1]
        cssv = np.cumsum(U, axis=1) - 1.0
        ind = np.arange(n) + 1
        rho = np.count_nonzero(U - cssv / ind > 0, axis=1)
        theta = cssv[np.arange(len(V)), rho - 1] / rho
        out[over] = np.maximum(V - theta[:, None], 0.0)
    out = out.T.reshape(stack.shape)
    if mask is not None:
        out = np.where(mask[None, ...], out, 0.0)
    return out


def binarize(phases, threshold=0.5):
    """
    Cell goes to the phase with φ_i >= threshold (lowest phase id on ties).

    Rejects stacks with Σφ_i > 1, where two phases could both pass a
    threshold of 1/2.
    """
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}", path="optimizer.threshold")
    if not phases:
        return []
    domain = phases[0].domain
    stack = np.stack([p.values for p in phases])
    if np.any(stack.sum(axis=0) > 1.0 + FEASIBILITY_TOL):
        raise ConfigError("infeasible phase stack: densities sum above 1", path="phases")
    taken = np.zeros(domain.shape, dtype=bool)
    supports = []
    for phase in phases:
        wins = (phase.values >= threshold) & ~taken
        taken |= wins
        supports.append(IndicatorSet(domain, wins))
    return supports


def initial_stack(domain, n_phases, config):
    rng = np.random.default_rng(config.seed)
    mask = domain.mask
    if config.init == "given":
        if len(config.init_phases) != n_phases:
            raise ConfigError(f"expected {n_phases} initial phases, got {len(config.init_phases)}",
                              path="optimizer.init_phases")
        stack = np.stack([np.asarray(getattr(p, "values", p), dtype=float) for p in config.init_phases])
        if stack.shape[1:] != domain.shape:
            raise ConfigError("initial phases do not match the grid", path="optimizer.init_phases")
        return project_constraint(stack, mask)

    if config.init == "random":
        # Uniform on the partial simplex: drop the slack coordinate of a flat Dirichlet draw
        draws = rng.dirichlet(np.ones(n_phases + 1), size=int(np.prod(domain.shape)))
        stack = draws[:, :n_phases].T.reshape((n_phases,) + domain.shape)
        return project_constraint(stack, mask)

    lo = np.asarray(domain.origin)
    seeds = rng.uniform(lo, lo + np.asarray(domain.extent), size=(n_phases, domain.dim))
    dists = np.stack([domain.distance_to(s) for s in seeds])
    owner = np.argmin(dists, axis=0)
    stack = np.stack([np.where(owner == i, VORONOI_LEVEL, 0.0) for i in range(n_phases)])
    return np.where(mask[None, ...], stack, 0.0)


def _as_phases(domain, stack):
    return [PhaseField(domain, np.clip(stack[i], 0.0, 1.0), i) for i in range(stack.shape[0])]


# --- Optimizer ---

TRACE_HEADER_BASE = ["iteration", "stage", "mu", "objective", "step"]


def _stationarity(stack, grad, step, mask):
    """Largest projected-gradient component over the largest gradient component, both on the mask."""
    scale = float(np.max(np.abs(grad[:, mask]))) if np.any(mask) else 0.0
    if scale == 0.0:
        return 0.0
    moved = project_constraint(stack - step * grad, mask) - stack
    return float(np.max(np.abs(moved))) / (step * scale)


def run(objective, domain, config=None, log_func=None, checkpoint_dir=None, stop_check=None):
    """
    Projected gradient with Armijo backtracking, one stage per penalization.

    A stage ends when the projected gradient vanishes (relative to ``tol``),
    after ``patience`` consecutive relative decreases below ``tol``, on
    ``max_iters`` or on a stall (every trial step rejected). A stall keeps the
    best densities and moves on. The last accepted step carries into the
    next stage. ``stop_check`` is polled between iterations.
    """
    config = config or OptimizerConfig()
    ok, message = config.validate()
    if not ok:
        raise ConfigError(message)

    n = objective.n_phases
    header = TRACE_HEADER_BASE + [f"measure_{i}" for i in range(n)]
    trace_path = None
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)
        trace_path = os.path.join(checkpoint_dir, "trace.csv")
        if os.path.exists(trace_path):
            os.remove(trace_path)

    stack = initial_stack(domain, n, config)
    trace = []
    stages = []
    diagnostics = []
    stalled_any = False
    iteration = 0
    value = None
    carried = None

    def record(stage, mu, value, step):
        row = [iteration, stage, mu, value.total, step] + list(value.measures)
        trace.append(dict(zip(header, row)))
        if trace_path:
            append_csv_row(trace_path, header, row)

    def evaluate(stack, mu):
        return eval_objective(objective, _as_phases(domain, stack), mu=mu, mode="penalized",
                              gap_tol=config.gap_tol, workers=config.workers)

    for stage, mu in enumerate(config.mu_schedule):
        if stop_check and stop_check():
            diagnostics.append(f"stopped before stage {stage}")
            break
        step0 = config.step or 1.0 / (mu * domain.cell_volume)
        step = step0 if carried is None else min(max(carried, step0), STEP_GROWTH_CAP * step0)
        small_decreases = 0
        value = evaluate(stack, mu)
        record(stage, mu, value, 0.0)
        seen_warnings = set(value.warnings)
        stage_info = {"stage": stage, "mu": mu, "iterations": 0, "stalled": False, "converged": False,
                      "start_step": step}
        if log_func:
            log_func(f"Stage {stage}: mu={mu:g}, objective {value.total:.6g}")

        for _ in range(int(config.max_iters)):
            if stop_check and stop_check():
                diagnostics.append(f"stopped during stage {stage}")
                break
            grad = objective_gradient(objective, _as_phases(domain, stack), value, mu)
            if _stationarity(stack, grad, step0, domain.mask) <= config.tol:
                stage_info["converged"] = True
                break
            accepted = None
            trial_step = step
            for _halving in range(int(config.max_halvings) + 1):
                candidate = project_constraint(stack - trial_step * grad, domain.mask)
                slope = float(np.sum(grad * (candidate - stack)))
                try:
                    trial = evaluate(candidate, mu)
                except DegeneratePhaseError:
                    trial = None
                if trial is not None and trial.total <= value.total + config.armijo * slope:
                    accepted = (candidate, trial)
                    break
                trial_step *= config.backtrack

            if accepted is None:
                stage_info["stalled"] = True
                stalled_any = True
                message = f"stage {stage} (mu={mu:g}): line search stalled after {config.max_halvings} halvings"
                diagnostics.append(message)
                if log_func:
                    log_func(f"[WARNING] {message}")
                break

            candidate, trial = accepted
            decrease = (value.total - trial.total) / max(abs(value.total), 1e-300)
            stack, value = candidate, trial
            iteration += 1
            stage_info["iterations"] += 1
            record(stage, mu, value, trial_step)
            for w in value.warnings:
                if w not in seen_warnings:
                    seen_warnings.add(w)
                    diagnostics.append(f"stage {stage}: {w}")
            step = min(trial_step / config.backtrack, STEP_GROWTH_CAP * step0)
            small_decreases = small_decreases + 1 if decrease < config.tol else 0
            if small_decreases >= int(config.patience):
                stage_info["converged"] = True
                break

        carried = step
        stage_info["final_step"] = step
        stage_info["objective"] = value.total
        stages.append(stage_info)
        if checkpoint_dir:
            for i in range(n):
                write_spfield(os.path.join(checkpoint_dir, f"stage{stage}_phase{i}.spf"), domain, stack[i])
        if log_func:
            log_func(f"   stage {stage} done: {stage_info['iterations']} iterations, objective {value.total:.6g}")

    phases = _as_phases(domain, stack)
    supports = binarize(phases, config.threshold)
    support_phases = [s.as_phase(i) for i, s in enumerate(supports)]
    measures = [measure(s) for s in supports]
    void = domain.total_measure - float(np.sum(measures))
    try:
        exact = eval_objective(objective, support_phases, mode="exact", gap_tol=config.gap_tol,
                               workers=config.workers)
    except DegeneratePhaseError as e:
        exact = None
        diagnostics.append(f"exact re-evaluation failed: {e}")
        if log_func:
            log_func(f"[WARNING] exact re-evaluation failed: {e}")
    if log_func and exact is not None:
        log_func(f"Exact objective on binarized supports: {exact.total:.6g}")

    return OptimizationResult(phases, supports, trace, value, exact, measures, void,
                              stalled_any, stages, diagnostics)


# --- Constrained-cell re-optimization ---

def constrained_cell_probe(result, objective, domain, phase_index, config=None, log_func=None):
    """
    Re-optimizes F_i + m|·| for one cell inside D_i = D ∖ dilate(∪_{j≠i} Ω_j, 1),
    starting from its own density, and reports how much the exact value improves.
    """
    if not 0 <= phase_index < objective.n_phases:
        raise ConfigError(f"phase index {phase_index} out of range", path="phase_index")
    others = np.zeros(domain.shape, dtype=bool)
    for j, s in enumerate(result.supports):
        if j != phase_index:
            others |= s.support
    blocked = dilate(IndicatorSet(domain, others), 1).support
    sub_domain = domain.with_mask(~blocked)
    own = result.supports[phase_index]

    single = ObjectiveSpec("sum", (objective.functionals[phase_index],), objective.m)
    spec = objective.functionals[phase_index]
    contained = bool(np.all(sub_domain.mask[own.support]))
    own_phase = PhaseField(sub_domain, (own.support & sub_domain.mask).astype(float), 0)
    baseline = eval_objective(single, [own_phase], mode="exact")

    config = config or OptimizerConfig()
    start = np.where(sub_domain.mask, result.phases[phase_index].values, 0.0)
    cell_config = replace(config, init="given", init_phases=[start])
    reopt = run(single, sub_domain, cell_config)
    reopt_total = reopt.exact.total if reopt.exact is not None else float("inf")
    improvement = baseline.total - reopt_total
    report = {
        "phase": phase_index,
        "functional": spec.label,
        "cell_inside_D_i": contained,
        "baseline_exact": baseline.total,
        "reoptimized_exact": reopt_total,
        "improvement": improvement,
        "relative_improvement": improvement / max(abs(baseline.total), 1e-300),
        "D_i_measure": sub_domain.total_measure,
    }
    if log_func:
        log_func(f"   constrained cell {phase_index}: baseline {baseline.total:.6g}, "
                 f"re-optimized {reopt_total:.6g}")
    return report

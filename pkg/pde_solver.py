# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
Finite-difference Dirichlet Laplacian, torsion solves and eigen solves.

Two boundary modes:
- exact: unknowns only on the support; neighbours outside are held at zero.
- penalized: unknowns on the whole mask with the reaction term mu (1 - phi)
  on the diagonal (fictitious-domain relaxation).
"""

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, eigsh, splu

from solver_io import DegeneratePhaseError, DomainError, EmptyOperatorError, SolverError

DEFAULT_MU = 1e4
TORSION_RTOL = 1e-10
EIGEN_TOL = 1e-8
DENSE_LIMIT = 400
START_VECTOR_SEED = 20130312


# --- Domain Types ---

@dataclass(frozen=True, eq=False)
class LaplaceOperator:
    domain: object
    matrix: sp.csr_matrix
    active: np.ndarray          # flat indices of the unknowns
    mode: str
    mu: float
    density: np.ndarray = None  # phi (penalized) or 0/1 support (exact)

    @property
    def size(self):
        return self.matrix.shape[0]

    def restrict(self, values):
        return np.asarray(values, dtype=float).ravel()[self.active]

    def to_field(self, vector):
        out = np.zeros(int(np.prod(self.domain.shape)))
        out[self.active] = vector
        return out.reshape(self.domain.shape)


@dataclass(frozen=True, eq=False)
class TorsionField:
    domain: object
    w: np.ndarray
    phase_id: int = 0
    mode: str = "exact"
    mu: float = 0.0
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class EigenPair:
    eigenvalue: float
    u: np.ndarray
    index: int
    residual: float = 0.0


@functools.lru_cache(maxsize=8)
def _box_laplacian(shape, h):
    """Full-box stencil for one grid; shared across threads, never modified in place."""
    h2 = h * h
    eyes = [sp.identity(n, format="csr") for n in shape]
    lap = None
    for axis, n in enumerate(shape):
        t = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr") / h2
        factors = [eyes[a] if a != axis else t for a in range(len(shape))]
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        lap = term if lap is None else lap + term
    return lap.tocsr()


def _full_box_laplacian(domain):
    return _box_laplacian(tuple(int(n) for n in domain.shape), float(domain.h))


# --- Operations ---

def assemble(domain, support_or_density, mode="penalized", mu=DEFAULT_MU):
    """
    Builds the (2*dim+1)-point Dirichlet Laplacian.

    exact: ``support_or_density`` is a boolean support (or IndicatorSet); the
    operator acts on mask ∩ support.
    penalized: ``support_or_density`` is a density phi in [0, 1] (or
    PhaseField); mu (1 - phi) is added to the diagonal over the whole mask.
    """
    values = getattr(support_or_density, "support", None)
    if values is None:
        values = getattr(support_or_density, "values", support_or_density)
    values = np.asarray(values)
    if values.shape != domain.shape:
        raise DomainError(f"field shape {values.shape} does not match grid {domain.shape}")
    full = _full_box_laplacian(domain)
    mask = domain.mask.ravel()

    if mode == "exact":
        support = (values.astype(float).ravel() >= 0.5) & mask
        active = np.flatnonzero(support)
        if active.size == 0:
            raise EmptyOperatorError("exact-mode operator on an empty support")
        matrix = full[active][:, active].tocsr()
        return LaplaceOperator(domain, matrix, active, "exact", 0.0, support.reshape(domain.shape))

    if mode == "penalized":
        if not mu > 0:
            raise DomainError(f"penalization mu must be positive, got {mu}")
        phi = values.astype(float).ravel()
        if phi.min() < -1e-9 or phi.max() > 1.0 + 1e-9:
            raise DomainError("density must lie in [0, 1]")
        active = np.flatnonzero(mask)
        if active.size == 0:
            raise EmptyOperatorError("domain mask is empty")
        reaction = mu * (1.0 - np.clip(phi[active], 0.0, 1.0))
        matrix = (full[active][:, active] + sp.diags(reaction)).tocsr()
        return LaplaceOperator(domain, matrix, active, "penalized", float(mu), phi.reshape(domain.shape))

    raise DomainError(f"unknown boundary mode '{mode}'")


def solve_torsion(op, tol=TORSION_RTOL, maxiter=None, method="cg", phase_id=0, log_func=None):
    """Solves A w = 1 on the unknowns (Jacobi-preconditioned CG, or sparse LU)."""
    rhs = np.ones(op.size)
    if method == "direct":
        w = splu(op.matrix.tocsc()).solve(rhs)
    elif method == "cg":
        diag = op.matrix.diagonal()
        precond = LinearOperator(op.matrix.shape, matvec=lambda x: x / diag, dtype=float)
        maxiter = maxiter or max(10 * op.size, 1000)
        w, info = cg(op.matrix, rhs, rtol=tol, atol=0.0, maxiter=maxiter, M=precond)
        if info != 0:
            residual = float(np.linalg.norm(op.matrix @ w - rhs) / np.linalg.norm(rhs))
            raise SolverError(f"torsion CG did not converge in {maxiter} iterations", residuals=[residual])
    else:
        raise DomainError(f"unknown linear solver '{method}'")
    residual = float(np.linalg.norm(op.matrix @ w - rhs) / np.linalg.norm(rhs))
    if log_func:
        log_func(f"   torsion solve: n={op.size}, relative residual {residual:.2e}")
    # Discrete maximum principle; clip round-off only
    w = np.maximum(w, 0.0)
    return TorsionField(op.domain, op.to_field(w), phase_id, op.mode, op.mu, residual)


def torsion_energy(torsion):
    """E = -1/2 ∫ w."""
    return -0.5 * torsion.domain.cell_volume * float(np.sum(torsion.w))


def gamma_distance(first, second):
    """d_gamma = ∫ |w_1 - w_2|."""
    if not first.domain.same_grid(second.domain):
        raise DomainError("gamma distance needs torsion fields on the same grid")
    return first.domain.cell_volume * float(np.sum(np.abs(first.w - second.w)))


def eigs_smallest(op, k, tol=EIGEN_TOL, log_func=None):
    """
    The k smallest eigenpairs, eigenvectors normalized so h^dim Σ u² = 1.

    Shift-invert Lanczos about zero with a fixed start vector; dense fallback
    for small systems. Raises SolverError if the residual contract fails.
    """
    if k < 1 or k > 20:
        raise DomainError(f"eigenpair count must be in [1, 20], got {k}")
    n = op.size
    if k > n:
        raise DegeneratePhaseError(f"requested {k} eigenpairs from an operator with {n} unknowns")

    if n <= DENSE_LIMIT or k >= n - 1:
        vals, vecs = np.linalg.eigh(op.matrix.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        rng = np.random.default_rng(START_VECTOR_SEED)
        v0 = rng.standard_normal(n)
        try:
            vals, vecs = eigsh(op.matrix.tocsc(), k=k, sigma=0.0, which="LM", v0=v0, tol=tol * 1e-2)
        except Exception as e:
            raise SolverError(f"eigensolver failed: {e}")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    pairs = []
    residuals = []
    scale = 1.0 / np.sqrt(op.domain.cell_volume)
    for i in range(k):
        lam = float(vals[i])
        v = vecs[:, i] / np.linalg.norm(vecs[:, i])
        res = float(np.linalg.norm(op.matrix @ v - lam * v))
        residuals.append(res / max(abs(lam), 1e-300))
        if np.sum(v) < 0:
            v = -v
        pairs.append(EigenPair(lam, op.to_field(v * scale), i + 1, res))
    if any(r > tol for r in residuals):
        raise SolverError("eigenpairs missed the residual tolerance", residuals=residuals)
    if log_func:
        log_func(f"   eigen solve: n={n}, lambda_1..{k} = {[round(p.eigenvalue, 6) for p in pairs]}")
    return pairs


def positivity_set(values, rel_tol=1e-12):
    """The discrete quasi-open set {v > rel_tol * max v} as a boolean array."""
    values = np.asarray(values)
    peak = float(np.max(values)) if values.size else 0.0
    if peak <= 0:
        return np.zeros(values.shape, dtype=bool)
    return values > rel_tol * peak

# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
Grid discretization of the design box D.

Fields are cell-centered on a uniform Cartesian grid. A phase is a density
in [0, 1] per cell; its binarized form (an IndicatorSet) is the discrete
stand-in for a quasi-open set.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from solver_io import ConfigError, DomainError

SPACING_RTOL = 1e-9


# --- Domain Types ---

@dataclass(frozen=True, eq=False)
class GridDomain:
    dim: int
    extent: tuple
    cells: tuple
    h: float
    mask: np.ndarray
    origin: tuple = None

    def __post_init__(self):
        if self.origin is None:
            object.__setattr__(self, "origin", tuple(0.0 for _ in range(self.dim)))
        self.mask.setflags(write=False)

    @property
    def shape(self):
        return tuple(self.cells)

    @property
    def cell_volume(self):
        return self.h ** self.dim

    @property
    def n_active(self):
        return int(np.count_nonzero(self.mask))

    @property
    def total_measure(self):
        return self.cell_volume * self.n_active

    @property
    def diameter(self):
        return float(np.sqrt(sum(e * e for e in self.extent)))

    def axes(self):
        """Cell-center coordinates per axis: origin + (i + 1/2) h."""
        return [self.origin[a] + (np.arange(n) + 0.5) * self.h for a, n in enumerate(self.cells)]

    def centers(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def distance_to(self, point):
        point = _as_point(point, self.dim)
        sq = np.zeros(self.shape)
        for a, ax in enumerate(self.axes()):
            shape = [1] * self.dim
            shape[a] = -1
            sq = sq + ((ax - point[a]) ** 2).reshape(shape)
        return np.sqrt(sq)

    def nearest_index(self, point):
        point = _as_point(point, self.dim)
        idx = []
        for a in range(self.dim):
            i = int(np.floor((point[a] - self.origin[a]) / self.h))
            idx.append(min(max(i, 0), self.cells[a] - 1))
        return tuple(idx)

    def center_of(self, index):
        return np.array([self.origin[a] + (index[a] + 0.5) * self.h for a in range(self.dim)])

    def distance_to_box_edge(self, point):
        point = _as_point(point, self.dim)
        gaps = []
        for a in range(self.dim):
            gaps.append(point[a] - self.origin[a])
            gaps.append(self.origin[a] + self.extent[a] - point[a])
        return float(min(gaps))

    def with_mask(self, mask):
        """Same grid, restricted to ``mask & self.mask``."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.shape:
            raise DomainError(f"mask shape {mask.shape} does not match grid {self.shape}")
        return GridDomain(self.dim, self.extent, self.cells, self.h, (mask & self.mask).copy(), self.origin)

    def same_grid(self, other):
        return (
            self.shape == other.shape
            and abs(self.h - other.h) <= SPACING_RTOL * self.h
            and np.allclose(self.origin, other.origin)
        )


@dataclass(frozen=True, eq=False)
class PhaseField:
    domain: GridDomain
    values: np.ndarray
    phase_id: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.domain.shape:
            raise DomainError(f"phase {self.phase_id}: field shape {values.shape} != grid {self.domain.shape}")
        if not np.all(np.isfinite(values)):
            raise ConfigError(f"phase {self.phase_id}: non-finite density values")
        if values.min() < -1e-9 or values.max() > 1.0 + 1e-9:
            raise ConfigError(f"phase {self.phase_id}: density outside [0, 1]")
        values = np.where(self.domain.mask, np.clip(values, 0.0, 1.0), 0.0)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def is_empty(self):
        return not np.any(self.values > 0.0)


@dataclass(frozen=True, eq=False)
class IndicatorSet:
    domain: GridDomain
    support: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=bool)
        if support.shape != self.domain.shape:
            raise DomainError(f"support shape {support.shape} != grid {self.domain.shape}")
        support = support & self.domain.mask
        support.setflags(write=False)
        object.__setattr__(self, "support", support)

    @property
    def count(self):
        return int(np.count_nonzero(self.support))

    def is_empty(self):
        return self.count == 0

    def complement(self):
        return IndicatorSet(self.domain, ~self.support)

    def as_phase(self, phase_id=0):
        return PhaseField(self.domain, self.support.astype(float), phase_id)

    def __and__(self, other):
        return IndicatorSet(self.domain, self.support & other.support)

    def __or__(self, other):
        return IndicatorSet(self.domain, self.support | other.support)

    def __sub__(self, other):
        return IndicatorSet(self.domain, self.support & ~other.support)


def _as_point(point, dim):
    point = np.asarray(point, dtype=float).ravel()
    if point.size != dim:
        raise DomainError(f"point {point.tolist()} has wrong dimension (expected {dim})")
    return point


# --- Mask predicates ---

def disk_predicate(center, radius):
    """Ball of the given radius, usable as a mask or support predicate."""
    center = np.asarray(center, dtype=float)

    def predicate(*coords):
        sq = sum((c - center[a]) ** 2 for a, c in enumerate(coords))
        return sq <= radius * radius

    return predicate


def box_predicate(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def predicate(*coords):
        inside = np.ones(coords[0].shape, dtype=bool)
        for a, c in enumerate(coords):
            inside &= (c >= lo[a]) & (c <= hi[a])
        return inside

    return predicate


# --- Operations ---

def build_domain(extent, resolution, mask=None, origin=None):
    """
    Builds the discretized box [origin, origin + extent].

    resolution: int (cells along the first axis, the rest follow from a
    uniform spacing) or a per-axis tuple whose spacings must agree.
    mask: None, a boolean array, or a predicate over cell-center coordinates.
    """
    try:
        extent = tuple(float(e) for e in np.atleast_1d(extent))
    except (TypeError, ValueError):
        raise ConfigError("extent must be a list of numbers", path="domain.extent")
    dim = len(extent)
    if dim not in (2, 3):
        raise ConfigError(f"dimension must be 2 or 3, got {dim}", path="domain.extent")
    if any(not np.isfinite(e) or e <= 0 for e in extent):
        raise ConfigError("extents must be positive", path="domain.extent")

    if np.isscalar(resolution):
        n0 = int(resolution)
        if n0 < 4:
            raise ConfigError("resolution must be at least 4 cells per axis", path="domain.resolution")
        h = extent[0] / n0
        cells = tuple(int(round(e / h)) for e in extent)
        for a, n in enumerate(cells):
            if abs(n * h - extent[a]) > SPACING_RTOL * extent[a] * max(n, 1):
                raise ConfigError(
                    f"extent {extent[a]} is not a multiple of h={h}", path="domain.resolution"
                )
    else:
        cells = tuple(int(n) for n in resolution)
        if len(cells) != dim:
            raise ConfigError("resolution must have one entry per axis", path="domain.resolution")
        spacings = [e / n for e, n in zip(extent, cells)]
        h = spacings[0]
        if any(abs(s - h) > SPACING_RTOL * h for s in spacings):
            raise ConfigError(f"non-uniform spacing {spacings}", path="domain.resolution")
    if any(n < 4 for n in cells):
        raise ConfigError("resolution must be at least 4 cells per axis", path="domain.resolution")

    origin = tuple(0.0 for _ in range(dim)) if origin is None else tuple(float(o) for o in origin)
    if len(origin) != dim:
        raise ConfigError("origin must have one entry per axis", path="domain.origin")

    full = np.ones(cells, dtype=bool)
    domain = GridDomain(dim, extent, cells, h, full, origin)
    if mask is None:
        return domain
    if callable(mask):
        sampled = np.asarray(mask(*domain.centers()), dtype=bool)
    else:
        sampled = np.asarray(mask, dtype=bool)
    if sampled.shape != domain.shape:
        raise ConfigError(f"mask shape {sampled.shape} != grid {domain.shape}", path="domain.mask")
    return GridDomain(dim, extent, cells, h, sampled.copy(), origin)


def indicator_from_predicate(domain, predicate):
    return IndicatorSet(domain, np.asarray(predicate(*domain.centers()), dtype=bool))


def indicator_from_values(domain, values, threshold=0.5):
    return IndicatorSet(domain, np.asarray(values) >= threshold)


def measure(indicator):
    """Lebesgue measure proxy: h^dim times the number of cells in the set."""
    return indicator.domain.cell_volume * indicator.count


def phase_measure(phase):
    return phase.domain.cell_volume * float(np.sum(phase.values))


def ball_cells(domain, center, r):
    """Cells whose centers lie within distance r of ``center`` (restricted to the mask)."""
    if r < domain.h:
        raise DomainError(f"degenerate radius r={r} < h={domain.h}")
    return IndicatorSet(domain, domain.distance_to(center) <= r)


def shell_cells(domain, center, r):
    """Spherical band: cell centers with |dist - r| <= h/2."""
    dist = domain.distance_to(center)
    return IndicatorSet(domain, np.abs(dist - r) <= 0.5 * domain.h)


def ball_weights(domain, center, r, subsamples=8):
    """
    Partial-volume weights of the ball B_r(center), in [0, 1] per cell.

    Cells fully inside get 1, cells fully outside 0; cells cut by the sphere
    get their inside fraction from a subsamples^dim lattice.
    """
    dist = domain.distance_to(center)
    half_diag = 0.5 * domain.h * np.sqrt(domain.dim)
    weights = (dist <= r - half_diag).astype(float)
    cut = np.argwhere(np.abs(dist - r) < half_diag)
    if cut.size:
        offsets_1d = (np.arange(subsamples) + 0.5) / subsamples - 0.5
        grids = np.meshgrid(*([offsets_1d] * domain.dim), indexing="ij")
        offsets = np.stack([g.ravel() for g in grids], axis=1) * domain.h
        center = _as_point(center, domain.dim)
        origin = np.asarray(domain.origin)
        cell_centers = origin + (cut + 0.5) * domain.h
        rel = cell_centers - center
        # (n_cut, n_sub, dim)
        pts = rel[:, None, :] + offsets[None, :, :]
        inside = np.sum(pts * pts, axis=2) <= r * r
        weights[tuple(cut.T)] = inside.mean(axis=1)
    return np.where(domain.mask, weights, 0.0)


def _cross_structure(dim):
    return ndimage.generate_binary_structure(dim, 1)


def disk_footprint(r, h, dim):
    """Center-inclusion structuring element for a ball of radius r on spacing h."""
    n = int(np.floor(r / h))
    ax = np.arange(-n, n + 1)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    sq = sum(g * g for g in grids)
    return sq * h * h <= r * r


def boundary_cells(indicator):
    """
    Outer-ring proxy of the measure-theoretic boundary: cells of the set with
    a face neighbour outside the set (cells beyond the grid count as outside).
    """
    eroded = ndimage.binary_erosion(
        indicator.support, structure=_cross_structure(indicator.domain.dim), border_value=0
    )
    return IndicatorSet(indicator.domain, indicator.support & ~eroded)


def dilate(indicator, cells=1):
    """Face-connected dilation by ``cells`` steps, restricted to the mask."""
    if cells <= 0:
        return indicator
    grown = ndimage.binary_dilation(
        indicator.support, structure=_cross_structure(indicator.domain.dim), iterations=int(cells)
    )
    return IndicatorSet(indicator.domain, grown)


def dilate_by_ball(support, r, h, dim):
    """Boolean dilation of a raw support by a center-inclusion ball of radius r."""
    if not np.any(support):
        return np.zeros_like(support, dtype=bool)
    return ndimage.binary_dilation(support, structure=disk_footprint(r, h, dim))


def perimeter(indicator, mode="face_count", sigma_cells=2.0, log_func=None):
    """
    Discrete perimeter of a set.

    face_count: h^(dim-1) x number of faces separating the set from its
    complement (anisotropic, exact for axis-aligned boxes).
    smoothed: total variation of the indicator convolved with a Gaussian of
    width sigma = 2h (isotropic estimate).
    """
    domain = indicator.domain
    if indicator.is_empty():
        if log_func:
            log_func("[WARNING] perimeter of an empty set is zero")
        return 0.0

    if mode == "face_count":
        padded = np.pad(indicator.support.astype(np.int8), 1)
        faces = 0
        for axis in range(domain.dim):
            faces += int(np.count_nonzero(np.diff(padded, axis=axis)))
        return faces * domain.h ** (domain.dim - 1)

    if mode == "smoothed":
        pad = int(np.ceil(4 * sigma_cells)) + 1
        field = np.pad(indicator.support.astype(float), pad)
        smooth = ndimage.gaussian_filter(field, sigma=sigma_cells, mode="constant")
        grads = np.gradient(smooth, domain.h)
        norm = np.sqrt(sum(g * g for g in grads))
        return float(np.sum(norm) * domain.cell_volume)

    raise ConfigError(f"unknown perimeter mode '{mode}'", path="perimeter.mode")


def density_ratio(indicator, x0, r):
    """|set ∩ B_r(x0)| / |B_r(x0)| with center-inclusion balls."""
    domain = indicator.domain
    if r < 2 * domain.h:
        raise DomainError(f"density radius r={r} must be at least 2h={2 * domain.h}")
    ball = ball_cells(domain, x0, r)
    if ball.is_empty():
        raise DomainError(f"ball B_{r}({list(np.ravel(x0))}) lies outside the domain mask")
    return (indicator & ball).count / ball.count


# --- Inner perturbations ---

def remove_ball(indicator, center, r):
    """Ω minus the center-inclusion ball B_r(center)."""
    return IndicatorSet(indicator.domain, indicator.support & ~(indicator.domain.distance_to(center) <= r))


def erode(indicator, cells=1):
    """Face-connected erosion; cells beyond the grid count as outside."""
    eroded = ndimage.binary_erosion(
        indicator.support, structure=_cross_structure(indicator.domain.dim),
        iterations=int(cells), border_value=0,
    )
    return IndicatorSet(indicator.domain, eroded)


def sample_inner_perturbations(indicator, count, rng, ball_fraction=0.7, r_min=None, r_max=None):
    """
    Random inner perturbations Ω̃ ⊂ Ω.

    A ``ball_fraction`` share are ball removals centred on a random cell of Ω
    with log-uniform radius in [r_min, r_max] (defaults 2h and |Ω|^(1/dim)/4);
    the rest are one-step erosions restricted to a random ball, so that
    repeated samples differ. Returns a list of (description, IndicatorSet).
    """
    domain = indicator.domain
    h = domain.h
    r_min = 2.0 * h if r_min is None else float(r_min)
    if r_max is None:
        r_max = measure(indicator) ** (1.0 / domain.dim) / 4.0
    r_max = max(float(r_max), r_min)
    cells = np.argwhere(indicator.support)
    if cells.size == 0:
        return []
    eroded = erode(indicator, 1)

    samples = []
    for n in range(int(count)):
        idx = cells[rng.integers(len(cells))]
        center = domain.center_of(idx)
        r = float(np.exp(rng.uniform(np.log(r_min), np.log(r_max))))
        if rng.uniform() < ball_fraction:
            perturbed = remove_ball(indicator, center, r)
            kind = "ball"
        else:
            # Erode only inside B_r(center)
            local = domain.distance_to(center) <= r
            perturbed = IndicatorSet(domain, np.where(local, eroded.support, indicator.support))
            kind = "erosion"
        description = {"kind": kind, "center": [float(c) for c in center], "radius": r}
        samples.append((description, perturbed))
    return samples

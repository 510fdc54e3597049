"""Voxel grids, phase masks and conservative diffusion operators.

Cells are numbered with x fastest: cell (i, j, k) has index i + nx * (j + ny * k).
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from .errors import (
    IncommensurateSpacing,
    NoConvergence,
    NonpositiveCoefficient,
    UnresolvedInclusion,
)
from .geometry import inside_inclusions
from .models import Domain, InclusionSet
from .serialization import write_csv

logger = logging.getLogger(__name__)

# Relative tolerance on dims[k] * h matching the side length
SPACING_TOL = 1e-9

BACKGROUND = -1


@dataclass(frozen=True)
class Grid:
    """Uniform voxel grid over a box domain.

    Attributes:
        domain: Box being discretized
        h: Cell size
        dims: Cells per axis
    """

    domain: Domain
    h: float
    dims: Tuple[int, int, int]

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return self.h**3

    def index(self, i: int, j: int, k: int) -> int:
        return i + self.dims[0] * (j + self.dims[1] * k)

    def to_dict(self):
        return {"domain": self.domain.to_dict(), "h": self.h, "dims": list(self.dims)}


@dataclass(frozen=True)
class PhaseMask:
    """Per-cell phase labels: BACKGROUND (-1) or the index of the owning inclusion.

    Attributes:
        labels: (n_cells,) integer labels
        n_inclusions: Number of inclusions the labels refer to
    """

    labels: np.ndarray
    n_inclusions: int

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def background(self) -> np.ndarray:
        return self.labels == BACKGROUND

    @property
    def n_background(self) -> int:
        return int(np.count_nonzero(self.background))

    @property
    def cells_per_inclusion(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.n_inclusions)

    def inclusion_cells(self, i: int) -> np.ndarray:
        return np.nonzero(self.labels == i)[0]

    @classmethod
    def all_background(cls, n_cells: int) -> "PhaseMask":
        return cls(labels=np.full(n_cells, BACKGROUND), n_inclusions=0)


@dataclass(frozen=True)
class DiffusionOperator:
    """Stiffness and lumped mass of a conservative diffusion discretization.

    Attributes:
        K: Symmetric positive-semidefinite stiffness matrix with zero row sums
        M: Positive mass weights (capacity times cell volume)
        grid: Grid the operator was assembled on, if any
        mask: Phase labels used at assembly, if any
    """

    K: sparse.csr_matrix
    M: np.ndarray
    grid: Optional[Grid] = None
    mask: Optional[PhaseMask] = None

    @property
    def n(self) -> int:
        return int(self.M.shape[0])

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.M))

    def energy(self, u: np.ndarray) -> float:
        """1/2 |u|_M^2."""
        return 0.5 * float(np.dot(self.M * u, u))

    def dissipation(self, u: np.ndarray) -> float:
        """|u|_K^2."""
        return float(np.dot(self.K @ u, u))

    def total_heat(self, u: np.ndarray) -> float:
        return float(np.dot(self.M, u))


def build_grid(domain: Domain, h: float) -> Grid:
    """Build a uniform grid of spacing h.

    Raises:
        IncommensurateSpacing: If h does not divide every side to within 1e-9 relative
    """
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    dims = []
    for k, side in enumerate(domain.sides):
        count = int(round(side / h))
        if count < 1 or abs(count * h - side) > SPACING_TOL * side:
            raise IncommensurateSpacing(
                f"spacing {h!r} does not divide side {k} of length {side!r}"
            )
        dims.append(count)
    return Grid(domain=domain, h=float(h), dims=(dims[0], dims[1], dims[2]))


def cell_centers(grid: Grid) -> np.ndarray:
    """(n_cells, 3) cell-center coordinates in cell-index order."""
    axes = [grid.domain.lower[k] + (np.arange(grid.dims[k]) + 0.5) * grid.h for k in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")])


def classify_cells(grid: Grid, inclusions: InclusionSet) -> PhaseMask:
    """Label each cell by the inclusion ball containing its center.

    Raises:
        UnresolvedInclusion: If some inclusion contains no cell center
    """
    if grid.h > inclusions.epsilon / 2:
        logger.warning(
            "grid spacing %g under-resolves inclusions of radius %g (h > epsilon/2)",
            grid.h,
            inclusions.epsilon,
        )
    labels = inside_inclusions(inclusions, cell_centers(grid))
    mask = PhaseMask(labels=labels, n_inclusions=inclusions.count)
    empty = np.nonzero(mask.cells_per_inclusion == 0)[0]
    if len(empty):
        raise UnresolvedInclusion(
            f"inclusions {empty.tolist()} capture no cell center at h={grid.h:g}"
        )
    return mask


def face_pairs(grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    """Cell indices on either side of every interior face, all three axes concatenated."""
    idx = np.arange(grid.n_cells).reshape(grid.dims, order="F")
    left, right = [], []
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        left.append(idx[tuple(lo)].ravel(order="F"))
        right.append(idx[tuple(hi)].ravel(order="F"))
    return np.concatenate(left), np.concatenate(right)


def face_conductance(kappa_left: np.ndarray, kappa_right: np.ndarray, h: float) -> np.ndarray:
    """Harmonic-mean conductivity times face area over cell distance (h^2 / h).

    Infinite conductivity on one side gives 2 kappa h; infinite on both sides gives inf.
    """
    with np.errstate(divide="ignore"):
        return h * 2.0 / (1.0 / kappa_left + 1.0 / kappa_right)


def stiffness_from_faces(
    n: int, left: np.ndarray, right: np.ndarray, conductance: np.ndarray
) -> sparse.csr_matrix:
    """Assemble sum over faces of g (e_l - e_r)(e_l - e_r)^T."""
    rows = np.concatenate([left, right, left, right])
    cols = np.concatenate([right, left, left, right])
    vals = np.concatenate([-conductance, -conductance, conductance, conductance])
    return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _check_positive(name: str, values: np.ndarray, allow_inf: bool):
    bad = ~(values > 0) | np.isnan(values)
    if not allow_inf:
        bad |= np.isinf(values)
    if np.any(bad):
        raise NonpositiveCoefficient(
            f"{name} must be strictly positive, {int(np.count_nonzero(bad))} cells violate it"
        )


def assemble_heat_operator(
    grid: Grid, mask: Optional[PhaseMask], conductivity, capacity
) -> DiffusionOperator:
    """Assemble the 7-point finite-volume diffusion operator with zero-flux boundary.

    Args:
        grid: Voxel grid
        mask: Phase labels kept on the operator (may be None)
        conductivity: Per-cell conductivity (scalar broadcast); +inf allowed
        capacity: Per-cell volumetric heat capacity (scalar broadcast)

    Returns:
        DiffusionOperator with K symmetric, zero row sums, and M = capacity * h^3

    Raises:
        NonpositiveCoefficient: If a conductivity or capacity is not strictly positive
    """
    n = grid.n_cells
    kappa = np.broadcast_to(np.asarray(conductivity, dtype=float), (n,))
    cap = np.broadcast_to(np.asarray(capacity, dtype=float), (n,))
    _check_positive("conductivity", kappa, allow_inf=True)
    _check_positive("capacity", cap, allow_inf=False)

    left, right = face_pairs(grid)
    g = face_conductance(kappa[left], kappa[right], grid.h)
    # faces between two infinitely conducting cells carry no entry
    finite = np.isfinite(g)
    K = stiffness_from_faces(n, left[finite], right[finite], g[finite])
    return DiffusionOperator(K=K, M=cap * grid.cell_volume, grid=grid, mask=mask)


def iteration_cap(n: int, max_iter_factor: float = 10.0) -> int:
    return max(1, int(np.ceil(max_iter_factor * np.sqrt(n))))


def solve_backward_euler(
    op: DiffusionOperator,
    state: np.ndarray,
    dt: float,
    rel_tol: float = 1e-10,
    max_iter: Optional[int] = None,
    max_iter_factor: float = 10.0,
) -> np.ndarray:
    """Solve (M + dt K) u = M state by Jacobi-preconditioned conjugate gradients.

    The result is shifted by a constant so that 1^T M u equals 1^T M state exactly;
    constants are in the null space of K, so the shift leaves the K part of the residual
    unchanged.

    Args:
        op: Diffusion operator
        state: Field at the previous time
        dt: Time step (dt = 0 returns the state)
        rel_tol: Relative residual of the solve, in (0, 1e-6]
        max_iter: Iteration cap; defaults to max_iter_factor * sqrt(n)
        max_iter_factor: Factor of the default cap

    Returns:
        Field at the new time

    Raises:
        ValueError: If dt is negative or rel_tol out of range
        NoConvergence: If the iteration cap is reached
    """
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt!r}")
    if not 0 < rel_tol <= 1e-6:
        raise ValueError(f"rel_tol must lie in (0, 1e-6], got {rel_tol!r}")
    state = np.asarray(state, dtype=float)
    if dt == 0:
        return state.copy()

    A = (sparse.diags(op.M) + dt * op.K).tocsr()
    b = op.M * state
    cap = max_iter if max_iter is not None else iteration_cap(op.n, max_iter_factor)
    jacobi = sparse.diags(1.0 / A.diagonal())
    iterations = [0]

    def count(_):
        iterations[0] += 1

    u, info = cg(
        A, b, x0=state.copy(), rtol=rel_tol, atol=0.0, maxiter=cap, M=jacobi, callback=count
    )
    if info != 0:
        residual = float(np.linalg.norm(b - A @ u) / max(np.linalg.norm(b), np.finfo(float).tiny))
        raise NoConvergence(
            f"conjugate gradient stopped after {iterations[0]} iterations at relative residual "
            f"{residual:.3e} (cap {cap}, target {rel_tol:.1e})",
            iterations=iterations[0],
            residual=residual,
        )
    u = u + (float(np.sum(b)) - float(np.dot(op.M, u))) / op.total_mass
    logger.debug("cg converged in %d iterations (n=%d)", iterations[0], op.n)
    return u


def aggregation_map(mask: PhaseMask) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """0/1 map from reduced unknowns (background cells, then one per inclusion) to cells.

    Returns:
        P of shape (n_cells, n_background + n_inclusions) and the reduced index of each cell
    """
    n_cells = mask.labels.shape[0]
    background = mask.background
    index_map = np.empty(n_cells, dtype=np.int64)
    index_map[background] = np.arange(mask.n_background)
    index_map[~background] = mask.n_background + mask.labels[~background]
    n_reduced = mask.n_background + mask.n_inclusions
    P = sparse.csr_matrix(
        (np.ones(n_cells), (np.arange(n_cells), index_map)), shape=(n_cells, n_reduced)
    )
    return P, index_map


def voxel_ball_volume(grid: Grid, mask: PhaseMask, i: int) -> float:
    """Volume of the cells labeled as inclusion i."""
    return float(mask.cells_per_inclusion[i]) * grid.cell_volume


def export_field(
    path: Union[str, Path], grid: Grid, field: np.ndarray, fmt: str = "bin"
) -> Path:
    """Write a per-cell field as little-endian float64 binary or CSV (index,x,y,z,value).

    Raises:
        ValueError: If the field size or format is wrong
    """
    field = np.asarray(field, dtype=float)
    if field.shape != (grid.n_cells,):
        raise ValueError(f"field has shape {field.shape}, grid has {grid.n_cells} cells")
    path = Path(path)
    if fmt == "bin":
        path.parent.mkdir(parents=True, exist_ok=True)
        field.astype("<f8").tofile(path)
        return path
    if fmt == "csv":
        centers = cell_centers(grid)
        rows = (
            [c, centers[c, 0], centers[c, 1], centers[c, 2], field[c]]
            for c in range(grid.n_cells)
        )
        return write_csv(path, ["index", "x", "y", "z", "value"], rows)
    raise ValueError(f"unknown field format {fmt!r}")

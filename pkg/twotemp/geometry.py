"""Admissible inclusion configurations and empirical-measure pairings.

Up to four centers form a compact simplex around the density mean. Larger sets start
from a jittered lattice whose levels sit at quantiles of the density's marginals, spread
to the minimum separation where needed. The lattice is as balanced as the separation
allows, and surplus sites are dropped one at a time so that the remaining centers match
the density's low cosine moments. When no lattice fits, placement falls back to rejection
redraws.
"""

import json
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .errors import InvalidEpsilon, PackingInfeasible
from .models import (
    AdmissibilityReport,
    DensitySpec,
    Domain,
    InclusionSet,
    PointFunction,
    as_points,
    inclusion_count,
)

logger = logging.getLogger(__name__)

# Relative margin that keeps strict inequalities strict under round-off
STRICTNESS_MARGIN = 1e-6

# Densest packing fraction of equal spheres
KEPLER_FRACTION = 0.7405

# Samples per axis when tabulating a density
MARGINAL_SAMPLES = 64

# Share of the free slack a lattice site may be jittered across
JITTER_FRACTION = 0.25

# Highest cosine wavenumber per axis matched when trimming surplus lattice sites
MODE_ORDER = 3

# Alternate cube vertices, a regular tetrahedron with edge 2 sqrt(2)
_TETRAHEDRON = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, -1.0], [1.0, -1.0, 1.0], [-1.0, 1.0, 1.0]])


def _midpoint_nodes(domain: Domain, n: int) -> Tuple[np.ndarray, float]:
    axes = [
        domain.lower[k] + (np.arange(n) + 0.5) * (domain.sides[k] / n) for k in range(3)
    ]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    return points, domain.volume / n**3


def uniform_density(domain: Domain) -> DensitySpec:
    value = 1.0 / domain.volume
    return DensitySpec(
        evaluator=lambda p: np.full(len(p), value),
        normalization=1.0,
        name="uniform",
    )


def density_from_function(
    f: PointFunction, domain: Domain, n: int = MARGINAL_SAMPLES, name: str = "custom"
) -> DensitySpec:
    """Normalize a positive function into a probability density on the domain.

    Args:
        f: Vectorized positive function of position
        domain: Box the density lives on
        n: Midpoint-rule samples per axis
        name: Label used in reports

    Returns:
        DensitySpec integrating to 1 under the same midpoint rule

    Raises:
        ValueError: If f is not strictly positive at the quadrature nodes
    """
    points, weight = _midpoint_nodes(domain, n)
    samples = np.asarray(f(points), dtype=float)
    if not np.all(samples > 0):
        raise ValueError(f"density {name!r} must be strictly positive on the domain")
    total = float(np.sum(samples) * weight)

    def evaluator(p: np.ndarray) -> np.ndarray:
        return np.asarray(f(p), dtype=float) / total

    normalization = float(np.sum(evaluator(points)) * weight)
    return DensitySpec(evaluator=evaluator, normalization=normalization, name=name)


def integrate_density(
    density: DensitySpec, domain: Domain, f: PointFunction, n: int = MARGINAL_SAMPLES
) -> float:
    """Midpoint-rule value of the integral of density * f over the domain."""
    points, weight = _midpoint_nodes(domain, n)
    return float(np.sum(density(points) * np.asarray(f(points), dtype=float)) * weight)


def second_moment(inclusions: InclusionSet) -> float:
    """(1/N) sum |x_i|^2."""
    return float(np.mean(np.sum(inclusions.centers**2, axis=1)))


def pair_empirical(inclusions: InclusionSet, phi: PointFunction) -> float:
    """Pair the empirical distribution of centers with phi, (1/N) sum phi(x_i)."""
    values = np.asarray(phi(inclusions.centers), dtype=float)
    return float(np.mean(values))


def _marginal_cdfs(density: DensitySpec, domain: Domain) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Tabulated (cdf, edges) of the density's marginal along each axis."""
    points, _ = _midpoint_nodes(domain, MARGINAL_SAMPLES)
    values = density(points).reshape((MARGINAL_SAMPLES,) * 3)
    marginals = []
    for axis in range(3):
        other = tuple(k for k in range(3) if k != axis)
        edges = domain.lower[axis] + np.linspace(0.0, domain.sides[axis], MARGINAL_SAMPLES + 1)
        cdf = np.concatenate([[0.0], np.cumsum(values.sum(axis=other))])
        marginals.append((cdf / cdf[-1], edges))
    return marginals


def _midpoint_quantiles(marginal: Tuple[np.ndarray, np.ndarray], n: int) -> np.ndarray:
    cdf, edges = marginal
    return np.interp((np.arange(n) + 0.5) / n, cdf, edges)


def _spread_axis(
    quantiles: np.ndarray, spacing: float, lo: float, hi: float
) -> Optional[np.ndarray]:
    """Enforce a minimum spacing between sorted sites inside [lo, hi], or None if impossible."""
    gaps = np.maximum(np.diff(quantiles), spacing)
    positions = quantiles[0] + np.concatenate([[0.0], np.cumsum(gaps)])
    span = positions[-1] - positions[0]
    if span > hi - lo:
        return None
    center = 0.5 * (quantiles[0] + quantiles[-1])
    start = min(max(center - 0.5 * span, lo), hi - span)
    return positions - positions[0] + start


def _jitter_half_widths(positions: np.ndarray, spacing: float, lo: float, hi: float) -> np.ndarray:
    n = len(positions)
    left = np.empty(n)
    right = np.empty(n)
    left[0] = positions[0] - lo
    right[-1] = hi - positions[-1]
    if n > 1:
        slack = 0.5 * (np.diff(positions) - spacing)
        left[1:] = slack
        right[:-1] = slack
    widths = np.maximum(np.minimum(left, right), 0.0)
    # keep each site inside its own lattice cell
    if n > 1:
        widths = np.minimum(widths, 0.5 * np.min(np.diff(positions)))
    return widths


def _density_mean(density: DensitySpec, domain: Domain) -> np.ndarray:
    points, weight = _midpoint_nodes(domain, MARGINAL_SAMPLES)
    values = density(points) * weight
    return values @ points / float(np.sum(values))


def _cluster_sites(
    count: int, density: DensitySpec, domain: Domain, epsilon: float, spacing: float
) -> Optional[np.ndarray]:
    """Up to four sites around the density mean, as compact as the separation allows.

    The sites are the vertices of a regular simplex with edge ``spacing`` centered at the
    mean, so the empirical mean reproduces the density's mean exactly.
    """
    if count == 1:
        template = np.zeros((1, 3))
    elif count == 2:
        diagonal = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
        template = diagonal * spacing / (2.0 * math.sqrt(3))
    else:
        template = _TETRAHEDRON[:count] * spacing / (2.0 * math.sqrt(2))
    sites = template - template.mean(axis=0) + _density_mean(density, domain)
    margin = epsilon * (1.0 + STRICTNESS_MARGIN)
    lo = np.asarray(domain.lower) + margin
    hi = np.asarray(domain.upper) - margin
    if np.any(sites < lo) or np.any(sites > hi):
        return None
    return sites


def _axis_levels(
    marginal: Tuple[np.ndarray, np.ndarray], spacing: float, lo: float, hi: float, limit: int
) -> int:
    """Most lattice levels along one axis that keep the spacing inside [lo, hi]."""
    levels = 1
    while levels < limit:
        n = levels + 1
        quantiles = _midpoint_quantiles(marginal, n)
        if _spread_axis(np.clip(quantiles, lo, hi), spacing, lo, hi) is None:
            break
        levels = n
    return levels


def _lattice_shape(count: int, levels: Tuple[int, int, int]) -> Optional[Tuple[int, int, int]]:
    """Smallest balanced shape with at least ``count`` cells within the per-axis level caps.

    Shapes are ranked by their largest factor, then by cell count, then by preferring more
    levels along the earlier axes.
    """
    if int(np.prod(levels)) < count:
        return None
    largest = max(1, int(math.ceil(round(count ** (1.0 / 3.0), 9))))
    while True:
        caps = [min(cap, largest) for cap in levels]
        if caps[0] * caps[1] * caps[2] >= count:
            break
        largest += 1
    best = None
    for nx in range(1, caps[0] + 1):
        for ny in range(1, caps[1] + 1):
            nz = max(1, -(-count // (nx * ny)))
            if nz > caps[2]:
                continue
            key = (nx * ny * nz, -nx, -ny, -nz)
            if best is None or key < best[0]:
                best = (key, (nx, ny, nz))
    return None if best is None else best[1]


def _mode_values(points: np.ndarray, domain: Domain) -> np.ndarray:
    """Tensor cosines cos(k pi (x - lower) / side), k = 0..MODE_ORDER per axis, per point."""
    k = np.arange(MODE_ORDER + 1)
    per_axis = [
        np.cos(np.outer((points[:, a] - domain.lower[a]) / domain.sides[a], k) * math.pi)
        for a in range(3)
    ]
    return np.einsum("sa,sb,sc->sabc", *per_axis).reshape(len(points), -1)


def _balanced_subset(
    sites: np.ndarray, count: int, density: DensitySpec, domain: Domain
) -> np.ndarray:
    """Drop surplus sites greedily so the kept ones match the density's low cosine moments."""
    if len(sites) == count:
        return sites
    points, weight = _midpoint_nodes(domain, MARGINAL_SAMPLES)
    values = (density(points) * weight).reshape((MARGINAL_SAMPLES,) * 3)
    k = np.arange(MODE_ORDER + 1)
    nodes = (np.arange(MARGINAL_SAMPLES) + 0.5) / MARGINAL_SAMPLES
    axis_modes = np.cos(np.outer(nodes, k) * math.pi)
    targets = np.einsum(
        "ijk,ia,jb,kc->abc", values, axis_modes, axis_modes, axis_modes, optimize=True
    ).ravel()
    modes = _mode_values(sites, domain)
    kept = np.ones(len(sites), dtype=bool)
    total = modes.sum(axis=0)
    remaining = len(sites)
    while remaining > count:
        residual = (total - modes) / (remaining - 1) - targets
        cost = np.einsum("sm,sm->s", residual, residual)
        cost[~kept] = np.inf
        drop = int(np.argmin(cost))
        kept[drop] = False
        total = total - modes[drop]
        remaining -= 1
    return sites[kept]


def _lattice_sites(
    count: int, density: DensitySpec, domain: Domain, epsilon: float, spacing: float, rng
) -> Optional[np.ndarray]:
    margin = epsilon * (1.0 + STRICTNESS_MARGIN)
    bounds = [(domain.lower[k] + margin, domain.upper[k] - margin) for k in range(3)]
    if any(lo > hi for lo, hi in bounds):
        return None
    marginals = _marginal_cdfs(density, domain)
    levels = tuple(
        _axis_levels(marginal, spacing, lo, hi, count)
        for marginal, (lo, hi) in zip(marginals, bounds)
    )
    shape = _lattice_shape(count, levels)
    if shape is None:
        return None

    axes = []
    for marginal, (lo, hi), n in zip(marginals, bounds, shape):
        quantiles = _midpoint_quantiles(marginal, n)
        positions = _spread_axis(np.clip(quantiles, lo, hi), spacing, lo, hi)
        if positions is None:
            return None
        widths = JITTER_FRACTION * _jitter_half_widths(positions, spacing, lo, hi)
        axes.append((positions, widths))

    grids = [np.meshgrid(*[a[i] for a in axes], indexing="ij") for i in range(2)]
    sites = np.column_stack([g.ravel() for g in grids[0]])
    half_widths = np.column_stack([g.ravel() for g in grids[1]])
    sites = sites + rng.uniform(-1.0, 1.0, size=sites.shape) * half_widths
    return _balanced_subset(sites, count, density, domain)


def _rejection_sites(
    count: int,
    density: DensitySpec,
    domain: Domain,
    epsilon: float,
    spacing: float,
    rng,
    max_attempts: int,
) -> Optional[np.ndarray]:
    margin = epsilon * (1.0 + STRICTNESS_MARGIN)
    lo = np.asarray(domain.lower) + margin
    hi = np.asarray(domain.upper) - margin
    if np.any(lo > hi):
        return None
    nodes, _ = _midpoint_nodes(domain, 16)
    ceiling = 1.5 * float(np.max(density(nodes)))
    accepted = []
    redraws = 0
    while len(accepted) < count:
        if redraws >= max_attempts:
            return None
        candidate = rng.uniform(lo, hi)
        if rng.uniform(0.0, ceiling) > density(candidate)[0]:
            continue
        if accepted and np.min(np.linalg.norm(np.asarray(accepted) - candidate, axis=1)) < spacing:
            redraws += 1
            continue
        accepted.append(candidate)
    return np.asarray(accepted)


def place_inclusions(
    epsilon: float,
    density: DensitySpec,
    domain: Domain,
    seed: int = 0,
    max_attempts: int = 1000,
) -> InclusionSet:
    """Place N = 1/epsilon admissible inclusion centers.

    Args:
        epsilon: Inclusion radius, 1/epsilon an integer
        density: Density of centers
        domain: Box containing every inclusion
        seed: Random seed; equal inputs give bit-identical centers
        max_attempts: Redraws allowed before giving up

    Returns:
        InclusionSet with pairwise distances at least 2 epsilon^(1/3) (1 + 1e-6) and every
        ball strictly inside the domain

    Raises:
        InvalidEpsilon: If 1/epsilon is not an integer
        PackingInfeasible: If the separation cannot be met in the domain
    """
    count = inclusion_count(epsilon)
    if epsilon > 1:
        raise InvalidEpsilon(f"epsilon must not exceed 1, got {epsilon!r}")
    r_protect = epsilon ** (1.0 / 3.0)
    spacing = 2.0 * r_protect * (1.0 + STRICTNESS_MARGIN)
    rng = np.random.default_rng(seed)

    if count > 1:
        reachable = np.prod(domain.sides - 2.0 * epsilon + spacing)
        needed = count * (math.pi / 6.0) * spacing**3
        if needed > KEPLER_FRACTION * reachable:
            raise PackingInfeasible(
                f"{count} protection balls of radius {r_protect:.6g} cannot fit the domain at "
                f"epsilon={epsilon:.6g} (volume {needed:.6g} > packing bound "
                f"{KEPLER_FRACTION * reachable:.6g})",
                epsilon=epsilon,
            )

    centers = None
    if count <= len(_TETRAHEDRON):
        centers = _cluster_sites(count, density, domain, epsilon, spacing)
    if centers is None:
        centers = _lattice_sites(count, density, domain, epsilon, spacing, rng)
    if centers is None:
        logger.info("no lattice fits epsilon=%g, falling back to rejection sampling", epsilon)
        centers = _rejection_sites(count, density, domain, epsilon, spacing, rng, max_attempts)
    if centers is None:
        raise PackingInfeasible(
            f"could not place {count} inclusions of radius {epsilon:.6g} with separation "
            f"{spacing:.6g} within {max_attempts} attempts",
            epsilon=epsilon,
        )
    if count > 1 and float(np.min(pdist(centers))) <= 2.0 * r_protect:
        raise PackingInfeasible(f"placement violated the separation for epsilon={epsilon}", epsilon)

    logger.debug("placed %d inclusions for epsilon=%g (seed %d)", count, epsilon, seed)
    return InclusionSet(epsilon=epsilon, centers=centers)


def check_admissibility(
    inclusions: InclusionSet, domain: Domain, c_in: float
) -> AdmissibilityReport:
    """Check separation, containment and the second-moment bound.

    Args:
        inclusions: Set to check
        domain: Box that must strictly contain every ball
        c_in: Bound on (1/N) sum |x_i|^2

    Returns:
        Report listing each violated constraint with the offending indices
    """
    centers = inclusions.centers
    report = AdmissibilityReport(
        second_moment=second_moment(inclusions), second_moment_bound=float(c_in)
    )
    if inclusions.count > 1:
        distances = pdist(centers)
        rows, cols = np.triu_indices(inclusions.count, k=1)
        threshold = 2.0 * inclusions.r_protect
        close = np.nonzero(distances <= threshold)[0]
        report.separation = [(int(rows[i]), int(cols[i])) for i in close]
        report.min_gap = float(np.min(distances) - threshold)

    lower = np.asarray(domain.lower)
    upper = np.asarray(domain.upper)
    inside = np.all(centers - inclusions.epsilon > lower, axis=1) & np.all(
        centers + inclusions.epsilon < upper, axis=1
    )
    report.containment = [int(i) for i in np.nonzero(~inside)[0]]
    return report


def nearest_inclusion(
    inclusions: InclusionSet, points: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Distance to and index of the nearest center for each point."""
    tree = cKDTree(inclusions.centers)
    distances, indices = tree.query(as_points(points))
    return np.asarray(distances), np.asarray(indices, dtype=int)


def inside_inclusions(inclusions: InclusionSet, points: np.ndarray) -> np.ndarray:
    """Index of the inclusion containing each point, -1 for background points."""
    distances, indices = nearest_inclusion(inclusions, points)
    return np.where(distances < inclusions.epsilon, indices, -1)


def inclusion_set_to_json(inclusions: InclusionSet) -> str:
    return json.dumps(inclusions.to_dict(), sort_keys=True)


def inclusion_set_from_json(text: str) -> InclusionSet:
    """Load an inclusion set; count and r_protect are recomputed and must match if present.

    Raises:
        InvalidEpsilon: If the stored count or protection radius disagrees with epsilon
    """
    data = json.loads(text)
    inclusions = InclusionSet(epsilon=float(data["epsilon"]), centers=data["centers"])
    if "count" in data and int(data["count"]) != inclusions.count:
        raise InvalidEpsilon(f"stored count {data['count']} does not match {inclusions.count}")
    if "r_protect" in data and not math.isclose(
        float(data["r_protect"]), inclusions.r_protect, rel_tol=1e-12
    ):
        raise InvalidEpsilon(
            f"stored r_protect {data['r_protect']} does not match {inclusions.r_protect}"
        )
    return inclusions


"""Closed-form corrector profile, its norms, and the capacity pairing.

chi[1] is harmonic on the annulus epsilon < |z| < r, equal to 1 on the inner sphere and
0 on the outer sphere:

    chi[1](z) = a (1/|z| - 1/r),  a = epsilon r / (r - epsilon)
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy import integrate

from .models import InclusionSet, PointFunction

FOUR_PI = 4.0 * math.pi

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class CorrectorProfile:
    """Annulus of the corrector: inner radius epsilon, outer radius r_protect."""

    epsilon: float
    r_protect: float

    def __post_init__(self):
        if not 0 < self.epsilon < self.r_protect:
            raise ValueError(
                f"need 0 < epsilon < r_protect, got epsilon={self.epsilon!r}, "
                f"r_protect={self.r_protect!r}"
            )

    @classmethod
    def scaled(cls, epsilon: float) -> "CorrectorProfile":
        """Profile with r_protect = epsilon^(1/3)."""
        return cls(epsilon=epsilon, r_protect=epsilon ** (1.0 / 3.0))

    @property
    def amplitude(self) -> float:
        return self.epsilon * self.r_protect / (self.r_protect - self.epsilon)


def chi_one(radius: ArrayLike, profile: CorrectorProfile) -> ArrayLike:
    """chi[1] at distance ``radius`` from the inclusion center.

    Raises:
        ValueError: If a radius is negative
    """
    r = np.asarray(radius, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    eps, outer = profile.epsilon, profile.r_protect
    with np.errstate(divide="ignore"):
        annulus = profile.amplitude * (1.0 / r - 1.0 / outer)
    value = np.where(r <= eps, 1.0, np.where(r >= outer, 0.0, annulus))
    return float(value) if value.ndim == 0 else value


def chi_one_derivative(radius: ArrayLike, profile: CorrectorProfile) -> ArrayLike:
    """Radial derivative of chi[1], -a / |z|^2 on the annulus and 0 elsewhere."""
    r = np.asarray(radius, dtype=float)
    inside = (r > profile.epsilon) & (r < profile.r_protect)
    with np.errstate(divide="ignore"):
        value = np.where(inside, -profile.amplitude / r**2, 0.0)
    return float(value) if value.ndim == 0 else value


def chi_norms(profile: CorrectorProfile) -> Tuple[float, float]:
    """|chi[1]|^2 in L2(R^3) and |grad chi[1]|^2 in L2(R^3), in closed form."""
    eps, outer = profile.epsilon, profile.r_protect
    l2_sq = FOUR_PI / 3.0 * eps**2 * outer
    h1_semi_sq = FOUR_PI * eps * outer / (outer - eps)
    return l2_sq, h1_semi_sq


def chi_norms_quadrature(profile: CorrectorProfile) -> Tuple[float, float]:
    """The same norms by adaptive radial quadrature of the explicit profile."""
    eps, outer = profile.epsilon, profile.r_protect

    def l2_density(r: float) -> float:
        return FOUR_PI * r**2 * chi_one(r, profile) ** 2

    def h1_density(r: float) -> float:
        return FOUR_PI * r**2 * chi_one_derivative(r, profile) ** 2

    inner, _ = integrate.quad(l2_density, 0.0, eps, epsabs=0.0, epsrel=1e-12)
    shell, _ = integrate.quad(l2_density, eps, outer, epsabs=0.0, epsrel=1e-12)
    gradient, _ = integrate.quad(h1_density, eps, outer, epsabs=0.0, epsrel=1e-12, limit=200)
    return inner + shell, gradient


@lru_cache(maxsize=1)
def lebedev_26() -> Tuple[np.ndarray, np.ndarray]:
    """26-point Lebedev rule on the unit sphere, exact through degree 7.

    Returns:
        (points, weights) with weights summing to 1; multiply by 4 pi R^2 for a
        surface integral over a sphere of radius R
    """
    axes = [np.eye(3)[k] * s for k in range(3) for s in (1.0, -1.0)]
    edges = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        for si in (1.0, -1.0):
            for sj in (1.0, -1.0):
                p = np.zeros(3)
                p[i], p[j] = si, sj
                edges.append(p / math.sqrt(2.0))
    corners = [
        np.array([sx, sy, sz]) / math.sqrt(3.0)
        for sx in (1.0, -1.0)
        for sy in (1.0, -1.0)
        for sz in (1.0, -1.0)
    ]
    points = np.array(axes + edges + corners)
    weights = np.concatenate(
        [np.full(6, 1.0 / 21.0), np.full(12, 4.0 / 105.0), np.full(8, 9.0 / 280.0)]
    )
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def sphere_integral(psi: PointFunction, center: np.ndarray, radius: float) -> float:
    """Surface integral of psi over the sphere of given center and radius."""
    points, weights = lebedev_26()
    values = np.asarray(psi(np.asarray(center) + radius * points), dtype=float)
    return FOUR_PI * radius**2 * float(np.dot(weights, values))


def capacity_pairing(inclusions: InclusionSet, phi: PointFunction, psi: PointFunction) -> float:
    """Pair the capacity measure with psi.

    Evaluates -(epsilon r / (r^2 (r - epsilon))) sum_i phi(x_i) int_{|x - x_i| = r} psi dS,
    which tends to -4 pi int rho phi psi as epsilon -> 0.
    """
    profile = CorrectorProfile.scaled(inclusions.epsilon)
    eps, outer = profile.epsilon, profile.r_protect
    coefficient = -eps * outer / (outer**2 * (outer - eps))
    phi_values = np.asarray(phi(inclusions.centers), dtype=float)
    surface = np.array([sphere_integral(psi, x, outer) for x in inclusions.centers])
    return coefficient * float(np.dot(phi_values, surface))


def capacity_constant_case(profile: CorrectorProfile, count: int) -> float:
    """capacity_pairing for phi = psi = 1 with ``count`` inclusions, in closed form."""
    return -FOUR_PI * count * profile.epsilon * profile.r_protect / (
        profile.r_protect - profile.epsilon
    )


def capacity_relative_error(profile: CorrectorProfile) -> float:
    """Predicted relative error of the constant case against -4 pi, epsilon / (r - epsilon)."""
    return profile.epsilon / (profile.r_protect - profile.epsilon)


def oscillation_bound(grad_inf: float, profile: CorrectorProfile) -> float:
    """(4 pi / 3) |grad phi|_inf^2 (epsilon^2 + 2 epsilon r_protect).

    Raises:
        ValueError: If grad_inf is negative
    """
    if grad_inf < 0:
        raise ValueError("grad_inf must be non-negative")
    eps = profile.epsilon
    return FOUR_PI / 3.0 * grad_inf**2 * (eps**2 + 2.0 * eps * profile.r_protect)

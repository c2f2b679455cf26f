"""Translation-invariant plane measures: directional distributions,
hitting weights and sampling of planes hitting a convex body.

The measure of planes hitting a convex body K factorizes into a
directional density on the upper unit hemisphere and Lebesgue offsets; the
hitting weight is the density-weighted mean support width of K.  All
lifetime rates in the construction are expressed relative to the window,
so the global normalization drops out of every probability downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import ConvexPolytope, Plane

HEMISPHERE_AREA = 2.0 * math.pi


class SamplingError(Exception):
    """Rejection sampling exceeded its iteration budget (broken bound)."""


def fibonacci_hemisphere(count: int) -> np.ndarray:
    """Deterministic quasi-uniform directions on the upper hemisphere."""
    i = np.arange(count)
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    z = (i + 0.5) / count          # equal-area bands in z
    phi = 2.0 * math.pi * i / golden
    r = np.sqrt(1.0 - z * z)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _hemisphere_integral(density: Callable, n_polar: int = 48, n_azimuth: int = 96) -> float:
    """Integral of a density over the hemisphere by Gauss-Legendre in the
    polar cosine and trapezoid in azimuth (spectrally accurate for smooth
    densities)."""
    z_nodes, z_weights = leggauss(n_polar)
    z = 0.5 * (z_nodes + 1.0)
    wz = 0.5 * z_weights
    phi = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
    wphi = 2.0 * math.pi / n_azimuth
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    dirs = np.stack([
        np.outer(r, np.cos(phi)),
        np.outer(r, np.sin(phi)),
        np.repeat(z[:, None], n_azimuth, axis=1),
    ], axis=-1).reshape(-1, 3)
    vals = density(dirs).reshape(len(z), n_azimuth)
    return float((vals.sum(axis=1) * wphi * wz).sum())


@dataclass(frozen=True)
class DirectionalDistribution:
    """Directional part of the plane measure.

    ``density`` is a probability density with respect to surface measure on
    the upper hemisphere (isotropic: constant 1/2pi); ``density_sup`` is a
    finite upper bound used by rejection sampling.  Custom densities are
    validated to integrate to one at construction.
    """

    name: str
    isotropic: bool
    density: Callable[[np.ndarray], np.ndarray] | None = None
    density_sup: float = 0.0
    quadrature_nodes: int = 4096
    _dirs: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.isotropic:
            if self.density is None or self.density_sup <= 0:
                raise ValueError("custom distribution needs density and bound")
            total = _hemisphere_integral(self.density)
            if abs(total - 1.0) > 1e-6:
                raise ValueError(
                    f"directional density integrates to {total}, not 1"
                )
            if self.quadrature_nodes < 4096:
                raise ValueError("need at least 4096 quadrature directions")
            object.__setattr__(
                self, "_dirs", fibonacci_hemisphere(self.quadrature_nodes)
            )

    def density_at(self, dirs: np.ndarray) -> np.ndarray:
        if self.isotropic:
            return np.full(len(dirs), 1.0 / HEMISPHERE_AREA)
        return self.density(dirs)


def isotropic() -> DirectionalDistribution:
    return DirectionalDistribution(name="isotropic", isotropic=True)


def aniso_z2() -> DirectionalDistribution:
    """Smooth non-isotropic test density proportional to 1 + z^2/2."""
    norm = HEMISPHERE_AREA * (1.0 + 1.0 / 6.0)  # integral of (1 + z^2/2)

    def density(dirs: np.ndarray) -> np.ndarray:
        return (1.0 + 0.5 * dirs[:, 2] ** 2) / norm

    return DirectionalDistribution(
        name="aniso-z2", isotropic=False, density=density,
        density_sup=1.5 / norm,
    )


_PRESETS = {"isotropic": isotropic, "aniso-z2": aniso_z2}


def direction_preset(name: str) -> DirectionalDistribution:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown direction preset {name!r}") from None


def hitting_weight(body: ConvexPolytope, dist: DirectionalDistribution) -> float:
    """Measure of planes hitting ``body`` up to global normalization.

    Isotropic distributions use the exact mean width; custom densities use
    the fixed quasi-uniform direction quadrature of density-weighted
    support widths.
    """
    if dist.isotropic:
        return body.mean_width()
    dirs = dist._dirs
    proj = body.vertices @ dirs.T
    widths = proj.max(axis=0) - proj.min(axis=0)
    dens = dist.density(dirs)
    return float((widths * dens).mean()) * HEMISPHERE_AREA


def sample_direction(dist: DirectionalDistribution, rng: np.random.Generator,
                     max_iter: int = 1_000_000) -> np.ndarray:
    """One direction from the directional density on the hemisphere."""
    for _ in range(max_iter):
        v = rng.normal(size=3)
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            continue
        v /= norm
        if v[2] < 0:
            v = -v
        if dist.isotropic:
            return v
        accept = dist.density(v[None, :])[0] / dist.density_sup
        if rng.random() < accept:
            return v
    raise SamplingError("direction sampling exceeded iteration budget")


def sample_hitting_plane(body: ConvexPolytope, dist: DirectionalDistribution,
                         rng: np.random.Generator,
                         max_iter: int = 1_000_000) -> Plane:
    """Plane distributed as the restriction of the measure to planes
    hitting ``body``, normalized.

    Directions are accepted proportionally to the support width of the
    body (bounded by its diameter); the offset is then uniform on the
    support interval, so the plane always crosses the interior.
    """
    diameter = body.diameter()
    for _ in range(max_iter):
        u = sample_direction(dist, rng, max_iter)
        lo, hi = body.support_interval(u)
        if rng.random() * diameter >= hi - lo:
            continue
        offset = lo + (hi - lo) * rng.random()
        return Plane(normal=(u[0], u[1], u[2]), offset=float(offset))
    raise SamplingError("plane sampling exceeded iteration budget")

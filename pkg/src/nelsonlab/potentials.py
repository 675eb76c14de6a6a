"""Central potentials U(r) with their radial derivatives and homogeneity degree."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .fields import Grid, RadialGrid, ScalarField, VectorField
from .jets import Jet


@dataclass(frozen=True)
class Potential:
    """U(r) = value(r); ``slope_over_r`` is U'(r) / r, finite at the origin when U is."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    slope_over_r: Callable[[np.ndarray], np.ndarray]
    curvature: Callable[[np.ndarray], np.ndarray]
    degree: float
    continuum: float = math.inf

    def slope(self, r: np.ndarray) -> np.ndarray:
        return r * self.slope_over_r(r)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.value(np.linalg.norm(np.atleast_2d(x), axis=1))

    def gradient_at(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        r = np.linalg.norm(x, axis=1, keepdims=True)
        return self.slope_over_r(r) * x

    def on_grid(self, grid: Grid) -> ScalarField:
        if isinstance(grid, RadialGrid):
            return ScalarField(grid, self.value(grid.r))
        r = np.linalg.norm(grid.mesh(), axis=-1)
        return ScalarField(grid, self.value(r))

    def force(self, grid: Grid) -> VectorField:
        """-grad U on the grid (radial component on radial grids)."""
        if isinstance(grid, RadialGrid):
            return VectorField(grid, -self.slope(grid.r)[:, None])
        pts = grid.mesh()
        r = np.linalg.norm(pts, axis=-1, keepdims=True)
        return VectorField(grid, -self.slope_over_r(r) * pts)

    def jet(self, grid: Grid) -> Jet:
        """U with exact gradient and Laplacian at the grid nodes (flattened)."""
        rj = grid.radius_jet()
        r = rj.val
        return rj.compose(self.value(r), self.slope(r), self.curvature(r))

    def scaled(self, factor: float) -> Potential:
        return Potential(
            self.name,
            lambda r: factor * self.value(r),
            lambda r: factor * self.slope_over_r(r),
            lambda r: factor * self.curvature(r),
            self.degree,
            factor * self.continuum if math.isfinite(self.continuum) else self.continuum,
        )

    @classmethod
    def kepler(cls, gmm: float) -> Potential:
        """-G M m / r, homogeneous of degree -1."""
        if not gmm > 0:
            raise ConfigError("G M m must be positive")
        return cls(
            "kepler",
            lambda r: -gmm / r,
            lambda r: gmm / r ** 3,
            lambda r: -2.0 * gmm / r ** 3,
            -1.0,
            0.0,
        )

    @classmethod
    def harmonic(cls, k: float) -> Potential:
        """k r^2 / 2, homogeneous of degree 2."""
        if not k > 0:
            raise ConfigError("spring constant must be positive")
        return cls(
            "harmonic",
            lambda r: 0.5 * k * r ** 2,
            lambda r: np.full_like(np.asarray(r, dtype=float), k),
            lambda r: np.full_like(np.asarray(r, dtype=float), k),
            2.0,
        )

    @classmethod
    def free(cls) -> Potential:
        zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))  # noqa: E731
        return cls("free", zero, zero, zero, 0.0, 0.0)

    @classmethod
    def by_name(cls, name: str, strength: float) -> Potential:
        builders = {"kepler": cls.kepler, "harmonic": cls.harmonic}
        if name not in builders:
            raise ConfigError(f"unknown potential {name!r}; choose from {sorted(builders)}")
        return builders[name](strength)


def homogeneity_defect(potential: Potential, degree: float, n_probe: int = 32) -> float:
    """Largest relative |U(lam x) - lam^degree U(x)| over fixed probe points and scales."""
    probe = np.linspace(0.3, 3.0, n_probe)
    worst = 0.0
    for lam in (0.5, 2.0, 3.7):
        a = potential.value(lam * probe)
        b = lam ** degree * potential.value(probe)
        scale = np.maximum(np.abs(a), np.abs(b))
        err = np.where(scale > 0, np.abs(a - b) / np.where(scale > 0, scale, 1.0), 0.0)
        worst = max(worst, float(err.max()))
    return worst

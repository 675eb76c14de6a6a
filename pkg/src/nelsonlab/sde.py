"""Euler-Maruyama simulation of dX = b(X, t) dt + sigma dW.

Increments come from the counter-based generator in :mod:`nelsonlab.rng`,
keyed on (seed, step, path), so an ensemble is a pure function of its inputs.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from . import rng
from .errors import ConfigError, NumericalError
from .fields import CartesianGrid, RadialGrid, ScalarField, SURFACE
from .io import write_csv
from .units import Quantity

Vectorized = Callable[[np.ndarray, float], np.ndarray]


def _as_float(x) -> float:
    return float(x.value) if isinstance(x, Quantity) else float(x)


@dataclass(frozen=True)
class DriftField:
    """Vectorized drift ``func(x, t)`` mapping (N, d) positions to (N, d) velocities.

    When ``potential`` is given the drift is declared to be its gradient, and
    the claim is spot-checked against central differences on probe points.
    """

    func: Vectorized
    dim: int
    lipschitz: float = 0.0
    potential: Callable[[np.ndarray, float], np.ndarray] | None = None
    name: str = "drift"
    probe_scale: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"drift dimension must be 1, 2 or 3, got {self.dim}")
        if self.lipschitz < 0:
            raise ConfigError("Lipschitz bound must be non-negative")
        if self.potential is not None:
            self._check_gradient()

    @property
    def is_gradient(self) -> bool:
        return self.potential is not None

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.asarray(self.func(x, t), dtype=float).reshape(x.shape)

    def _check_gradient(self, n_probe: int = 16, tol: float = 1e-6) -> None:
        x = 0.5 + self.probe_scale * rng.normals(0, 0, n_probe, self.dim, stream=rng.STREAM_REJECTION)
        b = self(x, 0.0)
        fd = np.empty_like(x)
        for k in range(self.dim):
            eps = 1e-5 * (1.0 + np.abs(x[:, k]))
            xp, xm = x.copy(), x.copy()
            xp[:, k] += eps
            xm[:, k] -= eps
            fd[:, k] = (self.potential(xp, 0.0) - self.potential(xm, 0.0)) / (2.0 * eps)
        scale = np.maximum(np.linalg.norm(b, axis=1), np.linalg.norm(fd, axis=1))
        err = np.linalg.norm(b - fd, axis=1)
        bad = err > tol * scale + 1e-12
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ConfigError(
                f"drift {self.name!r} is not the gradient of its potential at x={x[i]}: "
                f"relative mismatch {err[i] / max(scale[i], 1e-300):.3g}"
            )

    @classmethod
    def zero(cls, dim: int) -> DriftField:
        return cls(lambda x, t: np.zeros_like(x), dim, 0.0, lambda x, t: np.zeros(x.shape[0]), "zero")

    @classmethod
    def linear(cls, rate: float, dim: int = 1, center=0.0) -> DriftField:
        """Ornstein-Uhlenbeck drift -rate (x - center), gradient of -rate |x - c|^2 / 2."""
        c = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
        return cls(
            lambda x, t: -rate * (x - c),
            dim,
            abs(rate),
            lambda x, t: -0.5 * rate * np.sum((x - c) ** 2, axis=1),
            f"linear({rate})",
        )

    @classmethod
    def radial_exponential(cls, sigma: float, r0: float, dim: int = 3) -> DriftField:
        """Drift (sigma^2 / 2) grad ln p for p proportional to exp(-4 r / r0)."""
        c = 2.0 * sigma ** 2 / r0

        def func(x, t):
            r = np.linalg.norm(x, axis=1, keepdims=True)
            return -c * x / np.where(r > 0, r, np.inf)

        # the drift is bounded by c, so the step restriction is mild
        return cls(func, dim, 0.0, lambda x, t: -c * np.linalg.norm(x, axis=1), "radial-exponential")

    @classmethod
    def rotation(cls, omega: float, dim: int = 3) -> DriftField:
        """Rigid rotation (-omega y, omega x, 0); curl 2 omega, not a gradient."""

        def func(x, t):
            out = np.zeros_like(x)
            out[:, 0] = -omega * x[:, 1]
            out[:, 1] = omega * x[:, 0]
            return out

        if dim < 2:
            raise ConfigError("a rotation needs at least two dimensions")
        return cls(func, dim, abs(omega), None, f"rotation({omega})")


# ---------------------------------------------------------------- initial laws

@dataclass(frozen=True)
class PointMass:
    x0: tuple

    def sample(self, n: int, dim: int, seed: int) -> np.ndarray:
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.size != dim:
            raise ConfigError(f"point mass has {x0.size} coordinates, expected {dim}")
        return np.tile(x0, (n, 1))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Empirical law; used as-is when its size matches, else resampled uniformly."""

    points: np.ndarray

    def sample(self, n: int, dim: int, seed: int) -> np.ndarray:
        pts = np.asarray(self.points, dtype=float).reshape(len(self.points), -1)
        if pts.shape[1] != dim:
            raise ConfigError(f"sample set has dimension {pts.shape[1]}, expected {dim}")
        if pts.shape[0] == n:
            return pts.copy()
        u = rng.uniforms(seed, 0, n, stream=rng.STREAM_INITIAL)[:, 0]
        return pts[np.minimum((u * pts.shape[0]).astype(np.int64), pts.shape[0] - 1)]


@dataclass(frozen=True)
class Gaussian:
    """Isotropic normal law with the given mean and per-coordinate variance."""

    mean: tuple
    variance: float

    def sample(self, n: int, dim: int, seed: int) -> np.ndarray:
        m = np.broadcast_to(np.asarray(self.mean, dtype=float).reshape(-1), (dim,))
        if not self.variance >= 0:
            raise ConfigError("variance must be non-negative")
        return m + math.sqrt(self.variance) * rng.normals(seed, 0, n, dim, stream=rng.STREAM_INITIAL)


def _inverse_cdf(nodes: np.ndarray, pdf: np.ndarray, u: np.ndarray, lower: float) -> np.ndarray:
    """Sample a piecewise-linear density through (nodes, pdf), starting at ``lower``."""
    x = np.concatenate([[lower], nodes]) if lower < nodes[0] else nodes
    f = np.concatenate([[0.0], pdf]) if lower < nodes[0] else pdf
    f = np.where(np.isfinite(f) & (f > 0), f, 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))])
    if not cdf[-1] > 0:
        raise ConfigError("initial density has no mass")
    cdf /= cdf[-1]
    return np.interp(u, cdf, x)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Law given by a density on a grid.

    Radial and 1D densities are sampled by inverting the cumulative
    distribution; higher-dimensional ones by rejection from the bounding box.
    """

    density: ScalarField

    def __post_init__(self):
        total = self.density.integral()
        if not abs(total - 1.0) < 1e-3:
            raise ConfigError(f"initial density integrates to {total}, expected 1")

    def sample(self, n: int, dim: int, seed: int) -> np.ndarray:
        grid = self.density.grid
        p = self.density.values
        if grid.dim != dim:
            raise ConfigError(f"density lives in {grid.dim} dimensions, expected {dim}")
        if isinstance(grid, RadialGrid):
            u = rng.uniforms(seed, 0, n, stream=rng.STREAM_INITIAL)
            marginal = SURFACE[dim] * grid.r ** (dim - 1) * p
            r = _inverse_cdf(grid.r, marginal, u[:, 0], 0.0)
            direction = rng.normals(seed, 1, n, dim, stream=rng.STREAM_INITIAL)
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            return r[:, None] * direction
        if dim == 1:
            u = rng.uniforms(seed, 0, n, stream=rng.STREAM_INITIAL)
            return _inverse_cdf(grid.axes[0], p, u[:, 0], grid.axes[0][0])[:, None]
        return self._rejection(grid, p, n, seed)

    @staticmethod
    def _rejection(grid: CartesianGrid, p: np.ndarray, n: int, seed: int) -> np.ndarray:
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator(grid.axes, np.where(np.isfinite(p), p, 0.0))
        lo = np.array([a[0] for a in grid.axes])
        hi = np.array([a[-1] for a in grid.axes])
        ceiling = float(np.nanmax(p))
        out = np.empty((n, grid.dim))
        filled = 0
        # each round draws one proposal per path slot still empty; rounds are steps
        for round_ in range(10_000):
            need = n - filled
            u = rng.uniforms(seed, round_, need, stream=rng.STREAM_REJECTION, first_path=filled)
            x = lo + u[:, : grid.dim] * (hi - lo)
            accept = u[:, 3] * ceiling <= interp(x)
            k = int(accept.sum())
            out[filled : filled + k] = x[accept]
            filled += k
            if filled == n:
                return out
        raise NumericalError("rejection sampling of the initial density did not finish")


InitialLaw = Union[PointMass, SampleSet, DensityGrid, Gaussian]


@dataclass(frozen=True)
class DiffusionSpec:
    drift: DriftField
    sigma: float
    initial: InitialLaw

    def __post_init__(self):
        s = _as_float(self.sigma)
        if not s >= 0 or not math.isfinite(s):
            raise ConfigError(f"sigma must be finite and non-negative, got {s}")
        object.__setattr__(self, "sigma", s)

    def describe(self) -> dict:
        return {"drift": self.drift.name, "dim": self.drift.dim, "sigma": self.sigma, "initial": type(self.initial).__name__}


# ---------------------------------------------------------------- ensembles

@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Positions ``paths[i, k]`` of path i at ``times[k]``."""

    times: np.ndarray
    paths: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.paths, dtype=float)
        if x.ndim != 3 or x.shape[1] != t.size:
            raise ConfigError(f"paths shape {x.shape} does not match {t.size} times")
        if x.shape[0] < 1:
            raise ConfigError("an ensemble needs at least one path")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ConfigError("times must be strictly increasing")
        if not np.all(np.isfinite(x)):
            raise NumericalError("ensemble contains non-finite positions")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "paths", x)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def dim(self) -> int:
        return self.paths.shape[2]

    def index(self, t) -> int:
        from .fields import time_index

        return time_index(self.times, t)

    def at(self, t) -> np.ndarray:
        return self.paths[:, self.index(t), :]

    def identical(self, other: PathEnsemble) -> bool:
        return (
            self.seed == other.seed
            and np.array_equal(self.times, other.times)
            and self.paths.tobytes() == other.paths.tobytes()
        )

    def save_binary(self, path: str | Path) -> None:
        n, m1, d = self.paths.shape
        with open(path, "wb") as fh:
            fh.write(_ENSEMBLE_MAGIC)
            fh.write(struct.pack("<IIQQQ", _ENSEMBLE_VERSION, d, n, m1 - 1, self.seed))
            fh.write(self.times.astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(self.paths, dtype="<f8").tobytes())

    @classmethod
    def load_binary(cls, path: str | Path) -> PathEnsemble:
        raw = Path(path).read_bytes()
        if raw[:4] != _ENSEMBLE_MAGIC:
            raise ConfigError(f"{path} is not an ensemble file")
        version, d, n, m, seed = struct.unpack_from("<IIQQQ", raw, 4)
        if version != _ENSEMBLE_VERSION:
            raise ConfigError(f"unsupported ensemble file version {version}")
        pos = 4 + struct.calcsize("<IIQQQ")
        times = np.frombuffer(raw, "<f8", count=m + 1, offset=pos).copy()
        pos += 8 * (m + 1)
        paths = np.frombuffer(raw, "<f8", count=n * (m + 1) * d, offset=pos).reshape(n, m + 1, d).copy()
        return cls(times, paths, int(seed))

    def export_csv(self, path: str | Path, coords: tuple[str, ...] | None = None) -> None:
        n, m1, d = self.paths.shape
        names = list(coords or ("x", "y", "z")[:d])
        cols = [np.repeat(np.arange(n), m1), np.tile(self.times, n)]
        cols += [self.paths[:, :, k].reshape(-1) for k in range(d)]
        write_csv(path, ["path", "t", *names], cols)


_ENSEMBLE_MAGIC = b"NLPE"
_ENSEMBLE_VERSION = 1


def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise ConfigError("times must be a strictly increasing grid with at least two points")
    return t


def _record_indices(record, n_times: int) -> np.ndarray:
    if record is None:
        return np.arange(n_times)
    idx = np.unique(np.asarray(record, dtype=np.int64) % n_times)
    if idx.size == 0:
        raise ConfigError("nothing to record")
    return idx


def check_step(h: float, lipschitz: float) -> None:
    if lipschitz > 0 and h * lipschitz >= 0.5:
        raise ConfigError(f"step {h:g} too large for Lipschitz bound {lipschitz:g}; use h < {0.45 / lipschitz:.3g}")


def simulate(spec: DiffusionSpec, times, n_paths: int, seed: int, record=None) -> PathEnsemble:
    """Euler-Maruyama ensemble; ``record`` selects which time indices are kept."""
    t = _check_times(times)
    if n_paths < 1:
        raise ConfigError("n_paths must be at least 1")
    check_step(float(np.max(np.diff(t))), spec.drift.lipschitz)
    d = spec.drift.dim
    keep = _record_indices(record, t.size)
    out = np.empty((n_paths, keep.size, d))
    x = spec.initial.sample(n_paths, d, seed)
    slot = 0
    if keep[0] == 0:
        out[:, 0] = x
        slot = 1
    sig = spec.sigma
    for k in range(t.size - 1):
        h = t[k + 1] - t[k]
        b = spec.drift(x, t[k])
        bad = ~np.all(np.isfinite(b), axis=1)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise NumericalError(f"non-finite drift at x={x[i]}, t={t[k]:g}")
        x = x + b * h
        if sig > 0:
            x += sig * math.sqrt(h) * rng.normals(seed, k, n_paths, d)
        if slot < keep.size and keep[slot] == k + 1:
            out[:, slot] = x
            slot += 1
    return PathEnsemble(t[keep], out, int(seed), {"scheme": "euler-maruyama", **spec.describe()})


# ---------------------------------------------------------------- polar coordinates

PolarDrift = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class PolarDiffusionSpec:
    """dr = a_r dt + sigma_r dW, dtheta = a_theta dt + sigma_theta dW, one shared W.

    Radii below ``r_min`` are reflected back; the number of reflections is
    recorded in the ensemble metadata.
    """

    radial_drift: PolarDrift
    angular_drift: PolarDrift
    sigma_r: float
    sigma_theta: float
    r_init: float | np.ndarray
    theta_init: float | np.ndarray | None = 0.0
    r_min: float = 0.0
    lipschitz: float = 0.0

    def __post_init__(self):
        if self.sigma_r < 0 or self.sigma_theta < 0:
            raise ConfigError("polar noise amplitudes must be non-negative")
        if self.r_min < 0:
            raise ConfigError("r_min must be non-negative")

    @classmethod
    def constant(cls, a_r: float, a_theta: float, **kw) -> PolarDiffusionSpec:
        return cls(lambda r, th, t: np.full_like(r, a_r), lambda r, th, t: np.full_like(r, a_theta), **kw)


def simulate_polar(spec: PolarDiffusionSpec, times, n_paths: int, seed: int, record=None) -> PathEnsemble:
    """Ensemble of (r, theta) with theta left unwrapped.

    ``theta_init=None`` draws initial angles uniformly on [0, 2 pi).
    """
    t = _check_times(times)
    check_step(float(np.max(np.diff(t))), spec.lipschitz)
    keep = _record_indices(record, t.size)
    r = np.broadcast_to(np.asarray(spec.r_init, dtype=float), (n_paths,)).copy()
    if np.any(r <= spec.r_min):
        raise ConfigError("initial radii must exceed r_min")
    if spec.theta_init is None:
        th = 2.0 * math.pi * rng.uniforms(seed, 0, n_paths, stream=rng.STREAM_INITIAL)[:, 0]
    else:
        th = np.broadcast_to(np.asarray(spec.theta_init, dtype=float), (n_paths,)).copy()
    out = np.empty((n_paths, keep.size, 2))
    slot = 0
    if keep[0] == 0:
        out[:, 0, 0], out[:, 0, 1] = r, th
        slot = 1
    reflections = 0
    for k in range(t.size - 1):
        h = t[k + 1] - t[k]
        ar = spec.radial_drift(r, th, t[k])
        at = spec.angular_drift(r, th, t[k])
        if not (np.all(np.isfinite(ar)) and np.all(np.isfinite(at))):
            i = int(np.flatnonzero(~(np.isfinite(ar) & np.isfinite(at)))[0])
            raise NumericalError(f"non-finite polar drift at r={r[i]}, theta={th[i]}, t={t[k]:g}")
        dw = math.sqrt(h) * rng.normals(seed, k, n_paths, 1)[:, 0]
        r = r + ar * h + spec.sigma_r * dw
        th = th + at * h + spec.sigma_theta * dw
        low = r < spec.r_min
        if np.any(low):
            reflections += int(low.sum())
            r = np.where(low, 2.0 * spec.r_min - r, r)
        if slot < keep.size and keep[slot] == k + 1:
            out[:, slot, 0], out[:, slot, 1] = r, th
            slot += 1
    meta = {"scheme": "euler-maruyama", "coordinates": "polar", "r_min": spec.r_min, "reflections": reflections}
    return PathEnsemble(t[keep], out, int(seed), meta)

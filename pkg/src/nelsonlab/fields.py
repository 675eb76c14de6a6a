"""Grids, scalar and vector fields, finite-difference operators, density tools.

Two grid kinds are supported.  A :class:`RadialGrid` describes spherically
symmetric fields on uniform radii r_i > 0 in ``dim`` space dimensions;
vector fields on it store the single radial component.  A
:class:`CartesianGrid` is a uniform lattice in one to three dimensions.

Masked nodes hold NaN.  Every stencil that touches a masked node produces
NaN, so validity propagates through the operators without bookkeeping, and
``field.valid`` is simply ``isfinite``.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy import ndimage

from . import jets
from .errors import ConfigError, NumericalError
from .io import write_csv
from .kernels import CUTOFF, kernel_sums
from .jets import Jet

DENSITY_FLOOR = 1e-8
SURFACE = {2: 2.0 * math.pi, 3: 4.0 * math.pi}


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x, dtype=float)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


@dataclass(frozen=True, eq=False)
class RadialGrid:
    r: np.ndarray
    dim: int = 3

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size < 4:
            raise ConfigError("radial grid needs at least 4 nodes")
        if r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise ConfigError("radial nodes must be positive and increasing")
        if not np.allclose(np.diff(r), r[1] - r[0], rtol=1e-9, atol=0):
            raise ConfigError("radial grid must be uniform")
        if self.dim not in SURFACE:
            raise ConfigError("radial grids support dim 2 or 3")
        object.__setattr__(self, "r", r)

    @classmethod
    def uniform(cls, n: int, r_max: float, dim: int = 3) -> RadialGrid:
        """Nodes r_i = i r_max / n for i = 1..n."""
        return cls(r_max * np.arange(1, n + 1) / n, dim)

    @property
    def shape(self) -> tuple[int]:
        return self.r.shape

    @property
    def ncomp(self) -> int:
        return 1

    @property
    def spacing(self) -> tuple[float]:
        return (float(self.r[1] - self.r[0]),)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def flat_coords(self) -> np.ndarray:
        return self.r[:, None]

    def embed(self) -> np.ndarray:
        """Points along the first Cartesian axis, used to sample vector fields."""
        pts = np.zeros((self.r.size, self.dim))
        pts[:, 0] = self.r
        return pts

    def coordinate_jets(self) -> list[Jet]:
        return [jets.radius(self.r, self.dim)]

    def radius_jet(self) -> Jet:
        return jets.radius(self.r, self.dim)

    def weights(self) -> np.ndarray:
        w = _trapezoid_weights(self.r)
        w[0] += 0.5 * self.r[0]  # segment [0, r_0]; the integrand vanishes at the origin
        return w * SURFACE[self.dim] * self.r ** (self.dim - 1)

    def integrate(self, values: np.ndarray) -> float | complex:
        return np.sum(np.where(np.isfinite(values), values, 0.0) * self.weights())

    def scaled(self, lam: float) -> RadialGrid:
        return RadialGrid(self.r * lam, self.dim)

    def coverage(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points, axis=1) <= self.r[-1] + 0.5 * self.spacing[0]

    def header(self) -> str:
        return "r"


@dataclass(frozen=True, eq=False)
class CartesianGrid:
    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if not 1 <= len(axes) <= 3:
            raise ConfigError("Cartesian grids have 1 to 3 axes")
        for a in axes:
            if a.ndim != 1 or a.size < 4 or np.any(np.diff(a) <= 0):
                raise ConfigError("each axis needs at least 4 increasing nodes")
            if not np.allclose(np.diff(a), a[1] - a[0], rtol=1e-9, atol=0):
                raise ConfigError("Cartesian axes must be uniform")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, lo, hi, n, dim: int = 1) -> CartesianGrid:
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,))
        n = np.broadcast_to(np.asarray(n), (dim,))
        return cls(tuple(np.linspace(lo[k], hi[k], int(n[k])) for k in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def ncomp(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    def mesh(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def flat_coords(self) -> np.ndarray:
        return self.mesh().reshape(-1, self.dim)

    def embed(self) -> np.ndarray:
        return self.flat_coords()

    def coordinate_jets(self) -> list[Jet]:
        return jets.coordinates(self.flat_coords())

    def radius_jet(self) -> Jet:
        return jets.norm(self.coordinate_jets())

    def weights(self) -> np.ndarray:
        w = _trapezoid_weights(self.axes[0])
        for a in self.axes[1:]:
            w = np.multiply.outer(w, _trapezoid_weights(a))
        return w

    def integrate(self, values: np.ndarray) -> float | complex:
        return np.sum(np.where(np.isfinite(values), values, 0.0) * self.weights())

    def scaled(self, lam: float) -> CartesianGrid:
        return CartesianGrid(tuple(a * lam for a in self.axes))

    def coverage(self, points: np.ndarray) -> np.ndarray:
        inside = np.ones(points.shape[0], dtype=bool)
        for k, a in enumerate(self.axes):
            h = 0.5 * (a[1] - a[0])
            inside &= (points[:, k] >= a[0] - h) & (points[:, k] <= a[-1] + h)
        return inside

    def header(self) -> str:
        return ",".join("xyz"[: self.dim])


Grid = Union[RadialGrid, CartesianGrid]


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        if v.shape != self.grid.shape:
            raise ConfigError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def masked_fraction(self) -> float:
        return float(1.0 - self.valid.mean())

    def integral(self):
        return self.grid.integrate(self.values)

    def normalized(self) -> ScalarField:
        total = self.integral()
        if not total > 0:
            raise NumericalError("cannot normalize a field with non-positive integral")
        return ScalarField(self.grid, self.values / total)

    def with_values(self, values: np.ndarray) -> ScalarField:
        return ScalarField(self.grid, values)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def to_jet(self) -> Jet:
        """Value, gradient and Laplacian by finite differences, flattened over nodes."""
        g = gradient(self).values.reshape(-1, self.grid.ncomp)
        return Jet(self.flat().copy(), g, laplacian(self).flat())

    def export_csv(self, path: str | Path, name: str = "value") -> None:
        coords = self.grid.flat_coords()
        cols = [coords[:, k] for k in range(coords.shape[1])]
        header = self.grid.header().split(",")
        v = self.flat()
        if np.iscomplexobj(v):
            cols += [v.real, v.imag]
            header += [f"re_{name}", f"im_{name}"]
        else:
            cols.append(v)
            header.append(name)
        write_csv(path, header, cols)

    def export_binary(self, path: str | Path) -> None:
        write_grid_binary(path, self.grid, self.values, vector=False)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        expected = self.grid.shape + (self.grid.ncomp,)
        if v.shape != expected:
            raise ConfigError(f"values shape {v.shape} does not match {expected}")
        object.__setattr__(self, "values", v)

    @property
    def valid(self) -> np.ndarray:
        return np.all(np.isfinite(self.values), axis=-1)

    @property
    def masked_fraction(self) -> float:
        return float(1.0 - self.valid.mean())

    def component(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., k])

    def with_values(self, values: np.ndarray) -> VectorField:
        return VectorField(self.grid, values)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1, self.grid.ncomp)

    def __add__(self, other: VectorField) -> VectorField:
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other: VectorField) -> VectorField:
        return VectorField(self.grid, self.values - other.values)

    def __mul__(self, c) -> VectorField:
        return VectorField(self.grid, self.values * c)

    __rmul__ = __mul__

    def export_csv(self, path: str | Path, name: str = "v") -> None:
        coords = self.grid.flat_coords()
        cols = [coords[:, k] for k in range(coords.shape[1])]
        header = self.grid.header().split(",")
        v = self.flat()
        for k in range(v.shape[1]):
            if np.iscomplexobj(v):
                cols += [v[:, k].real, v[:, k].imag]
                header += [f"re_{name}{k}", f"im_{name}{k}"]
            else:
                cols.append(v[:, k])
                header.append(f"{name}{k}")
        write_csv(path, header, cols)

    def export_binary(self, path: str | Path) -> None:
        write_grid_binary(path, self.grid, self.values, vector=True)


def field_from_jet(grid: Grid, jet: Jet) -> ScalarField:
    return ScalarField(grid, jet.val.reshape(grid.shape))


def gradient_from_jet(grid: Grid, jet: Jet) -> VectorField:
    return VectorField(grid, jet.grad.reshape(grid.shape + (grid.ncomp,)))


# ---------------------------------------------------------------- stencils

def _d1(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    return np.gradient(values, h, axis=axis, edge_order=2)


def _d2(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = v[2:] - 2.0 * v[1:-1] + v[:-2]
    out[0] = 2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]
    out[-1] = 2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]
    return np.moveaxis(out / h ** 2, 0, axis)


def gradient(f: ScalarField) -> VectorField:
    g = f.grid
    comps = [_d1(f.values, h, k) for k, h in enumerate(g.spacing)]
    return VectorField(g, np.stack(comps, axis=-1))


def laplacian(f: ScalarField) -> ScalarField:
    g = f.grid
    if isinstance(g, RadialGrid):
        h = g.spacing[0]
        out = _d2(f.values, h, 0) + (g.dim - 1) / g.r * _d1(f.values, h, 0)
    else:
        out = sum(_d2(f.values, h, k) for k, h in enumerate(g.spacing))
    return ScalarField(g, out)


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    if isinstance(g, RadialGrid):
        vr = v.values[..., 0]
        out = _d1(vr, g.spacing[0], 0) + (g.dim - 1) * vr / g.r
    else:
        out = sum(_d1(v.values[..., k], h, k) for k, h in enumerate(g.spacing))
    return ScalarField(g, out)


def vector_laplacian(v: VectorField) -> VectorField:
    g = v.grid
    if isinstance(g, RadialGrid):
        vr = v.values[..., 0]
        h = g.spacing[0]
        out = _d2(vr, h, 0) + (g.dim - 1) / g.r * _d1(vr, h, 0) - (g.dim - 1) * vr / g.r ** 2
        return VectorField(g, out[..., None])
    comps = [laplacian(v.component(k)).values for k in range(g.ncomp)]
    return VectorField(g, np.stack(comps, axis=-1))


def jacobian(v: VectorField) -> np.ndarray:
    """Array J[..., i, j] = d v_i / d x_j (radial grids: d v_r / dr)."""
    g = v.grid
    rows = []
    for i in range(g.ncomp):
        rows.append(np.stack([_d1(v.values[..., i], h, j) for j, h in enumerate(g.spacing)], axis=-1))
    return np.stack(rows, axis=-2)


def advect(a: VectorField, b: VectorField) -> VectorField:
    """Directional derivative (a . grad) b."""
    return VectorField(b.grid, np.einsum("...j,...ij->...i", a.values, jacobian(b)))


def dot(a: VectorField, b: VectorField) -> ScalarField:
    return ScalarField(a.grid, np.sum(a.values * b.values, axis=-1))


def curl(v: VectorField) -> ScalarField | VectorField:
    """Scalar curl in 2D, vector curl in 3D; radial and 1D fields are curl-free."""
    g = v.grid
    if isinstance(g, RadialGrid) or g.dim == 1:
        return ScalarField(g, np.zeros(g.shape))
    J = jacobian(v)
    if g.dim == 2:
        return ScalarField(g, J[..., 1, 0] - J[..., 0, 1])
    out = np.stack([J[..., 2, 1] - J[..., 1, 2], J[..., 0, 2] - J[..., 2, 0], J[..., 1, 0] - J[..., 0, 1]], axis=-1)
    return VectorField(g, out)


def sample_vector(grid: Grid, func, t: float = 0.0) -> VectorField:
    """Evaluate a Cartesian vector function on the grid (radial grids keep the x component)."""
    vals = np.asarray(func(grid.embed(), t), dtype=float)
    if isinstance(grid, RadialGrid):
        return VectorField(grid, vals[:, :1].copy())
    return VectorField(grid, vals.reshape(grid.shape + (grid.ncomp,)))


# ---------------------------------------------------------------- densities

def mask_below_floor(p: ScalarField, floor: float = DENSITY_FLOOR) -> ScalarField:
    """NaN out nodes where p < floor * max(p)."""
    vals = np.asarray(p.values, dtype=float)
    top = np.nanmax(vals) if np.any(np.isfinite(vals)) else np.nan
    if not top > 0:
        raise NumericalError("density is nowhere positive")
    keep = np.isfinite(vals) & (vals > 0) & (vals >= floor * top)
    if not keep.any():
        raise NumericalError("whole density field is below the floor")
    return ScalarField(p.grid, np.where(keep, vals, np.nan))


def log_density_gradient(p: ScalarField, floor: float = DENSITY_FLOOR) -> VectorField:
    q = mask_below_floor(p, floor)
    return gradient(ScalarField(q.grid, np.log(q.values)))


def osmotic_velocity(p: ScalarField, sigma: float, floor: float = DENSITY_FLOOR) -> VectorField:
    return log_density_gradient(p, floor) * (0.5 * sigma ** 2)


def bohm_operator(p: ScalarField, floor: float = DENSITY_FLOOR) -> ScalarField:
    """Laplacian of sqrt(p) divided by sqrt(p)."""
    q = mask_below_floor(p, floor)
    root = np.sqrt(q.values)
    lap = laplacian(ScalarField(q.grid, root)).values
    return ScalarField(q.grid, lap / root)


def silverman_bandwidth(x: np.ndarray) -> float:
    """Silverman's rule 0.9 min(sd, IQR / 1.34) n^(-1/5) for one coordinate."""
    x = np.asarray(x, dtype=float)
    n = x.size
    sd = np.std(x, ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25]) if n > 1 else (0.0, 0.0)
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if not spread > 0:
        return 1.0
    return 0.9 * spread * n ** (-0.2)


def time_index(times: np.ndarray, t) -> int:
    if isinstance(t, (int, np.integer)):
        if not -len(times) <= t < len(times):
            raise ConfigError(f"time index {t} outside ensemble")
        return int(t) % len(times)
    hits = np.flatnonzero(np.isclose(times, float(t), rtol=0, atol=1e-12 * max(1.0, abs(float(t)))))
    if hits.size == 0:
        raise ConfigError(f"time {t} is not on the ensemble time grid")
    return int(hits[0])


def kernel_estimate(
    samples: np.ndarray,
    grid: Grid,
    bandwidth: float,
    weights: np.ndarray | None = None,
    values: np.ndarray | None = None,
    odd: bool = False,
    marginal: bool = False,
) -> np.ndarray:
    """Unnormalized kernel sums sum_i w_i y_i K_b(x - X_i) at every node.

    On radial grids the radial marginal is smoothed with reflection at the
    origin (with a sign change when ``odd``, as for radial vector components)
    and divided by the shell area, giving a density in ``dim`` dimensions;
    ``marginal=True`` skips the division.  Returns node values already
    divided by the kernel normalization.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    y = np.ones(n) if values is None else np.asarray(values, dtype=float)
    if isinstance(grid, RadialGrid):
        r = np.linalg.norm(samples, axis=1) if samples.ndim == 2 else np.abs(samples)
        parity = -1.0 if odd else 1.0
        x = np.concatenate([r, -r])
        wy = np.concatenate([w * y, parity * w * y])
        h = grid.spacing[0]
        sums = kernel_sums(x, wy, grid.r[0], h, grid.r.size, bandwidth, CUTOFF)
        smoothed = sums / (bandwidth * math.sqrt(2.0 * math.pi))
        if marginal:
            return smoothed
        return smoothed / (SURFACE[grid.dim] * grid.r ** (grid.dim - 1))
    if grid.dim == 1:
        a = grid.axes[0]
        sums = kernel_sums(samples.reshape(n, -1)[:, 0], w * y, a[0], a[1] - a[0], a.size, bandwidth, CUTOFF)
        return sums / (bandwidth * math.sqrt(2.0 * math.pi))
    # binned estimate: histogram on cells centred at the nodes, then Gaussian filter
    edges = [np.concatenate([a - 0.5 * (a[1] - a[0]), [a[-1] + 0.5 * (a[1] - a[0])]]) for a in grid.axes]
    hist, _ = np.histogramdd(samples[:, : grid.dim], bins=edges, weights=w * y)
    cell = np.prod(grid.spacing)
    sig = [bandwidth / h for h in grid.spacing]
    return ndimage.gaussian_filter(hist, sigma=sig, mode="constant", truncate=CUTOFF) / cell


def default_bandwidth(x: np.ndarray, grid: Grid) -> float:
    """Normal-reference bandwidth: Silverman in 1D, Scott-type scaling above."""
    if isinstance(grid, RadialGrid):
        return silverman_bandwidth(np.linalg.norm(x, axis=1))
    b = float(np.mean([silverman_bandwidth(x[:, j]) for j in range(grid.dim)]))
    d, n = grid.dim, x.shape[0]
    if d > 1:
        # rescale 0.9 n^(-1/5) to (4 / (d + 2))^(1 / (d + 4)) n^(-1 / (d + 4))
        b *= (4.0 / (d + 2)) ** (1.0 / (d + 4)) * n ** (0.2 - 1.0 / (d + 4)) / 0.9
    return b


def estimate_density(ens, t, grid: Grid, bandwidth: float | None = None, weights: np.ndarray | None = None) -> ScalarField:
    """Gaussian kernel density estimate of the ensemble law at time ``t``."""
    k = time_index(ens.times, t)
    x = ens.paths[:, k, :]
    if x.shape[0] == 0:
        raise ConfigError("empty ensemble")
    if bandwidth is None:
        bandwidth = default_bandwidth(x, grid)
    if not bandwidth > 0:
        raise ConfigError("bandwidth must be positive")
    w = np.ones(x.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    inside = grid.coverage(x)
    coverage = float(np.sum(w[inside]) / np.sum(w))
    if coverage < 0.99:
        warnings.warn(f"grid covers only {coverage:.4f} of the sample mass", RuntimeWarning, stacklevel=2)
    p = kernel_estimate(x, grid, bandwidth, w)
    return ScalarField(grid, p).normalized()


# ---------------------------------------------------------------- binary grid format

_GRID_MAGIC = b"NLGF"
_GRID_VERSION = 1


def write_grid_binary(path: str | Path, grid: Grid, values: np.ndarray, vector: bool) -> None:
    values = np.asarray(values)
    is_complex = int(np.iscomplexobj(values))
    kind = 0 if isinstance(grid, RadialGrid) else 1
    axes = (grid.r,) if kind == 0 else grid.axes
    with open(path, "wb") as fh:
        fh.write(_GRID_MAGIC)
        fh.write(struct.pack("<6I", _GRID_VERSION, kind, grid.dim, len(axes), int(vector), is_complex))
        for a in axes:
            fh.write(struct.pack("<Q", a.size))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
        data = values.astype("<c16" if is_complex else "<f8")
        fh.write(np.ascontiguousarray(data).tobytes())


def read_grid_binary(path: str | Path) -> ScalarField | VectorField:
    raw = Path(path).read_bytes()
    if raw[:4] != _GRID_MAGIC:
        raise ConfigError(f"{path} is not a grid file")
    version, kind, space_dim, n_axes, vector, is_complex = struct.unpack_from("<6I", raw, 4)
    if version != _GRID_VERSION:
        raise ConfigError(f"unsupported grid file version {version}")
    pos = 4 + 24
    axes = []
    for _ in range(n_axes):
        (n,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        axes.append(np.frombuffer(raw, dtype="<f8", count=n, offset=pos).copy())
        pos += 8 * n
    grid = RadialGrid(axes[0], space_dim) if kind == 0 else CartesianGrid(tuple(axes))
    data = np.frombuffer(raw, dtype="<c16" if is_complex else "<f8", offset=pos).copy()
    if vector:
        return VectorField(grid, data.reshape(grid.shape + (grid.ncomp,)))
    return ScalarField(grid, data.reshape(grid.shape))

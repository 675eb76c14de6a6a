"""Forward and backward mean derivatives and the complex stochastic derivative.

For a diffusion dX = b dt + sigma dW with density p, the forward and backward
mean velocities are

    D+ X = b,        D- X = b - sigma^2 grad ln p,

and the complex derivative with sign mu is

    Dmu X = v + i mu u,   v = (D+ + D-) / 2,   u = (D+ - D-) / 2.

On functions of (X_t, t) these act as the operators

    D+ g = (d/dt + b . grad + sigma^2 / 2 lap) g
    D- g = (d/dt + b_ . grad - sigma^2 / 2 lap) g
    Dmu g = (d/dt + (v + i mu u) . grad + i mu sigma^2 / 2 lap) g.

Complex results are returned as complex-valued fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .fields import (
    DENSITY_FLOOR,
    CartesianGrid,
    Grid,
    RadialGrid,
    ScalarField,
    VectorField,
    advect,
    curl,
    default_bandwidth,
    laplacian,
    log_density_gradient,
    sample_vector,
    time_index,
    vector_laplacian,
)
from .jets import Jet
from .kernels import CUTOFF, kernel_moments
from .sde import DriftField

Field = Union[ScalarField, VectorField]


@dataclass(frozen=True)
class NelsonPair:
    forward: VectorField
    backward: VectorField
    sigma: float

    def __post_init__(self):
        if self.forward.grid is not self.backward.grid:
            raise ConfigError("forward and backward fields must share one grid")

    @property
    def grid(self) -> Grid:
        return self.forward.grid

    def consistency(self, p: ScalarField, floor: float = DENSITY_FLOOR) -> float:
        """Largest |D+ - D- - sigma^2 grad ln p| over nodes valid in all three."""
        cor = correction_term(p, self.sigma, floor)
        gap = self.forward.values - self.backward.values - cor.values
        norms = np.linalg.norm(gap, axis=-1)
        return float(np.nanmax(norms)) if np.any(np.isfinite(norms)) else float("nan")


@dataclass(frozen=True)
class ComplexVelocityField:
    current: VectorField
    osmotic: VectorField
    mu: int

    def __post_init__(self):
        if self.mu not in (-1, 1):
            raise ConfigError(f"mu must be +1 or -1, got {self.mu}")
        if self.current.grid is not self.osmotic.grid:
            raise ConfigError("current and osmotic velocities must share one grid")

    @property
    def grid(self) -> Grid:
        return self.current.grid

    def values(self) -> np.ndarray:
        return self.current.values + 1j * self.mu * self.osmotic.values

    def as_field(self) -> VectorField:
        return VectorField(self.grid, self.values())

    def with_mu(self, mu: int) -> ComplexVelocityField:
        return ComplexVelocityField(self.current, self.osmotic, mu)


@dataclass(frozen=True)
class ChainRuleOperator:
    """g -> (d/dt + Dmu X . grad + i mu sigma^2 / 2 lap) g."""

    velocity: ComplexVelocityField
    sigma: float

    def __call__(self, g, dt=None):
        return apply_chain_rule(self, g, dt)


def analytic_nelson(drift: DriftField, p: ScalarField, sigma: float, t: float = 0.0, floor: float = DENSITY_FLOOR) -> NelsonPair:
    """Pair from a known drift and density; masked density nodes stay masked."""
    grid = p.grid
    fwd = sample_vector(grid, drift, t)
    if sigma == 0:
        return NelsonPair(fwd, VectorField(grid, fwd.values.copy()), 0.0)
    bwd = fwd - correction_term(p, sigma, floor)
    return NelsonPair(fwd, bwd, float(sigma))


def correction_term(p: ScalarField, sigma: float, floor: float = DENSITY_FLOOR) -> VectorField:
    """sigma^2 grad p / p, the gap between the forward and backward velocities."""
    if sigma == 0:
        return VectorField(p.grid, np.zeros(p.grid.shape + (p.grid.ncomp,)))
    return log_density_gradient(p, floor) * sigma ** 2


def stochastic_derivative(pair: NelsonPair, mu: int) -> ComplexVelocityField:
    v = VectorField(pair.grid, 0.5 * (pair.forward.values + pair.backward.values))
    u = VectorField(pair.grid, 0.5 * (pair.forward.values - pair.backward.values))
    return ComplexVelocityField(v, u, mu)


# ---------------------------------------------------------------- chain rule

def _directional(w: np.ndarray, g: Field) -> np.ndarray:
    """(w . grad) g for a real or complex velocity array w."""
    grid = g.grid
    if np.iscomplexobj(w):
        re = _directional(w.real, g)
        im = _directional(w.imag, g)
        return re + 1j * im
    wf = VectorField(grid, w)
    if isinstance(g, ScalarField):
        if np.iscomplexobj(g.values):
            return _directional(w, ScalarField(grid, g.values.real)) + 1j * _directional(w, ScalarField(grid, g.values.imag))
        from .fields import gradient

        return np.sum(w * gradient(g).values, axis=-1)
    if np.iscomplexobj(g.values):
        return advect(wf, VectorField(grid, g.values.real)).values + 1j * advect(wf, VectorField(grid, g.values.imag)).values
    return advect(wf, g).values


def _lap(g: Field) -> np.ndarray:
    grid = g.grid
    if np.iscomplexobj(g.values):
        return _lap(g.with_values(g.values.real)) + 1j * _lap(g.with_values(g.values.imag))
    if isinstance(g, ScalarField):
        return laplacian(g).values
    return vector_laplacian(g).values


def _dt_values(dt, shape) -> np.ndarray | float:
    if dt is None:
        return 0.0
    vals = dt.values if isinstance(dt, (ScalarField, VectorField)) else np.asarray(dt)
    return np.broadcast_to(vals, shape)


def apply_chain_rule(op: ChainRuleOperator, g, dt=None):
    """Complex derivative of g(X_t, t) along the diffusion.

    ``g`` is a scalar or vector field on the velocity grid, or a :class:`Jet`
    evaluated at the grid nodes in flattened order.  ``dt`` is its partial
    time derivative (zero when omitted).  Returns a field of the same kind as
    ``g``, or an array for jets.
    """
    vel = op.velocity
    w = vel.values()
    diff = 0.5j * vel.mu * op.sigma ** 2
    if isinstance(g, Jet):
        wf = w.reshape(-1, vel.grid.ncomp)
        out = np.sum(wf * g.grad, axis=-1) + diff * g.lap
        return out + _dt_values(dt, out.shape)
    if g.grid is not vel.grid:
        raise ConfigError("test function and velocity must share one grid")
    out = _directional(w, g) + diff * _lap(g)
    return g.with_values(out + _dt_values(dt, out.shape))


def forward_operator(b: VectorField, sigma: float, g: Field, dt=None) -> np.ndarray:
    """D+ g = (d/dt + b . grad + sigma^2 / 2 lap) g, values only."""
    return _directional(b.values, g) + 0.5 * sigma ** 2 * _lap(g) + _dt_values(dt, g.values.shape)


def backward_operator(b_back: VectorField, sigma: float, g: Field, dt=None) -> np.ndarray:
    """D- g = (d/dt + b_ . grad - sigma^2 / 2 lap) g, values only."""
    return _directional(b_back.values, g) - 0.5 * sigma ** 2 * _lap(g) + _dt_values(dt, g.values.shape)


# ---------------------------------------------------------------- second derivatives

def _time_derivative(values: list[np.ndarray], times: np.ndarray, k: int) -> np.ndarray:
    if len(values) < 2:
        raise ConfigError("second derivatives need at least two adjacent time slices")
    stack = np.stack(values)
    return np.gradient(stack, times, axis=0, edge_order=1)[k]


def _slice_index(n: int, index: int | None) -> int:
    return n // 2 if index is None else index % n


def acceleration_parts(velocities: Sequence[ComplexVelocityField], times, sigma: float, index: int | None = None) -> tuple[VectorField, VectorField]:
    """Real part and mu-coefficient of the imaginary part of Dmu Dmu X.

        real = dv/dt + (v . grad) v - (u . grad) u - sigma^2 / 2 lap u
        imag = du/dt + (u . grad) v + (v . grad) u + sigma^2 / 2 lap v
    """
    times = np.asarray(times, dtype=float)
    if len(velocities) != times.size:
        raise ConfigError("one velocity field per time is required")
    k = _slice_index(len(velocities), index)
    vel = velocities[k]
    v, u = vel.current, vel.osmotic
    dv = _time_derivative([c.current.values for c in velocities], times, k)
    du = _time_derivative([c.osmotic.values for c in velocities], times, k)
    s2 = 0.5 * sigma ** 2
    real = dv + advect(v, v).values - advect(u, u).values - s2 * vector_laplacian(u).values
    imag = du + advect(u, v).values + advect(v, u).values + s2 * vector_laplacian(v).values
    return VectorField(v.grid, real), VectorField(v.grid, imag)


def second_derivative(
    velocities: Sequence[ComplexVelocityField],
    times,
    sigma: float,
    alpha: int = 1,
    index: int | None = None,
) -> VectorField:
    """D_{alpha mu} D_mu X as a complex vector field at slice ``index``.

    The alpha = -1 case is obtained from the alpha = 1 one through the
    correction identity D_{-mu} = D_mu - i mu (Cor . grad + sigma^2 lap),
    with Cor = 2u.
    """
    if alpha not in (-1, 1):
        raise ConfigError(f"alpha must be +1 or -1, got {alpha}")
    k = _slice_index(len(velocities), index)
    mu = velocities[k].mu
    real, imag = acceleration_parts(velocities, times, sigma, index)
    out = real.values + 1j * mu * imag.values
    if alpha == -1:
        vel = velocities[k]
        g = vel.as_field()
        cor = vel.osmotic * 2.0
        out = out - 1j * mu * (_directional(cor.values, g) + sigma ** 2 * _lap(g))
    return VectorField(real.grid, out)


def second_derivative_direct(
    velocities: Sequence[ComplexVelocityField],
    times,
    sigma: float,
    alpha: int = 1,
    index: int | None = None,
) -> VectorField:
    """Same quantity by applying the chain rule with sign alpha mu to v + i mu u."""
    times = np.asarray(times, dtype=float)
    k = _slice_index(len(velocities), index)
    vel = velocities[k]
    g = vel.as_field()
    dg = _time_derivative([c.values() for c in velocities], times, k)
    op = ChainRuleOperator(vel.with_mu(alpha * vel.mu), sigma)
    return apply_chain_rule(op, g, dg)


def second_derivative_composed(pairs: Sequence[NelsonPair], times, mu: int, alpha: int = 1, index: int | None = None) -> VectorField:
    """Same quantity from compositions of the forward and backward operators.

    alpha = 1:  ((D+D- + D-D+) + i mu (D+D+ - D-D-)) X / 2
    alpha = -1: ((D+D+ + D-D-) + i mu (D-D+ - D+D-)) X / 2
    """
    times = np.asarray(times, dtype=float)
    k = _slice_index(len(pairs), index)
    pair = pairs[k]
    s = pair.sigma
    b, bb = pair.forward, pair.backward
    db = _time_derivative([q.forward.values for q in pairs], times, k)
    dbb = _time_derivative([q.backward.values for q in pairs], times, k)
    pp = forward_operator(b, s, b, db)
    pm = forward_operator(b, s, bb, dbb)
    mp = backward_operator(bb, s, b, db)
    mm = backward_operator(bb, s, bb, dbb)
    if alpha == 1:
        out = 0.5 * ((pm + mp) + 1j * mu * (pp - mm))
    else:
        out = 0.5 * ((pp + mm) + 1j * mu * (mp - pm))
    return VectorField(b.grid, out)


@dataclass(frozen=True)
class RealityReport:
    defect: VectorField
    sup_defect: float
    sup_curl: float
    tolerance: float

    @property
    def is_gradient(self) -> bool:
        return bool(self.sup_defect < self.tolerance)

    def summary(self) -> dict:
        return {
            "sup_defect": self.sup_defect,
            "sup_curl": self.sup_curl,
            "tolerance": self.tolerance,
            "is_gradient": self.is_gradient,
            "masked_fraction": self.defect.masked_fraction,
        }


def _sup(values: np.ndarray) -> float:
    a = np.abs(values)
    finite = a[np.isfinite(a)]
    return float(finite.max()) if finite.size else float("nan")


def reality_diagnostic(pairs: Sequence[NelsonPair], times, tolerance: float = 1e-6, index: int | None = None, interior: int = 2) -> RealityReport:
    """Defect D+D+ X - D-D- X, twice the imaginary part of D_mu D_mu X over mu.

    A gradient diffusion has zero defect.  The curl of the forward drift is
    reported as an independent check.  ``interior`` boundary layers are
    excluded from the sup norms, where one-sided stencils dominate.
    """
    times = np.asarray(times, dtype=float)
    k = _slice_index(len(pairs), index)
    pair = pairs[k]
    s = pair.sigma
    db = _time_derivative([q.forward.values for q in pairs], times, k)
    dbb = _time_derivative([q.backward.values for q in pairs], times, k)
    pp = forward_operator(pair.forward, s, pair.forward, db)
    mm = backward_operator(pair.backward, s, pair.backward, dbb)
    defect = VectorField(pair.grid, pp - mm)
    rot = curl(pair.forward).values
    core = _interior(pair.grid, interior)
    sup_defect = _sup(np.linalg.norm(defect.values, axis=-1)[core])
    rot_norm = np.linalg.norm(rot, axis=-1) if rot.ndim == len(pair.grid.shape) + 1 else np.abs(rot)
    return RealityReport(defect, sup_defect, _sup(rot_norm[core]), tolerance)


def _interior(grid: Grid, layers: int) -> tuple:
    if layers <= 0:
        return tuple(slice(None) for _ in grid.shape)
    return tuple(slice(layers, n - layers) for n in grid.shape)


# ---------------------------------------------------------------- empirical estimators

def _regress(x: np.ndarray, y: np.ndarray, grid: Grid, bw: float, degree: int, min_count: int, odd: bool) -> np.ndarray:
    """Kernel regression of responses y (n, q) on positions x at the grid nodes.

    Radial grids regress on |x| with the samples mirrored to negative radii;
    ``odd`` flips the sign of mirrored responses (radial vector components).
    Nodes with fewer than ``min_count`` samples within one bandwidth are NaN.
    """
    q = y.shape[1]
    w = np.ones(x.shape[0])
    if isinstance(grid, RadialGrid) or grid.dim == 1:
        if isinstance(grid, RadialGrid):
            r = np.linalg.norm(x, axis=1)
            xs = np.concatenate([r, -r])
            ys = np.concatenate([y, -y if odd else y])
            ws = np.concatenate([w, w])
            nodes = grid.r
        else:
            xs, ys, ws = x[:, 0], y, w
            nodes = grid.axes[0]
        mom = kernel_moments(xs, ws, np.ascontiguousarray(ys), nodes[0], nodes[1] - nodes[0], nodes.size, bw, CUTOFF)
        count, s0, s1, s2 = mom[:, 0], mom[:, 1], mom[:, 2], mom[:, 3]
        t0 = mom[:, 4 : 4 + q]
        t1 = mom[:, 4 + q : 4 + 2 * q]
        with np.errstate(invalid="ignore", divide="ignore"):
            if degree == 0:
                est = t0 / s0[:, None]
            else:
                det = s0 * s2 - s1 ** 2
                est = (s2[:, None] * t0 - s1[:, None] * t1) / det[:, None]
        est[count < min_count] = np.nan
        return est.reshape(grid.shape + (q,))
    if degree != 0:
        raise ConfigError("local-linear regression is available on 1D and radial grids only")
    edges = [np.concatenate([a - 0.5 * (a[1] - a[0]), [a[-1] + 0.5 * (a[1] - a[0])]]) for a in grid.axes]
    sig = [bw / h for h in grid.spacing]

    def smooth(weights):
        hist, _ = np.histogramdd(x[:, : grid.dim], bins=edges, weights=weights)
        return ndimage.gaussian_filter(hist, sigma=sig, mode="constant", truncate=CUTOFF)

    # Gaussian weights peak at one, so s0 is a soft count of nearby samples
    s0 = smooth(w) * np.prod([np.sqrt(2 * np.pi) * s for s in sig])
    out = np.stack([smooth(y[:, c]) for c in range(q)], axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = out / smooth(w)[..., None]
    out[s0 < min_count] = np.nan
    return out


def _increments(ens, t, window: int, pool: int):
    """Origins and forward/backward difference quotients, pooled over origins."""
    k = ens.index(t)
    lo = k - (pool + 1) * window
    hi = k + (pool + 1) * window
    if window < 1 or lo < 0 or hi >= ens.times.size:
        raise ConfigError(f"time {t} needs {(pool + 1) * window} recorded steps on both sides")
    xs, fwd, bwd = [], [], []
    for j in range(-pool, pool + 1):
        c = k + j * window
        h_f = ens.times[c + window] - ens.times[c]
        h_b = ens.times[c] - ens.times[c - window]
        x = ens.paths[:, c, :]
        xs.append(x)
        fwd.append((ens.paths[:, c + window, :] - x) / h_f)
        bwd.append((x - ens.paths[:, c - window, :]) / h_b)
    return np.concatenate(xs), np.concatenate(fwd), np.concatenate(bwd), k


def _project(grid: Grid, x: np.ndarray, incr: np.ndarray) -> np.ndarray:
    if isinstance(grid, RadialGrid):
        r = np.linalg.norm(x, axis=1, keepdims=True)
        return np.sum(incr * x / np.where(r > 0, r, np.inf), axis=1, keepdims=True)
    return incr[:, : grid.dim]


def empirical_nelson(
    ens,
    t,
    grid: Grid,
    window: int = 4,
    bandwidth: float | None = None,
    degree: int = 0,
    min_count: int = 50,
    pool: int = 0,
) -> NelsonPair:
    """Kernel-regression estimates of the forward and backward velocities at time t.

    ``window`` counts recorded time steps.  ``pool > 0`` adds that many
    further origins on each side, spaced by ``window``; this is only
    meaningful for a stationary law.
    """
    if degree not in (0, 1):
        raise ConfigError("degree must be 0 (Nadaraya-Watson) or 1 (local linear)")
    x, fwd, bwd, k = _increments(ens, t, window, pool)
    if bandwidth is None:
        bandwidth = default_bandwidth(ens.paths[:, k, :], grid)
    y = np.concatenate([_project(grid, x, fwd), _project(grid, x, bwd)], axis=1)
    est = _regress(x, y, grid, bandwidth, degree, min_count, odd=True)
    nc = grid.ncomp
    sigma = float(ens.meta.get("sigma", float("nan")))
    return NelsonPair(VectorField(grid, est[..., :nc]), VectorField(grid, est[..., nc:]), sigma)


def empirical_scalar_derivatives(
    ens,
    t,
    grid: Grid,
    g,
    window: int = 4,
    bandwidth: float | None = None,
    degree: int = 0,
    min_count: int = 50,
    pool: int = 0,
) -> tuple[ScalarField, ScalarField]:
    """Forward and backward mean derivatives of the process g(X_t, t).

    ``g(x, t)`` is vectorized over rows of x.
    """
    k = ens.index(t)
    lo = k - (pool + 1) * window
    if window < 1 or lo < 0 or k + (pool + 1) * window >= ens.times.size:
        raise ConfigError(f"time {t} needs {(pool + 1) * window} recorded steps on both sides")
    xs, fwd, bwd = [], [], []
    for j in range(-pool, pool + 1):
        c = k + j * window
        tm, t0, tp = ens.times[c - window], ens.times[c], ens.times[c + window]
        gm = g(ens.paths[:, c - window, :], tm)
        g0 = g(ens.paths[:, c, :], t0)
        gp = g(ens.paths[:, c + window, :], tp)
        xs.append(ens.paths[:, c, :])
        fwd.append((gp - g0) / (tp - t0))
        bwd.append((g0 - gm) / (t0 - tm))
    x = np.concatenate(xs)
    y = np.stack([np.concatenate(fwd), np.concatenate(bwd)], axis=1)
    if bandwidth is None:
        bandwidth = default_bandwidth(ens.paths[:, k, :], grid)
    est = _regress(x, y, grid, bandwidth, degree, min_count, odd=False)
    return ScalarField(grid, est[..., 0]), ScalarField(grid, est[..., 1])


def complex_from_scalars(forward: ScalarField, backward: ScalarField, mu: int) -> ScalarField:
    """(D+ + D-) / 2 + i mu (D+ - D-) / 2 for scalar processes."""
    f, b = forward.values, backward.values
    return ScalarField(forward.grid, 0.5 * (f + b) + 0.5j * mu * (f - b))

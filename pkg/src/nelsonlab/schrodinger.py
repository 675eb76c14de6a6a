"""Wave functions psi = exp(i A / C), ground states, and the Madelung map.

With hbar = m sigma^2 the stationary linear equation reads

    -(m sigma^4 / 2) lap phi + U phi = E phi.

Radial problems in three dimensions are solved for u = r phi on the nodes
r_i = i dr with u = 0 at the origin and one step past the last node.
Cartesian problems take phi = 0 on the boundary of the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import lapack
from scipy.sparse.linalg import splu

from .errors import ConfigError, NumericalError
from .fields import (
    DENSITY_FLOOR,
    CartesianGrid,
    Grid,
    RadialGrid,
    ScalarField,
    gradient,
    laplacian,
)
from .potentials import Potential


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: Grid
    psi: np.ndarray
    C: float
    m: float
    sigma: float
    mu: int = -1

    def __post_init__(self):
        if self.C == 0:
            raise ConfigError("the normalization constant C must be non-zero")
        if self.mu not in (-1, 1):
            raise ConfigError("mu must be +1 or -1")
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != self.grid.shape:
            raise ConfigError(f"psi shape {psi.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "psi", psi)

    @property
    def linear_C(self) -> float:
        return -self.mu * self.m * self.sigma ** 2

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.grid.integrate(np.abs(self.psi) ** 2)))

    def normalized(self) -> WaveFunction:
        n = self.norm
        if not n > 0:
            raise NumericalError("cannot normalize a vanishing wave function")
        return WaveFunction(self.grid, self.psi / n, self.C, self.m, self.sigma, self.mu)

    def field(self) -> ScalarField:
        return ScalarField(self.grid, self.psi)

    def export_csv(self, path) -> None:
        self.field().export_csv(path, "psi")

    def export_binary(self, path) -> None:
        self.field().export_binary(path)


@dataclass(frozen=True)
class ActionPair:
    S: ScalarField
    R: ScalarField


@dataclass(frozen=True)
class GroundState:
    psi: WaveFunction
    energy: float
    residual: float
    iterations: int
    method: str


# ---------------------------------------------------------------- operators

class _Hamiltonian:
    """Discrete stationary operator on the unknowns of a grid."""

    def __init__(self, grid: Grid, U: np.ndarray, m: float, sigma: float):
        self.grid = grid
        self.kin = 0.5 * m * sigma ** 4
        if isinstance(grid, RadialGrid):
            if grid.dim != 3:
                raise ConfigError("the radial solver handles three dimensions")
            h = grid.spacing[0]
            self.inner = (slice(None),)
            self.U = U
            self.tridiagonal = True
            self.diag = 2.0 * self.kin / h ** 2 + U
            self.off = np.full(U.size - 1, -self.kin / h ** 2)
        else:
            self.inner = tuple(slice(1, -1) for _ in grid.shape)
            self.U = U[self.inner]
            shape = self.U.shape
            if grid.dim == 1:
                h = grid.spacing[0]
                self.tridiagonal = True
                self.diag = 2.0 * self.kin / h ** 2 + self.U
                self.off = np.full(self.U.size - 1, -self.kin / h ** 2)
            else:
                self.tridiagonal = False
                lap = None
                for k, h in enumerate(grid.spacing):
                    n = shape[k]
                    d2 = sparse.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h ** 2
                    parts = [sparse.identity(s) for s in shape]
                    parts[k] = d2
                    term = parts[0]
                    for p in parts[1:]:
                        term = sparse.kron(term, p)
                    lap = term if lap is None else lap + term
                self.matrix = (-self.kin * lap + sparse.diags(self.U.ravel())).tocsc()
        if not np.all(np.isfinite(self.U)):
            raise ConfigError("potential is not finite on the grid")

    @property
    def size(self) -> int:
        return self.U.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.tridiagonal:
            y = self.diag * x
            y[:-1] += self.off * x[1:]
            y[1:] += self.off * x[:-1]
            return y
        return self.matrix @ x

    def factor(self, shift: float, scale: float = 1.0):
        """Solver for (I / scale + H - shift) x = b; scale = inf gives H - shift."""
        extra = 0.0 if math.isinf(scale) else 1.0 / scale
        if self.tridiagonal:
            d = self.diag - shift + extra
            dl, dd, du, du2, ipiv, info = lapack.dgttrf(self.off, d, self.off)
            if info != 0:
                raise NumericalError(f"tridiagonal factorization failed (info={info})")

            def solve(b):
                x, info2 = lapack.dgttrs(dl, dd, du, du2, ipiv, b)
                if info2 != 0:
                    raise NumericalError(f"tridiagonal solve failed (info={info2})")
                return x

            return solve
        lu = splu((self.matrix + sparse.identity(self.size, format="csc") * (extra - shift)).tocsc())
        return lu.solve

    def to_grid(self, x: np.ndarray) -> np.ndarray:
        """Unknowns back to nodal phi values."""
        if isinstance(self.grid, RadialGrid):
            return x / self.grid.r
        out = np.zeros(self.grid.shape)
        out[self.inner] = x.reshape(self.U.shape)
        return out


def _rayleigh(H: _Hamiltonian, x: np.ndarray) -> tuple[float, float]:
    hx = H.apply(x)
    xx = float(x @ x)
    e = float(x @ hx) / xx
    res = float(np.linalg.norm(hx - e * x) / math.sqrt(xx))
    return e, res


def _inverse_iteration(H: _Hamiltonian, x: np.ndarray, shift: float, tol: float, max_iter: int):
    solve = H.factor(shift, math.inf)
    e, res = _rayleigh(H, x)
    for it in range(1, max_iter + 1):
        x = solve(x)
        x /= np.linalg.norm(x)
        e, res = _rayleigh(H, x)
        if res < tol:
            return x, e, res, it
        # keep the shift below the ground level: the nearest eigenvalue lies within res of e
        if res < 1e-2 * max(abs(e - shift), 1e-300):
            new_shift = e - 2.0 * res
            if new_shift > shift:
                shift = new_shift
                solve = H.factor(shift, math.inf)
    return x, e, res, max_iter


def _imaginary_time(H: _Hamiltonian, x: np.ndarray, shift: float, tol: float, max_iter: int, dtau: float | None):
    e, res = _rayleigh(H, x)
    if dtau is None:
        dtau = 10.0 / max(abs(e - shift), 1e-12)
    solve = H.factor(shift, dtau)
    for it in range(1, max_iter + 1):
        # backward Euler step of d x / d tau = -(H - shift) x
        x = solve(x / dtau)
        x /= np.linalg.norm(x)
        if it % 10 == 0 or it == max_iter:
            e, res = _rayleigh(H, x)
            if res < tol:
                return x, e, res, it
    e, res = _rayleigh(H, x)
    return x, e, res, max_iter


def _potential_values(U, grid: Grid) -> tuple[np.ndarray, float]:
    if isinstance(U, Potential):
        return U.on_grid(grid).values, U.continuum
    vals = np.asarray(U.values if isinstance(U, ScalarField) else U, dtype=float)
    # without a declared limit, the largest boundary value stands in for the continuum edge
    if isinstance(grid, RadialGrid):
        edge = float(vals[-1])
    else:
        faces = [np.take(vals, [0, -1], axis=k) for k in range(vals.ndim)]
        edge = float(min(f.min() for f in faces))
    return vals, edge


def ground_state(
    U,
    m: float,
    sigma: float,
    grid: Grid,
    mu: int = -1,
    method: str = "inverse",
    tol: float = 1e-12,
    max_iter: int = 20_000,
    dtau: float | None = None,
) -> GroundState:
    """Lowest eigenpair of -(m sigma^4 / 2) lap + U on ``grid``.

    ``method`` is "inverse" (inverse iteration with Rayleigh shifts, falling
    back to imaginary time if it stalls) or "imaginary-time".  ``tol`` bounds
    the eigen-residual relative to max |U| on the grid, so
    the result does not depend on the unit system.
    """
    if not (m > 0 and sigma > 0):
        raise ConfigError("m and sigma must be positive")
    vals, edge = _potential_values(U, grid)
    if not np.min(vals) < edge:
        raise NumericalError(f"no bound state: the potential never drops below the continuum edge {edge:.6g}")
    H = _Hamiltonian(grid, vals, m, sigma)
    shift = float(np.min(H.U))
    x0 = np.ones(H.size)
    tol = tol * max(float(np.max(np.abs(H.U))), 1e-300)
    used = method
    if method == "inverse":
        x, e, res, it = _inverse_iteration(H, x0, shift, tol, max_iter)
        if res >= tol:
            used = "imaginary-time"
            x, e, res, it = _imaginary_time(H, x, shift, tol, 50 * max_iter, dtau)
    elif method == "imaginary-time":
        x, e, res, it = _imaginary_time(H, x0, shift, tol, 50 * max_iter, dtau)
    else:
        raise ConfigError(f"unknown eigensolver {method!r}")
    if res >= tol:
        raise NumericalError(f"ground state did not converge after {it} iterations", residual=res)
    if not e < edge:
        raise NumericalError(f"no bound state: E0 = {e:.6g} is not below the continuum edge {edge:.6g}", residual=res)
    phi = H.to_grid(x)
    if np.sum(phi) < 0:
        phi = -phi
    psi = WaveFunction(grid, phi.astype(complex), -mu * m * sigma ** 2, m, sigma, mu).normalized()
    return GroundState(psi, e, res, it, used)


def rayleigh_quotient(U, m: float, sigma: float, grid: Grid, trial: np.ndarray) -> float:
    """Energy of a trial nodal field under the same discretization as the solver."""
    vals, _ = _potential_values(U, grid)
    H = _Hamiltonian(grid, vals, m, sigma)
    t = np.asarray(trial, dtype=float)
    x = t * grid.r if isinstance(grid, RadialGrid) else t[H.inner].ravel()
    return _rayleigh(H, x)[0]


# ---------------------------------------------------------------- conversions

def density_exponent(C: float, m: float, sigma: float, mu: int) -> float:
    """p = |psi|^(2 k) with k = -C / (mu m sigma^2); k = 1 in the linear case."""
    return -C / (mu * m * sigma ** 2)


def density_from_wavefunction(wf: WaveFunction) -> ScalarField:
    k = density_exponent(wf.C, wf.m, wf.sigma, wf.mu)
    return ScalarField(wf.grid, np.abs(wf.psi) ** (2.0 * k)).normalized()


def _unwrapped_phase(psi: np.ndarray, valid: np.ndarray) -> np.ndarray:
    ph = np.angle(np.where(valid, psi, 1.0))
    for axis in range(ph.ndim):
        ph = np.unwrap(ph, axis=axis)
    return np.where(valid, ph, np.nan)


def action_from_wavefunction(wf: WaveFunction, floor: float = DENSITY_FLOOR, reference=None) -> ActionPair:
    """Split A = -i C ln psi into S = Re A and R = mu Im A.

    The phase is unwrapped along grid lines and S is pinned to zero at the
    ``reference`` node (default: the first node).  Nodes with |psi|^2 below
    ``floor`` times its maximum are masked.
    """
    mod = np.abs(wf.psi)
    valid = mod ** 2 > floor * np.max(mod ** 2)
    phase = _unwrapped_phase(wf.psi, valid)
    S = wf.C * phase
    ref = reference if reference is not None else tuple(0 for _ in wf.grid.shape)
    S = S - S[ref]
    R = np.where(valid, -wf.mu * wf.C * np.log(np.where(valid, mod, 1.0)), np.nan)
    return ActionPair(ScalarField(wf.grid, S), ScalarField(wf.grid, R))


def wavefunction_from_action(S: ScalarField, p: ScalarField, C: float, m: float, sigma: float, mu: int) -> WaveFunction:
    """psi = exp(i (S + i mu R) / C) with R = (m sigma^2 / 2) ln p."""
    R = 0.5 * m * sigma ** 2 * np.log(p.values)
    psi = np.exp(1j * (S.values + 1j * mu * R) / C)
    return WaveFunction(S.grid, psi, C, m, sigma, mu)


def madelung(rho: ScalarField, theta: ScalarField, eps: float) -> ScalarField:
    """psi = sqrt(rho) exp(i theta / eps)."""
    if eps == 0:
        raise ConfigError("eps must be non-zero")
    return ScalarField(rho.grid, np.sqrt(rho.values) * np.exp(1j * theta.values / eps))


def inverse_madelung(psi: ScalarField, eps: float, floor: float = 0.0, unwrap: bool = False) -> tuple[ScalarField, ScalarField]:
    """(rho, theta) with theta known modulo 2 pi eps (or unwrapped along grid lines)."""
    rho = np.abs(psi.values) ** 2
    valid = rho > floor * np.max(rho)
    phase = _unwrapped_phase(psi.values, valid) if unwrap else np.where(valid, np.angle(psi.values), np.nan)
    return ScalarField(psi.grid, rho), ScalarField(psi.grid, eps * phase)


# ---------------------------------------------------------------- nonlinear equation

def nonlinear_coefficient(C: float, m: float, sigma: float, mu: int) -> float:
    """C (mu m sigma^2 + C) / (2 m); zero exactly when C = -mu m sigma^2."""
    return C * (mu * m * sigma ** 2 + C) / (2.0 * m)


def _complex_grad_sq(f: ScalarField) -> np.ndarray:
    g = gradient(ScalarField(f.grid, f.values.real)).values + 1j * gradient(ScalarField(f.grid, f.values.imag)).values
    return np.sum(g * g, axis=-1)


def _complex_lap(f: ScalarField) -> np.ndarray:
    return laplacian(ScalarField(f.grid, f.values.real)).values + 1j * laplacian(ScalarField(f.grid, f.values.imag)).values


@dataclass(frozen=True)
class NonlinearResidual:
    field: ScalarField
    l2: float
    C: float


def nonlinear_residual(wf: WaveFunction, U, energy: float, C: float | None = None, floor: float = DENSITY_FLOOR) -> NonlinearResidual:
    """Residual of the stationary nonlinear equation for the state carried by ``wf``.

    The state (p, S) is re-expressed as psi_C = p^(-mu m sigma^2 / 2C) e^(i S / C)
    and extended in time as psi_C e^(-i E t / C), so that i C d/dt psi_C = E psi_C.
    The field returned is

        E psi - mu (sigma^2 C / 2) lap psi + coef (grad psi . grad psi) / psi - U psi

    for unit-norm psi_C; ``l2`` is its grid L2 norm.
    """
    C = wf.C if C is None else C
    if C == 0:
        raise ConfigError("C must be non-zero")
    if C == wf.C:
        psi = wf.normalized()
    else:
        pair = action_from_wavefunction(wf, floor)
        p = density_from_wavefunction(wf)
        psi = wavefunction_from_action(pair.S, p, C, wf.m, wf.sigma, wf.mu).normalized()
    f = psi.field()
    vals, _ = _potential_values(U, wf.grid)
    coef = nonlinear_coefficient(C, wf.m, wf.sigma, wf.mu)
    with np.errstate(invalid="ignore", divide="ignore"):
        nonlin = coef * _complex_grad_sq(f) / f.values if coef != 0 else 0.0
    res = energy * f.values - wf.mu * 0.5 * wf.sigma ** 2 * C * _complex_lap(f) + nonlin - vals * f.values
    l2 = float(np.sqrt(wf.grid.integrate(np.abs(res) ** 2)))
    return NonlinearResidual(ScalarField(wf.grid, res), l2, C)

"""Bootstrap bands for Monte Carlo means.

Paths are split into contiguous groups; group means are independent, so
resampling groups gives a valid band for the overall mean at a cost that
does not grow with the number of paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng


def group_means(per_path: np.ndarray, n_groups: int) -> np.ndarray:
    """Means of ``per_path`` over ``n_groups`` contiguous blocks along axis 0."""
    n = per_path.shape[0]
    g = max(1, min(n_groups, n))
    edges = np.linspace(0, n, g + 1).astype(np.int64)
    return np.stack([per_path[edges[i] : edges[i + 1]].mean(axis=0) for i in range(g)])


def _resample_indices(n_items: int, n_boot: int, seed: int) -> np.ndarray:
    idx = np.empty((n_boot, n_items), dtype=np.int64)
    for b in range(n_boot):
        u = rng.uniforms(seed, b, (n_items + 3) // 4, stream=rng.STREAM_BOOTSTRAP).reshape(-1)[:n_items]
        idx[b] = np.minimum((u * n_items).astype(np.int64), n_items - 1)
    return idx


@dataclass(frozen=True)
class Band:
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float

    def contains(self, value=0.0) -> bool:
        return bool(np.all((self.lower <= value) & (value <= self.upper)))


def bootstrap_mean(groups: np.ndarray, n_boot: int = 400, level: float = 0.99, seed: int = 0) -> Band:
    """Percentile band for the mean of group values (works elementwise on trailing axes).

    Complex inputs get separate bands for real and imaginary parts, packed
    back into complex lower and upper arrays.
    """
    if np.iscomplexobj(groups):
        re = bootstrap_mean(groups.real, n_boot, level, seed)
        im = bootstrap_mean(groups.imag, n_boot, level, seed)
        return Band(re.estimate + 1j * im.estimate, re.lower + 1j * im.lower, re.upper + 1j * im.upper, level)
    idx = _resample_indices(groups.shape[0], n_boot, seed)
    boots = np.stack([groups[i].mean(axis=0) for i in idx])
    a = 0.5 * (1.0 - level)
    lo, hi = np.quantile(boots, [a, 1.0 - a], axis=0)
    return Band(groups.mean(axis=0), lo, hi, level)


def contains_zero(band: Band) -> bool:
    if np.iscomplexobj(band.estimate):
        re = (band.lower.real <= 0) & (0 <= band.upper.real)
        im = (band.lower.imag <= 0) & (0 <= band.upper.imag)
        return bool(np.all(re & im))
    return band.contains(0.0)


@dataclass(frozen=True)
class SupBand:
    """Simultaneous band over nodes: estimate +- crit * se."""

    estimate: np.ndarray
    se: np.ndarray
    crit: float
    sup_t: float
    level: float

    @property
    def contains_zero(self) -> bool:
        return bool(self.sup_t <= self.crit)


def sup_t_band(groups: np.ndarray, n_boot: int = 400, level: float = 0.99, seed: int = 0) -> SupBand:
    """Bootstrap critical value for max |mean| / se over the valid nodes of a field."""
    valid = np.all(np.isfinite(groups), axis=0)
    g = groups[:, valid]
    est = g.mean(axis=0)
    se = g.std(axis=0, ddof=1) / np.sqrt(g.shape[0])
    se = np.where(se > 0, se, np.inf)
    idx = _resample_indices(g.shape[0], n_boot, seed)
    stats = np.array([np.max(np.abs(g[i].mean(axis=0) - est) / se) for i in idx])
    crit = float(np.quantile(stats, level))
    sup_t = float(np.max(np.abs(est) / se)) if est.size else 0.0
    full_est = np.full(groups.shape[1:], np.nan)
    full_se = np.full(groups.shape[1:], np.nan)
    full_est[valid] = est
    full_se[valid] = se
    return SupBand(full_est, full_se, crit, sup_t, level)

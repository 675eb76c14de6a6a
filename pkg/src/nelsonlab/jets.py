"""Forward-mode differentiation carrying value, gradient and Laplacian.

A :class:`Jet` holds f, grad f and Laplacian f at a set of points.  Sums,
products, quotients and smooth scalar functions of jets are again jets, by

    grad(ab) = a grad b + b grad a
    lap(ab)  = a lap b + b lap a + 2 grad a . grad b
    lap(h(f)) = h''(f) |grad f|^2 + h'(f) lap f

which is all that is needed to evaluate analytic test functions, potentials
and densities exactly alongside their finite-difference counterparts.

Gradients are stored with a trailing component axis.  On radial grids the
component axis has length one and holds the radial derivative, while the
Laplacian includes the (d-1)/r f' term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Jet:
    val: np.ndarray
    grad: np.ndarray
    lap: np.ndarray

    @classmethod
    def constant(cls, value, like: Jet) -> Jet:
        val = np.broadcast_to(np.asarray(value, dtype=np.result_type(value, like.val)), like.val.shape).copy()
        return cls(val, np.zeros_like(like.grad, dtype=val.dtype), np.zeros_like(like.lap, dtype=val.dtype))

    def _lift(self, other) -> Jet:
        return other if isinstance(other, Jet) else Jet.constant(other, self)

    def __add__(self, other) -> Jet:
        o = self._lift(other)
        return Jet(self.val + o.val, self.grad + o.grad, self.lap + o.lap)

    __radd__ = __add__

    def __neg__(self) -> Jet:
        return Jet(-self.val, -self.grad, -self.lap)

    def __sub__(self, other) -> Jet:
        return self + (-self._lift(other))

    def __rsub__(self, other) -> Jet:
        return self._lift(other) - self

    def __mul__(self, other) -> Jet:
        if not isinstance(other, Jet):
            # plain numbers and arrays act as constants
            c = np.asarray(other)
            return Jet(self.val * c, self.grad * (c[..., None] if c.ndim else c), self.lap * c)
        a, b = self, other
        cross = np.sum(a.grad * b.grad, axis=-1)
        return Jet(
            a.val * b.val,
            a.val[..., None] * b.grad + b.val[..., None] * a.grad,
            a.val * b.lap + b.val * a.lap + 2.0 * cross,
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> Jet:
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> Jet:
        return self.reciprocal() * other

    def __pow__(self, p: float) -> Jet:
        v = self.val
        return self.compose(v ** p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def reciprocal(self) -> Jet:
        v = self.val
        return self.compose(1.0 / v, -1.0 / v ** 2, 2.0 / v ** 3)

    def compose(self, h, dh, d2h) -> Jet:
        """Chain rule for a scalar function with known h, h', h'' at ``self.val``."""
        sq = np.sum(self.grad * self.grad, axis=-1)
        return Jet(h, dh[..., None] * self.grad, d2h * sq + dh * self.lap)

    def dot_grad(self, other: Jet) -> np.ndarray:
        return np.sum(self.grad * other.grad, axis=-1)

    @property
    def grad_sq(self) -> np.ndarray:
        return np.sum(self.grad * self.grad, axis=-1)


def exp(j: Jet) -> Jet:
    e = np.exp(j.val)
    return j.compose(e, e, e)


def log(j: Jet) -> Jet:
    v = j.val
    return j.compose(np.log(v), 1.0 / v, -1.0 / v ** 2)


def sqrt(j: Jet) -> Jet:
    s = np.sqrt(j.val)
    return j.compose(s, 0.5 / s, -0.25 / s ** 3)


def coordinates(points: np.ndarray) -> list[Jet]:
    """Cartesian coordinate functions x_k at ``points`` of shape (n, d)."""
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    out = []
    for k in range(d):
        grad = np.zeros((n, d))
        grad[:, k] = 1.0
        out.append(Jet(points[:, k].copy(), grad, np.zeros(n)))
    return out


def radius(r: np.ndarray, dim: int) -> Jet:
    """The radial coordinate as a jet on a radial grid in ``dim`` dimensions."""
    r = np.asarray(r, dtype=float)
    return Jet(r.copy(), np.ones((r.size, 1)), (dim - 1) / r)


def norm(coords: list[Jet]) -> Jet:
    return sqrt(sum((c * c for c in coords[1:]), coords[0] * coords[0]))

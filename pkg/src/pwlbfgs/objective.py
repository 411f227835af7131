"""Two-piece convex piecewise-linear objectives ``|v1^T x| + v2^T x``.

Three variants share one evaluation rule:

* ``canonical``: ``|x1| + x2 + ... + xn`` (``v1 = e1``, ``v2 = (0, 1, ..., 1)``),
* ``general``: arbitrary linearly independent ``v1, v2``,
* ``beta``: ``|x1| + beta * x1``, the linearly dependent case.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Literal

import gmpy2
import numpy as np
from gmpy2 import mpfr

from pwlbfgs.numerics import dot

Kind = Literal["canonical", "general", "beta"]


class NondifferentiablePoint(ValueError):
    """The point lies exactly on the kink hyperplane ``v1^T x = 0``."""


class LinearlyDependent(ValueError):
    """``v2`` is a multiple of ``v1``; ``beta`` holds the factor."""

    def __init__(self, beta):
        super().__init__(f"v2 = {beta} * v1")
        self.beta = beta


@dataclass(frozen=True)
class RayGeometry:
    """Shape of ``alpha -> f(x + alpha p)`` for ``alpha >= 0``.

    ``g0`` is the slope before the kink, ``slope_inf`` the slope after it (or
    ``g0`` again when the ray never reaches the kink).
    """

    g0: mpfr
    slope_inf: mpfr
    alpha_kink: mpfr | None


@dataclass(frozen=True, eq=False)
class PwlObjective:
    kind: Kind
    n: int
    v1: np.ndarray | None = None
    v2: np.ndarray | None = None
    beta: mpfr | None = None

    # The kink coordinate v1^T x; e1 for canonical and beta.
    def kink_value(self, x: np.ndarray):
        self._check_dim(x)
        if self.kind == "general":
            return dot(self.v1, x)
        return x[0]

    def linear_value(self, x: np.ndarray):
        if self.kind == "canonical":
            return sum(x[1:], mpfr(0))
        if self.kind == "beta":
            return self.beta * x[0]
        return dot(self.v2, x)

    def __call__(self, x: np.ndarray):
        return abs(self.kink_value(x)) + self.linear_value(x)

    def eval(self, x: np.ndarray):
        return self(x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        u = self.kink_value(x)
        if u == 0:
            raise NondifferentiablePoint("gradient undefined on the kink")
        return self._grad_for_sign(1 if u > 0 else -1)

    def _grad_for_sign(self, sgn: int) -> np.ndarray:
        if self.kind == "canonical":
            g = np.array([mpfr(1) for _ in range(self.n)], dtype=object)
            g[0] = mpfr(sgn)
            return g
        if self.kind == "beta":
            g = np.array([mpfr(0) for _ in range(self.n)], dtype=object)
            g[0] = sgn + self.beta
            return g
        return sgn * self.v1 + self.v2

    def slope(self, x: np.ndarray, p: np.ndarray):
        """Right derivative of ``alpha -> f(x + alpha p)`` at ``alpha = 0``.

        Defined on the kink too (uses the side ``p`` points into).
        """
        u = self.kink_value(x)
        if u == 0:
            up = self.kink_value(p)
            return abs(up) + self.linear_value(p)
        return dot(self._grad_for_sign(1 if u > 0 else -1), p)

    def ray_geometry(self, x: np.ndarray, p: np.ndarray) -> RayGeometry:
        g0 = dot(self.grad(x), p)
        u, up = self.kink_value(x), self.kink_value(p)
        alpha_kink = None
        if up != 0:
            t = -u / up
            if t > 0:
                alpha_kink = t
        if alpha_kink is None:
            slope_inf = g0
        else:
            slope_inf = abs(up) + self.linear_value(p)
        return RayGeometry(g0=g0, slope_inf=slope_inf, alpha_kink=alpha_kink)

    def _check_dim(self, x):
        if np.shape(x) != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {np.shape(x)}")


def canonical(n: int) -> PwlObjective:
    if n < 2:
        raise ValueError("n must be >= 2")
    return PwlObjective("canonical", n)


def beta_family(n: int, beta) -> PwlObjective:
    if n < 2:
        raise ValueError("n must be >= 2")
    return PwlObjective("beta", n, beta=mpfr(beta))


def independence_minor(v1: np.ndarray, v2: np.ndarray):
    """Largest ``|2x2 minor|`` of the stack ``[v1; v2]``; zero iff dependent."""
    best = mpfr(0)
    for i, j in combinations(range(len(v1)), 2):
        m = abs(v1[i] * v2[j] - v1[j] * v2[i])
        if m > best:
            best = m
    return best


def make_general(v1: np.ndarray, v2: np.ndarray) -> PwlObjective:
    """``|v1^T x| + v2^T x``; raises :class:`LinearlyDependent` when ``v2 = c v1``."""
    v1 = np.asarray(v1, dtype=object)
    v2 = np.asarray(v2, dtype=object)
    if v1.shape != v2.shape or v1.ndim != 1 or len(v1) < 2:
        raise ValueError("v1 and v2 must be vectors of equal length >= 2")
    if all(v == 0 for v in v1) or all(v == 0 for v in v2):
        raise ValueError("v1 and v2 must be nonzero")
    if independence_minor(v1, v2) == 0:
        i = max(range(len(v1)), key=lambda k: abs(v1[k]))
        raise LinearlyDependent(v2[i] / v1[i])
    return PwlObjective("general", len(v1), v1=v1.copy(), v2=v2.copy())


def as_general(obj: PwlObjective) -> PwlObjective:
    """The canonical objective written with explicit ``v1, v2``."""
    if obj.kind != "canonical":
        raise ValueError("only the canonical objective has an independent (v1, v2) form")
    v1 = np.array([mpfr(1 if i == 0 else 0) for i in range(obj.n)], dtype=object)
    v2 = np.array([mpfr(0 if i == 0 else 1) for i in range(obj.n)], dtype=object)
    return make_general(v1, v2)


def sign(v) -> int:
    return int(gmpy2.sign(v))

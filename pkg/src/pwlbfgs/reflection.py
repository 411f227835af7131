"""Reflected coordinates and the compact scalar state of a canonical run.

With ``V = diag(-1, 1, ..., 1)``, the reflected iterate ``V^k x_k`` keeps a
positive first coordinate, and the gradient in reflected coordinates is always
``eta = (1, ..., 1)``. The run is then summarized by

    ee = <eta, eta>_k,  ez = <eta, zeta>_k,  zz = <zeta, zeta>_k,
    D = ee*zz - ez**2,  zx = zeta^T x~_k,

with ``<u, v>_k = u^T H~_k v`` and ``zeta = e1``. These five numbers evolve by
closed-form recursions driven only by the step size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from gmpy2 import mpfr

from pwlbfgs.numerics import current_tolerance


class InvalidState(ValueError):
    pass


def reflect(x: np.ndarray, H: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """``(V^k x, V^k H V^k)``.

    Call inside the run's context: gmpy2 negation rounds to the active precision.
    """
    if k % 2 == 0:
        return x.copy(), H.copy()
    xr = x.copy()
    xr[0] = -xr[0]
    Hr = H.copy()
    Hr[0, 1:] = -Hr[0, 1:]
    Hr[1:, 0] = -Hr[1:, 0]
    return xr, Hr


@dataclass(frozen=True)
class ScalarState:
    ee: mpfr
    ez: mpfr
    zz: mpfr
    D: mpfr
    zx: mpfr
    k: int = 0

    @property
    def D_recomputed(self) -> mpfr:
        return self.ee * self.zz - self.ez**2

    def as_tuple(self):
        return (self.ee, self.ez, self.zz, self.D, self.zx)


FIELDS = ("ee", "ez", "zz", "D", "zx")


def scalar_state(xr: np.ndarray, Hr: np.ndarray, k: int = 0) -> ScalarState:
    """Evaluate the quadratic forms directly from the reflected matrix."""
    eta_col = Hr.sum(axis=1)  # H~ eta
    ee = sum(eta_col, mpfr(0))
    ez = eta_col[0]
    zz = Hr[0, 0]
    return ScalarState(ee=ee, ez=ez, zz=zz, D=ee * zz - ez * ez, zx=xr[0], k=k)


def advance(s: ScalarState, alpha) -> ScalarState:
    """One step of the scalar recursions.

    ``D`` is advanced by its own product rule, not recomputed; compare with
    :attr:`ScalarState.D_recomputed` to detect cancellation.
    """
    ee, ez, D, zx = s.ee, s.ez, s.D, s.zx
    if not ez > 0:
        raise InvalidState(f"<eta,zeta>_{s.k} = {ez} is not positive")
    if not alpha > 0:
        raise InvalidState(f"step {alpha} is not positive")
    d = ee - 2 * ez
    nxt = ScalarState(
        ee=(D / (ez * ez)) * ee + (alpha / 2) * (d * d) / ez,
        ez=alpha * (ez - ee / 2),
        zz=(alpha / 2) * ez,
        D=(alpha / 2) * (ee / ez) * D,
        zx=-zx + alpha * ez,
        k=s.k + 1,
    )
    # D' = ee' zz' - ez'^2 must survive the step; scale by the product terms
    scale = max(abs(nxt.ee * nxt.zz), nxt.ez * nxt.ez)
    if abs(nxt.D - nxt.D_recomputed) > current_tolerance() * scale:
        raise InvalidState(
            f"D recursion {nxt.D} disagrees with ee*zz - ez^2 = {nxt.D_recomputed}"
        )
    return nxt


@dataclass(frozen=True)
class DerivedQuantities:
    """Normalized quantities of a scalar state.

    ``alpha_star`` is ``None`` when ``delta == 0``; ``a`` is ``None`` until a
    step is supplied. ``a`` is computed as ``delta * ez**2 * alpha / D``, which
    equals ``alpha / alpha_star`` whenever the latter is defined.
    """

    delta: mpfr
    psi: mpfr
    gamma: mpfr
    alpha_star: mpfr | None
    a: mpfr | None


def derived(s: ScalarState, alpha=None) -> DerivedQuantities:
    ee, ez, D, zx = s.ee, s.ez, s.D, s.zx
    if not ez > 0:
        raise InvalidState(f"<eta,zeta>_{s.k} = {ez} is not positive")
    delta = 1 - ee / (2 * ez)
    alpha_star = (D / (ez * ez)) / delta if delta != 0 else None
    a = delta * ez * ez * alpha / D if alpha is not None else None
    return DerivedQuantities(
        delta=delta,
        psi=ez * zx / D,
        gamma=zx / ez,
        alpha_star=alpha_star,
        a=a,
    )


def relative_deviation(a: ScalarState, b: ScalarState) -> mpfr:
    """Largest componentwise ``|a_i - b_i| / |b_i|`` over the five fields."""
    worst = mpfr(0)
    for f in FIELDS:
        x, y = getattr(a, f), getattr(b, f)
        if x == y:
            continue
        dev = abs(x - y) / abs(y) if y != 0 else abs(x - y)
        if dev > worst:
            worst = dev
    return worst

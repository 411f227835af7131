"""Weak Wolfe (Armijo-Wolfe) step selection on piecewise-linear rays.

Conditions, with ``g0 = grad(x)^T p < 0``:

* sufficient decrease: ``f(x + a p) <= f(x) + c1 * a * g0``
* curvature: ``grad(x + a p)^T p > c2 * g0`` (strict, see :func:`curvature_ok`)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import gmpy2
import numpy as np
from gmpy2 import mpfr

from pwlbfgs.objective import PwlObjective

MODES = ("analytic", "emulate-paper")


class Cause(str, enum.Enum):
    UNBOUNDED_DIRECTION = "UnboundedDirection"
    TRIAL_CAP_EXCEEDED = "TrialCapExceeded"


class NotDescent(ValueError):
    pass


class EmptyInterval(ValueError):
    pass


class InevitableTermination(ValueError):
    """``<eta, zeta>_k <= 0``: no step can satisfy the curvature condition."""


def as_fraction(v) -> Fraction:
    """Exact rational for a parameter; floats go through their shortest repr."""
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(v)


@dataclass(frozen=True)
class LineSearchParams:
    """Line-search constants, stored as exact rationals."""

    c1: Fraction = Fraction(1, 10000)
    c2: Fraction = Fraction(1, 2)
    max_trials: int = 1000
    initial_step: Fraction = Fraction(1)
    allow_degenerate: bool = False

    def __post_init__(self):
        for name in ("c1", "c2", "initial_step"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        c1, c2 = self.c1, self.c2
        if self.max_trials < 1:
            raise ValueError("max_trials must be positive")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if (c1, c2) == (0, 1):
            if not self.allow_degenerate:
                raise ValueError(
                    "(c1, c2) = (0, 1) violates 0 < c1 < c2 < 1; "
                    "pass allow_degenerate=True (--allow-degenerate-params)"
                )
            return
        if not (0 < c1 < c2 < 1):
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={c1}, c2={c2}")

    @property
    def degenerate(self) -> bool:
        return (self.c1, self.c2) == (0, 1)

    def scalars(self):
        """``(c1, c2, initial_step)`` rounded into the active context."""
        return _to_mpfr(self.c1), _to_mpfr(self.c2), _to_mpfr(self.initial_step)


def _to_mpfr(v) -> mpfr:
    if isinstance(v, mpfr):
        return v
    v = as_fraction(v)
    return mpfr(v.numerator) / mpfr(v.denominator)


@dataclass(frozen=True)
class LineSearchOutcome:
    alpha: mpfr | None
    trials: int
    cause: Cause | None = None

    @property
    def accepted(self) -> bool:
        return self.alpha is not None


@dataclass(frozen=True)
class StepInterval:
    """Open interval ``(lower, upper)``; ``upper`` may be ``+inf``."""

    lower: mpfr
    upper: mpfr

    def __contains__(self, alpha) -> bool:
        return self.lower < alpha < self.upper

    @property
    def bounded(self) -> bool:
        return not gmpy2.is_infinite(self.upper)


def armijo_ok(obj: PwlObjective, x, p, alpha, f0, g0, c1) -> bool:
    return obj(x + alpha * p) <= f0 + c1 * alpha * g0


def curvature_ok(obj: PwlObjective, x, p, alpha, g0, c2) -> bool:
    """Strict curvature test using the right derivative at ``x + alpha p``.

    Strictness only matters at ``c2 = 1``, where the non-strict form would
    accept steps that never reach the kink (and give ``y = 0``).
    """
    return obj.slope(x + alpha * p, p) > c2 * g0


def is_acceptable(obj: PwlObjective, x, p, alpha, c1, c2) -> bool:
    """Both conditions, evaluated from scratch; the kink itself is never acceptable."""
    if not alpha > 0:
        return False
    xn = x + alpha * p
    if obj.kink_value(xn) == 0:
        return False
    f0 = obj(x)
    g0 = obj.grad(x) @ p
    return obj(xn) <= f0 + c1 * alpha * g0 and obj.grad(xn) @ p > c2 * g0


def analytic_infeasible(obj: PwlObjective, x, p, c2) -> bool:
    """True iff no step satisfies the curvature condition.

    The ray's slope is ``g0`` before the kink and ``slope_inf`` after it, so
    the condition is satisfiable iff ``slope_inf > c2 * g0``.
    """
    geo = obj.ray_geometry(x, p)
    if not geo.g0 < 0:
        raise NotDescent(f"g0 = {geo.g0} is not negative")
    return not geo.slope_inf > _to_mpfr(c2) * geo.g0


def assumption_guard(
    obj: PwlObjective,
    x,
    p,
    alpha,
    acceptable: Callable[[mpfr], bool],
    max_j: int | None = None,
):
    """Move ``alpha`` off the kink while keeping it acceptable.

    Tries ``alpha * (1 +- 2**-j)`` for ``j = 1, 2, ...``.
    """
    if obj.kink_value(x + alpha * p) != 0:
        return alpha
    if max_j is None:
        max_j = gmpy2.get_context().precision
    for j in range(1, max_j + 1):
        eps = gmpy2.mul_2exp(mpfr(1), -j)
        for cand in (alpha * (1 + eps), alpha * (1 - eps)):
            if obj.kink_value(x + cand * p) != 0 and acceptable(cand):
                return cand
    raise AssertionError("acceptable set around the kink is empty")


def bracketing_search(
    obj: PwlObjective,
    x,
    p,
    params: LineSearchParams,
    mode: str = "analytic",
    guard: bool = True,
) -> LineSearchOutcome:
    """Bisection/doubling weak Wolfe search.

    ``l = 0, u = inf, a = initial_step``; Armijo failure sets ``u = a`` and
    bisects, curvature failure sets ``l = a`` and doubles while ``u`` is
    infinite. In ``analytic`` mode an infeasible ray is reported as
    ``UnboundedDirection`` before any trial; in ``emulate-paper`` mode the
    search just runs into the trial cap.
    """
    if mode not in MODES:
        raise ValueError(f"unknown line-search mode {mode!r}")
    c1, c2, a = params.scalars()
    f0 = obj(x)
    g0 = obj.grad(x) @ p
    if not g0 < 0:
        raise NotDescent(f"g0 = {g0} is not negative")
    if mode == "analytic" and analytic_infeasible(obj, x, p, c2):
        return LineSearchOutcome(None, 0, Cause.UNBOUNDED_DIRECTION)

    lo = mpfr(0)
    hi = gmpy2.inf()
    for trial in range(1, params.max_trials + 1):
        if not armijo_ok(obj, x, p, a, f0, g0, c1):
            hi = a
            a = (lo + hi) / 2
        elif not curvature_ok(obj, x, p, a, g0, c2):
            lo = a
            a = 2 * a if gmpy2.is_infinite(hi) else (lo + hi) / 2
        else:
            if guard:
                a = assumption_guard(
                    obj, x, p, a, lambda t: is_acceptable(obj, x, p, t, c1, c2)
                )
            return LineSearchOutcome(a, trial)
    return LineSearchOutcome(None, params.max_trials, Cause.TRIAL_CAP_EXCEEDED)


def wolfe_interval(state, params: LineSearchParams) -> StepInterval | None:
    """Acceptable steps in reflected coordinates, or ``None`` when empty.

    ``state`` needs ``ee``, ``ez``, ``zx`` (see :class:`pwlbfgs.reflection.ScalarState`).
    Lower end from the curvature condition (the step must cross the kink),
    upper end from sufficient decrease.
    """
    c1, c2, _ = params.scalars()
    ee, ez, zx = state.ee, state.ez, state.zx
    if not ez > 0:
        raise InevitableTermination(f"<eta,zeta> = {ez} <= 0")
    if not 2 * ez > (1 - c2) * ee:
        return None
    lower = zx / ez
    denom = 2 * ez - (1 - c1) * ee
    upper = 2 * zx / denom if denom > 0 else gmpy2.inf()
    if not lower < upper:
        return None
    return StepInterval(lower, upper)


def oracle_sample(interval: StepInterval | None, rng: np.random.Generator) -> mpfr:
    """Random step strictly inside ``interval``.

    Finite intervals are sampled uniformly; an infinite upper end gives
    ``lower * (1 + E)`` with ``E ~ Exp(1)``.
    """
    if interval is None:
        raise EmptyInterval("no acceptable step")
    while True:
        if interval.bounded:
            u = rng.random()
            a = interval.lower + mpfr(u) * (interval.upper - interval.lower)
        else:
            a = interval.lower * (1 + mpfr(rng.exponential()))
        if a in interval:
            return a

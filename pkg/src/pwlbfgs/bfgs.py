"""Unmodified BFGS with a weak Wolfe line search, recording a full trace."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from gmpy2 import mpfr

from pwlbfgs import reflection
from pwlbfgs.linesearch import (
    Cause,
    LineSearchParams,
    bracketing_search,
    is_acceptable,
)
from pwlbfgs.numerics import (
    PrecisionContext,
    current_tolerance,
    is_exactly_symmetric,
    spd_check,
    symmetrize,
)
from pwlbfgs.objective import NondifferentiablePoint, PwlObjective

log = logging.getLogger(__name__)

MAX_ITERATIONS = 10_000


class CurvatureViolation(ArithmeticError):
    """``s^T y <= 0``; only possible if the line search accepted a bad step."""


class IterationCapExceeded(RuntimeError):
    pass


class RecursionDivergence(ArithmeticError):
    """The scalar recursions disagree with the matrix iteration."""


def direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    return -(H @ g)


def update_H(H: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """BFGS inverse update ``(I - r s y^T) H (I - r y s^T) + r s s^T``, ``r = 1/(s^T y)``.

    Expanded as ``H + (r + r^2 y^T H y) s s^T - r (H y s^T + s y^T H)``; the
    lower triangle is copied from the upper one.
    """
    sy = s @ y
    if not sy > 0:
        raise CurvatureViolation(f"s^T y = {sy} is not positive")
    rho = 1 / sy
    Hy = H @ y
    coef = rho + rho * rho * (y @ Hy)
    outer = np.multiply.outer
    Hn = H + outer(coef * s, s) - outer(rho * Hy, s) - outer(s, rho * Hy)
    return symmetrize(Hn)


@dataclass
class IterationRow:
    k: int
    x: np.ndarray
    f: mpfr
    g: np.ndarray
    p: np.ndarray
    alpha: mpfr | None
    trials: int
    H: np.ndarray | None = None
    state: reflection.ScalarState | None = None
    advanced: reflection.ScalarState | None = None  # recursion prediction of this row's state
    recursion_deviation: mpfr | None = None
    spd: bool | None = None
    replayed: bool = False
    replay_acceptable: bool | None = None


@dataclass(frozen=True)
class Termination:
    cause: Cause
    at_iteration: int

    @property
    def iterations(self) -> int:
        """Iterations executed, counting the one whose line search failed."""
        return self.at_iteration + 1


@dataclass
class RunRecord:
    rows: list[IterationRow]
    termination: Termination
    objective: PwlObjective
    params: LineSearchParams
    precision_bits: int
    mode: str
    seed: int | None = None
    parity: int = 0  # reflection exponent offset: x~_k = V^(k + parity) x_k
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.objective.n

    @property
    def K(self) -> int:
        """Last iteration whose line search succeeded (``-1`` if none)."""
        return self.termination.at_iteration - 1

    @property
    def tracked(self) -> bool:
        return bool(self.rows) and self.rows[0].state is not None

    def alphas(self) -> list:
        return [r.alpha for r in self.rows if r.alpha is not None]

    def config(self) -> dict:
        return {
            "n": self.n,
            "objective": self.objective.kind,
            "seed": self.seed,
            "c1": str(self.params.c1),
            "c2": str(self.params.c2),
            "max_trials": self.params.max_trials,
            "precision_bits": self.precision_bits,
            "ls_mode": self.mode,
        }


def run(
    obj: PwlObjective,
    x0: np.ndarray,
    H0: np.ndarray,
    params: LineSearchParams,
    ctx: PrecisionContext,
    *,
    mode: str = "analytic",
    replay: Sequence | None = None,
    track: bool | None = None,
    keep_matrices: bool = True,
    check_spd: bool = False,
    guard: bool = True,
    max_iterations: int = MAX_ITERATIONS,
    seed: int | None = None,
) -> RunRecord:
    """Run BFGS until the line search fails.

    ``replay`` injects step sizes for the first ``len(replay)`` iterations (each
    is still tested for acceptability and the verdict recorded); later
    iterations use the line search. ``track`` runs the reflected scalar state
    alongside the matrix iteration (canonical objective only, default on
    there) and aborts on disagreement.
    """
    if track is None:
        track = obj.kind == "canonical"
    if track and obj.kind != "canonical":
        raise ValueError("scalar tracking needs the canonical objective")
    with ctx:
        ctx.check(x0, H0)
        if H0.shape != (obj.n, obj.n) or x0.shape != (obj.n,):
            raise ValueError("x0/H0 dimensions do not match the objective")
        if not is_exactly_symmetric(H0):
            raise ValueError("H0 must be exactly symmetric")
        if obj.kink_value(x0) == 0:
            raise NondifferentiablePoint("x0 lies on the kink")
        c1, c2, _ = params.scalars()
        tol = current_tolerance()
        parity = 0 if obj.kink_value(x0) > 0 else 1

        rows: list[IterationRow] = []
        x, H = x0.copy(), H0.copy()
        g, f = obj.grad(x), obj(x)
        pending: reflection.ScalarState | None = None
        for k in range(max_iterations + 1):
            p = direction(H, g)
            row = IterationRow(k=k, x=x, f=f, g=g, p=p, alpha=None, trials=0)
            if keep_matrices:
                row.H = H
            if check_spd:
                row.spd = bool(spd_check(H))
            if track:
                row.state = reflection.scalar_state(*reflection.reflect(x, H, k + parity), k)
                if pending is not None:
                    row.advanced = pending
                    row.recursion_deviation = reflection.relative_deviation(pending, row.state)
                    if row.recursion_deviation > tol:
                        raise RecursionDivergence(
                            f"iteration {k}: recursion deviates by {row.recursion_deviation}"
                        )
            rows.append(row)

            if replay is not None and k < len(replay):
                alpha = replay[k]
                row.replayed = True
                row.replay_acceptable = is_acceptable(obj, x, p, alpha, c1, c2)
            else:
                out = bracketing_search(obj, x, p, params, mode=mode, guard=guard)
                row.trials = out.trials
                if not out.accepted:
                    term = Termination(out.cause, k)
                    break
                alpha = out.alpha
            row.alpha = alpha

            s = alpha * p
            x_new = x + s
            g_new = obj.grad(x_new)
            H = update_H(H, s, g_new - g)
            if track:
                pending = reflection.advance(row.state, alpha)
            x, g, f = x_new, g_new, obj(x_new)
        else:
            raise IterationCapExceeded(f"no termination after {max_iterations} iterations")

        log.debug("run terminated at k=%d (%s)", term.at_iteration, term.cause.value)
        return RunRecord(
            rows=rows,
            termination=term,
            objective=obj,
            params=params,
            precision_bits=ctx.mantissa_bits,
            mode=mode,
            seed=seed,
            parity=parity,
        )

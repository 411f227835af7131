"""Reduction of a general objective ``|v1^T x| + v2^T x`` to the canonical one.

Completing ``v1, v2`` to a basis ``v1, ..., vn`` and stacking

    A = [v1; v2 - v3; v3 - v4; ...; v_{n-1} - vn; vn]

gives ``f(A x) = |x1'| + (x2' + ... + xn') = |v1^T x| + v2^T x`` by
telescoping. BFGS runs on ``g`` from ``(x0, H0)`` and on ``f`` from
``(A x0, A H0 A^T)`` with equal step sizes then satisfy ``y_k = A x_k`` and
``G_k = A H_k A^T``, and accept exactly the same steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from gmpy2 import mpfr

from pwlbfgs import bfgs
from pwlbfgs.linesearch import LineSearchParams, is_acceptable
from pwlbfgs.numerics import (
    PrecisionContext,
    current_tolerance,
    gaussian_vector,
    rank,
    symmetrize,
    to_decimal,
)
from pwlbfgs.objective import PwlObjective, canonical, make_general


class RankDeficient(ValueError):
    pass


def extend_basis(v1: np.ndarray, v2: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
    """Random ``v3..vn`` completing ``v1, v2`` to a basis.

    Gaussian candidates are kept when they raise the (exact) rank of the stack.
    """
    n = len(v1)
    basis = [v1, v2]
    if rank(basis) < 2:
        raise RankDeficient("v1 and v2 are linearly dependent")
    extra: list[np.ndarray] = []
    for _ in range(100 * n):
        if len(basis) == n:
            return extra
        cand = gaussian_vector(n, rng)
        if rank(basis + [cand]) == len(basis) + 1:
            basis.append(cand)
            extra.append(cand)
    if len(basis) == n:
        return extra
    raise RuntimeError("basis extension did not converge")


@dataclass
class AffineReduction:
    A: np.ndarray
    basis: list[np.ndarray]
    objective: PwlObjective | None = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def transport_x(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def transport_H(self, H: np.ndarray) -> np.ndarray:
        return symmetrize(self.A @ H @ self.A.T)

    def identity_residual(self, x: np.ndarray):
        """``|f(Ax) - g(x)|`` relative to the size of the terms."""
        f = canonical(self.n)
        lhs, rhs = f(self.transport_x(x)), self.objective(x)
        scale = max(abs(lhs), abs(rhs), sum((abs(v) for v in x), mpfr(0)))
        return abs(lhs - rhs) / scale if scale != 0 else abs(lhs - rhs)


def build_transform(
    basis: list[np.ndarray],
    *,
    samples: int = 20,
    rng: np.random.Generator | None = None,
    tol=None,
) -> AffineReduction:
    """Stacked-difference matrix of a basis, with invertibility and the
    identity ``f(Ax) = |v1^T x| + v2^T x`` checked on ``samples`` random points."""
    n = len(basis)
    if n < 2 or any(len(v) != n for v in basis):
        raise ValueError("need n vectors of length n, n >= 2")
    if rank(basis) < n:
        raise RankDeficient("input vectors do not form a basis")
    rows = [basis[0]] + [basis[i] - basis[i + 1] for i in range(1, n - 1)] + [basis[-1]]
    A = np.array([list(r) for r in rows], dtype=object)
    if rank(list(A)) < n:
        raise RankDeficient("transform is singular at working precision")
    red = AffineReduction(A, list(basis), make_general(basis[0], basis[1]))
    if samples:
        rng = rng if rng is not None else np.random.default_rng(0)
        tol = current_tolerance() if tol is None else tol
        for _ in range(samples):
            x = gaussian_vector(n, rng)
            res = red.identity_residual(x)
            if res > tol:
                raise ArithmeticError(f"f(Ax) != g(x): relative residual {res}")
    return red


def relative_gap(M: np.ndarray, N: np.ndarray):
    """Normwise ``max|M - N| / max|N|`` (absolute if ``N`` vanishes)."""
    diff = max((abs(v) for v in (M - N).flat), default=mpfr(0))
    size = max((abs(v) for v in N.flat), default=mpfr(0))
    return diff / size if size != 0 else diff


@dataclass
class EquivalenceVerdict:
    ok: bool
    terminated_g: int
    terminated_f: int
    cause_g: str
    cause_f: str
    max_x_gap: mpfr
    max_H_gap: mpfr
    first_divergence: dict | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "terminated_g": self.terminated_g,
            "terminated_f": self.terminated_f,
            "cause_g": self.cause_g,
            "cause_f": self.cause_f,
            "max_x_gap": to_decimal(self.max_x_gap, 6),
            "max_H_gap": to_decimal(self.max_H_gap, 6),
            "first_divergence": self.first_divergence,
        }


def compare_runs(
    run_g: bfgs.RunRecord,
    run_f: bfgs.RunRecord,
    red: AffineReduction,
    tol,
) -> EquivalenceVerdict:
    """Check ``y_k = A x_k``, ``G_k = A H_k A^T`` and equal steps row by row."""
    first = None
    worst_x = worst_H = mpfr(0)
    c1, c2, _ = run_g.params.scalars()
    for rg, rf in zip(run_g.rows, run_f.rows):
        k = rg.k
        xg = relative_gap(rf.x, red.transport_x(rg.x))
        Hg = relative_gap(rf.H, red.transport_H(rg.H))
        worst_x, worst_H = max(worst_x, xg), max(worst_H, Hg)
        problem = None
        if xg > tol:
            problem = {"field": "x", "gap": to_decimal(xg, 6)}
        elif Hg > tol:
            problem = {"field": "H", "gap": to_decimal(Hg, 6)}
        elif (rg.alpha is None) != (rf.alpha is None) or (
            rg.alpha is not None and rg.alpha != rf.alpha
        ):
            problem = {"field": "alpha"}
        elif rg.alpha is not None:
            ok_g = is_acceptable(run_g.objective, rg.x, rg.p, rg.alpha, c1, c2)
            ok_f = is_acceptable(run_f.objective, rf.x, rf.p, rf.alpha, c1, c2)
            if not (ok_g and ok_f):
                problem = {"field": "acceptability", "g": ok_g, "f": ok_f}
        if problem and first is None:
            first = {"k": k, **problem}
    tg, tf = run_g.termination, run_f.termination
    if first is None and (tg.at_iteration, tg.cause) != (tf.at_iteration, tf.cause):
        first = {"k": min(tg.at_iteration, tf.at_iteration), "field": "termination"}
    return EquivalenceVerdict(
        ok=first is None,
        terminated_g=tg.at_iteration,
        terminated_f=tf.at_iteration,
        cause_g=tg.cause.value,
        cause_f=tf.cause.value,
        max_x_gap=worst_x,
        max_H_gap=worst_H,
        first_divergence=first,
    )


def equivalence_check(
    obj_g: PwlObjective,
    x0: np.ndarray,
    H0: np.ndarray,
    params: LineSearchParams,
    ctx: PrecisionContext,
    *,
    rng: np.random.Generator | None = None,
    basis: list[np.ndarray] | None = None,
    mode: str = "analytic",
) -> EquivalenceVerdict:
    """Run on ``g``, replay its steps on ``f`` from the transported start, compare.

    ``basis`` fixes ``v3..vn`` (full basis including ``v1, v2``); otherwise it
    is drawn from ``rng``.
    """
    if obj_g.kind != "general":
        raise ValueError("equivalence_check needs a general objective")
    rng = rng if rng is not None else np.random.default_rng(0)
    with ctx:
        if basis is None:
            basis = [obj_g.v1, obj_g.v2] + extend_basis(obj_g.v1, obj_g.v2, rng)
        red = build_transform(basis, rng=rng)
        run_g = bfgs.run(obj_g, x0, H0, params, ctx, mode=mode, track=False)
        run_f = bfgs.run(
            canonical(obj_g.n),
            red.transport_x(x0),
            red.transport_H(H0),
            params,
            ctx,
            mode=mode,
            replay=run_g.alphas(),
            track=False,
        )
        verdict = compare_runs(run_g, run_f, red, ctx.tolerance)
    verdict.details = {"run_g": run_g, "run_f": run_f, "reduction": red}
    return verdict

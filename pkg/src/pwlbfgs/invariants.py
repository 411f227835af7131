"""Runtime checks of the finite-termination argument on a recorded run.

A run that terminates at iteration ``T`` (its line search fails there) has not
terminated up to ``K = T - 1``. Each bound is asserted only on the index set
``[m] = {0, ..., m}`` where it is claimed, with ``m`` one of ``K``, ``K - 1``,
``K - 2``; an empty set makes the check vacuous.

Strict inequalities ``x > y`` pass only if ``x - y > tol * max(|x|, |y|, 1)``,
so exact ties (and rounding-level ties) are flagged.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

from gmpy2 import mpfr

from pwlbfgs.bfgs import RunRecord
from pwlbfgs.numerics import PrecisionContext, spd_check, to_decimal

PASS = "pass"
VACUOUS = "pass-vacuous"
FAIL = "fail"
SKIPPED = "skipped"


@dataclass
class CheckResult:
    name: str
    lo: int
    hi: int
    status: str
    violation: dict | None = None
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.status != FAIL

    @property
    def range_text(self) -> str:
        return "{}" if self.hi < self.lo else f"[{self.lo}..{self.hi}]"


@dataclass
class InvariantReport:
    checks: list[CheckResult] = field(default_factory=list)
    termination: int | None = None

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.ok]

    def to_dict(self) -> dict:
        return {
            "verdict": PASS if self.ok else FAIL,
            "terminated_at": self.termination,
            "checks": [
                {
                    "name": c.name,
                    "range": c.range_text,
                    "status": c.status,
                    "violation": c.violation,
                    "note": c.note,
                }
                for c in self.checks
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"invariant report (terminated at k={self.termination}): "
                 f"{'PASS' if self.ok else 'FAIL'}"]
        for c in self.checks:
            line = f"  {c.status:<13} {c.name:<34} k in {c.range_text}"
            if c.violation:
                line += f"  first violation: {c.violation}"
            if c.note:
                line += f"  ({c.note})"
            lines.append(line)
        return "\n".join(lines) + "\n"


# -- helpers ---------------------------------------------------------------------


def strictly_greater(x, y, tol) -> bool:
    if x is None or y is None:
        return False
    return x - y > tol * max(abs(x), abs(y), mpfr(1))


def close(x, y, tol) -> bool:
    if x is None or y is None:
        return False
    if x == y:
        return True
    return abs(x - y) <= tol * max(abs(x), abs(y))


def _fmt(v):
    if v is None:
        return None
    if isinstance(v, mpfr):
        return to_decimal(v, 20)
    return v


def row_quantities(record: RunRecord) -> list[dict]:
    """Per-row ``delta, alpha_star, a, psi, gamma`` (``None`` where undefined).

    Unlike :func:`pwlbfgs.reflection.derived` this never raises, so the checks
    can report undefined values as violations.
    """
    if not record.tracked:
        raise ValueError("record has no scalar-state trace (canonical runs only)")
    out = []
    for r in record.rows:
        s = r.state
        q = {"ee": s.ee, "ez": s.ez, "zz": s.zz, "D": s.D, "zx": s.zx, "alpha": r.alpha,
             "delta": None, "alpha_star": None, "a": None, "psi": None, "gamma": None}
        if s.D != 0:
            q["psi"] = s.ez * s.zx / s.D
        if s.ez != 0:
            q["gamma"] = s.zx / s.ez
            q["delta"] = 1 - s.ee / (2 * s.ez)
            if q["delta"] != 0:
                q["alpha_star"] = (s.D / (s.ez * s.ez)) / q["delta"]
            if r.alpha is not None and s.D != 0:
                q["a"] = q["delta"] * s.ez * s.ez * r.alpha / s.D
        out.append(q)
    return out


def _check(
    name: str,
    lo: int,
    hi: int,
    pred: Callable[[int], bool],
    show: Callable[[int], dict],
    note: str = "",
) -> CheckResult:
    if hi < lo:
        return CheckResult(name, lo, hi, VACUOUS, note=note)
    for k in range(lo, hi + 1):
        try:
            good = pred(k)
        except (TypeError, ZeroDivisionError):
            good = False
        if not good:
            vals = {key: _fmt(v) for key, v in show(k).items()}
            return CheckResult(name, lo, hi, FAIL, {"k": k, "values": vals}, note)
    return CheckResult(name, lo, hi, PASS, note=note)


def _skipped(name: str, why: str) -> CheckResult:
    return CheckResult(name, 0, -1, SKIPPED, note=why)


def _tol(record: RunRecord):
    return PrecisionContext(record.precision_bits).tolerance


# -- lemma checks ---------------------------------------------------------------------


def check_lemma1(record: RunRecord) -> list[CheckResult]:
    """Positivity of ``<eta,zeta>``, of ``<eta,zeta> - <eta,eta>/2`` and of
    ``alpha*``, and ``alpha_k > alpha*_k``."""
    K = record.K
    with PrecisionContext(record.precision_bits):
        tol = _tol(record)
        q = row_quantities(record)
        zero = mpfr(0)
        return [
            _check("lemma1.ez_positive", 0, K,
                   lambda k: strictly_greater(q[k]["ez"], zero, tol),
                   lambda k: {"ez": q[k]["ez"]}),
            _check("lemma1.ez_minus_half_ee_positive", 0, K - 1,
                   lambda k: strictly_greater(q[k]["ez"] - q[k]["ee"] / 2, zero, tol),
                   lambda k: {"ez": q[k]["ez"], "ee": q[k]["ee"]}),
            _check("lemma1.alpha_star_positive", 0, K - 1,
                   lambda k: strictly_greater(q[k]["alpha_star"], zero, tol),
                   lambda k: {"alpha_star": q[k]["alpha_star"]}),
            _check("lemma1.alpha_above_alpha_star", 0, K - 2,
                   lambda k: strictly_greater(q[k]["alpha"], q[k]["alpha_star"], tol),
                   lambda k: {"alpha": q[k]["alpha"], "alpha_star": q[k]["alpha_star"]}),
        ]


def check_lemma2(record: RunRecord) -> list[CheckResult]:
    """``gamma_k < alpha_k < zx_k / (ez_k - ee_k/2)``."""
    K = record.K
    with PrecisionContext(record.precision_bits):
        tol = _tol(record)
        q = row_quantities(record)

        def upper(k):
            return q[k]["zx"] / (q[k]["ez"] - q[k]["ee"] / 2)

        out = [
            _check("lemma2.lower", 0, K - 1,
                   lambda k: strictly_greater(q[k]["alpha"], q[k]["gamma"], tol),
                   lambda k: {"alpha": q[k]["alpha"], "gamma": q[k]["gamma"]}),
        ]
        if record.params.c1 > 0:
            out.append(_check("lemma2.upper", 0, K - 1,
                              lambda k: strictly_greater(upper(k), q[k]["alpha"], tol),
                              lambda k: {"alpha": q[k]["alpha"], "ez": q[k]["ez"],
                                         "ee": q[k]["ee"], "zx": q[k]["zx"]}))
        else:
            out.append(_skipped("lemma2.upper", "needs c1 > 0"))
        return out


def check_lemma34(record: RunRecord) -> list[CheckResult]:
    """Ranges of ``delta, a, psi, gamma``; the ``psi, gamma, delta`` recursions;
    the squeeze ``max(1, delta psi) < a < psi``; monotone ``psi``."""
    K = record.K
    hi = K - 2
    c1_pos = record.params.c1 > 0
    with PrecisionContext(record.precision_bits):
        tol = _tol(record)
        q = row_quantities(record)
        zero, one = mpfr(0), mpfr(1)

        def psi_next(k):
            d, psi, a = q[k]["delta"], q[k]["psi"], q[k]["a"]
            return psi - (psi - a) / (1 - d)

        def gamma_next(k):
            return 1 / q[k]["delta"] - q[k]["psi"] / q[k]["a"]

        def delta_next(k):
            return (1 - 1 / q[k]["a"]) * (1 - q[k]["delta"])

        def quad(k):
            return {key: q[k][key] for key in ("delta", "a", "psi", "gamma")}

        def rec(name):
            return lambda k: {name: q[k + 1][name], "recursion": {
                "psi": psi_next, "gamma": gamma_next, "delta": delta_next}[name](k)}

        out = [
            _check("lemma3.delta_in_0_1", 0, hi,
                   lambda k: strictly_greater(q[k]["delta"], zero, tol)
                   and strictly_greater(one, q[k]["delta"], tol), quad),
            _check("lemma3.a_positive", 0, hi,
                   lambda k: strictly_greater(q[k]["a"], zero, tol), quad),
            _check("lemma3.psi_positive", 0, hi,
                   lambda k: strictly_greater(q[k]["psi"], zero, tol), quad),
            _check("lemma3.gamma_positive", 0, hi,
                   lambda k: strictly_greater(q[k]["gamma"], zero, tol), quad),
            _check("lemma4.psi_recursion", 0, hi,
                   lambda k: close(q[k + 1]["psi"], psi_next(k), tol), rec("psi")),
            _check("lemma4.gamma_recursion", 0, hi,
                   lambda k: close(q[k + 1]["gamma"], gamma_next(k), tol), rec("gamma")),
            _check("lemma4.delta_recursion", 0, hi,
                   lambda k: close(q[k + 1]["delta"], delta_next(k), tol), rec("delta")),
            _check("lemma4.a_above_1", 0, hi,
                   lambda k: strictly_greater(q[k]["a"], one, tol), quad),
            _check("squeeze.lower", 0, hi,
                   lambda k: strictly_greater(q[k]["a"], one, tol)
                   and strictly_greater(q[k]["a"], q[k]["delta"] * q[k]["psi"], tol), quad),
        ]
        if c1_pos:
            out.append(_check("squeeze.upper", 0, hi,
                              lambda k: strictly_greater(q[k]["psi"], q[k]["a"], tol), quad))
            out.append(_check("psi_monotone", 0, hi,
                              lambda k: strictly_greater(q[k]["psi"], q[k + 1]["psi"], tol),
                              lambda k: {"psi_k": q[k]["psi"], "psi_k+1": q[k + 1]["psi"]}))
        else:
            out.append(_skipped("squeeze.upper", "needs c1 > 0"))
            out.append(_skipped("psi_monotone", "needs c1 > 0"))
        return out


def check_trajectory(record: RunRecord) -> list[CheckResult]:
    """Properties of every reachable state and every completed step."""
    T = record.termination.at_iteration
    rows = record.rows
    with PrecisionContext(record.precision_bits):
        tol = _tol(record)
        zero = mpfr(0)
        out = []
        if record.tracked:
            out += [
                _check("D_positive", 0, T,
                       lambda k: strictly_greater(rows[k].state.D, zero, tol),
                       lambda k: {"D": rows[k].state.D}),
                _check("zx_positive", 0, T,
                       lambda k: strictly_greater(rows[k].state.zx, zero, tol),
                       lambda k: {"zx": rows[k].state.zx}),
                _check("recursion_matches_matrix", 1, T,
                       lambda k: rows[k].recursion_deviation <= tol,
                       lambda k: {"deviation": rows[k].recursion_deviation}),
            ]
        if record.objective.kind == "canonical":
            out.append(_check(
                "sign_alternation", 0, T - 1,
                lambda k: (rows[k].x[0] > 0) != (rows[k + 1].x[0] > 0)
                and rows[k + 1].x[0] != 0,
                lambda k: {"x1_k": rows[k].x[0], "x1_k+1": rows[k + 1].x[0]}))
        if record.params.c1 > 0:
            out.append(_check("monotone_descent", 0, T - 1,
                              lambda k: strictly_greater(rows[k].f, rows[k + 1].f, tol),
                              lambda k: {"f_k": rows[k].f, "f_k+1": rows[k + 1].f}))
        else:
            out.append(_skipped("monotone_descent", "needs c1 > 0"))
        if all(r.spd is not None or r.H is not None for r in rows):
            def spd(k):
                r = rows[k]
                return r.spd if r.spd is not None else bool(spd_check(r.H))
            out.append(_check("H_positive_definite", 0, T, spd, lambda k: {}))
        else:
            out.append(_skipped("H_positive_definite", "matrices not recorded"))
        return out


@dataclass
class Prediction:
    psi_below_one: int | None
    a_below_one: int | None
    bound: int | None
    terminated_at: int

    @property
    def ok(self) -> bool:
        return self.bound is None or self.terminated_at <= self.bound


def predict_termination(record: RunRecord) -> Prediction:
    """First ``k`` with ``psi_k <= 1`` and first with ``a_k <= 1``; termination
    can come at most two iterations later."""
    with PrecisionContext(record.precision_bits):
        q = row_quantities(record)
        one = mpfr(1)
        k1 = next((k for k, r in enumerate(q) if r["psi"] is not None and r["psi"] <= one), None)
        k2 = next((k for k, r in enumerate(q) if r["a"] is not None and r["a"] <= one), None)
    hits = [k for k in (k1, k2) if k is not None]
    bound = min(hits) + 2 if hits else None
    return Prediction(k1, k2, bound, record.termination.at_iteration)


def check_prediction(record: RunRecord) -> CheckResult:
    pr = predict_termination(record)
    if pr.bound is None:
        return CheckResult("termination_prediction", 0, -1, VACUOUS,
                           note="psi_k > 1 and a_k > 1 throughout")
    status = PASS if pr.ok else FAIL
    viol = None if pr.ok else {"k": pr.terminated_at, "values": asdict(pr)}
    return CheckResult("termination_prediction", 0, record.termination.at_iteration,
                       status, viol, note=f"K <= {pr.bound}")


def verify_run(record: RunRecord) -> InvariantReport:
    checks: list[CheckResult] = []
    if record.tracked:
        checks += check_lemma1(record)
        checks += check_lemma2(record)
        checks += check_lemma34(record)
        checks.append(check_prediction(record))
    checks += check_trajectory(record)
    return InvariantReport(checks, record.termination.at_iteration)


def merge(reports: Iterable[InvariantReport]) -> dict:
    """Aggregate: per check name, counts of each status and the first failure."""
    agg: dict[str, dict] = {}
    for i, rep in enumerate(reports):
        for c in rep.checks:
            e = agg.setdefault(c.name, {PASS: 0, VACUOUS: 0, FAIL: 0, SKIPPED: 0,
                                        "first_failure": None})
            e[c.status] += 1
            if c.status == FAIL and e["first_failure"] is None:
                e["first_failure"] = {"run": i, **(c.violation or {})}
    return agg

"""Property suites over seeded corpora: lemma checks, recursion oracle, affine equivalence."""

from __future__ import annotations

from pwlbfgs import bfgs
from pwlbfgs.affine import equivalence_check
from pwlbfgs.invariants import merge, verify_run
from pwlbfgs.linesearch import LineSearchParams
from pwlbfgs.numerics import PrecisionContext, gaussian_vector, to_decimal
from pwlbfgs.objective import canonical, make_general
from pwlbfgs.experiments.runner import EXAMPLE, load_init, seeded_init, stream

SUITES = ("lemmas", "recursion", "affine")
EXIT_BITS = {"lemmas": 4, "recursion": 8, "affine": 16}

# stream tags keep the corpora of the suites disjoint
_TAG = {"lemmas": 1, "recursion": 2, "affine": 3}

DEGENERATE = LineSearchParams(0, 1, allow_degenerate=True)


def lemma_suite(runs: int, seed: int, dims: list[int], *, params: LineSearchParams | None = None,
                include_degenerate: bool = True, precision_bits: int = 1664) -> dict:
    """Each seeded instance under ``params`` (and the ``(0, 1)`` pair), plus the bundled example."""
    ctx = PrecisionContext(precision_bits)
    settings = [params or LineSearchParams()] + ([DEGENERATE] if include_degenerate else [])
    starts = [load_init(EXAMPLE, ctx)]
    for i in range(runs):
        n = dims[i % len(dims)]
        starts.append(seeded_init(n, stream(seed, _TAG["lemmas"], n, i), ctx))
    reports = []
    for x0, H0 in starts:
        for p in settings:
            rec = bfgs.run(canonical(len(x0)), x0, H0, p, ctx, check_spd=True, keep_matrices=False)
            reports.append(verify_run(rec))
    bad = sum(not r.ok for r in reports)
    return {"suite": "lemmas", "runs": len(reports), "violating_runs": bad, "ok": bad == 0,
            "checks": merge(reports)}


def recursion_suite(runs: int, seed: int, dims: list[int], *, precision_bits: int = 1664) -> dict:
    """Largest relative gap between the scalar recursions and the matrix iteration."""
    ctx = PrecisionContext(precision_bits)
    worst, worst_at, errors = None, None, []
    for i in range(runs):
        n = dims[i % len(dims)]
        x0, H0 = seeded_init(n, stream(seed, _TAG["recursion"], n, i), ctx)
        try:
            rec = bfgs.run(canonical(n), x0, H0, LineSearchParams(), ctx, keep_matrices=False)
        except bfgs.RecursionDivergence as exc:
            errors.append({"run": i, "n": n, "error": str(exc)})
            continue
        for r in rec.rows:
            d = r.recursion_deviation
            if d is not None and (worst is None or d > worst):
                worst, worst_at = d, {"run": i, "n": n, "k": r.k}
    tol = ctx.tolerance
    ok = not errors and (worst is None or worst <= tol)
    return {"suite": "recursion", "runs": runs, "ok": ok,
            "max_relative_deviation": to_decimal(worst, 6) if worst is not None else "0",
            "worst_at": worst_at, "tolerance": to_decimal(tol, 3), "errors": errors}


def affine_suite(runs: int, seed: int, dims: list[int], *, precision_bits: int = 1664) -> dict:
    ctx = PrecisionContext(precision_bits)
    failures = []
    for i in range(runs):
        n = dims[i % len(dims)]
        rng = stream(seed, _TAG["affine"], n, i)
        with ctx:
            g = make_general(gaussian_vector(n, rng), gaussian_vector(n, rng))
        x0, H0 = seeded_init(n, rng, ctx)
        v = equivalence_check(g, x0, H0, LineSearchParams(), ctx, rng=rng)
        if not v.ok:
            failures.append({"run": i, "n": n, **v.to_dict()})
    return {"suite": "affine", "runs": runs, "ok": not failures, "failures": failures}


def run_suites(suites: list[str], runs: int, seed: int, dims: list[int],
               precision_bits: int = 1664) -> tuple[list[dict], int]:
    """Results per suite and the OR of the exit bits of failing suites."""
    fns = {"lemmas": lemma_suite, "recursion": recursion_suite, "affine": affine_suite}
    results, code = [], 0
    for s in suites:
        res = fns[s](runs, seed, dims, precision_bits=precision_bits)
        results.append(res)
        if not res["ok"]:
            code |= EXIT_BITS[s]
    return results, code

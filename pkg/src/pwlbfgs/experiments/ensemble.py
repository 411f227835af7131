"""Monte-Carlo ensembles of seeded runs and their termination statistics.

Run ``i`` at dimension ``n`` draws from ``SeedSequence(seed, spawn_key=(n, i))``,
so results do not depend on ``jobs`` or on execution order.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from pwlbfgs import bfgs
from pwlbfgs.invariants import verify_run
from pwlbfgs.linesearch import Cause, LineSearchParams
from pwlbfgs.numerics import PrecisionContext
from pwlbfgs.objective import canonical
from pwlbfgs.reflection import InvalidState
from pwlbfgs.experiments.runner import seeded_init, stream


@dataclass(frozen=True)
class RunOutcome:
    index: int
    iterations: int | None  # None when the run ended abnormally
    cause: str
    verified: bool | None = None
    failed_checks: tuple[str, ...] = ()


def simulate(n: int, seed: int, index: int, params: LineSearchParams,
             precision_bits: int = 1664, mode: str = "analytic",
             verify: bool = False) -> RunOutcome:
    ctx = PrecisionContext(precision_bits)
    x0, H0 = seeded_init(n, stream(seed, n, index), ctx)
    try:
        rec = bfgs.run(canonical(n), x0, H0, params, ctx, mode=mode,
                       keep_matrices=False, check_spd=verify, seed=seed)
    except (bfgs.RecursionDivergence, bfgs.IterationCapExceeded, InvalidState) as exc:
        return RunOutcome(index, None, type(exc).__name__, False if verify else None)
    if not verify:
        return RunOutcome(index, rec.termination.iterations, rec.termination.cause.value)
    rep = verify_run(rec)
    return RunOutcome(index, rec.termination.iterations, rec.termination.cause.value,
                      rep.ok, tuple(c.name for c in rep.failures))


def _simulate_chunk(args):
    n, seed, indices, params, bits, mode, verify = args
    return [simulate(n, seed, i, params, bits, mode, verify) for i in indices]


def run_ensemble(n: int, runs: int, seed: int, params: LineSearchParams, *,
                 precision_bits: int = 1664, mode: str = "analytic",
                 verify: bool = False, jobs: int = 1) -> list[RunOutcome]:
    if runs < 1:
        raise ValueError("runs must be positive")
    if jobs <= 1:
        return [simulate(n, seed, i, params, precision_bits, mode, verify) for i in range(runs)]
    size = max(1, runs // (4 * jobs))
    chunks = [(n, seed, range(lo, min(lo + size, runs)), params, precision_bits, mode, verify)
              for lo in range(0, runs, size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_simulate_chunk, chunks))
    return sorted((o for part in parts for o in part), key=lambda o: o.index)


def _exact_median(values: list[int]) -> Fraction:
    s = sorted(values)
    m = len(s) // 2
    return Fraction(s[m]) if len(s) % 2 else Fraction(s[m - 1] + s[m], 2)


def _num(q: Fraction):
    return q.numerator if q.denominator == 1 else float(q)


@dataclass
class EnsembleStats:
    """Statistics of the iteration counts (line-search failure included)."""

    n: int
    runs: int
    seed: int
    min: int | None
    max: int | None
    mean: Fraction | None
    median: Fraction | None
    causes: dict[str, int]
    histogram: dict[int, int]
    params: dict = field(default_factory=dict)
    verify_failures: int | None = None

    @classmethod
    def from_outcomes(cls, n: int, seed: int, outcomes: list[RunOutcome],
                      params: dict | None = None) -> "EnsembleStats":
        its = [o.iterations for o in outcomes if o.iterations is not None]
        verified = [o.verified for o in outcomes if o.verified is not None]
        return cls(
            n=n,
            runs=len(outcomes),
            seed=seed,
            min=min(its) if its else None,
            max=max(its) if its else None,
            mean=Fraction(sum(its), len(its)) if its else None,
            median=_exact_median(its) if its else None,
            causes=dict(sorted(Counter(o.cause for o in outcomes).items())),
            histogram=dict(sorted(Counter(its).items())),
            params=params or {},
            verify_failures=sum(not v for v in verified) if verified else None,
        )

    @property
    def anomalies(self) -> int:
        """Runs that did not end with an unbounded direction."""
        return self.runs - self.causes.get(Cause.UNBOUNDED_DIRECTION.value, 0)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "runs": self.runs,
            "seed": self.seed,
            "min": self.min,
            "max": self.max,
            "mean": None if self.mean is None else _num(self.mean),
            "mean_exact": None if self.mean is None else str(self.mean),
            "median": None if self.median is None else _num(self.median),
            "causes": self.causes,
            "histogram": {str(k): v for k, v in self.histogram.items()},
            "anomalies": self.anomalies,
            "verify_failures": self.verify_failures,
            "params": self.params,
        }


def outcomes_csv(n: int, outcomes: list[RunOutcome]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "n", "iterations", "cause", "verified", "failed_checks"])
    for o in outcomes:
        w.writerow([o.index, n, "" if o.iterations is None else o.iterations, o.cause,
                    "" if o.verified is None else int(o.verified), ";".join(o.failed_checks)])
    return buf.getvalue()

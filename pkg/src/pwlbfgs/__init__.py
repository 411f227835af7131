"""BFGS with a weak Wolfe line search on two-piece piecewise-linear objectives."""

from pwlbfgs.bfgs import RunRecord, run, update_H
from pwlbfgs.linesearch import Cause, LineSearchParams
from pwlbfgs.numerics import PrecisionContext, make_context
from pwlbfgs.objective import PwlObjective, beta_family, canonical, make_general

__version__ = "0.1.0"

__all__ = [
    "Cause",
    "LineSearchParams",
    "PrecisionContext",
    "PwlObjective",
    "RunRecord",
    "beta_family",
    "canonical",
    "make_context",
    "make_general",
    "run",
    "update_H",
]

"""Seeded single runs, initial data, trace tables and summaries."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import gmpy2
import numpy as np
from gmpy2 import mpfr

from pwlbfgs import bfgs
from pwlbfgs.invariants import predict_termination, row_quantities, verify_run
from pwlbfgs.linesearch import LineSearchParams
from pwlbfgs.numerics import (
    PrecisionContext,
    from_hex,
    gaussian_matrix,
    gaussian_vector,
    is_exactly_symmetric,
    to_decimal,
    to_hex,
)
from pwlbfgs.objective import canonical

EXAMPLE = "example"

TRACE_COLUMNS = (
    "k", "alpha", "f", "x1", "ee", "ez", "zz", "D", "D_recomputed", "zx",
    "delta", "alpha_star", "a", "psi", "gamma",
    "log_delta_psi", "log_a", "log_psi", "trials",
)


def stream(root: int, *key: int) -> np.random.Generator:
    """Independent generator for one run; the same ``key`` always gives the same draws."""
    return np.random.default_rng(np.random.SeedSequence(root, spawn_key=tuple(key)))


def seeded_init(n: int, rng: np.random.Generator, ctx: PrecisionContext):
    """``H0 = X^T X`` and ``x0 ~ N(0, I)``, drawn in that order."""
    with ctx:
        H0 = gaussian_matrix(n, rng)
        x0 = gaussian_vector(n, rng)
    return x0, H0


def _parse(ctx: PrecisionContext, s) -> mpfr:
    if isinstance(s, str) and "0x" in s:
        with ctx:
            return mpfr(from_hex(s))
    return ctx.scalar(s)


def load_init(path: str | Path, ctx: PrecisionContext):
    """Read ``{"x0": [...], "H0": [[...], ...]}`` (decimal or hex-float strings).

    ``path == "example"`` loads the bundled three-dimensional example.
    """
    if str(path) == EXAMPLE:
        text = resources.files("pwlbfgs.experiments").joinpath("example_init.json").read_text()
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    x0 = np.array([_parse(ctx, v) for v in data["x0"]], dtype=object)
    H0 = np.array([[_parse(ctx, v) for v in row] for row in data["H0"]], dtype=object)
    n = len(x0)
    if H0.shape != (n, n):
        raise ValueError(f"H0 has shape {H0.shape}, expected {(n, n)}")
    if not is_exactly_symmetric(H0):
        raise ValueError("H0 in the init file is not symmetric")
    return x0, H0


def dump_init(x0, H0, hex_: bool = False, digits: int = 30) -> dict:
    enc = to_hex if hex_ else (lambda v: to_decimal(v, digits))
    return {"x0": [enc(v) for v in x0], "H0": [[enc(v) for v in row] for row in H0]}


@dataclass
class RunConfig:
    n: int | None = None
    seed: int = 0
    params: LineSearchParams = field(default_factory=LineSearchParams)
    precision_bits: int = 1664
    mode: str = "analytic"
    init_file: str | None = None


def execute(cfg: RunConfig, *, check_spd: bool = True, keep_matrices: bool = True):
    """Run one configuration; returns ``(record, x0, H0)``."""
    ctx = PrecisionContext(cfg.precision_bits)
    if cfg.init_file is not None:
        x0, H0 = load_init(cfg.init_file, ctx)
        if cfg.n is not None and cfg.n != len(x0):
            raise ValueError(f"--dim {cfg.n} disagrees with the init file (n = {len(x0)})")
    else:
        if cfg.n is None:
            raise ValueError("need a dimension or an init file")
        x0, H0 = seeded_init(cfg.n, stream(cfg.seed, cfg.n, 0), ctx)
    rec = bfgs.run(
        canonical(len(x0)), x0, H0, cfg.params, ctx,
        mode=cfg.mode, check_spd=check_spd, keep_matrices=keep_matrices, seed=cfg.seed,
    )
    return rec, x0, H0


# -- trace table ---------------------------------------------------------------------


def _log(v):
    if v is None or not v > 0:
        return None
    return gmpy2.log(v)


def trace_rows(record: bfgs.RunRecord) -> list[dict]:
    """One dict per recorded iteration (the last one has no step)."""
    out = []
    with PrecisionContext(record.precision_bits):
        qs = row_quantities(record)
        for r, q in zip(record.rows, qs):
            s = r.state
            dpsi = q["delta"] * q["psi"] if q["delta"] is not None and q["psi"] is not None else None
            out.append({
                "k": r.k,
                "alpha": r.alpha,
                "f": r.f,
                "x1": r.x[0],
                "ee": s.ee,
                "ez": s.ez,
                "zz": s.zz,
                "D": r.advanced.D if r.advanced is not None else s.D,
                "D_recomputed": s.D,
                "zx": s.zx,
                "delta": q["delta"],
                "alpha_star": q["alpha_star"],
                "a": q["a"],
                "psi": q["psi"],
                "gamma": q["gamma"],
                "log_delta_psi": _log(dpsi),
                "log_a": _log(q["a"]),
                "log_psi": _log(q["psi"]),
                "trials": r.trials,
            })
    return out


def trace_csv(rows: list[dict], digits: int = 30, hex_: bool = False) -> str:
    buf = io.StringIO()
    cols = list(TRACE_COLUMNS) + (["alpha_hex", "x1_hex"] if hex_ else [])
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        line = []
        for c in TRACE_COLUMNS:
            v = row[c]
            line.append(v if isinstance(v, int) else to_decimal(v, digits))
        if hex_:
            line += [to_hex(row["alpha"]) if row["alpha"] is not None else "", to_hex(row["x1"])]
        w.writerow(line)
    return buf.getvalue()


def summary(record: bfgs.RunRecord, report=None, x0=None, H0=None,
            hex_: bool = False, digits: int = 30) -> dict:
    """Termination summary; key order is fixed."""
    pr = predict_termination(record)
    devs = [r.recursion_deviation for r in record.rows if r.recursion_deviation is not None]
    out = {
        "config": record.config(),
        "terminated_at": record.termination.at_iteration,
        "iterations": record.termination.iterations,
        "cause": record.termination.cause.value,
        "first_psi_at_most_1": pr.psi_below_one,
        "first_a_at_most_1": pr.a_below_one,
        "predicted_bound": pr.bound,
        "max_recursion_deviation": to_decimal(max(devs), 6) if devs else None,
        "invariants": None if report is None else ("pass" if report.ok else "fail"),
        "failed_checks": [] if report is None else [c.name for c in report.failures],
    }
    if x0 is not None:
        out["init"] = dump_init(x0, H0, hex_=hex_, digits=digits)
    return out


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2) + "\n"


def full_run(cfg: RunConfig, digits: int = 30, hex_: bool = False):
    """Record, trace CSV text, summary dict and invariant report."""
    rec, x0, H0 = execute(cfg)
    report = verify_run(rec)
    rows = trace_rows(rec)
    return rec, trace_csv(rows, digits, hex_), summary(rec, report, x0, H0, hex_, digits), report

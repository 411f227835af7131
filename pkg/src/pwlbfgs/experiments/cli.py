"""Command line entry point: ``pwlbfgs run | ensemble | verify``.

``run`` and ``ensemble`` report invariant violations and anomalous
terminations but still exit 0; bad flags exit 2. ``verify`` exits with the OR
of 4 (lemma suite), 8 (recursion oracle) and 16 (affine equivalence).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from pwlbfgs.linesearch import MODES, LineSearchParams
from pwlbfgs.numerics import PrecisionError
from pwlbfgs.experiments import ensemble, runner, svg, verify


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def _dim_list(text: str) -> list[int]:
    try:
        dims = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not dims or min(dims) < 2:
        raise argparse.ArgumentTypeError("dimensions must be >= 2")
    return dims


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--c1", type=_fraction, default=Fraction(1, 10000),
                   help="sufficient-decrease constant (default 1e-4)")
    g.add_argument("--c2", type=_fraction, default=Fraction(1, 2),
                   help="curvature constant (default 0.5)")
    g.add_argument("--precision-bits", type=int, default=1664,
                   help="mantissa bits of the working precision (default 1664)")
    g.add_argument("--ls-mode", choices=MODES, default="analytic",
                   help="analytic: detect unbounded rays up front; "
                        "emulate-paper: bracket until the trial cap")
    g.add_argument("--max-ls-trials", type=int, default=1000)
    g.add_argument("--allow-degenerate-params", action="store_true",
                   help="permit (c1, c2) = (0, 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwlbfgs",
        description="BFGS with a weak Wolfe line search on |x1| + x2 + ... + xn.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one run with a full trace")
    r.add_argument("--dim", type=int)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--init-file",
                   help="JSON with x0 and row-major H0 as strings; 'example' for the bundled one")
    r.add_argument("--out", help="output prefix: writes PREFIX.csv, .json, .invariants.txt")
    r.add_argument("--svg", action="store_true", help="also write PREFIX.svg (needs --out)")
    r.add_argument("--digits", type=int, default=30, help="significant digits in the CSV")
    r.add_argument("--hex", action="store_true", help="add lossless hex-float columns")
    _add_solver_flags(r)

    e = sub.add_parser("ensemble", help="termination statistics over seeded runs")
    e.add_argument("--dim", type=int)
    e.add_argument("--dim-list", type=_dim_list)
    e.add_argument("--runs", type=int, default=5000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--verify", action="store_true", help="check invariants on every run")
    e.add_argument("--out", help="output prefix: writes PREFIX.json and PREFIX.csv")
    _add_solver_flags(e)

    v = sub.add_parser("verify", help="property suites")
    v.add_argument("--suite", choices=verify.SUITES + ("all",), default="all")
    v.add_argument("--runs", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--dim-list", type=_dim_list, default=[2, 3, 5])
    v.add_argument("--precision-bits", type=int, default=1664)
    v.add_argument("--out", help="write the aggregate report as JSON")
    return parser


def _params(args, parser) -> LineSearchParams:
    try:
        return LineSearchParams(c1=args.c1, c2=args.c2, max_trials=args.max_ls_trials,
                                allow_degenerate=args.allow_degenerate_params)
    except ValueError as exc:
        parser.error(str(exc))


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def cmd_run(args, parser) -> int:
    if args.dim is None and args.init_file is None:
        parser.error("run needs --dim or --init-file")
    if args.svg and not args.out:
        parser.error("--svg needs --out")
    if args.dim is not None and args.dim < 2:
        parser.error("--dim must be >= 2")
    cfg = runner.RunConfig(n=args.dim, seed=args.seed, params=_params(args, parser),
                           precision_bits=args.precision_bits, mode=args.ls_mode,
                           init_file=args.init_file)
    try:
        rec, csv_text, summ, report = runner.full_run(cfg, args.digits, args.hex)
    except (ValueError, OSError, PrecisionError) as exc:
        parser.error(str(exc))
    if args.out:
        prefix = Path(args.out)
        _write(prefix.with_name(prefix.name + ".csv"), csv_text)
        _write(prefix.with_name(prefix.name + ".json"), runner.dumps(summ))
        _write(prefix.with_name(prefix.name + ".invariants.txt"), report.to_text())
        if args.svg:
            rows = runner.trace_rows(rec)
            title = f"n={rec.n}, c1={rec.params.c1}, c2={rec.params.c2}"
            _write(prefix.with_name(prefix.name + ".svg"), svg.render(rows, title))
    else:
        sys.stdout.write(runner.dumps({k: v for k, v in summ.items() if k != "init"}))
    print(f"terminated at k={rec.termination.at_iteration} "
          f"({rec.termination.cause.value}); invariants {'PASS' if report.ok else 'FAIL'}",
          file=sys.stderr)
    if not report.ok:
        print("invariant violations: " + ", ".join(c.name for c in report.failures),
              file=sys.stderr)
    return 0


def cmd_ensemble(args, parser) -> int:
    if (args.dim is None) == (args.dim_list is None):
        parser.error("give exactly one of --dim and --dim-list")
    dims = args.dim_list or [args.dim]
    if min(dims) < 2 or args.runs < 1 or args.jobs < 1:
        parser.error("need dimensions >= 2, --runs >= 1, --jobs >= 1")
    params = _params(args, parser)
    echo = {"c1": str(params.c1), "c2": str(params.c2), "max_trials": params.max_trials,
            "precision_bits": args.precision_bits, "ls_mode": args.ls_mode}
    stats, csv_parts = [], []
    for n in dims:
        outs = ensemble.run_ensemble(n, args.runs, args.seed, params,
                                     precision_bits=args.precision_bits, mode=args.ls_mode,
                                     verify=args.verify, jobs=args.jobs)
        st = ensemble.EnsembleStats.from_outcomes(n, args.seed, outs, echo)
        text = ensemble.outcomes_csv(n, outs)
        csv_parts.append(text if not csv_parts else text.split("\n", 1)[1])
        d = st.to_dict()
        print(f"n={n:>4} runs={st.runs} min={st.min} max={st.max} "
              f"mean={d['mean']} median={d['median']} causes={st.causes}", file=sys.stderr)
        stats.append(d)
        if st.verify_failures:
            print(f"  {st.verify_failures} runs violate invariants", file=sys.stderr)
        if args.ls_mode == "analytic" and st.anomalies:
            print(f"  anomaly: {st.anomalies} runs did not end in an unbounded direction",
                  file=sys.stderr)
    doc = runner.dumps({"ensembles": stats})
    if args.out:
        prefix = Path(args.out)
        _write(prefix.with_name(prefix.name + ".json"), doc)
        _write(prefix.with_name(prefix.name + ".csv"), "".join(csv_parts))
    else:
        sys.stdout.write(doc)
    return 0


def cmd_verify(args, parser) -> int:
    if args.runs < 1:
        parser.error("--runs must be positive")
    suites = list(verify.SUITES) if args.suite == "all" else [args.suite]
    results, code = verify.run_suites(suites, args.runs, args.seed, args.dim_list,
                                      args.precision_bits)
    doc = json.dumps({"verdict": "pass" if code == 0 else "fail", "exit_code": code,
                      "suites": results}, indent=2) + "\n"
    if args.out:
        _write(Path(args.out), doc)
    else:
        sys.stdout.write(doc)
    for r in results:
        extra = f" max deviation {r['max_relative_deviation']}" if r["suite"] == "recursion" else ""
        print(f"{r['suite']}: {'PASS' if r['ok'] else 'FAIL'} ({r['runs']} runs){extra}",
              file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.precision_bits < 53:
        parser.error("--precision-bits must be >= 53")
    handler = {"run": cmd_run, "ensemble": cmd_ensemble, "verify": cmd_verify}[args.command]
    return handler(args, parser)


if __name__ == "__main__":
    sys.exit(main())

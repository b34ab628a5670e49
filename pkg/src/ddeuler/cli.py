"""Command-line entry point.

Exit codes: 0 success, 1 failed check, 2 proxy tripped (or inconclusive),
3 solver error, 4 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import experiments as E
from .config import ConfigError, load_config
from .littlewood_paley import BesovIndex, DyadicLadder, besov_norm
from .selftest import corrupted_ladder, selftest
from .solver import SolverError
from .spectral import Grid, read_field

EXIT_OK, EXIT_FAIL, EXIT_TRIPPED, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3, 4


def _index_value(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    v = float(text)
    if v not in (1.0, 2.0):
        raise argparse.ArgumentTypeError("expected 1, 2 or inf")
    return v


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddeuler", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate one configured experiment")
    sim.add_argument("--config", required=True, type=Path)
    sim.add_argument("--out", type=Path, help="output directory (default: output.dir from the config)")

    bes = sub.add_parser("besov", help="Besov norm of a field stored in FLD1 format")
    bes.add_argument("--field", required=True, type=Path)
    bes.add_argument("--s", required=True, type=float)
    bes.add_argument("--p", required=True, type=_index_value)
    bes.add_argument("--r", required=True, type=_index_value)

    res = sub.add_parser("rescale-check", help="exact rescaling-equivariance test")
    res.add_argument("--config", required=True, type=Path)
    res.add_argument("--eps", required=True, type=float)
    res.add_argument("--tol", type=float, default=1e-6)

    scan = sub.add_parser("lifespan-scan", help="proxy lifespan against eps or eta")
    scan.add_argument("--config", required=True, type=Path)
    scan.add_argument("--mode", required=True, choices=("epsilon", "eta"))
    scan.add_argument("--values", required=True, type=_values)
    scan.add_argument("--workers", type=int, default=1)
    scan.add_argument("--out", type=Path, help="write the CSV here instead of stdout")

    st = sub.add_parser("selftest", help="run the n=64 property battery")
    st.add_argument("--corrupt-cutoffs", action="store_true", help=argparse.SUPPRESS)
    return p


def _simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out = args.out or Path(cfg.output_dir)
    result = E.run(cfg, out)
    last = result.records[-1]
    print(f"status={result.status} t={last.t:.6g} steps={len(result.records) - 1} energy={last.energy:.12g}"
          + (f" reason={result.reason}" if result.reason else ""))
    return {"completed": EXIT_OK, "proxy_tripped": EXIT_TRIPPED}.get(result.status, EXIT_SOLVER)


def _besov(args: argparse.Namespace) -> int:
    f = read_field(args.field)
    print(repr(besov_norm(DyadicLadder(f.grid), f, BesovIndex(args.s, args.p, args.r))))
    return EXIT_OK


def _rescale(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    rep = E.rescale_equivariance_test(cfg, args.eps, args.tol)
    print(f"eps={rep.eps:g} status={rep.status} steps={rep.steps} rho={rep.rho_discrepancy:.3e} "
          f"u={rep.u_discrepancy:.3e} grad_pi={rep.grad_pi_discrepancy:.3e}")
    return {"pass": EXIT_OK, "fail": EXIT_FAIL}.get(rep.status, EXIT_TRIPPED)


def _scan(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    fn = E.lifespan_scan_epsilon if args.mode == "epsilon" else E.lifespan_scan_eta
    rep = fn(cfg, args.values, workers=args.workers)
    text = rep.to_csv()
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if rep.note:
        print(f"# {rep.note}", file=sys.stderr)
    if args.mode == "eta" and math.isfinite(rep.fit_slope):
        print(f"# fit T ~ log(1+log(1/eta)): slope={rep.fit_slope:.4g} r2={rep.fit_r2:.4f}", file=sys.stderr)
    if any(r.status == "solver_error" for r in rep.rows):
        return EXIT_SOLVER
    return EXIT_OK if rep.monotone else EXIT_FAIL


def _selftest(args: argparse.Namespace) -> int:
    ladder = corrupted_ladder(Grid(64)) if args.corrupt_cutoffs else None
    results = selftest(sys.stdout, sys.stderr, ladder)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {"simulate": _simulate, "besov": _besov, "rescale-check": _rescale,
            "lifespan-scan": _scan, "selftest": _selftest}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

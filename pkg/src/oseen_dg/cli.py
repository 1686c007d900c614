"""Command-line entry point.

    oseen-dg solve-uniform CONFIG [--out DIR] [--threads N] [--seed S] [--tol T]
    oseen-dg solve-adaptive CONFIG [...]
    oseen-dg order UNIFORM_CSV
    oseen-dg plot TRACE_CSV [--out DIR]

Exit codes: 0 success, 2 eigensolver failure, 3 configuration error.
The default thread count comes from ``OSEEN_DG_THREADS``.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3
THREADS_ENV = "OSEEN_DG_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--threads", type=int, default=None, help=f"BLAS threads (default ${THREADS_ENV})")
    common.add_argument("--seed", type=int, default=None, help="start-vector seed")
    common.add_argument("--tol", type=float, default=None, help="eigen-residual tolerance")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="oseen-dg", description="DG Oseen eigenvalue experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve-uniform", "solve-adaptive"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("config", type=Path)
    s = sub.add_parser("order", parents=[common], help="convergence orders from a uniform CSV")
    s.add_argument("csv", type=Path)
    s = sub.add_parser("plot", parents=[common], help="SVG from a trace CSV")
    s.add_argument("trace", type=Path)
    s.add_argument("--slope", type=float, default=None, help="reference slope, e.g. -2k/d")
    return p


def _set_threads(n):
    n = n if n is not None else os.environ.get(THREADS_ENV)
    if n is None:
        return
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _order(path: Path) -> int:
    from .experiments import UNDEFINED, convergence_order, read_csv_columns

    cols = read_csv_columns(path)
    names = sorted((c for c in cols if c.startswith("lambda") and c.endswith("_re")),
                   key=lambda c: int(c[6:-3]))
    if not names:
        raise ValueError(f"{path} has no eigenvalue columns")
    h = cols.get("h", [""] * len(cols[names[0]]))
    print(f"{'h':>12}" + "".join(f"{c[:-3]:>12}" for c in names))
    for i in range(len(h)):
        row = f"{float(h[i]):12.7f}" if h[i] else f"{i:12d}"
        for c in names:
            if i < 2:
                row += f"{'':>12}"
                continue
            im = c[:-3] + "_im"
            vals = [complex(float(cols[c][r]), float(cols[im][r]) if im in cols else 0.0) for r in (i - 2, i - 1, i)]
            o = convergence_order(*vals)
            row += f"{UNDEFINED:>12}" if o is None else f"{o:12.2f}"
        print(row)
    return EXIT_OK


def _plot(path: Path, out: Path | None, slope: float | None) -> int:
    import numpy as np

    from .experiments import read_csv_columns, write_svg

    cols = read_csv_columns(path)
    if "dofs" not in cols or not cols["dofs"]:
        print(f"{path}: empty trace, nothing to plot", file=sys.stderr)
        return EXIT_OK
    dofs = np.array([float(v) for v in cols["dofs"]])
    keys = [c for c in cols if c.startswith("rerr")] or [c for c in cols if c.startswith("eta") and "star" not in c]
    series = {c: (dofs, np.array([float(v) for v in cols[c]])) for c in keys}
    target = (out or path.parent) / (path.stem + ".svg")
    target.parent.mkdir(parents=True, exist_ok=True)
    write_svg(target, series, slope=slope,
              ylabel="Rerr" if keys and keys[0].startswith("rerr") else "eta")
    print(target)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _set_threads(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .eigensolver import NonConvergenceError, SingularFactorError
    from .experiments import ConfigError, load_config, run_adaptive, run_uniform

    try:
        if args.command == "order":
            return _order(args.csv)
        if args.command == "plot":
            return _plot(args.trace, args.out, args.slope)
        mode = "uniform" if args.command == "solve-uniform" else "adaptive"
        cfg = load_config(args.config, mode=mode, seed=args.seed, tol=args.tol)
        out = args.out or Path("out")
        if mode == "uniform":
            table = run_uniform(cfg, out)
            print(table.text(), end="")
        else:
            trace = run_adaptive(cfg, out)
            print(f"{len(trace.rows)} iterations written to {out / 'trace.csv'}")
    except (NonConvergenceError, SingularFactorError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""``lab``: batch command line for simulations, fixed-point sweeps, checks
and plotting.

Exit codes: 0 success, 1 usage or config error, 2 check failure, 3 runtime
error.  The default output directory is ``$LAB_OUTPUT_ROOT`` (falling back
to ``./lab-output``); ``--out`` or the config's ``output`` key override it.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys

from ..errors import ConfigError, LabError
from .checks import SUITES, run_checks
from .config import load_config
from .fixed_points import sweep_fixed_points, table_result_set
from .io import read_npz, result_set_from_points, stem, write_csv, write_npz, write_summary, write_svg
from .simulate import run

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_RUNTIME = 0, 1, 2, 3
ENV_OUTPUT = "LAB_OUTPUT_ROOT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser():
    p = _Parser(prog="lab", description="Target-network TD laboratory.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True, jobs=True, cap=True):
        if seed:
            sp.add_argument("--seed", type=int, help="base seed (overrides the config)")
        sp.add_argument("--out", help=f"output directory (default: ${ENV_OUTPUT} or ./lab-output)")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
        if cap:
            sp.add_argument("--cap", type=_positive_float, help="divergence cap on ||w|| and the value error")

    sp = sub.add_parser("run", help="simulate a config and write CSV, npz and per-run summaries")
    sp.add_argument("config")
    sp.add_argument("--horizon", type=int, help="override the config horizon")
    common(sp)
    sp = sub.add_parser("sweep", help="analytic fixed-point error table over the sweep grid")
    sp.add_argument("config")
    sp.add_argument("--refine", action="store_true", help="also list exact singular points (Kolter)")
    common(sp, seed=False, jobs=False, cap=False)
    sp = sub.add_parser("fixed-point", help="print the theorem fixed point of every sweep point")
    sp.add_argument("config")
    common(sp, seed=False, jobs=False, cap=False)
    sp = sub.add_parser("check", help="run invariant suites; exit 2 on any failure")
    sp.add_argument("suites", nargs="*", help=f"any of {', '.join(SUITES)} (default: all)")
    sp.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    sp = sub.add_parser("emit", help="re-render stored results as CSV or SVG")
    sp.add_argument("results_dir")
    sp.add_argument("--format", choices=("csv", "svg"), required=True)
    sp.add_argument("--metric", help="metric to plot (SVG only)")
    sp.add_argument("--out", help="destination directory (default: the results directory)")
    return p


def _out_dir(args, config=None):
    if getattr(args, "out", None):
        return args.out
    if config is not None and config.output:
        return config.output
    return os.environ.get(ENV_OUTPUT, "lab-output")


def _cmd_run(args):
    config = load_config(args.config)
    if args.horizon is not None and args.horizon < 1:
        raise ConfigError("horizon must be >= 1", field="horizon")
    config = config.with_overrides(seed=args.seed, cap=args.cap, horizon=args.horizon)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1", field="jobs")
    results = run(config, jobs=args.jobs)
    rs = result_set_from_points(config, results)
    out = _out_dir(args, config)
    paths = [write_csv(rs, out), write_npz(rs, out), write_summary(config, results, out, stem(rs))]
    capped = sum(r.termination != "completed" for pr in results for r in pr.runs)
    total = sum(len(pr.runs) for pr in results)
    print(json.dumps({"fingerprint": rs.fingerprint, "runs": total, "capped": capped, "files": paths}))
    return EXIT_OK


def _cmd_sweep(args):
    config = load_config(args.config)
    rows = sweep_fixed_points(config, refine=True if args.refine else None)
    rs = table_result_set(config, rows)
    out = _out_dir(args, config)
    paths = [write_csv(rs, out), write_npz(rs, out)]
    for r in rows:
        print(json.dumps(r.to_dict()))
    print(json.dumps({"fingerprint": rs.fingerprint, "rows": len(rows), "files": paths}))
    return EXIT_OK


def _cmd_fixed_point(args):
    config = load_config(args.config)
    from .fixed_points import fixed_point_rows

    for r in fixed_point_rows(config):
        print(json.dumps(r.to_dict()))
    return EXIT_OK


def _cmd_check(args):
    try:
        results = run_checks(args.suites, perturb=args.perturb)
    except ValueError as exc:
        print(f"lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for r in results:
        print(json.dumps(r.to_dict()))
    failed = [r for r in results if not r.ok]
    print(json.dumps({"checks": len(results), "failed": len(failed)}))
    return EXIT_CHECK if failed else EXIT_OK


def _cmd_emit(args):
    files = sorted(glob.glob(os.path.join(args.results_dir, "*.npz")))
    if not files:
        raise LabError(f"no stored results (*.npz) in {args.results_dir}")
    out = args.out or args.results_dir
    for f in files:
        rs = read_npz(f)
        path = write_csv(rs, out) if args.format == "csv" else write_svg(rs, out, args.metric)
        print(path)
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "fixed-point": _cmd_fixed_point,
            "check": _cmd_check, "emit": _cmd_emit}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"lab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LabError, OSError, ArithmeticError, ValueError) as exc:
        print(f"lab: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

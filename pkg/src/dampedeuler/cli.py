"""Command-line front end.

Exit codes: 0 success, 1 a scientific check failed (the failure list is
printed as JSON), 2 usage or configuration error.  The default output
directory can be set with the ``DAMPEDEULER_OUTPUT_DIR`` environment
variable.
"""

import argparse
import json
import os
import sys

import numpy as np

from .diagnostics import LyapunovTrace, fit_rate
from .errors import ConfigError, DampedEulerError, NonPositiveData
from .scenarios import (
    jsonable,
    load_config,
    output_directory,
    run_scenario,
    sweep_gamma,
    validate_summary,
)
from .stationary import stationary_state, support_residual


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _default_workers():
    return max(1, min(4, os.cpu_count() or 1))


def build_parser():
    p = argparse.ArgumentParser(prog="dampedeuler", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--config", required=True, help="scenario TOML file or shipped scenario name")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-key override, e.g. model.gamma=2 (repeatable)")
        sp.add_argument("--output-dir", default=None)
        sp.add_argument("-v", "--verbose", action="count", default=0)

    sp = sub.add_parser("run", help="run a scenario and write its trace and summary")
    scenario_args(sp)
    sp = sub.add_parser("validate", help="run a scenario and check its invariant monitors")
    scenario_args(sp)
    sp = sub.add_parser("sweep-gamma", help="fitted decay rate for a list of damping values")
    scenario_args(sp)
    sp.add_argument("--gammas", type=_floats, required=True)
    sp.add_argument("--column", default=None, help="trace column to fit (default J_com or E)")
    sp.add_argument("--workers", type=int, default=_default_workers())
    sp = sub.add_parser("overdamped", help="overdamped-limit comparison against the gradient flow")
    scenario_args(sp)
    sp.add_argument("--gammas", type=_floats, default=None)
    sp.add_argument("--workers", type=int, default=_default_workers())
    sp = sub.add_parser("fit-rate", help="log-linear decay fit on a column of a trace CSV")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--column", required=True)
    sp.add_argument("--window", type=_floats, default=None, help="t_start,t_end")
    sp.add_argument("--skip", type=float, default=0.1, help="transient fraction to drop")
    sp.add_argument("--floor", type=float, default=None, help="stop below this fraction of f(t_start)")
    sp = sub.add_parser("stationary", help="compute and write the stationary profile")
    scenario_args(sp)
    return p


def _emit(obj):
    print(json.dumps(jsonable(obj), indent=2, sort_keys=True))


def _cmd_run(args, validate=False):
    cfg = load_config(args.config, args.overrides)
    trace = run_scenario(cfg, output_dir=args.output_dir)
    summary = trace.meta["summary"]
    if args.verbose:
        _emit(summary)
    for kind, path in trace.meta["paths"].items():
        print(f"{kind}: {path}")
    if not validate:
        return 0
    failures = validate_summary(cfg, summary)
    _emit({"scenario": cfg.name, "failures": failures})
    return 1 if failures else 0


def _cmd_sweep(args):
    cfg = load_config(args.config, args.overrides)
    rows = sweep_gamma(cfg, args.gammas, args.column, workers=args.workers)
    out = output_directory(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.name}_sweep.csv"
    with open(path, "w") as fh:
        fh.write("gamma,rate\n")
        for r in rows:
            fh.write(f"{r['gamma']!r},{'nan' if r['rate'] is None else repr(r['rate'])}\n")
    print(f"{'gamma':>10} {'rate':>14}")
    for r in rows:
        rate = "failed" if r["rate"] is None else f"{r['rate']:.6f}"
        print(f"{r['gamma']:>10g} {rate:>14}")
    print(f"table: {path}")
    return 0


def _cmd_overdamped(args):
    overrides = list(args.overrides)
    if args.gammas:
        overrides.append(("model.gammas", list(args.gammas)))
    overrides.append(("stepper.workers", args.workers))
    cfg = load_config(args.config, overrides)
    if cfg.solver != "overdamped":
        raise ConfigError("the overdamped command needs an overdamped scenario", "solver")
    trace = run_scenario(cfg, output_dir=args.output_dir)
    s = trace.meta["summary"]
    print(f"{'gamma':>8} {'I(gamma,T)':>14} {'M(gamma,T)':>14} {'I<=M':>6}")
    for g, i, m, ok in zip(s["gammas"], s["I"], s["M"], s["I_le_M"]):
        print(f"{g:>8g} {i:>14.6e} {'-' if m is None else f'{m:.6e}':>14} {str(ok):>6}")
    failures = validate_summary(cfg, s)
    _emit({"scenario": cfg.name, "failures": failures})
    return 1 if failures else 0


def _cmd_fit(args):
    trace = LyapunovTrace.from_csv(args.trace)
    window = tuple(args.window) if args.window else None
    if window is not None and len(window) != 2:
        raise ConfigError("window needs two numbers", "--window")
    fit = fit_rate(trace, args.column, window, args.skip, args.floor)
    _emit({"column": args.column, "rate": fit.rate, "intercept": fit.intercept,
           "window": list(fit.window), "residual": fit.residual})
    return 0


def _cmd_stationary(args):
    cfg = load_config(args.config, args.overrides)
    spec = cfg.spec()
    m = stationary_state(spec, cfg.grid())
    out = output_directory(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.name}_stationary.csv"
    with open(path, "w") as fh:
        fh.write("eta,chi\n")
        for e, c in zip(m.grid.nodes, m.chi):
            fh.write(f"{float(e)!r},{float(c)!r}\n")
    res = support_residual(m, spec)
    _emit({"scenario": cfg.name, "residual": res, "profile": str(path),
           "support": [float(m.chi[0]), float(m.chi[-1])], "center": float(np.mean(m.chi))})
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command in ("run", "validate"):
            return _cmd_run(args, validate=args.command == "validate")
        if args.command == "sweep-gamma":
            return _cmd_sweep(args)
        if args.command == "overdamped":
            return _cmd_overdamped(args)
        if args.command == "fit-rate":
            return _cmd_fit(args)
        return _cmd_stationary(args)
    except (ConfigError, FileNotFoundError, NonPositiveData) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DampedEulerError as exc:
        _emit({"failures": [{"check": type(exc).__name__, "message": str(exc)}]})
        return 1


if __name__ == "__main__":
    sys.exit(main())

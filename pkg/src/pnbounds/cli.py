"""Command-line front end: ``pnbounds {simulate,sweep,oracle,selftest}``.

Exit codes: 0 success, 1 configuration error, 2 estimator error,
3 self-test failure. ``PNBOUNDS_WORKERS`` sets the default worker count.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .config import load_config
from .exceptions import ConfigError, EstimatorError
from .harness import rows_to_csv, run_sweep, run_unit, summary_line
from .model import ChannelParams, get_constellation

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATOR, EXIT_SELFTEST = 0, 1, 2, 3
WORKERS_ENV = "PNBOUNDS_WORKERS"

log = logging.getLogger("pnbounds")


def _env_workers():
    v = os.environ.get(WORKERS_ENV)
    if v is None:
        return None
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {v!r}") from None


def _add_run_options(p, single: bool):
    p.add_argument("-c", "--config", help="TOML config file (default: packaged SM sweep)")
    p.add_argument("--snr-db", type=float, nargs=None if single else "+", help="SNR in dB")
    p.add_argument("--gamma", type=float, nargs=None if single else "+",
                   help="innovation standard deviation, rad")
    p.add_argument("--modulation", nargs=None if single else "+", help="qam4 or qam16")
    p.add_argument("--model-id")
    p.add_argument("--n", type=int, help="symbols per trace")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--batch", type=int, help="batch length for standard errors")
    p.add_argument("--np-blind", type=int, help="particles in the blind filter")
    p.add_argument("--tracker", nargs="+", dest="trackers",
                   help="kalman, particle or particle:<Np>")
    p.add_argument("--quad-nodes", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--repeats", type=int)
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    p.add_argument("--record-time", action="store_true", default=None,
                   help="fill the wall_ms column (makes output non-reproducible)")


def _overrides(args) -> dict:
    keys = ("snr_db", "gamma", "modulation", "model_id", "n", "burn_in", "batch",
            "np_blind", "trackers", "quad_nodes", "seed", "repeats", "output",
            "record_time", "workers")
    return {k: getattr(args, k, None) for k in keys}


def _emit(text: str, path):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, _overrides(args), args.verbose)
    sw = cfg.sweep
    for name, vals in (("snr_db", sw.snr_db), ("gamma", sw.gammas),
                       ("modulation", sw.modulations)):
        if len(vals) != 1:
            raise ConfigError(f"simulate runs a single point; '{name}' has {len(vals)} "
                              f"values (pass --{name.replace('_', '-')})")
    rows = run_unit(sw, sw.modulations[0], sw.snr_db[0], sw.gammas[0], 0, cfg.record_time)
    for r in rows:
        print(summary_line(r), file=sys.stderr)
    _emit(rows_to_csv(rows), cfg.output)
    failed = [r for r in rows if not r.ok]
    return EXIT_ESTIMATOR if failed else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, _overrides(args), args.verbose)
    workers = args.workers if args.workers is not None else (_env_workers() or cfg.workers)
    if workers < 1:
        raise ConfigError("workers must be >= 1")

    def progress(rows):
        for r in rows:
            log.info(summary_line(r))

    rows = run_sweep(cfg.sweep, workers, cfg.record_time, progress)
    _emit(rows_to_csv(rows), cfg.output)
    failed = sum(not r.ok for r in rows)
    if failed:
        print(f"{failed} of {len(rows)} rows failed", file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import awgn_mi, trellis_rate

    try:
        const = get_constellation(args.modulation)
        ch = ChannelParams.from_db(args.snr_db)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.kind == "awgn":
        v = awgn_mi(const, ch, method=args.method, n=args.n, seed=args.seed)
    else:
        if args.bins < 64:
            raise ConfigError("bins must be >= 64")
        v = trellis_rate(args.gamma, const, ch, args.bins, args.n, args.seed)
    print(f"{v:.6f}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    def report(res):
        mark = "PASS" if res.passed else "FAIL"
        print(f"{mark} {res.name}: {res.detail} ({res.seconds:.1f}s)", flush=True)

    results = run_selftest(args.inject_fault, report)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"selftest failed: {', '.join(failed)}")
        return EXIT_SELFTEST
    print("selftest passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pnbounds",
        description="Bounds on the information rate of AWGN channels with ARMA phase noise.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="bounds at one (snr, gamma) point, as CSV")
    _add_run_options(s, single=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a parameter grid, write CSV")
    _add_run_options(s, single=False)
    s.add_argument("-j", "--workers", type=int,
                   help=f"parallel worker processes (default ${WORKERS_ENV} or 1)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("oracle", help="reference rates")
    s.add_argument("kind", choices=("awgn", "trellis"))
    s.add_argument("--modulation", default="qam4")
    s.add_argument("--snr-db", type=float, required=True)
    s.add_argument("--method", default="quadrature",
                   choices=("quadrature", "monte_carlo", "both"))
    s.add_argument("--gamma", type=float, default=0.1, help="trellis: phase step std, rad")
    s.add_argument("--bins", type=int, default=1024, help="trellis: phase levels")
    s.add_argument("--n", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("selftest", help="fast consistency checks")
    s.add_argument("--inject-fault", choices=("cov-asymmetry",), help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimatorError as exc:
        print(f"estimator error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR


if __name__ == "__main__":
    sys.exit(main())

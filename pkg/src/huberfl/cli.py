"""Command-line entry point: ``huberfl run | aggregate | gradcheck | sweep``."""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import gradcheck
from .aggregation import AGGREGATORS, AggregatorSpec, UpdateSet
from .config import ConfigError, config_with_override, parse_config
from .errors import HuberFLError
from .experiment import run_to_file


class InputParseError(HuberFLError, ValueError):
    pass


def read_update_csv(path) -> UpdateSet:
    """Rows of ``n_i, x_1, ..., x_d``; blank lines are skipped."""
    path = Path(path)
    if not path.is_file():
        raise InputParseError(f"input file not found: {path}")
    weights, rows = [], []
    width = None
    with open(path, newline="") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise InputParseError(f"{path}:{rowno}: need a sample count and at least one value")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise InputParseError(
                    f"{path}:{rowno}: expected {width} columns like row 1, found {len(row)}"
                )
            try:
                n_i = int(row[0])
            except ValueError:
                raise InputParseError(f"{path}:{rowno}: sample count {row[0].strip()!r} is not an integer") from None
            if n_i < 1:
                raise InputParseError(f"{path}:{rowno}: sample count must be >= 1, got {n_i}")
            values = []
            for col, cell in enumerate(row[1:], start=2):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise InputParseError(
                        f"{path}:{rowno}: column {col} value {cell.strip()!r} is not a number"
                    ) from None
            weights.append(n_i)
            rows.append(values)
    if not rows:
        raise InputParseError(f"{path}: no data rows")
    return UpdateSet(np.array(rows), np.array(weights))


def _aggregator_from_args(args) -> AggregatorSpec:
    method = args.method
    if method == "huber" and args.threshold is None and (args.t0 is None or args.bigm is None):
        raise ConfigError("method huber needs --threshold or both --t0 and --bigm")
    if method == "cwtm" and args.eps is None:
        raise ConfigError("method cwtm needs --eps")
    if method in ("krum", "gmm") and args.q is None:
        raise ConfigError(f"method {method} needs --q")
    return AggregatorSpec(
        method, threshold=args.threshold, t0=args.t0, bigm=args.bigm, trim=args.eps, q=args.q
    )


def cmd_aggregate(args) -> int:
    updates = read_update_csv(args.input)
    spec = _aggregator_from_args(args)
    result = spec.aggregate(updates, np.random.default_rng(args.seed))
    print(",".join(repr(float(x)) for x in result))
    return 0


def cmd_run(args) -> int:
    config = parse_config(args.config)
    result, metric_name = run_to_file(config)
    if result.logs:
        print(f"final {metric_name}: {result.logs[-1].metric!r}")
    else:
        print("no rounds run")
    print(f"wrote {config.output}")
    return 0


def cmd_gradcheck(args) -> int:
    checks = gradcheck.run_all(perturb=args.perturb)
    print(gradcheck.format_report(checks))
    failed = [c for c in checks if not c.ok]
    if failed:
        print(f"{len(failed)} gradient check(s) failed", file=sys.stderr)
        return 1
    print("all gradient checks passed")
    return 0


def suffixed_output(output: str, key: str, value: str) -> str:
    path = Path(output)
    return str(path.with_name(f"{path.stem}_{key}-{value}{path.suffix}"))


def _sweep_one(base, key, value):
    try:
        config = config_with_override(base, key, value)
        config = config.replace(output=suffixed_output(base.output, key, value))
        result, metric_name = run_to_file(config)
        final = result.logs[-1].metric if result.logs else None
        return value, config.output, final, None
    except HuberFLError as exc:
        return value, None, None, str(exc)


def cmd_sweep(args) -> int:
    base = parse_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        print("no values to sweep")
        return 0
    # fail fast on a bad key before spending time on runs
    config_with_override(base, args.key, values[0])
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_sweep_one, [base] * len(values), [args.key] * len(values), values))
    else:
        outcomes = [_sweep_one(base, args.key, v) for v in values]
    failures = 0
    for value, output, final, error in outcomes:
        if error:
            failures += 1
            print(f"{args.key}={value}: FAILED: {error}")
        else:
            print(f"{args.key}={value}: final metric {final!r} -> {output}")
    print(f"{len(values) - failures}/{len(values)} runs succeeded")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="huberfl", description="Byzantine-robust federated learning experiments."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("aggregate", help="aggregate client vectors read from a CSV file")
    p.add_argument("--input", required=True, help="rows of n_i followed by the vector")
    p.add_argument("--method", required=True, choices=AGGREGATORS)
    p.add_argument("--threshold", type=float)
    p.add_argument("--t0", type=float)
    p.add_argument("--bigm", type=float)
    p.add_argument("--eps", type=float, help="trim fraction for cwtm")
    p.add_argument("--q", type=int, help="assumed Byzantine count for krum and gmm")
    p.add_argument("--seed", type=int, default=0, help="batch shuffling seed for gmm")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the task gradients")
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="rerun a config for several values of one key")
    p.add_argument("--config", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HuberFLError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

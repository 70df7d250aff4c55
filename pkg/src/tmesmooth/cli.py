"""Command-line entry point: ``tmesmooth {table1,fig1,single,constants}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .config import coerce_override, load_config

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--seed", type=int, help="root seed (required here or in the config)")
    common.add_argument("--runs", type=int, help="number of Monte Carlo runs")
    common.add_argument("--out", help="output directory")
    common.add_argument("--filters", help="comma-separated filter list")
    common.add_argument("--smoothers", help="comma-separated smoother list")
    common.add_argument("--rule", help="sigma-point rule: gh:P, cubature or unscented:K")
    common.add_argument("--order", type=int, help="TME order")
    common.add_argument("--sigma", help="dispersion level(s), comma-separated")
    common.add_argument("--nsub", type=int, help="Euler-Maruyama steps per measurement interval")
    common.add_argument("--workers", type=int, help="worker processes for Monte Carlo runs")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key"
    )

    parser = argparse.ArgumentParser(prog="tmesmooth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("table1", parents=[common], help="RMSE grid over filter x smoother combinations")
    sub.add_parser("fig1", parents=[common], help="smoothing-error curves per dispersion level")
    sub.add_parser("single", parents=[common], help="one filtering and smoothing pass")
    sub.add_parser("constants", parents=[common], help="sampled stability constants")
    return parser


def _overrides(args, command: str) -> dict:
    out = {
        "seed": args.seed,
        "runs": args.runs,
        "out": args.out,
        "rule": args.rule,
        "order": args.order,
        "n_sub": args.nsub,
        "workers": args.workers,
    }
    if args.filters is not None:
        out["filters"] = coerce_override("filters", args.filters)
    if args.smoothers is not None:
        out["smoothers"] = coerce_override("smoothers", args.smoothers)
    if args.sigma is not None:
        values = coerce_override("sigmas", args.sigma)
        if command == "fig1":
            out["sigmas"] = values
        else:
            if len(values) != 1:
                raise ValueError("--sigma takes a single value outside fig1")
            out["sigma"] = values[0]
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key = key.strip().replace("-", "_")
        out[key] = coerce_override(key, raw)
    return out


def _run(args) -> list[Path]:
    config = load_config(args.config, **_overrides(args, args.command))
    config.require_seed()
    out = Path(config.out)
    if args.command == "table1":
        summary = bench.run_table1(config)
        paths = bench.write_table1(summary, config, out)
        if summary.failures:
            print(f"{len(summary.failures)} run(s) failed and were excluded", file=sys.stderr)
        return paths
    if args.command == "fig1":
        return bench.write_fig1(bench.run_fig1(config), config, out)
    if args.command == "single":
        return [bench.write_single(bench.run_single(config), config, out)]
    return [bench.write_constants(bench.run_constants(config), config, out)]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        paths = _run(args)
    except Exception as err:  # one diagnostic line, nonzero exit
        print(f"tmesmooth {args.command}: error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())

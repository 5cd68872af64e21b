"""Command line: ``eldes run | compare | sweep``.

Exit codes: 0 success, 2 config error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Sequence

from . import report
from .config import ConfigError, convert, load_config
from .engine import Scenario, run, sweep
from .estimators import PROTOCOLS

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_argument_group("scenario overrides (same names as config keys)")
    for f in fields(Scenario):
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.append(f"--{f.name.replace('_', '-')}")
        group.add_argument(*flags, dest=f"set_{f.name}", metavar="VALUE", default=None)


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    out = {}
    for f in fields(Scenario):
        raw = getattr(args, f"set_{f.name}", None)
        if raw is not None:
            try:
                out[f.name] = convert(f.name, raw)
            except ConfigError as exc:
                raise ConfigError(f"--{f.name}: {exc}") from None
    return out


def parse_seeds(spec: str) -> list[int]:
    seeds: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError(f"no seeds in {spec!r}")
    return seeds


def _seeds(args: argparse.Namespace, sc: Scenario) -> list[int]:
    if args.seeds and args.n_seeds:
        raise ConfigError("use either --seeds or --n-seeds, not both")
    try:
        if args.seeds:
            return parse_seeds(args.seeds)
    except ValueError as exc:
        raise ConfigError(f"bad --seeds: {exc}") from None
    if args.n_seeds:
        if args.n_seeds < 1:
            raise ConfigError("--n-seeds must be >= 1")
        return list(range(sc.seed, sc.seed + args.n_seeds))
    return [sc.seed]


def parse_grid(specs: Sequence[str]) -> dict[str, list[Any]]:
    if not specs:
        raise ConfigError("empty sweep grid; pass --grid key=v1,v2,...")
    grid: dict[str, list[Any]] = {}
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"malformed grid spec {spec!r}; expected key=v1,v2,...")
        key, vals = (s.strip() for s in spec.split("=", 1))
        if key == "protocols":
            raise ConfigError("protocols cannot be swept; select them with --protocols")
        if key in grid:
            raise ConfigError(f"grid key {key!r} given twice")
        items = [v.strip() for v in vals.split(",") if v.strip()]
        if not items:
            raise ConfigError(f"grid key {key!r} has no values")
        grid[key] = [convert(key, v) for v in items]
    return grid


def cmd_run(args: argparse.Namespace) -> int:
    sc = load_config(args.config, _overrides(args))
    rep = run(sc)
    out = Path(args.out)
    rows = report.summary_rows(rep)
    report.write_csv(out / "summary.csv", report.SUMMARY_COLUMNS, rows)
    report.write_csv(out / "samples.csv", report.SAMPLE_COLUMNS, report.sample_rows(rep))
    cols = ("protocol", "mean_error_ratio", "mean_abs_error", "undefined_ratio_count", "ext_beacons", "ext_bytes",
            "normal_beacons")
    print(report.text_table(cols, rows))
    print(f"\nwrote {out / 'summary.csv'} and {out / 'samples.csv'}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    overrides = _overrides(args)
    if args.protocol_names:
        unknown = [p for p in args.protocol_names if p not in PROTOCOLS]
        if unknown:
            raise ConfigError(f"unknown protocol {unknown[0]!r}; valid names: {', '.join(PROTOCOLS)}")
        overrides["protocols"] = tuple(args.protocol_names)
    sc = load_config(args.config, overrides)
    if args.protocol_names is None and "protocols" not in overrides:
        sc = replace(sc, protocols=("eldes", "dvde"))
    if len(sc.protocols) < 2:
        raise ConfigError("compare needs at least two protocols")
    reports = [run(replace(sc, seed=s)) for s in _seeds(args, sc)]
    out = Path(args.out)
    rows = report.compare_rows(reports)
    per_seed = [r for rep in reports for r in report.summary_rows(rep)]
    report.write_csv(out / "compare.csv", report.COMPARE_COLUMNS, rows)
    report.write_csv(out / "summary.csv", report.SUMMARY_COLUMNS, per_seed)
    report.write_csv(out / "samples.csv", report.SAMPLE_COLUMNS,
                     [r for rep in reports for r in report.sample_rows(rep)])
    print(report.text_table(report.COMPARE_COLUMNS, rows))
    print(f"\nwrote {out / 'compare.csv'}, {out / 'summary.csv'} and {out / 'samples.csv'}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    grid = parse_grid(args.grid or [])
    sc = load_config(args.config, _overrides(args))
    seeds = _seeds(args, sc)
    cells = sweep(sc, grid, seeds, workers=args.workers)
    columns, rows = report.sweep_rows(cells, list(grid), sc.protocols)
    out = Path(args.out)
    report.write_csv(out / "sweep.csv", columns, rows)
    failed = sum(1 for c in cells if c.error)
    print(f"{len(cells)} runs ({failed} failed); wrote {out / 'sweep.csv'}")
    for c in cells:
        if c.error:
            print(f"  cell {c.params} seed {c.seed}: {c.error}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eldes", description="Local vehicle-density estimation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_default: str) -> None:
        p.add_argument("-c", "--config", help="scenario config file (key = value, [section] headers)")
        p.add_argument("-o", "--out", default=out_default, help="output directory (default: %(default)s)")
        _add_scenario_flags(p)

    def seeds(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seeds", help="seed list, e.g. 0,1,2 or 0-9")
        p.add_argument("--n-seeds", type=int, help="run N consecutive seeds starting at --seed")

    p = sub.add_parser("run", help="run one scenario and write summary.csv and samples.csv")
    common(p, "results")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare protocols over several seeds")
    p.add_argument("protocol_names", nargs="*", metavar="PROTOCOL", default=None,
                   help=f"protocols to compare (default: eldes dvde; valid: {', '.join(PROTOCOLS)})")
    common(p, "results")
    seeds(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="run a parameter grid and write sweep.csv")
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="parameter values; repeat for a product")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    common(p, "results")
    seeds(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "protocol_names", None) == []:
        args.protocol_names = None
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

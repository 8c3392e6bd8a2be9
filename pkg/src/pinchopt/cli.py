"""Command-line front end for the power sweep.

Exit codes: 0 on success, 2 when some trials failed or fell back to the
starting layout, 1 on configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from pinchopt.sim import SCHEMES, ConfigError, SimConfig, emit_csv, sweep

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def parse_power_grid(text: str) -> list[float]:
    """``START:STOP:STEP`` (inclusive stop) or a single value."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad power grid {text!r}") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3 or nums[2] <= 0 or nums[1] < nums[0]:
        raise argparse.ArgumentTypeError("power grid must be START:STOP:STEP with STEP > 0 and STOP >= START")
    start, stop, step = nums
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [float(v) for v in np.round(start + step * np.arange(count), 12)]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pinchopt", description="Max-min uplink rate sweep for pinching-antenna systems.")
    ap.add_argument("--config", help="JSON file with SimConfig fields")
    ap.add_argument("--scheme", choices=[*SCHEMES, "all"], help="scheme to run (default: all)")
    ap.add_argument("--alloc", choices=["bisection", "closed-form"], help="resource allocation method")
    ap.add_argument("--power-dbm", type=parse_power_grid, metavar="START:STOP:STEP", help="transmit power grid")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--height", type=float, help="waveguide height d in metres")
    ap.add_argument("--devices", type=int, help="number of devices M")
    ap.add_argument("--antennas", type=int, help="number of pinching antennas N")
    ap.add_argument("--out", default="results.csv", help="per-trial CSV; the aggregate goes to <stem>_aggregate.csv")
    ap.add_argument("--trace", metavar="DIR", help="write per-iteration SCA traces here")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args) -> SimConfig:
    cfg = SimConfig.from_json(args.config) if args.config else SimConfig()
    overrides = {}
    if args.scheme:
        overrides["schemes"] = list(SCHEMES) if args.scheme == "all" else [args.scheme]
    if args.alloc:
        overrides["alloc_method"] = args.alloc
    if args.power_dbm is not None:
        overrides["power_dbm_grid"] = args.power_dbm
    for flag, name in (("trials", "trials"), ("seed", "seed"), ("height", "d"), ("devices", "M"), ("antennas", "N")):
        value = getattr(args, flag)
        if value is not None:
            overrides[name] = value
    return cfg.replace(**overrides) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    records, agg = sweep(cfg, jobs=args.jobs, trace_dir=args.trace)
    try:
        agg_path = emit_csv(records, args.out, agg)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    bad = [r for r in records if r.status != "ok"]
    print(f"wrote {len(records)} records to {args.out} and {agg_path}")
    if bad:
        trials = sorted({r.trial for r in bad})
        print(f"{len(bad)} records from {len(trials)} trials not ok (failed or fallback): {trials[:20]}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

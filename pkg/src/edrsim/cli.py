"""Command-line front end: ``edrsim run|sweep|validate|profiles|calibrate``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .calibrate import CalibrationError, calibrate
from .config import ConfigError, SimConfig, build_config, load_config, parse_override, to_dict
from .core import PROFILE_NAMES, THRESHOLDS, builtin_profile
from .engine import SweepError, Simulation, sweep
from .metrics import MetricsReport, summary_text, write_csv_atomic
from .orchestrator import Strategy

OUTPUT_DIR_ENV = "EDRSIM_OUTPUT_DIR"

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2


def _output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _load(args) -> SimConfig:
    overrides = [parse_override(s) for s in args.set or []]
    if getattr(args, "seed", None) is not None:
        overrides.append(("workload.seed", str(args.seed)))
    if getattr(args, "verbose", False):
        overrides.append(("output.verbose", "true"))
    if args.config:
        return load_config(args.config, overrides)
    return build_config({}, overrides)


def _csv_path(args, cfg: SimConfig, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output.csv:
        return Path(cfg.output.csv)
    return _output_dir() / default_name


def _emit(reports: List[MetricsReport], path: Path, figures: bool):
    write_csv_atomic(reports, path)
    print(f"wrote {path}")
    if figures:
        from .plots import render_figures

        for fig in render_figures(reports, path):
            print(f"wrote {fig}")


def cmd_run(args) -> int:
    cfg = _load(args)
    report = Simulation(cfg).run()
    sys.stdout.write(summary_text(report))
    _emit([report], _csv_path(args, cfg, f"{cfg.run_id}.csv"), args.figures or cfg.output.figures)
    return EXIT_OK


def sweep_grid(base: SimConfig, rates=None, strategies=None, baseline: bool = False) -> List[SimConfig]:
    """Rates x strategies on top of ``base``; optionally a no-reuse NONE run per rate."""
    rates = rates or [float(r) for r in base.profile.rates_reqs_per_s]
    strategies = strategies or [s.value for s in Strategy]
    out = []
    for rate in rates:
        if baseline:
            out.append(base.with_overrides(workload={"rate": rate, "reuse": False},
                                           strategy={"name": "NONE"}))
        for s in strategies:
            out.append(base.with_overrides(workload={"rate": rate}, strategy={"name": s}))
    return out


def cmd_sweep(args) -> int:
    base = _load(args)
    rates = [float(x) for x in args.rates.split(",")] if args.rates else None
    strategies = [s.strip().upper() for s in args.strategies.split(",")] if args.strategies else None
    try:
        configs = sweep_grid(base, rates, strategies, args.baseline)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    results = sweep(configs, master_seed=args.seed, workers=args.workers,
                    pair_keys=[c.rate for c in configs])
    reports = [r for r in results if isinstance(r, MetricsReport)]
    errors = [r for r in results if isinstance(r, SweepError)]
    print(f"{'run_id':<44}{'throughput':>12}{'hit_rate':>10}{'calls':>8}{'unproc':>9}")
    for r in reports:
        print(f"{r.run_id:<44}{r.steady_throughput:>12.2f}{r.hit_rate:>10.4f}"
              f"{r.orchestration_calls:>8d}{r.unprocessed_at_end:>9d}")
    for e in errors:
        print(f"error in config #{e.index}: {e.message}", file=sys.stderr)
    if reports:
        name = f"sweep-{base.workload.profile}-s{args.seed if args.seed is not None else base.workload.seed}.csv"
        _emit(reports, _csv_path(args, base, name), args.figures or base.output.figures)
    return EXIT_CONFIG if errors else EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(f"OK {cfg.run_id}")
    if args.verbose:
        for sec, kv in to_dict(cfg).items():
            for k, v in kv.items():
                print(f"  {sec}.{k} = {v}")
    return EXIT_OK


def cmd_profiles(args) -> int:
    for name in PROFILE_NAMES:
        p = builtin_profile(name)
        for t in THRESHOLDS:
            print(f"{name} {t:g} {p.reusability(t):g}")
        print(f"{name} lsh_ms " + " ".join(f"{p.lsh_search_ms(t):g}" for t in THRESHOLDS))
        print(f"{name} rates " + " ".join(f"{r:g}" for r in p.rates_reqs_per_s))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        profile = builtin_profile(args.profile)
    except KeyError as e:
        raise ConfigError(str(e.args[0])) from None
    try:
        res = calibrate(profile, args.threshold, samples=args.samples, cluster_count=args.clusters,
                        dimension=args.dimension, seed=args.seed or 0, target=args.target)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    except CalibrationError as e:
        print(f"calibration failed: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"{'profile':<14}{res.profile}")
    print(f"{'threshold':<14}{res.threshold:g}")
    print(f"{'target':<14}{res.target:.4f}")
    print(f"{'achieved':<14}{res.achieved:.4f}")
    print(f"{'noise_scale':<14}{res.noise_scale:.6g}")
    out = Path(args.out) if args.out else _output_dir() / f"calibrated-{res.profile}-{res.threshold:g}.cfg"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(res.config_fragment())
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="edrsim",
        description="Edge data repository simulator with LSH computation reuse and bucket orchestration.",
        epilog=f"Default output directory: ${OUTPUT_DIR_ENV} if set, else the current directory.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_help="override workload.seed"):
        sp.add_argument("--config", metavar="PATH", help="INI config with [topology] [workload] "
                        "[strategy] [lsh] [output] sections")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key, e.g. strategy=CPU_USAGE or workload.rate=4000 (repeatable)")
        sp.add_argument("--seed", type=int, metavar="N", help=seed_help)
        sp.add_argument("--verbose", "-v", action="store_true", help="log orchestration plans and details")

    r = sub.add_parser("run", help="run one simulation, print a summary and write the metrics CSV")
    common(r)
    r.add_argument("--out", metavar="PATH", help="CSV output path")
    r.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSV")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a rates x strategies grid")
    common(s, seed_help="master seed; each run gets a distinct derived seed")
    s.add_argument("--rates", metavar="R1,R2,...", help="arrival rates (default: the profile's levels)")
    s.add_argument("--strategies", metavar="S1,S2,...", help="strategies (default: all five)")
    s.add_argument("--baseline", action="store_true", help="add a no-reuse NONE run per rate")
    s.add_argument("--workers", type=int, default=os.cpu_count() or 1, metavar="N",
                   help="parallel simulations (default: number of processors)")
    s.add_argument("--out", metavar="PATH", help="CSV output path")
    s.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSV")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check a config without running it")
    common(v)
    v.set_defaults(func=cmd_validate)

    pr = sub.add_parser("profiles", help="print the built-in dataset profiles")
    pr.set_defaults(func=cmd_profiles)

    c = sub.add_parser("calibrate", help="fit vector-mode noise_scale to a profile's reusability")
    c.add_argument("--profile", default="TrafficDetection", choices=PROFILE_NAMES)
    c.add_argument("--threshold", type=float, default=0.6)
    c.add_argument("--target", type=float, help="reusability to hit (default: the profile's value)")
    c.add_argument("--samples", type=int, default=2000)
    c.add_argument("--clusters", type=int, default=16)
    c.add_argument("--dimension", type=int, default=32)
    c.add_argument("--seed", type=int, default=0, metavar="N")
    c.add_argument("--out", metavar="PATH", help="config fragment output path")
    c.add_argument("--verbose", "-v", action="store_true")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as e:
        print(f"internal invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

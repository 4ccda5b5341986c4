"""Command line entry point: ``nslab <scenario> --config <path.json> --out <dir> [--seed <u64>]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import SCENARIOS, ConfigError, ExperimentConfig
from .report import write_report
from .scenarios import run_experiment


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nslab", description="Run one weak-L^p Navier-Stokes experiment.")
    parser.add_argument("scenario", choices=sorted(SCENARIOS))
    parser.add_argument("--config", required=True, type=Path, help="JSON config (an object or a list of objects)")
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    parser.add_argument("--seed", type=_u64, default=None, help="64-bit seed overriding the config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"nslab: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    items = raw if isinstance(raw, list) else [raw]
    try:
        configs = [ExperimentConfig.from_dict(item, args.scenario, args.seed) for item in items]
    except ConfigError as exc:
        print(f"nslab: invalid config: {exc}", file=sys.stderr)
        return 2
    ok = True
    for i, cfg in enumerate(configs):
        out = args.out if len(configs) == 1 else args.out / f"{i:03d}_{cfg.scenario}"
        try:
            report = run_experiment(cfg)
        except (ValueError, ConfigError) as exc:
            print(f"nslab: {cfg.scenario}: {exc}", file=sys.stderr)
            return 2
        write_report(report, out)
        for rule in report.rules:
            mark = "PASS" if rule.passed else "FAIL"
            if not rule.asserted:
                mark = "INFO"
            print(f"{mark} {cfg.scenario}:{rule.rule} measured={rule.measured} bound={rule.bound} {rule.status}")
        ok = ok and report.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

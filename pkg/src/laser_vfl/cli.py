"""Command line: ``laser-vfl run <config>`` and ``laser-vfl validate <config>``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import check_config, parse_config
from .runner import run_grid, with_overrides


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="laser-vfl", description="Train and evaluate split networks when client feature blocks go missing")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="train and evaluate every (method, grid cell, seed)")
    run.add_argument("config")
    run.add_argument("--out", help="override out_dir")
    run.add_argument("--methods", help="comma-separated method list override")
    run.add_argument("--seeds", help="comma-separated seed list override")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    cfg, findings = parse_config(args.config)
    if args.command == "validate":
        for f in findings:
            print(f)
        print("ok" if not findings else f"{len(findings)} finding(s)")
        return 1 if findings else 0
    if findings:
        for f in findings:
            print(f"config error: {f}", file=sys.stderr)
        return 1
    try:
        cfg = with_overrides(cfg, args.out, args.methods, args.seeds)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    problems = check_config(cfg)
    if problems:
        for f in problems:
            print(f"config error: {f}", file=sys.stderr)
        return 1
    summary = run_grid(cfg)
    print(f"{summary.n_rows} result rows written to {summary.out_dir}")
    for f in summary.failures:
        print(f"run failed: {f.splitlines()[0]}", file=sys.stderr)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())

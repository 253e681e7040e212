"""Command-line runner: ``gkpsense run|validate --config FILE [--out DIR] [--seed N]``.

Exit status: 0 on success, 2 when the configuration fails validation, 1 on a
runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import parse_text
from .experiments import run_experiment, threshold_from_rows

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gkpsense", description="Reproducible GKP error-correction and sensing sweeps.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run an experiment and write CSV"), ("validate", "check a config without running")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, type=Path, help="flat key = value experiment file")
        sp.add_argument("--seed", type=_seed, default=None, help="overrides the config seed")
        if name == "run":
            sp.add_argument("--out", type=Path, default=Path("."), help="output directory (default: cwd)")
    return ap


def _load(args, err):
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"{args.config}: {exc.strerror or exc}", file=err)
        return None, EXIT_INVALID
    cfg, diags = parse_text(text, args.seed)
    for d in diags:
        print(f"{args.config}: {d}", file=err)
    return cfg, (EXIT_INVALID if diags else EXIT_OK)


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    cfg, status = _load(args, err)
    if status != EXIT_OK:
        return status
    if args.command == "validate":
        print(f"{args.config}: ok ({cfg.kind}, config-hash {cfg.hash()})", file=out)
        return EXIT_OK
    try:
        rows, _ = run_experiment(cfg, args.out)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=err)
        return EXIT_RUNTIME
    path = args.out / f"{cfg.kind}.csv"
    print(f"wrote {path} ({len(rows)} rows)", file=out)
    if cfg.kind == "threshold":
        for key, s in threshold_from_rows(rows).items():
            print(f"threshold[{key}] = {s}", file=out)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

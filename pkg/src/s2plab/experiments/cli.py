"""Command line entry point.

    s2plab <experiment> [--config FILE] [--out DIR] [--seeds 0,1,2] [--assert]
    s2plab rerun --manifest PATH --out DIR

Exit codes: 0 on completion, 2 on a config problem, 3 when --assert was
passed and a tendency assertion failed.
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config_file, resolve_config
from .manifest import load_manifest
from .runners import RUNNERS, rerun_from_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERT = 3


def _parse_seeds(raw: str) -> list[int]:
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"--seeds: expected comma-separated integers, "
                          f"got {raw!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s2plab",
        description="Communication-game training experiments; CSV outputs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None,
                         help="flat key=value config file")
        cmd.add_argument("--out", default=f"out_{name.replace('-', '_')}",
                         help="output directory")
        cmd.add_argument("--seeds", default=None,
                         help="comma-separated seed list override")
        cmd.add_argument("--assert", dest="check", action="store_true",
                         help="exit 3 if a tendency assertion fails")
    rerun = sub.add_parser("rerun")
    rerun.add_argument("--manifest", required=True,
                       help="manifest.json (or its directory) to replay")
    rerun.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            manifest = load_manifest(args.manifest)
            if manifest.experiment not in RUNNERS:
                raise ConfigError(f"manifest names unknown experiment "
                                  f"{manifest.experiment!r}")
            rerun_from_manifest(manifest, args.out)
            print(f"reran {manifest.experiment} into {args.out}")
            return EXIT_OK

        file_values = parse_config_file(args.config) if args.config else None
        seeds = _parse_seeds(args.seeds) if args.seeds else None
        cfg = resolve_config(args.command, file_values, seeds)
        result = RUNNERS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    failed = False
    for name, passed, detail in result.get("assertions", []):
        status = "pass" if passed else "FAIL"
        print(f"[{status}] {name}: {detail}")
        failed = failed or not passed
    print(f"outputs written to {args.out}")
    if args.check and failed:
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

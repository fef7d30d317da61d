"""``simulate <config.json> [--out DIR] [--threads N] [--seed OVERRIDE]``

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config
from .errors import ConfigError
from .runner import dumps, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description=(
        "Run a reinforcement-urn, cultural-market, sweep or injection experiment "
        "described by a JSON config."))
    p.add_argument("config", help="path to the JSON experiment config")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = type(cfg).model_validate({**cfg.model_dump(), "master_seed": args.seed})
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:  # pydantic rejects a bad --seed
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        bundle = run(cfg, args.out, args.threads)
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(dumps(bundle.summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

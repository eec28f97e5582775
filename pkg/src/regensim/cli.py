"""``regensim`` command line entry point."""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import ConfigError, RegensimError, UnknownKind
from .runner import KINDS, describe, load_config, run

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regensim", description="Regenerative simulation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.add_argument("--threads", type=int, default=1, help="worker processes for replicates")
    p_run.add_argument("--out", default=None, help="output directory (overrides the config)")
    p_desc = sub.add_parser("describe", help="explain an experiment kind")
    p_desc.add_argument("kind", help=f"one of {', '.join(KINDS)}")
    sub.add_parser("version", help="print the tool version")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    if args.command == "describe":
        try:
            print(describe(args.kind))
        except UnknownKind:
            print(f"unknown experiment kind {args.kind!r}; known kinds: {', '.join(KINDS)}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed", "must be non-negative")
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        manifest = run(cfg, threads=args.threads, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegensimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    for name, check in manifest.checks.items():
        print(f"{'PASS' if check['passed'] else 'FAIL'}  {name}")
    return EXIT_OK if manifest.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command line front end: ``run``, ``sweep`` and ``certify``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, parse_config

log = logging.getLogger("delaywave")


def _scales(text):
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid scale list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaywave", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="certificate, simulation and checks for one scenario")
    r.add_argument("config", type=Path)

    s = sub.add_parser("sweep", help="repeat the scenario over initial-data scales")
    s.add_argument("config", type=Path)
    s.add_argument("--scales", type=_scales, nargs="+", required=True,
                   help="scale factors, space or comma separated")
    s.add_argument("-o", "--output", type=Path, default=None)

    c = sub.add_parser("certify", help="certificate only, no simulation")
    c.add_argument("config", type=Path)
    c.add_argument("-o", "--output", type=Path, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(args.config)
        if args.command == "run":
            return pipeline.run(cfg)
        if args.command == "sweep":
            scales = [x for group in args.scales for x in group]
            return pipeline.sweep(cfg, scales, args.output)
        status, text = pipeline.certify(cfg, args.output)
        if args.output is None:
            sys.stdout.write(text)
        return status
    except ConfigError as exc:
        for e in exc.errors:
            log.error("%s", e)
        return pipeline.EXIT_INPUT
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return pipeline.EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``vipsim {simulate,analyze,project,compare}``.

Exit codes: 0 success, 2 config/validation error, 3 I/O error, 4 analysis error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import default_config, load_config
from .electron_flow import SECONDS_PER_DAY
from .errors import (
    ConfigParseError,
    ConfigValidationError,
    FormatError,
    InvalidParameterError,
    VipError,
)
from .limits import RoiDefinition
from . import pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ANALYSIS = 4


def _global_options(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="run configuration file")
    parser.add_argument("--out", type=Path, default=default, help="output directory")
    parser.add_argument("--seed", type=int, default=default, help="override generator.seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vipsim", description=__doc__.splitlines()[0])
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="generate on/off events and spectra")

    p = sub.add_parser("analyze", parents=[common], help="beta^2/2 limit from two spectra")
    p.add_argument("--on", type=Path, help="current-on spectrum (default <out>/spectrum_on.txt)")
    p.add_argument("--off", type=Path, help="current-off spectrum (default <out>/spectrum_off.txt)")

    p = sub.add_parser("project", parents=[common], help="sensitivity of a future run plan")
    p.add_argument("--on-days", type=float)
    p.add_argument("--off-days", type=float)
    p.add_argument("--current", type=float, help="A")
    p.add_argument("--background-scale", type=float)

    p = sub.add_parser("compare", parents=[common], help="relative ROI rate difference")
    p.add_argument("mc", type=Path)
    p.add_argument("data", type=Path)
    p.add_argument("--roi", type=float, nargs=2, metavar=("LO_EV", "HI_EV"),
                   help="default: the configured ROI")
    return parser


def _run(args) -> str:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigValidationError([("--seed", "must fit in 64 unsigned bits")])
        cfg = cfg.with_seed(args.seed)
    out = args.out if args.out is not None else Path(cfg.output_dir)

    if args.command == "simulate":
        files = pipeline.run_simulate(cfg, out)
        return "\n".join(str(p) for p in files.values())
    if args.command == "analyze":
        on = args.on or out / pipeline.SPECTRUM_ON
        off = args.off or out / pipeline.SPECTRUM_OFF
        _, report = pipeline.run_analyze(cfg, on, off, out)
        return report
    if args.command == "project":
        days = lambda d: None if d is None else d * SECONDS_PER_DAY  # noqa: E731
        _, report = pipeline.run_project(
            cfg, out,
            on_duration=days(args.on_days),
            off_duration=days(args.off_days),
            current=args.current,
            background_scale=args.background_scale,
        )
        return report
    roi = RoiDefinition(*args.roi) if args.roi else cfg.roi
    _, _, report = pipeline.run_compare(args.mc, args.data, roi, out)
    return report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = _run(args)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidParameterError as exc:
        print(f"invalid parameter: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VipError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    print(text, end="" if text.endswith("\n") else "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

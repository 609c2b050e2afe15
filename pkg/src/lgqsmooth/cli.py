"""Command line front end.

Subcommands map one-to-one onto pipeline stages; ``report`` runs the
statistical validation suite and prints one pass/fail line per criterion.
Progress messages go to stderr, data products go to files (or stdout for
the report table).

Exit codes: 0 success, 1 configuration or input error, 2 numerical
failure inside an estimator, 3 validation criteria not met.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import ConfigError, parse_config
from .estimate import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_ACCEPTANCE = 3


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors, not exit status 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _formats(text: str) -> tuple[str, ...]:
    parts = tuple(p.strip() for p in text.split(",") if p.strip())
    bad = [p for p in parts if p not in ("csv", "bin")]
    if bad or not parts:
        raise argparse.ArgumentTypeError(
            f"formats must be a comma list of csv/bin, got {text!r}")
    return parts


def _add_config_args(sp) -> None:
    sp.add_argument("--config", required=True, metavar="PATH",
                    help="run configuration file")
    sp.add_argument("--out-dir", metavar="DIR",
                    help="run directory (default: outputs.directory from "
                         "the config, else $LGQSMOOTH_OUT_DIR, else ./out)")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="lgqsmooth",
        description="Simulate, estimate, and validate conditional "
                    "trajectories of a monitored oscillator.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate",
                        help="draw an ensemble of true states and records")
    _add_config_args(sp)

    sp = sub.add_parser("estimate",
                        help="run the filter and retrofilter over records")
    _add_config_args(sp)
    sp.add_argument("--jobs", type=int, default=1, metavar="N",
                    help="worker processes (default 1)")

    sp = sub.add_parser("smooth",
                        help="combine filter and retrofilter per target")
    _add_config_args(sp)

    sp = sub.add_parser("analyze",
                        help="ensemble statistics, distances, and "
                             "autocorrelations")
    _add_config_args(sp)

    sp = sub.add_parser("report",
                        help="run the validation suite and print the table")
    _add_config_args(sp)

    sp = sub.add_parser("inject",
                        help="rescale records to a lower efficiency")
    sp.add_argument("--records", required=True, metavar="DIR",
                    help="directory of input record files")
    sp.add_argument("--out-dir", required=True, metavar="DIR")
    sp.add_argument("--eta-old", required=True, type=float,
                    help="efficiency the records were taken at")
    sp.add_argument("--eta-new", required=True, type=float,
                    help="reduced efficiency to emulate")
    sp.add_argument("--seed", type=int, default=0,
                    help="base seed for the injected noise (default 0)")
    sp.add_argument("--formats", type=_formats, default=("csv",),
                    help="output formats, comma list of csv/bin")

    sp = sub.add_parser("demod",
                        help="demodulate a raw trace into records")
    sp.add_argument("--trace", required=True, metavar="PATH",
                    help="raw trace file (.bin or .csv)")
    sp.add_argument("--out-dir", required=True, metavar="DIR")
    sp.add_argument("--omega-hz", required=True, type=float,
                    help="carrier frequency in Hz")
    sp.add_argument("--bw-hz", type=float, default=56.5e3,
                    help="low-pass 3 dB bandwidth in Hz (default 56500)")
    sp.add_argument("--order", type=int, default=4,
                    help="low-pass filter order (default 4)")
    sp.add_argument("--dt-us", type=float, default=1.0,
                    help="output sample spacing in us (default 1)")
    sp.add_argument("--record-us", type=float, default=750.0,
                    help="record length in us (default 750)")
    sp.add_argument("--discard-us", type=float, default=4000.0,
                    help="transient to discard in us (default 4000)")
    sp.add_argument("--formats", type=_formats, default=("csv",))
    return parser


def _resolve_out(args, cfg) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    if cfg is not None and cfg.out_dir:
        return Path(cfg.out_dir)
    env = os.environ.get("LGQSMOOTH_OUT_DIR")
    if env:
        return Path(env)
    return Path("out")


def _dispatch(args) -> int:
    cmd = args.command
    if cmd in ("simulate", "estimate", "smooth", "analyze", "report"):
        cfg = parse_config(Path(args.config))
        base = _resolve_out(args, cfg)
        if cmd == "simulate":
            pipeline.stage_simulate(cfg, base)
        elif cmd == "estimate":
            pipeline.stage_estimate(cfg, base, jobs=args.jobs)
        elif cmd == "smooth":
            pipeline.stage_smooth(cfg, base)
        elif cmd == "analyze":
            pipeline.stage_analyze(cfg, base)
        else:
            results = pipeline.acceptance_report(cfg)
            print(pipeline.format_report(results))
            if not all(r.passed for r in results):
                return EXIT_ACCEPTANCE
        return EXIT_OK
    if cmd == "inject":
        pipeline.stage_inject(Path(args.records), Path(args.out_dir),
                              args.eta_old, args.eta_new, args.seed,
                              formats=args.formats)
        return EXIT_OK
    if cmd == "demod":
        pipeline.stage_demod(Path(args.trace), Path(args.out_dir),
                             2.0 * math.pi * args.omega_hz,
                             bw_3db=args.bw_hz, order=args.order,
                             dt_out=args.dt_us * 1e-6,
                             record_len=args.record_us * 1e-6,
                             discard=args.discard_us * 1e-6,
                             formats=args.formats)
        return EXIT_OK
    raise AssertionError(f"unhandled command {cmd!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"lgqsmooth: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"lgqsmooth: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as exc:
        print(f"lgqsmooth: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

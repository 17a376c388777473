from __future__ import annotations

import argparse
import logging
import os
from pathlib import Path

from dotenv import load_dotenv

from thirdscatter.config import ROUNDTRIP_MODES, ConfigError, RunConfig, apply_overrides, config_from_mapping, load_config
from thirdscatter.harness import PLOT_KINDS, emit_plots, execute
from thirdscatter.marchenko import ModelViolationError
from thirdscatter.potentials import PotentialError


EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_MODEL = 3

_PIPELINE_HELP = {
    "forward": "Scattering data, bound states and tail constants for a potential",
    "bound-states": "Locate and characterize bound states in a sector of Omega1",
    "rh-solitons": "Reflectionless Riemann-Hilbert solve from a pole list",
    "marchenko": "Solve the coupled Marchenko system and recover Q, P",
    "roundtrip": "Forward, invert, forward again and compare",
    "selftest": "Fast closed-form and free-case checks",
}


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="YAML or JSON run config")
    p.add_argument("--out", type=Path, default=None, help="Output directory (env THIRDSCATTER_OUT_DIR)")
    p.add_argument("--preset", default=None, help="Potential preset, e.g. 'gauss(eps=0.05)'")
    p.add_argument("--tolerance", action="append", default=[], metavar="KEY=VAL", help="Override one tolerance")
    p.add_argument("--threads", type=int, default=None, help="Worker threads (env THIRDSCATTER_THREADS)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thirdscatter")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in _PIPELINE_HELP.items():
        p = sub.add_parser(name, help=text)
        _add_run_args(p)
        if name == "roundtrip":
            p.add_argument("--mode", choices=ROUNDTRIP_MODES, default=None)

    plots = sub.add_parser("emit-plots", help="Write CSV curves from a dataset or solution file")
    plots.add_argument("--input", type=Path, required=True)
    plots.add_argument("--kind", choices=PLOT_KINDS, required=True)
    plots.add_argument("--x", type=float, default=0.0, help="x of the Marchenko slice")
    plots.add_argument("--out", type=Path, default=None)

    return parser


def _env_threads() -> int | None:
    raw = os.environ.get("THIRDSCATTER_THREADS", "").strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"THIRDSCATTER_THREADS must be an integer (got {raw!r})") from e


def _env_out() -> Path | None:
    raw = os.environ.get("THIRDSCATTER_OUT_DIR", "").strip()
    return Path(raw) if raw else None


def _run_config(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config, pipeline=args.command)
    else:
        cfg = config_from_mapping({}, pipeline=args.command)
    threads = args.threads if args.threads is not None else _env_threads()
    out_dir = args.out if args.out is not None else _env_out()
    return apply_overrides(
        cfg,
        preset=args.preset,
        tolerances=list(args.tolerance),
        out_dir=out_dir,
        threads=threads,
        roundtrip=getattr(args, "mode", None),
    )


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )

    load_dotenv()

    if args.command == "emit-plots":
        out_dir = args.out or _env_out() or Path("out")
        try:
            paths = emit_plots(args.input, args.kind, out_dir, x=float(args.x))
        except (FileNotFoundError, ValueError) as e:
            logging.error("%s", e)
            return EXIT_USAGE
        for path in paths:
            logging.info("Wrote %s", path)
        return EXIT_OK

    if args.command in _PIPELINE_HELP:
        try:
            cfg = _run_config(args)
        except (ConfigError, PotentialError, FileNotFoundError) as e:
            logging.error("%s", e)
            return EXIT_USAGE

        try:
            report = execute(cfg)
        except (ConfigError, PotentialError, FileNotFoundError) as e:
            logging.error("%s", e)
            return EXIT_USAGE
        except ModelViolationError as e:
            logging.error("Model violation: %s", e)
            return EXIT_MODEL
        except (RuntimeError, ValueError) as e:
            logging.error("Run failed: %s", e)
            return EXIT_FAILED

        for check in report.failed:
            logging.error("Check failed: %s = %.3e (tolerance %.1e)", check.name, check.value, check.tolerance)
        if report.skipped_reason:
            logging.info("Skipped: %s", report.skipped_reason)
        logging.info("Status: %s (%s checks)", report.status, len(report.checks))
        return report.exit_code

    parser.error(f"Unknown command: {args.command}")
    return EXIT_USAGE

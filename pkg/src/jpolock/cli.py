"""Command-line entry point: ``jpolock {potential,run,analyze,report,validate-config}``.

Exit codes: 0 success, 2 configuration error, 3 some sweep members failed,
4 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .config import FORMATS, default_config, load_config_file, resolve
from .errors import ConfigError, TraceFormatError
from .runner import RunDirError, cmd_analyze, cmd_potential, cmd_report, cmd_run

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_IO = 0, 2, 3, 4


def _formats(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in FORMATS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s) {bad}; choose from {FORMATS}")
    return items


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jpolock", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("--config", help="JSON config (or a run manifest); defaults built in")
        if output:
            p.add_argument("--output", help="output directory")
        p.add_argument("--workers", type=int)
        p.add_argument("--seed", type=_seed, help="overrides simulation.seed")
        p.add_argument("--format", type=_formats, dest="formats",
                       help="comma-separated subset of csv,json,svg")

    common(sub.add_parser("potential", help="cross sections and stationary points per member"))
    common(sub.add_parser("run", help="simulate, analyse and fit every sweep member"))
    p = sub.add_parser("analyze", help="spectra and fits for existing traces or run dirs")
    p.add_argument("inputs", nargs="+")
    common(p)
    p = sub.add_parser("report", help="figure bundle for a completed run")
    p.add_argument("run_dir")
    p.add_argument("--output")
    p.add_argument("--format", type=_formats, dest="formats")
    p = sub.add_parser("validate-config", help="check a config and print the resolved sweep")
    common(p, output=False)
    p = sub.add_parser("default-config", help="print the built-in config template")
    return parser


def _load(args):
    raw = load_config_file(args.config) if args.config else {}
    return resolve(raw, seed=args.seed, output_dir=getattr(args, "output", None),
                   workers=args.workers, formats=args.formats)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "default-config":
            json.dump(default_config(), sys.stdout, indent=2)
            print()
            return EXIT_OK
        if args.command == "report":
            rep = cmd_report(args.run_dir, args.output, args.formats or FORMATS)
            if rep["gaps"]:
                print(f"partial report, {len(rep['gaps'])} missing artifact(s)", file=sys.stderr)
            return EXIT_OK
        cfg = _load(args)
        if args.command == "validate-config":
            for m in cfg.members:
                print(json.dumps(m.as_record()))
            return EXIT_OK
        if args.command == "potential":
            cmd_potential(cfg)
            return EXIT_OK
        if args.command == "run":
            manifest = cmd_run(cfg)
            failed = [m["index"] for m in manifest["members"] if m["status"] != "ok"]
            if failed:
                print(f"members failed: {failed}", file=sys.stderr)
                return EXIT_PARTIAL
            return EXIT_OK
        if args.command == "analyze":
            out = args.output or cfg.output_dir
            cmd_analyze(args.inputs, cfg.welch, cfg.analysis, out, args.formats or cfg.formats)
            return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TraceFormatError, RunDirError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

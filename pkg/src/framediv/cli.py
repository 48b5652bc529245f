"""Command-line driver: ``framediv run <suite> [options]``.

Exit status is 0 when every verdict matches its expectation, 1 when some
verdict does not (the offending summary rows are printed as JSON lines on
stderr) and 2 on configuration errors.  The aggregate CSV is always printed
on stdout; ``--out DIR`` additionally writes ``report.jsonl`` (one row per
sample) and ``summary.csv``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import SUITES, build_config, load_config_file, parse_grid
from .errors import ConfigError, FrameDivError
from .report import CSV_FIELDS, _jsonable
from .suites import run_suite

log = logging.getLogger("framediv")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors raise instead of exiting."""

    def error(self, message: str):  # noqa: D401 - argparse API
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="framediv", description="Numerical verification suites for frame-divergence identities.", allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run a verification suite", allow_abbrev=False)
    run.add_argument("suite", choices=SUITES)
    run.add_argument("--config", type=Path, help="YAML configuration (overrides the flags)")
    run.add_argument("--metric", help="built-in metric name(s), comma separated")
    run.add_argument("--field", help="built-in tensor field name(s), comma separated")
    run.add_argument("--immersion", help="built-in immersion name(s), comma separated")
    run.add_argument("--grid", help="sample grid, e.g. 50x50 or 12")
    run.add_argument("--seed", type=int, help="RNG seed (default 0)")
    run.add_argument("--tol", type=float, help="tolerance override for every identity")
    run.add_argument("--out", type=Path, help="directory for report.jsonl and summary.csv")
    run.add_argument("--n", type=int, help="spectrum size for sympoly-identities")
    run.add_argument("--samples", type=int, help="random spectra per size")
    run.add_argument("--q", help="polynomial Q for polyfamily-scan, e.g. 'x^3-3x'")
    run.add_argument("--endpoint", choices=("lower", "upper", "both"), help="endpoint(s) to scan")
    run.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub.add_parser("list", help="list suites and built-in fixtures", allow_abbrev=False)
    return parser


def _print_fixtures(out) -> None:
    from .codazzi import BUILTIN_FIELDS
    from .geometry import BUILTIN_METRICS
    from .hypersurface import BUILTIN_IMMERSIONS

    print("suites:     " + ", ".join(SUITES), file=out)
    print("metrics:    " + ", ".join(BUILTIN_METRICS) + ", perturbed-flat-<seed>", file=out)
    print("fields:     " + ", ".join(BUILTIN_FIELDS), file=out)
    print("immersions: " + ", ".join(BUILTIN_IMMERSIONS), file=out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"framediv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "list":
        _print_fixtures(sys.stdout)
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        flags = {
            "suite": args.suite,
            "seed": args.seed,
            "grid": parse_grid(args.grid),
            "tolerance": args.tol,
            "out": args.out,
            "n": args.n,
            "samples": args.samples,
            "metric": args.metric,
            "field": args.field,
            "immersion": args.immersion,
            "q": args.q,
            "endpoint": args.endpoint,
        }
        file_values = load_config_file(args.config) if args.config else {}
        if file_values.get("suite", args.suite) != args.suite:
            raise ConfigError(f"config suite {file_values['suite']!r} differs from the requested {args.suite!r}")
        config = build_config({"seed": 0}, flags, file_values)
        log.info("running %s (seed %s)", config.suite, config.seed)
        collector = run_suite(config)
    except ConfigError as exc:
        print(f"framediv: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FrameDivError as exc:
        print(json.dumps({"suite": args.suite, "error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_FAIL

    writer = csv.DictWriter(sys.stdout, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for s in collector.summaries:
        writer.writerow({k: _jsonable(s[k]) for k in CSV_FIELDS})
    failures = [s for s in collector.summaries if not s["ok"]]
    for s in failures:
        print(json.dumps(_jsonable(s)), file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

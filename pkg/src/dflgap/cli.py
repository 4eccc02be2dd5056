"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 partial failures (failed
sweep cells, failed gap items, or a gradient check over tolerance), 3 fatal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import harness
from .errors import ConfigError, DflGapError

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dflgap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sweep", help="run the correlation sweep")
    p.add_argument("--config", type=Path, help="TOML sweep configuration (defaults if omitted)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--format", choices=harness.FORMATS, action="append", help="repeatable; default csv")
    p.add_argument("--fast", action="store_true", help="5 rho values, 3 seeds, 200 iterations")

    p = sub.add_parser("gaps", help="build and measure the gap constructions")
    p.add_argument("--params", type=Path, help="TOML parameters (defaults if omitted)")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("poc", help="price of correlation for one example")
    p.add_argument("--kind", choices=("flow", "setcover", "submodular"), required=True)
    p.add_argument("--params", type=Path, help="TOML instance (worked example if omitted)")

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference QP gradients")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)

    sub.add_parser("version", help="print the package version")
    return parser


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, default=str) + "\n")


def cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config) if args.config else harness.SweepConfig()
    if args.fast:
        cfg = harness.fast_profile(cfg)

    def progress(cell, done, total):
        state = "ok" if cell.ok else "FAILED"
        logging.info("cell %d/%d rho=%g seed=%d %s", done, total, cell.rho, cell.seed, state)

    result = harness.run_rho_sweep(cfg, progress=progress)
    if result.rows:
        for fmt in args.format or ["csv"]:
            harness.emit(result.rows, fmt, args.out / harness.OUTPUT_NAMES[fmt])
    if result.failures:
        _write_json(args.out / "failures.json", [
            {"rho": c.rho, "seed": c.seed, "rho_index": c.rho_index, "seed_index": c.seed_index, "error": c.error}
            for c in result.failures
        ])
        print(f"{len(result.failures)} of {cfg.n_cells} cells failed", file=sys.stderr)
        return EXIT_PARTIAL if result.rows else EXIT_FATAL
    return EXIT_OK


def cmd_gaps(args) -> int:
    items = harness.run_gap_suite(harness.load_params(args.params))
    _write_json(args.out / "gaps.json", [{"name": i.name, "report": i.report, "error": i.error} for i in items])
    for item in items:
        if item.error:
            print(f"{item.name}: FAILED {item.error}")
        else:
            r = item.report
            print(f"{item.name}: two_stage={r['loss_two_stage']:.9g} e2e={r['loss_e2e']:.9g} opt={r['loss_opt']:.9g}")
    return EXIT_PARTIAL if any(i.error for i in items) else EXIT_OK


def cmd_poc(args) -> int:
    params = harness.load_params(args.params)
    inst = harness.poc_from_params(args.kind, params)
    print(json.dumps(harness.poc_report(inst), indent=1, default=str))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.trials < 1 or not args.tol > 0:
        raise ConfigError("trials must be positive and tol must be positive")
    report = harness.gradcheck(args.trials, args.tol, args.seed)
    verdict = "pass" if report.passed else "FAIL"
    print(f"{report.trials} trials, worst relative error {report.worst_error:.3g} (tol {report.tol:g}): {verdict}")
    return EXIT_OK if report.passed else EXIT_PARTIAL


COMMANDS = {"sweep": cmd_sweep, "gaps": cmd_gaps, "poc": cmd_poc, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DflGapError, OSError, ValueError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())

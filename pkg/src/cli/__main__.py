"""
Command-line entry point.

    python -m src.cli run experiments/decay_g20.yaml --jobs 4
    python -m src.cli run data/runs/20250101_120000_decay/run.json
    python -m src.cli report data/runs/*_decay --out summary.csv
    python -m src.cli verify --seed 7

Exit codes: 0 success, 1 runtime failure (or a failed identity check), 2 invalid input.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..core.errors import GeometryError, LabError, ValidationError
from ..utils.config import Config
from ..utils.helpers import get_timestamp, write_csv
from .experiment import ExperimentConfig, load_experiment
from .report import REPORT_COLUMNS, build_report
from .runner import run_experiment

logger = logging.getLogger("src.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


def _setup_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anderson-lab", description="Two-particle Anderson fractional-moment laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment file (.yaml/.json) or re-run a run.json")
    run.add_argument("config", type=Path)
    run.add_argument("--seed", type=int, default=None, help="override the configured seed")
    run.add_argument("--jobs", type=int, default=None, help="worker processes (default: LAB_JOBS)")
    run.add_argument("--out", type=Path, default=None, help="output root (default: ANDERSON_LAB_OUT)")

    report = sub.add_parser("report", help="merge fitted decay rates of several runs")
    report.add_argument("runs", type=Path, nargs="+")
    report.add_argument("--out", type=Path, default=None, help="summary CSV path")

    verify = sub.add_parser("verify", help="run the exact-identity suite")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--jobs", type=int, default=None)
    verify.add_argument("--out", type=Path, default=None)
    verify.add_argument("--quick", action="store_true", help="a tenth of the default trial counts")
    return parser


def _print_rows(rows: List[dict], columns: List[str]) -> None:
    widths = {c: max(len(c), *(len(f"{r.get(c)}") for r in rows)) for c in columns}
    print("  ".join(c.ljust(widths[c]) for c in columns))
    for row in rows:
        print("  ".join(f"{row.get(c)}".ljust(widths[c]) for c in columns))


def _run(cfg: ExperimentConfig, jobs: Optional[int], out: Optional[Path]) -> int:
    if jobs is not None and jobs < 1:
        raise ValidationError([f"--jobs must be >= 1 (got {jobs})"], "Invalid arguments")
    record, run_dir = run_experiment(cfg, jobs=jobs, out_root=out)
    if record.rows:
        _print_rows(record.rows, list(record.rows[0].keys()))
    for key, value in record.fits.items():
        if not isinstance(value, (list, dict)):
            print(f"{key}: {value}")
    print(f"artifacts: {run_dir}")
    if record.passed is False and cfg.kind == "verify-identities":
        print("FAILED")
        return EXIT_FAILURE
    if record.passed is False:
        print("recursion inequality not satisfied at every step")
    return EXIT_OK


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "run":
        cfg = load_experiment(args.config).with_overrides(seed=args.seed)
        return _run(cfg, args.jobs, args.out)
    if args.command == "verify":
        cfg = ExperimentConfig.verify_suite(args.seed, 0.1 if args.quick else 1.0)
        return _run(cfg, args.jobs, args.out)
    if args.command == "report":
        frame = build_report(args.runs)
        out = args.out or Config.OUTPUT_ROOT / f"report_{get_timestamp()}.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(frame.to_dict("records"), out, comment=f"runs={len(frame)} monotone_m={frame.attrs['monotone']}",
                  columns=REPORT_COLUMNS)
        _print_rows(frame.to_dict("records"), REPORT_COLUMNS)
        if not frame.attrs["monotone"]:
            print("warning: fitted m is not increasing in g")
        print(f"summary: {out}")
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        Config.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return _dispatch(args)
    except (ValidationError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except LabError as exc:
        logger.exception("Run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001
        logger.exception("Unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

"""
Experiment orchestration: dispatch per kind, run record, and artifacts on disk.

Every run writes into its own directory:
    results.csv     one row per result, preceded by a `# seed=...` line
    run.json        the RunRecord (config snapshot, version, timings, rows, fits)
    plot.svg        decay / recursion figure where applicable
    benchmark.json  per-stage timings
"""

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from .. import __version__
from ..core.lattice import Site
from ..core.moments import (
    apriori_bound_check,
    decay_profile,
    estimate_moment,
    fit_decay,
    recursion_audit,
    split_config_moment,
    upsilon,
)
from ..utils.benchmark import get_benchmark_tracker, reset_benchmark_tracker
from ..utils.config import Config
from ..utils.helpers import fingerprint, load_json, make_run_dir, save_json, write_csv
from .experiment import ExperimentConfig
from .identities import run_identity_suite
from .plotting import plot_decay, plot_recursion

logger = logging.getLogger(__name__)

RECORD_VERSION = 1

# columns of results.csv per kind
COLUMNS = {
    "moment": ["x", "y", "mean", "stderr", "n", "s"],
    "decay": ["R", "mean", "stderr", "n"],
    "split": ["R", "mean", "stderr", "n"],
    "apriori": ["g", "max_conditional", "mean_conditional"],
    "upsilon": ["L", "value", "stderr", "n"],
    "recursion": ["k", "L_k", "upsilon", "stderr", "upsilon_tilde", "rhs", "holds", "envelope"],
    "verify-identities": ["name", "passed", "trials", "failures", "max_error", "tolerance", "seconds", "detail"],
}


@dataclass
class RunRecord:
    """Everything needed to audit or repeat a run."""
    config: Dict[str, Any]
    version: str
    started_at: str
    wall_clock_seconds: float
    rows: List[Dict[str, Any]]
    fits: Dict[str, Any] = field(default_factory=dict)
    passed: Optional[bool] = None
    fingerprint: str = ""
    benchmark: Dict[str, Any] = field(default_factory=dict)
    record_version: int = RECORD_VERSION

    @property
    def kind(self) -> str:
        return self.config["kind"]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "record_version": self.record_version,
            "version": self.version,
            "started_at": self.started_at,
            "wall_clock_seconds": self.wall_clock_seconds,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "rows": self.rows,
            "fits": self.fits,
            "passed": self.passed,
            "benchmark": self.benchmark,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunRecord":
        return cls(
            config=data["config"],
            version=data["version"],
            started_at=data["started_at"],
            wall_clock_seconds=float(data["wall_clock_seconds"]),
            rows=list(data["rows"]),
            fits=dict(data.get("fits") or {}),
            passed=data.get("passed"),
            fingerprint=data.get("fingerprint", ""),
            benchmark=dict(data.get("benchmark") or {}),
            record_version=int(data.get("record_version", RECORD_VERSION)),
        )

    @classmethod
    def load(cls, path: Path) -> "RunRecord":
        return cls.from_dict(load_json(path))


@dataclass
class Outcome:
    rows: List[Dict[str, Any]]
    fits: Dict[str, Any] = field(default_factory=dict)
    passed: Optional[bool] = None
    plot: Optional[Callable[[Path], Path]] = None


# ---------------------------------------------------------------------------
# Per-kind experiments
# ---------------------------------------------------------------------------

def _run_moment(cfg: ExperimentConfig, jobs: int) -> Outcome:
    x, y = cfg.point("x"), cfg.point("y")
    est = estimate_moment(cfg.model, cfg.sites, x, y, cfg.n_disorder, cfg.seed, jobs, cfg.integrator)
    row = {"x": str(x.to_list()), "y": str(y.to_list()), "mean": est.mean, "stderr": est.stderr,
           "n": est.n_samples, "s": est.s}
    return Outcome([row], {"interval": list(cfg.model.interval(cfg.sites))})


def _decay_outcome(points: List[Tuple[int, Any]], title: str) -> Outcome:
    rows = [{"R": R, "mean": est.mean, "stderr": est.stderr, "n": est.n_samples} for R, est in points]
    fits: Dict[str, Any] = {}
    fit = None
    if len(points) >= 3:
        fit = fit_decay(points)
        fits = fit.to_dict()
    R = [r["R"] for r in rows]
    means = [r["mean"] for r in rows]
    errs = [r["stderr"] for r in rows]
    return Outcome(rows, fits, plot=lambda path: plot_decay(R, means, errs, fit, path, title))


def _run_decay(cfg: ExperimentConfig, jobs: int) -> Outcome:
    profile = decay_profile(
        cfg.model, cfg.sites, cfg.anchor, cfg.geometry["distances"], cfg.n_disorder, cfg.seed,
        cfg.geometry.get("probes_per_distance"), jobs, cfg.integrator,
    )
    return _decay_outcome(profile, f"decay, g={cfg.model.g:g}, s={cfg.model.s:g}")


def _run_split(cfg: ExperimentConfig, jobs: int) -> Outcome:
    points = [
        (int(R), split_config_moment(cfg.model, cfg.sites, int(R), cfg.n_disorder, cfg.seed, jobs, cfg.integrator))
        for R in cfg.geometry["distances"]
    ]
    return _decay_outcome(points, f"split configurations, U={cfg.model.interaction.kind}")


def _run_apriori(cfg: ExperimentConfig, jobs: int) -> Outcome:
    report = apriori_bound_check(
        cfg.model, cfg.sites, Site.of(cfg.geometry["u1"]), Site.of(cfg.geometry["u2"]),
        cfg.point("x"), cfg.point("y"),
        int(cfg.budget.get("n_outer", 20)), int(cfg.budget.get("n_inner", 500)), cfg.seed,
        couplings=[float(g) for g in cfg.options.get("couplings", [5, 10, 20, 40])],
        jobs=jobs, integrator=cfg.integrator,
    )
    rows = [
        {"g": g, "max_conditional": m, "mean_conditional": float(report.conditional[:, j].mean())}
        for j, (g, m) in enumerate(zip(report.couplings, report.max_conditional))
    ]
    return Outcome(rows, {"scale_exponent": report.scale_exponent, "target": -cfg.model.s})


def _run_upsilon(cfg: ExperimentConfig, jobs: int) -> Outcome:
    scales = cfg.geometry["L"]
    scales = [scales] if isinstance(scales, int) else scales
    rows = []
    for L in scales:
        value, err = upsilon(cfg.model, int(L), cfg.sites, cfg.n_disorder, cfg.seed, jobs, cfg.integrator)
        rows.append({"L": int(L), "value": value, "stderr": err, "n": cfg.n_disorder})
    return Outcome(rows, {"interval": list(cfg.model.interval(cfg.sites))})


def _run_recursion(cfg: ExperimentConfig, jobs: int) -> Outcome:
    audit = recursion_audit(
        cfg.model, int(cfg.geometry["L0"]), int(cfg.geometry["K"]), cfg.sites, cfg.n_disorder, cfg.seed,
        a=cfg.options.get("a"), A=cfg.options.get("A"), nu=float(cfg.options.get("nu", 0.25)),
        q=cfg.options.get("q"), jobs=jobs, integrator=cfg.integrator,
    )
    series = audit.series
    steps = {step["k"] + 1: step for step in audit.steps}
    rows = []
    for k, L in enumerate(series.scales.values):
        step = steps.get(k)
        rows.append({
            "k": k,
            "L_k": L,
            "upsilon": float(series.upsilon[k]),
            "stderr": float(series.upsilon_stderr[k]),
            "upsilon_tilde": float(series.upsilon_tilde[k - 1]) if k >= 1 else None,
            "rhs": step["rhs"] if step else None,
            "holds": step["holds"] if step else None,
            "envelope": float(audit.envelope[k]) if audit.envelope is not None else None,
        })
    fits = {key: value for key, value in audit.to_dict().items() if key not in ("series", "steps")}
    fits["tilde_consistent"] = series.tilde_consistent()

    def plot(path: Path) -> Path:
        return plot_recursion(series.scales.values, series.upsilon, series.upsilon_stderr,
                              audit.envelope, audit.rate_envelope, path,
                              f"recursion audit, g={cfg.model.g:g}")

    return Outcome(rows, fits, passed=audit.all_hold, plot=plot)


def _run_identities(cfg: ExperimentConfig, jobs: int) -> Outcome:
    results = run_identity_suite(
        cfg.seed, float(cfg.options.get("trials_scale", 1.0)), cfg.options.get("checks"), jobs=jobs,
    )
    rows = [result.to_dict() for result in results]
    passed = all(result.passed for result in results)
    return Outcome(rows, {"passed": sum(r.passed for r in results), "total": len(results)}, passed=passed)


DISPATCH: Dict[str, Callable[[ExperimentConfig, int], Outcome]] = {
    "moment": _run_moment,
    "decay": _run_decay,
    "split": _run_split,
    "apriori": _run_apriori,
    "upsilon": _run_upsilon,
    "recursion": _run_recursion,
    "verify-identities": _run_identities,
}


def run_experiment(cfg: ExperimentConfig, jobs: Optional[int] = None,
                   out_root: Optional[Path] = None) -> Tuple[RunRecord, Path]:
    """Execute `cfg`, then write results.csv, run.json, plot.svg and benchmark.json.

    Results are merged before anything is written; the run directory is created last.
    """
    jobs = jobs or Config.DEFAULT_JOBS
    reset_benchmark_tracker()
    tracker = get_benchmark_tracker()
    started_at = datetime.now().isoformat(timespec="seconds")
    logger.info("Running %s experiment (seed=%d, jobs=%d)", cfg.kind, cfg.seed, jobs)
    if cfg.kind != "verify-identities":
        logger.info("Energy interval I = [%.4g, %.4g]", *cfg.model.interval(cfg.sites))

    start = time.perf_counter()
    with tracker.stage("runner", cfg.kind, seed=cfg.seed, jobs=jobs):
        outcome = DISPATCH[cfg.kind](cfg, jobs)
    wall_clock = time.perf_counter() - start

    snapshot = cfg.to_dict()
    record = RunRecord(
        config=snapshot,
        version=__version__,
        started_at=started_at,
        wall_clock_seconds=wall_clock,
        rows=outcome.rows,
        fits=outcome.fits,
        passed=outcome.passed,
        fingerprint=fingerprint(snapshot),
        benchmark=tracker.get_summary(),
    )

    root = Path(out_root or cfg.output_dir or Config.OUTPUT_ROOT)
    run_dir = make_run_dir(root, cfg.kind)
    with tracker.stage("runner", "write_artifacts"):
        write_csv(outcome.rows, run_dir / "results.csv", comment=f"seed={cfg.seed} kind={cfg.kind} version={__version__}",
                  columns=COLUMNS[cfg.kind])
        save_json(record.to_dict(), run_dir / "run.json")
        if outcome.plot is not None and outcome.rows:
            outcome.plot(run_dir / "plot.svg")
    tracker.save_json(run_dir / "benchmark.json")
    logger.info("Run artifacts written to %s (%.2fs)", run_dir, wall_clock)
    return record, run_dir

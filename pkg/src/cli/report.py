"""
Merged summary of several runs: the decay rate m against the coupling g.
"""

import logging
from json import JSONDecodeError
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pandas as pd

from ..core.errors import ValidationError
from .runner import RunRecord

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["run", "kind", "g", "s", "interaction", "m", "m_stderr", "r2", "n_disorder", "seed"]


def _load_record(run_dir: Path) -> RunRecord:
    path = run_dir / "run.json" if run_dir.is_dir() else run_dir
    if not path.exists():
        raise ValidationError([f"{path} does not exist"], "Cannot build report")
    try:
        return RunRecord.load(path)
    except (JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError([f"{path} is not a valid run record: {exc}"], "Cannot build report") from exc


def build_report(run_dirs: Sequence[Path]) -> pd.DataFrame:
    """One row per run (g, s, fitted m, r^2, budget), sorted by g.

    All runs must share one experiment kind. The frame's `attrs["monotone"]` tells
    whether m increases with g.
    """
    if not run_dirs:
        raise ValidationError(["at least one run directory is required"], "Cannot build report")
    records = [(Path(d), _load_record(Path(d))) for d in run_dirs]
    kinds = sorted({record.kind for _, record in records})
    if len(kinds) > 1:
        raise ValidationError([f"runs mix experiment kinds: {', '.join(kinds)}"], "Cannot build report")

    rows: List[dict] = []
    for run_dir, record in records:
        model = record.config.get("model", {})
        fits = record.fits
        rows.append({
            "run": run_dir.name if run_dir.is_dir() else run_dir.parent.name,
            "kind": record.kind,
            "g": model.get("g"),
            "s": model.get("s"),
            "interaction": (model.get("interaction") or {}).get("kind", "none"),
            "m": fits.get("m"),
            "m_stderr": fits.get("m_stderr"),
            "r2": fits.get("r2"),
            "n_disorder": (record.config.get("budget") or {}).get("n_disorder"),
            "seed": record.config.get("seed"),
        })
    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS).sort_values("g", kind="stable").reset_index(drop=True)

    m = frame["m"].astype(float).to_numpy()
    monotone = bool(np.all(np.diff(m[np.isfinite(m)]) > 0)) if np.isfinite(m).sum() > 1 else True
    frame.attrs["monotone"] = monotone
    if not monotone:
        logger.warning("Fitted m is not increasing in g across these runs")
    return frame

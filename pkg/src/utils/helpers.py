"""
Utility helper functions for the Anderson lab: persistence, provenance and run directories.
"""

import hashlib
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (Path, datetime)):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def fingerprint(data: Any) -> str:
    """SHA256 of the canonical JSON encoding of `data`."""
    encoded = json.dumps(data, sort_keys=True, separators=(",", ":"), default=_to_jsonable)
    return hashlib.sha256(encoded.encode("utf-8")).hexdigest()


def save_json(data: Dict[str, Any], file_path: Path) -> None:
    """Save data to JSON file."""
    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False, default=_to_jsonable)


def load_json(file_path: Path) -> Dict[str, Any]:
    """Load data from JSON file."""
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_csv(rows: List[Dict[str, Any]], file_path: Path, comment: Optional[str] = None,
              columns: Optional[Iterable[str]] = None) -> pd.DataFrame:
    """Write rows as UTF-8 CSV with a header row, preceded by an optional `# comment` line."""
    frame = pd.DataFrame(rows, columns=list(columns) if columns is not None else None)
    with open(file_path, 'w', encoding='utf-8', newline='') as f:
        if comment:
            f.write(f"# {comment}\n")
        frame.to_csv(f, index=False)
    return frame


def read_csv(file_path: Path) -> pd.DataFrame:
    """Read a CSV written by write_csv."""
    return pd.read_csv(file_path, comment="#")


def get_timestamp() -> str:
    """Get current timestamp string."""
    return datetime.now().strftime("%Y%m%d_%H%M%S")


def sanitize_filename(filename: str) -> str:
    """Remove invalid characters from filename."""
    invalid_chars = '<>:"/\\|?* '
    for char in invalid_chars:
        filename = filename.replace(char, '_')
    return filename


def make_run_dir(root: Path, kind: str) -> Path:
    """Create <root>/<timestamp>_<kind>, adding a counter when the name is taken."""
    root.mkdir(parents=True, exist_ok=True)
    base = sanitize_filename(f"{get_timestamp()}_{kind}")
    candidate = root / base
    counter = 1
    while candidate.exists():
        candidate = root / f"{base}_{counter}"
        counter += 1
    candidate.mkdir(parents=True)
    return candidate

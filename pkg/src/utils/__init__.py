# Utils module initialization
from .config import Config
from .benchmark import (
    BenchmarkTracker,
    BenchmarkEvent,
    get_benchmark_tracker,
    reset_benchmark_tracker
)
from .helpers import (
    fingerprint,
    save_json,
    load_json,
    write_csv,
    read_csv,
    get_timestamp,
    sanitize_filename,
    make_run_dir,
)

__all__ = [
    "Config",
    "BenchmarkTracker",
    "BenchmarkEvent",
    "get_benchmark_tracker",
    "reset_benchmark_tracker",
    "fingerprint",
    "save_json",
    "load_json",
    "write_csv",
    "read_csv",
    "get_timestamp",
    "sanitize_filename",
    "make_run_dir",
]

# CLI module initialization
from .experiment import ExperimentConfig, load_experiment
from .runner import RunRecord, run_experiment
from .report import build_report
from .identities import CheckResult, run_identity_suite

__all__ = [
    "ExperimentConfig",
    "load_experiment",
    "RunRecord",
    "run_experiment",
    "build_report",
    "CheckResult",
    "run_identity_suite",
]

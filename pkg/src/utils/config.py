"""
Configuration management for the Anderson lab.
Loads environment variables and provides centralized config access.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

INTEGRATORS = ("auto", "layer_cake", "adaptive", "gauss")


class Config:
    """Application configuration."""

    # Project paths
    PROJECT_ROOT = Path(__file__).parent.parent.parent
    DATA_DIR = PROJECT_ROOT / "data"
    OUTPUT_ROOT = Path(os.getenv("ANDERSON_LAB_OUT", str(DATA_DIR / "runs")))

    # Logging / runner
    LOG_LEVEL = os.getenv("LAB_LOG_LEVEL", "INFO").upper()
    DEFAULT_JOBS = int(os.getenv("LAB_JOBS", "1"))
    SHOW_PROGRESS = os.getenv("LAB_PROGRESS", "false").lower() == "true"
    CHUNK_SIZE = int(os.getenv("LAB_CHUNK_SIZE", "25"))  # realizations per worker task

    # Monte Carlo defaults
    DEFAULT_N_DISORDER = int(os.getenv("LAB_N_DISORDER", "400"))
    DEFAULT_PROBES_PER_DISTANCE = int(os.getenv("LAB_PROBES_PER_DISTANCE", "4"))

    # Energy integration
    ENERGY_INTEGRATOR = os.getenv("LAB_ENERGY_INTEGRATOR", "auto")  # auto, layer_cake, adaptive, gauss
    LAYER_CAKE_MAX_DIM = int(os.getenv("LAB_LAYER_CAKE_MAX_DIM", "16"))
    GAUSS_ORDER = int(os.getenv("LAB_GAUSS_ORDER", "24"))
    QUAD_RTOL = float(os.getenv("LAB_QUAD_RTOL", "1e-10"))
    QUAD_LIMIT = int(os.getenv("LAB_QUAD_LIMIT", "200"))

    # Numerical tolerances
    SPECTRAL_TOLERANCE = float(os.getenv("LAB_SPECTRAL_TOLERANCE", "1e-8"))  # relative to ||H||
    POLE_MERGE_TOLERANCE = float(os.getenv("LAB_POLE_MERGE_TOLERANCE", "1e-12"))
    ROOT_TOLERANCE = float(os.getenv("LAB_ROOT_TOLERANCE", "1e-12"))

    @classmethod
    def ensure_directories(cls):
        """Ensure all required directories exist."""
        for directory in [cls.DATA_DIR, cls.OUTPUT_ROOT]:
            directory.mkdir(parents=True, exist_ok=True)

    @classmethod
    def validate(cls):
        """Validate that the configured values are usable."""
        errors = []

        if cls.ENERGY_INTEGRATOR not in INTEGRATORS:
            errors.append(
                f"LAB_ENERGY_INTEGRATOR must be one of {', '.join(INTEGRATORS)} (got {cls.ENERGY_INTEGRATOR!r})"
            )
        if cls.DEFAULT_JOBS < 1:
            errors.append(f"LAB_JOBS must be >= 1 (got {cls.DEFAULT_JOBS})")
        if cls.CHUNK_SIZE < 1:
            errors.append(f"LAB_CHUNK_SIZE must be >= 1 (got {cls.CHUNK_SIZE})")
        if cls.GAUSS_ORDER < 2:
            errors.append(f"LAB_GAUSS_ORDER must be >= 2 (got {cls.GAUSS_ORDER})")
        if cls.LAYER_CAKE_MAX_DIM < 1:
            errors.append(f"LAB_LAYER_CAKE_MAX_DIM must be >= 1 (got {cls.LAYER_CAKE_MAX_DIM})")
        for name in ("SPECTRAL_TOLERANCE", "POLE_MERGE_TOLERANCE", "ROOT_TOLERANCE", "QUAD_RTOL"):
            if not getattr(cls, name) > 0:
                errors.append(f"{name} must be positive")

        if errors:
            raise ValueError("Configuration errors:\n" + "\n".join(f"  - {e}" for e in errors))

        return True

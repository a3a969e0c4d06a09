"""
Exception hierarchy shared by the core modules and mapped to exit codes by the CLI.
"""

from typing import Iterable, Optional


class LabError(Exception):
    """Root of every error raised by the laboratory."""


class GeometryError(LabError, ValueError):
    """A configuration, box or probe does not fit the requested geometry."""


class DimensionMismatch(GeometryError):
    """Two configurations (or sites) of different lattice dimension were combined."""

    def __init__(self, d1: int, d2: int):
        super().__init__(f"Dimension mismatch: {d1} != {d2}")
        self.d1 = d1
        self.d2 = d2


class NearSpectrum(LabError, ArithmeticError):
    """The energy is too close to the spectrum for a stable resolvent; resample E."""

    def __init__(self, energy: float, gap: float, tolerance: Optional[float] = None):
        message = f"Energy {energy!r} is within {gap:.3e} of the spectrum"
        if tolerance is not None:
            message += f" (tolerance {tolerance:.3e})"
        super().__init__(message)
        self.energy = energy
        self.gap = gap
        self.tolerance = tolerance


class ConvergenceError(LabError, RuntimeError):
    """A root finder or quadrature failed to reach its tolerance."""


class HypothesisViolation(LabError, ValueError):
    """An analytic hypothesis (ordering of exponents, sign of coefficients, ...) is violated."""


class ValidationError(LabError, ValueError):
    """Invalid parameters; carries every problem found, not only the first one."""

    def __init__(self, problems: Iterable[str], context: str = "Validation errors"):
        self.problems = list(problems)
        super().__init__(context + ":\n" + "\n".join(f"  - {p}" for p in self.problems))

# Core module initialization
from .errors import (
    LabError,
    GeometryError,
    DimensionMismatch,
    NearSpectrum,
    ConvergenceError,
    HypothesisViolation,
    ValidationError,
)
from .lattice import Site, Config2, Box, EdgeSet, sym_distance, hausdorff_distance, diam
from .hamiltonian import (
    InteractionSpec,
    DisorderSpec,
    DisorderSample,
    ModelParams,
    Hamiltonian,
    assemble,
    assemble_one_particle,
    sample_disorder,
    spectrum_bounds,
)
from .greens import EigenSystem, RationalFunction, green_solve, green_rational, efc
from .analytic import (
    boole_measure,
    level_set_measure_on_interval,
    layer_cake_integral,
    pole_split_integral,
    fractional_energy_integral,
    scale_sequence,
    quad_recursion_simulate,
)
from .moments import (
    MomentEstimate,
    estimate_moment,
    decay_profile,
    fit_decay,
    split_config_moment,
    apriori_bound_check,
    upsilon,
    upsilon_series,
    recursion_audit,
)

__all__ = [
    "LabError",
    "GeometryError",
    "DimensionMismatch",
    "NearSpectrum",
    "ConvergenceError",
    "HypothesisViolation",
    "ValidationError",
    "Site",
    "Config2",
    "Box",
    "EdgeSet",
    "sym_distance",
    "hausdorff_distance",
    "diam",
    "InteractionSpec",
    "DisorderSpec",
    "DisorderSample",
    "ModelParams",
    "Hamiltonian",
    "assemble",
    "assemble_one_particle",
    "sample_disorder",
    "spectrum_bounds",
    "EigenSystem",
    "RationalFunction",
    "green_solve",
    "green_rational",
    "efc",
    "boole_measure",
    "level_set_measure_on_interval",
    "layer_cake_integral",
    "pole_split_integral",
    "fractional_energy_integral",
    "scale_sequence",
    "quad_recursion_simulate",
    "MomentEstimate",
    "estimate_moment",
    "decay_profile",
    "fit_decay",
    "split_config_moment",
    "apriori_bound_check",
    "upsilon",
    "upsilon_series",
    "recursion_audit",
]

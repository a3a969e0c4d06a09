"""
The exact-identity suite run by `verify` (and by experiments of kind verify-identities).

Every check draws its random instances from a stream keyed by (seed, check name), so a
suite run is reproducible and checks can be run in isolation.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..core.analytic import (
    RecursionParams,
    boole_measure,
    efc_gf_bound_check,
    layer_cake_integral,
    one_for_all_check,
    pole_split_integral,
    quad_recursion_simulate,
    scale_for_distance,
    scale_sequence,
)
from ..core.errors import LabError
from ..core.greens import (
    FULL_LINE,
    EigenSystem,
    RationalFunction,
    efc,
    efc_noninteracting,
    fgri_check,
    gre_check,
    green_rational,
    resolvent_perturbation_check,
    subadditivity_check,
)
from ..core.hamiltonian import (
    Hamiltonian,
    InteractionSpec,
    ModelParams,
    assemble,
    assemble_one_particle,
    derive_seed,
    sample_disorder,
    spectrum_bounds,
)
from ..core.lattice import Box, Config2, Site, hausdorff_distance, site_box, sym_distance
from ..utils.benchmark import get_benchmark_tracker

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    """Outcome of one identity check."""
    name: str
    passed: bool
    trials: int
    failures: int
    max_error: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, "verify", name))


def _trials(n: int, scale: float) -> int:
    return max(1, int(round(n * scale)))


def _result(name: str, trials: int, errors: Iterable[float], tolerance: float,
            failures: Optional[int] = None, detail: str = "") -> CheckResult:
    errors = np.asarray(list(errors), dtype=float)
    max_error = float(errors.max()) if errors.size else 0.0
    if failures is None:
        failures = int(np.sum(errors > tolerance))
    return CheckResult(name, failures == 0, trials, failures, max_error, tolerance, detail=detail)


def _random_params(rng: np.random.Generator, d: int = 1, g_range=(0.5, 3.0), interaction: bool = True) -> ModelParams:
    spec = InteractionSpec.none()
    if interaction:
        spec = InteractionSpec.finite_range(int(rng.integers(0, 3)), float(rng.uniform(0.0, 2.0)))
    return ModelParams(d=d, g=float(rng.uniform(*g_range)), s=0.3, interaction=spec,
                       laplacian_diagonal=bool(rng.integers(0, 2)))


def _random_hamiltonian(rng: np.random.Generator, max_radius: int, **kwargs) -> Hamiltonian:
    params = _random_params(rng, **kwargs)
    sites = site_box(Site.origin(params.d), int(rng.integers(1, max_radius + 1)))
    disorder = sample_disorder(params.disorder, sites, int(rng.integers(2 ** 32)))
    return assemble(sites, disorder, params)


def _gap_energy(rng: np.random.Generator, *spectra: np.ndarray) -> float:
    """An energy halfway across a random gap of the merged spectra (occasionally outside them)."""
    merged = np.sort(np.concatenate(spectra))
    gaps = np.diff(merged)
    candidates = np.nonzero(gaps > 1e-3)[0]
    if candidates.size == 0 or rng.random() < 0.1:
        side = rng.integers(0, 2)
        return float(merged[0] - rng.uniform(0.1, 2.0) if side == 0 else merged[-1] + rng.uniform(0.1, 2.0))
    i = int(rng.choice(candidates))
    return float(0.5 * (merged[i] + merged[i + 1]))


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def check_boole(seed: int, scale: float = 1.0) -> CheckResult:
    """|{|f| > t}| = 2 sum c / t for random positive rational functions."""
    rng = _rng(seed, "boole")
    n = _trials(200, scale)
    errors = []
    for _ in range(n):
        k = int(rng.integers(1, 13))
        f = RationalFunction(rng.uniform(-10, 10, k), rng.uniform(0.01, 1.0, k))
        t = 10.0 ** rng.uniform(-2, 2)
        errors.append(abs(boole_measure(f, t) * t / (2.0 * f.mass) - 1.0))
    return _result("boole", n, errors, 1e-9)


def check_hausdorff(seed: int, scale: float = 1.0) -> CheckResult:
    """Hausdorff distance of projections equals the symmetrized distance.

    Exhaustive over every pair of d=1 configurations with coordinates in [-5, 5],
    plus random d=2 pairs.
    """
    rng = _rng(seed, "hausdorff")
    configs = [Config2.of(a, b) for a in range(-5, 6) for b in range(-5, 6)]
    failures = 0
    trials = 0
    for x in configs:
        for y in configs:
            trials += 1
            failures += hausdorff_distance(x, y) != sym_distance(x, y)
    for _ in range(_trials(20000, scale)):
        a, b, c, e = (tuple(int(v) for v in rng.integers(-4, 5, 2)) for _ in range(4))
        x, y = Config2.of(a, b), Config2.of(c, e)
        trials += 1
        failures += hausdorff_distance(x, y) != sym_distance(x, y)
    return CheckResult("hausdorff", failures == 0, trials, failures, float(failures), 0.0)


def check_gre(seed: int, scale: float = 1.0) -> CheckResult:
    """Geometric resolvent equation (exact) and the fractional inequality on d=1 boxes of <= 11 sites."""
    rng = _rng(seed, "gre")
    n = _trials(200, scale)
    errors = []
    fgri_violations = 0
    for _ in range(n):
        H = _random_hamiltonian(rng, max_radius=5)
        labels = H.labels
        while True:
            x = labels[int(rng.integers(len(labels)))]
            inner_box = Box(x, int(rng.integers(0, 6)))
            inner = [z for z in labels if z in inner_box]
            outside = [z for z in labels if z not in inner_box]
            if outside:
                break
        y = outside[int(rng.integers(len(outside)))]
        E = _gap_energy(rng, H.eigenvalues, H.restrict(inner).eigenvalues)
        lhs, rhs = gre_check(H, inner, x, y, E)
        g_abs, terms = fgri_check(H, inner, x, y, E, 1.0)
        errors.append(abs(lhs - rhs) / max(abs(lhs), terms, 1e-300))
        for s in (0.1, 0.3, 0.5):
            f_lhs, f_rhs = fgri_check(H, inner, x, y, E, s)
            fgri_violations += f_lhs > f_rhs * (1 + 1e-10)
    result = _result("gre", n, errors, 1e-9)
    result.failures += fgri_violations
    result.passed = result.failures == 0
    result.detail = f"fractional inequality violations: {fgri_violations}"
    return result


def check_resolvent_perturbation(seed: int, scale: float = 1.0) -> CheckResult:
    """Second resolvent identity G = G_ni - G_ni U G and |G|^s <= |G_ni|^s + |G_ni U G|^s."""
    rng = _rng(seed, "resolvent")
    n = _trials(100, scale)
    errors = []
    fractional = 0
    for _ in range(n):
        H = _random_hamiltonian(rng, max_radius=3)
        x = H.labels[int(rng.integers(H.dim))]
        y = H.labels[int(rng.integers(H.dim))]
        E = _gap_energy(rng, H.eigenvalues, H.without_interaction().eigenvalues)
        check = resolvent_perturbation_check(H, x, y, E, float(rng.uniform(0.05, 0.95)))
        errors.append(abs(check.lhs - check.rhs) / max(abs(check.lhs), abs(check.rhs), 1e-300))
        fractional += check.fractional_lhs > check.fractional_rhs * (1 + 1e-10)
    result = _result("resolvent_perturbation", n, errors, 1e-8)
    result.failures += fractional
    result.passed = result.failures == 0
    return result


def check_subadditivity(seed: int, scale: float = 1.0) -> CheckResult:
    rng = _rng(seed, "subadditivity")
    n = _trials(1000, scale)
    failures = 0
    for _ in range(n):
        lhs, rhs = subadditivity_check(rng.normal(0, 10, int(rng.integers(1, 20))), float(rng.uniform(0.01, 0.99)))
        failures += lhs > rhs * (1 + 1e-12)
    return CheckResult("subadditivity", failures == 0, n, failures, float(failures), 0.0)


def check_one_for_all(seed: int, scale: float = 1.0) -> CheckResult:
    """Hoelder interpolation never fails; a constant variable attains equality."""
    rng = _rng(seed, "one_for_all")
    n = _trials(10000, scale)
    failures = 0
    equality_errors = []
    for _ in range(n):
        s2, tau, s1 = np.sort(rng.uniform(0.01, 0.99, 3))
        if not s2 < tau < s1:
            continue
        samples = np.exp(rng.normal(0, 3, int(rng.integers(1, 50))))
        lhs, rhs = one_for_all_check(samples, s1, s2, tau)
        failures += lhs > rhs * (1 + 1e-12)
        c = float(rng.uniform(0.1, 10.0))
        lhs, rhs = one_for_all_check(np.full(5, c), s1, s2, tau)
        equality_errors.append(abs(lhs - rhs) / rhs)
    result = _result("one_for_all", n, equality_errors, 1e-12)
    result.failures += failures
    result.passed = result.failures == 0
    result.detail = f"inequality violations: {failures}"
    return result


def check_recursion(seed: int, scale: float = 1.0) -> CheckResult:
    """Worst-case quadratic recursion stays under its envelope for random admissible parameters."""
    rng = _rng(seed, "recursion")
    n = _trials(1000, scale)
    failures = 0
    literal_failures = 0
    for _ in range(n):
        nu = float(rng.uniform(0.05, 2.0))
        params = RecursionParams(nu, float(rng.uniform(0.01, 0.999)) * math.exp(-nu), int(rng.integers(1, 12)), 8)
        result = quad_recursion_simulate(params)
        failures += not (result.bound_ok and result.scales.is_consistent())
        literal_failures += not result.literal_bound_ok
    return CheckResult("recursion", failures == 0, n, failures, float(failures), 0.0,
                       detail=f"runs exceeding max(e^-nu L, e^-mu L): {literal_failures}")


def check_scales(seed: int, scale: float = 1.0) -> CheckResult:
    """L_{k+1} = 2(L_k + 1) in exact integers, and the scale lookup L_k < R <= L_{k+1}."""
    failures = 0
    trials = 0
    for L0 in range(1, 41):
        seq = scale_sequence(L0, 30)
        trials += 1
        failures += not seq.is_consistent()
        for R in range(L0 + 1, seq[4] + 1):
            k = scale_for_distance(L0, R)
            trials += 1
            failures += not (seq[k] < R <= seq[k + 1])
    return CheckResult("scales", failures == 0, trials, failures, float(failures), 0.0)


def check_efc_gf(seed: int, scale: float = 1.0) -> CheckResult:
    """int_I |G|^s <= 2 |I|^(1-s) Q^s / (1-s); layer-cake agrees with adaptive pole splitting."""
    rng = _rng(seed, "efc_gf")
    n = _trials(500, scale)
    n_compare = _trials(50, scale)
    violations = 0
    for _ in range(n):
        H = _random_hamiltonian(rng, max_radius=2, g_range=(0.5, 5.0))
        es = EigenSystem.from_hamiltonian(H)
        lo, hi = spectrum_bounds(H.params, sorted({u for x in H.labels for u in (x.p1, x.p2)}))
        a, b = np.sort(rng.uniform(lo - 1.0, hi + 1.0, 2))
        x = H.labels[int(rng.integers(H.dim))]
        y = H.labels[int(rng.integers(H.dim))]
        check = efc_gf_bound_check(es, x, y, (float(a), float(b) + 1e-3), float(rng.uniform(0.05, 0.95)),
                                   integrator="gauss")
        violations += check.integral > check.bound * (1 + 1e-9)
    errors = []
    for _ in range(n_compare):
        H = _random_hamiltonian(rng, max_radius=1, g_range=(0.5, 5.0))
        es = EigenSystem.from_hamiltonian(H)
        x = H.labels[int(rng.integers(H.dim))]
        y = H.labels[int(rng.integers(H.dim))]
        f = green_rational(es, x, y)
        lo, hi = float(es.eigenvalues[0]) - 1.0, float(es.eigenvalues[-1]) + 1.0
        s = float(rng.uniform(0.1, 0.9))
        exact = layer_cake_integral(f, s, (lo, hi))
        oracle = pole_split_integral(f, s, (lo, hi), method="adaptive")
        errors.append(abs(exact - oracle) / max(abs(oracle), 1e-300))
    result = _result("efc_gf", n + n_compare, errors, 1e-6)
    result.failures += violations
    result.passed = result.failures == 0
    result.detail = f"bound violations: {violations}; integrator comparisons: {n_compare}"
    return result


def check_factorization(seed: int, scale: float = 1.0) -> CheckResult:
    """Without interaction: spectrum = pairwise sums, and Q_ni(x, y; I) <= Q1 Q2."""
    rng = _rng(seed, "factorization")
    n = _trials(200, scale)
    errors = []
    violations = 0
    for _ in range(n):
        params = _random_params(rng, interaction=False)
        sites = site_box(Site.origin(1), int(rng.integers(1, 5)))
        disorder = sample_disorder(params.disorder, sites, int(rng.integers(2 ** 32)))
        H2 = assemble(sites, disorder, params)
        H1 = assemble_one_particle(sites, disorder, params)
        sums = np.sort(np.add.outer(H1.eigenvalues, H1.eigenvalues).ravel())
        errors.append(float(np.max(np.abs(sums - H2.eigenvalues))) / max(1.0, H2.norm))
        es = EigenSystem.from_hamiltonian(H1)
        x = H2.labels[int(rng.integers(H2.dim))]
        y = H2.labels[int(rng.integers(H2.dim))]
        lo, hi = np.sort(rng.uniform(*spectrum_bounds(params, sites), 2))
        bound = efc(es, x.p1, y.p1) * efc(es, x.p2, y.p2)
        for window in (FULL_LINE, (float(lo), float(hi))):
            violations += efc_noninteracting(es, es, x, y, window) > bound * (1 + 1e-12) + 1e-15
    result = _result("factorization", n, errors, 1e-10)
    result.failures += violations
    result.passed = result.failures == 0
    result.detail = f"correlator violations: {violations}"
    return result


def check_spectral_shift(seed: int, scale: float = 1.0) -> CheckResult:
    """V -> V + c shifts the two-particle spectrum by exactly 2 g c."""
    rng = _rng(seed, "spectral_shift")
    n = _trials(100, scale)
    errors = []
    for _ in range(n):
        H = _random_hamiltonian(rng, max_radius=3)
        c = float(rng.uniform(-1.0, 1.0))
        sites = sorted(H.disorder.values)
        shifted = assemble(sites, H.disorder.shifted(c), H.params)
        expected = H.eigenvalues + 2.0 * H.params.g * c
        errors.append(float(np.max(np.abs(shifted.eigenvalues - expected))) / max(1.0, H.norm))
    return _result("spectral_shift", n, errors, 1e-10)


CHECKS: Dict[str, Callable[[int, float], CheckResult]] = {
    "boole": check_boole,
    "hausdorff": check_hausdorff,
    "gre": check_gre,
    "resolvent_perturbation": check_resolvent_perturbation,
    "subadditivity": check_subadditivity,
    "one_for_all": check_one_for_all,
    "recursion": check_recursion,
    "scales": check_scales,
    "efc_gf": check_efc_gf,
    "factorization": check_factorization,
    "spectral_shift": check_spectral_shift,
}


def _run_check(task: Tuple[str, int, float]) -> CheckResult:
    """Run one named check; a check that raises is reported as failed."""
    name, seed, trials_scale = task
    start = time.perf_counter()
    try:
        result = CHECKS[name](seed, trials_scale)
    except LabError as exc:
        logger.error("Identity check %s raised: %s", name, exc)
        result = CheckResult(name, False, 0, 1, float("nan"), float("nan"), detail=str(exc))
    result.seconds = time.perf_counter() - start
    return result


def run_identity_suite(seed: int, trials_scale: float = 1.0, only: Optional[Iterable[str]] = None,
                       jobs: Optional[int] = None) -> List[CheckResult]:
    """Run the selected checks (all by default), one check per worker when `jobs` > 1.

    Results come back in the order the checks were requested.
    """
    names = list(only) if only else list(CHECKS)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise ValueError(f"Unknown identity checks: {', '.join(unknown)}. Available: {', '.join(CHECKS)}")
    tracker = get_benchmark_tracker()
    tasks = [(name, seed, trials_scale) for name in names]
    jobs = jobs or 1
    if jobs > 1 and len(tasks) > 1:
        with tracker.stage("identities", "suite", checks=len(tasks), jobs=jobs):
            with ProcessPoolExecutor(max_workers=jobs) as executor:
                results = list(executor.map(_run_check, tasks))
    else:
        results = []
        for task in tasks:
            with tracker.stage("identities", task[0]):
                results.append(_run_check(task))
    for result in results:
        logger.info("%s %s: %d trials, %d failures, max error %.3e",
                    "PASS" if result.passed else "FAIL", result.name, result.trials, result.failures,
                    result.max_error)
    return results

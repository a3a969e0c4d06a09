"""
Fractional moments over the energy-disorder measure and the statistical verification suites.

Every disorder realization is an independent task whose random field is keyed by
(seed, realization index, site). Realizations are grouped in fixed-size chunks and
chunk accumulators are merged in chunk order, so results do not depend on `jobs`.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..utils.benchmark import get_benchmark_tracker
from ..utils.config import Config
from .analytic import (
    RecursionParams,
    ScaleSequence,
    batched_pole_split_integrals,
    fractional_energy_integral,
    quad_recursion_simulate,
    resolve_integrator,
    scale_sequence,
)
from .errors import GeometryError, HypothesisViolation, NearSpectrum, ValidationError
from .greens import FULL_LINE, EigenSystem, RationalFunction, efc, efc_noninteracting, green_column
from .hamiltonian import (
    Hamiltonian,
    Interval,
    InteractionSpec,
    ModelParams,
    assemble,
    assemble_one_particle,
    derive_seed,
    sample_disorder,
)
from .lattice import (
    Box,
    Config2,
    Site,
    boundary_edges,
    config_space,
    diam,
    enumerate_box,
    site_box,
    sym_distance,
    translate,
)

logger = logging.getLogger(__name__)

Pair = Tuple[Config2, Config2]


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate of E-hat[|G|^s] with its standard error."""
    mean: float
    stderr: float
    n_samples: int
    s: float
    seed: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n_samples": self.n_samples, "s": self.s, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "MomentEstimate":
        return cls(float(data["mean"]), float(data["stderr"]), int(data["n_samples"]), float(data["s"]), int(data["seed"]))


@dataclass
class MomentAccumulator:
    """(sum, sum of squares, count) per group; merging is associative."""
    total: np.ndarray
    total_sq: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, n_groups: int) -> "MomentAccumulator":
        return cls(np.zeros(n_groups), np.zeros(n_groups), 0)

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        self.total += values
        self.total_sq += values * values
        self.count += 1

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        return MomentAccumulator(self.total + other.total, self.total_sq + other.total_sq, self.count + other.count)

    @property
    def means(self) -> np.ndarray:
        return self.total / max(self.count, 1)

    @property
    def stderrs(self) -> np.ndarray:
        n = self.count
        if n < 2:
            return np.zeros_like(self.total)
        var = (self.total_sq - self.total * self.total / n) / (n - 1)
        return np.sqrt(np.maximum(var, 0.0) / n)

    def estimate(self, group: int, s: float, seed: int) -> MomentEstimate:
        return MomentEstimate(float(self.means[group]), float(self.stderrs[group]), self.count, s, seed)

    def estimates(self, s: float, seed: int) -> List[MomentEstimate]:
        return [self.estimate(i, s, seed) for i in range(self.total.size)]


def realization_seed(seed: int, index: int) -> int:
    """Seed of the index-th disorder realization."""
    return derive_seed(seed, "omega", index)


def _chunks(n: int, size: Optional[int] = None) -> List[Tuple[int, int]]:
    size = size or Config.CHUNK_SIZE
    return [(start, min(start + size, n)) for start in range(0, n, size)]


def _run_tasks(worker: Callable, tasks: Sequence, jobs: Optional[int], desc: str) -> List:
    """Map `worker` over `tasks` in order, in-process or on a process pool."""
    jobs = jobs or Config.DEFAULT_JOBS
    progress = Config.SHOW_PROGRESS
    if jobs <= 1 or len(tasks) <= 1:
        iterator = map(worker, tasks)
        return list(tqdm(iterator, total=len(tasks), desc=desc, disable=not progress))
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        iterator = executor.map(worker, tasks)
        return list(tqdm(iterator, total=len(tasks), desc=desc, disable=not progress))


def _check_pairs(sites: Sequence[Site], pairs: Sequence[Pair]) -> None:
    members = set(sites)
    for x, y in pairs:
        for z in (x, y):
            if z.p1 not in members or z.p2 not in members:
                raise GeometryError(f"Configuration {z.to_list()} is outside the box")


def energy_averaged_moments(H: Hamiltonian, pairs: Sequence[Pair], s: float, interval: Interval,
                            integrator: Optional[str] = None) -> np.ndarray:
    """|I|^{-1} int_I |G(x, y; E)|^s dE for every pair, from one eigen-decomposition."""
    es = EigenSystem.from_hamiltonian(H)
    lo, hi = interval
    length = hi - lo
    if not pairs:
        return np.zeros(0)
    coeffs = np.array([es.coefficients(x, y) for x, y in pairs])
    name = resolve_integrator(integrator, H.dim)
    if name == "gauss":
        return batched_pole_split_integrals(es.eigenvalues, coeffs, s, interval) / length
    return np.array([
        fractional_energy_integral(RationalFunction(es.eigenvalues, c), s, interval, name) for c in coeffs
    ]) / length


@dataclass(frozen=True)
class _MomentTask:
    params: ModelParams
    sites: Tuple[Site, ...]
    pairs: Tuple[Pair, ...]
    reducer: np.ndarray
    interval: Interval
    seed: int
    start: int
    stop: int
    integrator: Optional[str]


def _moment_chunk(task: _MomentTask) -> MomentAccumulator:
    acc = MomentAccumulator.zeros(task.reducer.shape[0])
    for i in range(task.start, task.stop):
        disorder = sample_disorder(task.params.disorder, task.sites, realization_seed(task.seed, i))
        H = assemble(task.sites, disorder, task.params)
        values = energy_averaged_moments(H, task.pairs, task.params.s, task.interval, task.integrator)
        acc.add(task.reducer @ values)
    return acc


def sample_moments(params: ModelParams, box: Sequence[Site], pairs: Sequence[Pair], reducer: np.ndarray,
                   n_disorder: int, seed: int, jobs: Optional[int] = None,
                   integrator: Optional[str] = None) -> MomentAccumulator:
    """Accumulate reducer @ (energy-averaged |G|^s over `pairs`) over n_disorder realizations."""
    params.check()
    if n_disorder < 1:
        raise ValidationError([f"n_disorder must be >= 1 (got {n_disorder})"])
    sites = tuple(sorted(set(box)))
    _check_pairs(sites, pairs)
    reducer = np.atleast_2d(np.asarray(reducer, dtype=float))
    interval = params.interval(sites)
    logger.info("Energy integrator %s for %d poles, %d realizations",
                resolve_integrator(integrator, len(sites) ** 2), len(sites) ** 2, n_disorder)
    tasks = [
        _MomentTask(params, sites, tuple(pairs), reducer, interval, int(seed), start, stop, integrator)
        for start, stop in _chunks(n_disorder)
    ]
    results = _run_tasks(_moment_chunk, tasks, jobs, desc="disorder")
    acc = MomentAccumulator.zeros(reducer.shape[0])
    for part in results:
        acc = acc.merge(part)
    return acc


def estimate_moment(params: ModelParams, box: Sequence[Site], x: Config2, y: Config2, n_disorder: int,
                    seed: int, jobs: Optional[int] = None, integrator: Optional[str] = None) -> MomentEstimate:
    """E-hat[|G(x, y)|^s] with the energy average taken exactly per realization."""
    with get_benchmark_tracker().stage("moments", "estimate_moment", n_disorder=n_disorder):
        acc = sample_moments(params, box, [(x, y)], np.ones((1, 1)), n_disorder, seed, jobs, integrator)
    return acc.estimate(0, params.s, seed)


# ---------------------------------------------------------------------------
# Decay in the symmetrized distance
# ---------------------------------------------------------------------------

def decay_probes(box: Sequence[Site], anchor: Config2, R: int, count: int, seed: int) -> List[Config2]:
    """Clustered partners y (diam y <= max(1, diam anchor)) at sym_distance exactly R from the anchor.

    The translate of the anchor by R along the first axis comes first whenever it fits;
    the remaining `count - 1` are drawn without replacement from a seed-keyed stream.
    """
    sites = sorted(set(box))
    cap = max(1, diam(anchor))
    center = Box(anchor, R)
    universe = set(config_space(sites))
    candidates = [
        y for y in enumerate_box(center)
        if y in universe and diam(y) <= cap and sym_distance(anchor, y) == R
    ]
    if not candidates:
        raise GeometryError(f"No probe at sym-distance {R} from {anchor.to_list()} fits in the box")
    shifted = translate(anchor, (R,) + (0,) * (anchor.d - 1))
    head = [shifted] if shifted in candidates else []
    rest = [y for y in candidates if y != shifted]
    room = max(count - len(head), 0)
    if len(rest) <= room:
        return head + rest
    rng = np.random.default_rng(derive_seed(seed, "probes", R))
    chosen = rng.choice(len(rest), size=room, replace=False)
    return head + [rest[i] for i in sorted(chosen)]


def decay_profile(params: ModelParams, box: Sequence[Site], anchor: Config2, distances: Sequence[int],
                  n_disorder: int, seed: int, probes_per_distance: Optional[int] = None,
                  jobs: Optional[int] = None, integrator: Optional[str] = None) -> List[Tuple[int, MomentEstimate]]:
    """Per distance R, the moment averaged over probe pairs (anchor, y) with sym_distance R."""
    count = probes_per_distance or Config.DEFAULT_PROBES_PER_DISTANCE
    if anchor.p1 not in set(box) or anchor.p2 not in set(box):
        raise GeometryError(f"Anchor {anchor.to_list()} is outside the box")
    pairs: List[Pair] = []
    groups: List[List[int]] = []
    for R in distances:
        probes = decay_probes(box, anchor, int(R), count, seed)
        groups.append(list(range(len(pairs), len(pairs) + len(probes))))
        pairs.extend((anchor, y) for y in probes)
    reducer = np.zeros((len(distances), len(pairs)))
    for row, members in enumerate(groups):
        reducer[row, members] = 1.0 / len(members)
    with get_benchmark_tracker().stage("moments", "decay_profile", distances=len(distances), n_disorder=n_disorder):
        acc = sample_moments(params, box, pairs, reducer, n_disorder, seed, jobs, integrator)
    return [(int(R), est) for R, est in zip(distances, acc.estimates(params.s, seed))]


@dataclass(frozen=True)
class DecayFit:
    """log mean ~ intercept - m R."""
    m: float
    intercept: float
    r2: float
    m_stderr: float
    n_points: int
    weighted: bool

    def to_dict(self) -> dict:
        return {"m": self.m, "intercept": self.intercept, "r2": self.r2, "m_stderr": self.m_stderr,
                "n_points": self.n_points, "weighted": self.weighted}


def fit_decay(profile: Sequence[Tuple[int, MomentEstimate]]) -> DecayFit:
    """Weighted least squares of log-moment against R, sigma_log = stderr / mean.

    Falls back to ordinary least squares when any standard error is zero.
    """
    if len(profile) < 3:
        raise ValidationError([f"fit_decay needs at least 3 points (got {len(profile)})"])
    R = np.array([float(r) for r, _ in profile])
    means = np.array([est.mean for _, est in profile])
    stderrs = np.array([est.stderr for _, est in profile])
    if np.any(means <= 0) or not np.all(np.isfinite(means)):
        raise HypothesisViolation("fit_decay needs positive finite means")
    y = np.log(means)
    weighted = bool(np.all(stderrs > 0))
    w = (means / stderrs) ** 2 if weighted else np.ones_like(y)
    X = np.column_stack([np.ones_like(R), R])
    normal = X.T @ (w[:, None] * X)
    beta = np.linalg.solve(normal, X.T @ (w * y))
    resid = y - X @ beta
    if weighted:
        cov = np.linalg.inv(normal)
    else:
        dof = len(R) - 2
        s2 = float(resid @ resid) / dof if dof > 0 else 0.0
        cov = s2 * np.linalg.inv(normal)
    y_bar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - y_bar) ** 2))
    ss_res = float(np.sum(w * resid ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(
        m=float(-beta[1]),
        intercept=float(beta[0]),
        r2=float(r2),
        m_stderr=float(math.sqrt(max(cov[1, 1], 0.0))),
        n_points=len(R),
        weighted=weighted,
    )


# ---------------------------------------------------------------------------
# Split configurations
# ---------------------------------------------------------------------------

def split_probe(d: int, R: int) -> Pair:
    """x = (-R e1, 0), y = (0, R e1): sym_distance(x, y) = diam x = diam y = R."""
    e1 = [0] * d
    def point(k: int) -> Site:
        coords = list(e1)
        coords[0] = k
        return Site(tuple(coords))
    return Config2(point(-R), point(0)), Config2(point(0), point(R))


def split_config_moment(params: ModelParams, box: Sequence[Site], R: int, n_disorder: int, seed: int,
                        jobs: Optional[int] = None, integrator: Optional[str] = None) -> MomentEstimate:
    """Moment for a pair with min[sym_distance, diam x v diam y] >= R."""
    if R < 1:
        raise GeometryError(f"Split distance must be >= 1 (got {R})")
    x, y = split_probe(params.d, R)
    members = set(box)
    if not {x.p1, x.p2, y.p1, y.p2} <= members:
        raise GeometryError(f"Box too small for split distance R={R}")
    with get_benchmark_tracker().stage("moments", "split_config_moment", R=R, n_disorder=n_disorder):
        acc = sample_moments(params, box, [(x, y)], np.ones((1, 1)), n_disorder, seed, jobs, integrator)
    return acc.estimate(0, params.s, seed)


# ---------------------------------------------------------------------------
# Non-interacting factorization and decoupling
# ---------------------------------------------------------------------------

@dataclass
class FactorizationReport:
    """Two-particle non-interacting correlator versus the one-particle correlators."""
    qni: MomentEstimate
    q1: MomentEstimate
    q2: MomentEstimate
    violations: int
    n_samples: int
    max_ratio: float

    @property
    def moment_ok(self) -> bool:
        return self.qni.mean <= min(self.q1.mean, self.q2.mean) * (1 + 1e-12)

    def to_dict(self) -> dict:
        return {"qni": self.qni.to_dict(), "q1": self.q1.to_dict(), "q2": self.q2.to_dict(),
                "violations": self.violations, "n_samples": self.n_samples, "max_ratio": self.max_ratio,
                "moment_ok": self.moment_ok}


def noninteracting_factorization(params: ModelParams, box: Sequence[Site], x: Config2, y: Config2,
                                 n_disorder: int, seed: int, interval: Optional[Interval] = None) -> FactorizationReport:
    """E-hat[(Q^ni)^s] against min(E-hat[Q1(x1, y1)^s], E-hat[Q2(x2, y2)^s]) on coupled realizations.

    Per sample Q^ni(x, y; I) <= Q1 Q2 is checked as a deterministic inequality; U is ignored.
    """
    params.check()
    sites = sorted(set(box))
    _check_pairs(sites, [(x, y)])
    free = params.with_(interaction=InteractionSpec.none())
    window = interval or free.interval(sites)
    acc = MomentAccumulator.zeros(3)
    violations = 0
    max_ratio = 0.0
    for i in range(n_disorder):
        disorder = sample_disorder(free.disorder, sites, realization_seed(seed, i))
        es = EigenSystem.from_hamiltonian(assemble_one_particle(sites, disorder, free))
        qni = efc_noninteracting(es, es, x, y, window)
        q1 = efc(es, x.p1, y.p1, FULL_LINE)
        q2 = efc(es, x.p2, y.p2, FULL_LINE)
        product = q1 * q2
        if qni > product * (1 + 1e-12) + 1e-15:
            violations += 1
        if product > 0:
            max_ratio = max(max_ratio, qni / product)
        acc.add(np.array([qni, q1, q2]) ** params.s)
    qni_est, q1_est, q2_est = acc.estimates(params.s, seed)
    return FactorizationReport(qni_est, q1_est, q2_est, violations, n_disorder, max_ratio)


@dataclass
class DecouplingReport:
    """E-hat|G(x, y)|^s against |dB| max over boundary edges of E-hat[|G_B(x, w)|^s |G(w', y)|^s]."""
    lhs: MomentEstimate
    edge_means: np.ndarray
    n_edges: int
    bound: float
    fgri_violations: int
    n_samples: int
    resampled: int

    @property
    def holds(self) -> bool:
        return self.lhs.mean <= self.bound * (1 + 1e-12)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs.to_dict(), "edge_means": self.edge_means.tolist(), "n_edges": self.n_edges,
                "bound": self.bound, "fgri_violations": self.fgri_violations, "n_samples": self.n_samples,
                "resampled": self.resampled, "holds": self.holds}


def decoupling_check(params: ModelParams, box: Sequence[Site], x: Config2, y: Config2, L: int,
                     n_disorder: int, n_energy: int, seed: int, max_resample: int = 20) -> DecouplingReport:
    """Decoupling through the boundary of the inner box B_L(x) on sampled (E, omega).

    Energies are uniform in I and redrawn whenever they fall too close to either spectrum.
    """
    params.check()
    sites = sorted(set(box))
    _check_pairs(sites, [(x, y)])
    universe = config_space(sites)
    inner_box = Box(x, L)
    inner = [z for z in universe if z in inner_box]
    if y in inner_box:
        raise GeometryError(f"y={y.to_list()} must lie outside the inner box of radius {L} around x")
    edges = boundary_edges(inner, universe)
    lo, hi = params.interval(sites)
    acc = MomentAccumulator.zeros(1 + len(edges))
    violations = 0
    resampled = 0
    for i in range(n_disorder):
        omega = realization_seed(seed, i)
        H = assemble(sites, sample_disorder(params.disorder, sites, omega), params)
        H_in = H.restrict(inner)
        rng = np.random.default_rng(derive_seed(seed, "energy", i))
        for _ in range(n_energy):
            for attempt in range(max_resample + 1):
                E = float(rng.uniform(lo, hi))
                try:
                    g_out = green_column(H, y, E)
                    g_in = green_column(H_in, x, E)
                    break
                except NearSpectrum:
                    resampled += 1
                    if attempt == max_resample:
                        raise
            lhs = abs(g_out[H.index_of(x)]) ** params.s
            terms = np.array([
                abs(g_in[H_in.index_of(w)]) ** params.s * abs(g_out[H.index_of(w2)]) ** params.s
                for w, w2 in edges
            ])
            if lhs > terms.sum() * (1 + 1e-9) + 1e-300:
                violations += 1
            acc.add(np.concatenate(([lhs], terms)))
    means = acc.means
    lhs_est = acc.estimate(0, params.s, seed)
    edge_means = means[1:]
    bound = len(edges) * float(edge_means.max()) if len(edges) else 0.0
    return DecouplingReport(lhs_est, edge_means, len(edges), bound, violations, acc.count, resampled)


# ---------------------------------------------------------------------------
# Conditional (a priori) bound
# ---------------------------------------------------------------------------

DEFAULT_COUPLINGS = (5.0, 10.0, 20.0, 40.0)


@dataclass
class AprioriReport:
    couplings: Tuple[float, ...]
    max_conditional: List[float]
    conditional: np.ndarray        # n_outer x len(couplings)
    scale_exponent: float
    s: float
    seed: int

    def to_dict(self) -> dict:
        return {"couplings": list(self.couplings), "max_conditional": self.max_conditional,
                "conditional": self.conditional.tolist(), "scale_exponent": self.scale_exponent,
                "s": self.s, "seed": self.seed}


@dataclass(frozen=True)
class _AprioriTask:
    params: ModelParams
    sites: Tuple[Site, ...]
    pair: Pair
    resampled_sites: Tuple[Site, ...]
    couplings: Tuple[float, ...]
    n_inner: int
    seed: int
    outer: int
    integrator: Optional[str]


def _apriori_outer(task: _AprioriTask) -> np.ndarray:
    """Conditional moments for one frozen background, one entry per coupling."""
    params = task.params
    background = sample_disorder(params.disorder, task.sites, derive_seed(task.seed, "background", task.outer))
    rng = np.random.default_rng(derive_seed(task.seed, "resample", task.outer))
    draws = params.disorder.inverse_cdf(rng.random((task.n_inner, len(task.resampled_sites))))
    totals = np.zeros(len(task.couplings))
    for row in draws:
        disorder = background.with_values(dict(zip(task.resampled_sites, row)))
        for j, g in enumerate(task.couplings):
            coupled = params.with_(g=g)
            H = assemble(task.sites, disorder, coupled)
            totals[j] += energy_averaged_moments(H, [task.pair], params.s, coupled.interval(task.sites), task.integrator)[0]
    return totals / task.n_inner


def apriori_bound_check(params: ModelParams, box: Sequence[Site], u1: Site, u2: Site, x: Config2, y: Config2,
                        n_outer: int, n_inner: int, seed: int, couplings: Sequence[float] = DEFAULT_COUPLINGS,
                        jobs: Optional[int] = None, integrator: Optional[str] = None) -> AprioriReport:
    """Conditional moment given every V except V(u1), V(u2), by freeze-and-resample.

    For each background the inner average over fresh V(u1), V(u2) estimates the conditional
    expectation; the maximum over backgrounds is reported per coupling g (same draws for every g),
    and `scale_exponent` is the slope of log max against log |g|.
    """
    params.check()
    u1, u2 = Site.of(u1), Site.of(u2)
    if u1 not in x.projection() or u2 not in y.projection():
        raise GeometryError("The resampled sites must satisfy u1 in {x1, x2} and u2 in {y1, y2}")
    sites = tuple(sorted(set(box)))
    _check_pairs(sites, [(x, y)])
    if len(couplings) < 2:
        raise ValidationError(["apriori_bound_check needs at least two couplings"])
    resampled = (u1,) if u1 == u2 else (u1, u2)
    tasks = [
        _AprioriTask(params, sites, (x, y), resampled, tuple(float(g) for g in couplings), n_inner, int(seed), o, integrator)
        for o in range(n_outer)
    ]
    with get_benchmark_tracker().stage("moments", "apriori_bound_check", n_outer=n_outer, n_inner=n_inner):
        conditional = np.array(_run_tasks(_apriori_outer, tasks, jobs, desc="backgrounds"))
    max_conditional = conditional.max(axis=0)
    slope = float(np.polyfit(np.log(np.abs(couplings)), np.log(max_conditional), 1)[0])
    return AprioriReport(tuple(float(g) for g in couplings), max_conditional.tolist(), conditional, slope, params.s, int(seed))


# ---------------------------------------------------------------------------
# Scale-L correlator sums and the recursion audit
# ---------------------------------------------------------------------------

def upsilon_pairs(d: int, L: int, x_radius: int, diam_cap: int) -> List[Pair]:
    """Pairs (x, w): x in B_{x_radius}(0), w on the inner boundary of B_L(0) with diam w <= diam_cap."""
    sources = enumerate_box(Box.centered(d, x_radius))
    targets = [w for w in Box.centered(d, L).surface() if diam(w) <= diam_cap]
    return [(x, w) for x in sources for w in targets]


def _check_ambient(ambient: Sequence[Site], d: int, L: int) -> None:
    members = set(ambient)
    if not set(site_box(Site.origin(d), L)) <= members:
        raise GeometryError(f"B_{L}(0) does not fit in the ambient box")


def upsilon(params: ModelParams, L: int, ambient_box: Sequence[Site], n_disorder: int, seed: int,
            jobs: Optional[int] = None, integrator: Optional[str] = None) -> Tuple[float, float]:
    """Sum over x in B_{L/2}(0), w on the boundary of B_L(0) with diam w <= L/2 of E-hat|G(x, w)|^s.

    The energy interval is the fixed canonical one (params.energy_interval or the spectrum bounds).
    """
    if L < 1:
        raise GeometryError(f"L must be >= 1 (got {L})")
    _check_ambient(ambient_box, params.d, L)
    pairs = upsilon_pairs(params.d, L, L // 2, L // 2)
    with get_benchmark_tracker().stage("moments", "upsilon", L=L, pairs=len(pairs)):
        acc = sample_moments(params, ambient_box, pairs, np.ones((1, len(pairs))), n_disorder, seed, jobs, integrator)
    return float(acc.means[0]), float(acc.stderrs[0])


@dataclass
class UpsilonSeries:
    scales: ScaleSequence
    upsilon: np.ndarray             # Upsilon(L_k), k = 0..K
    upsilon_tilde: np.ndarray       # reduced sums at L_k, k = 1..K
    upsilon_stderr: np.ndarray
    upsilon_tilde_stderr: np.ndarray
    n_samples: int

    def tilde_consistent(self) -> bool:
        """Reduced sums never exceed the full ones beyond two standard errors."""
        return bool(np.all(self.upsilon_tilde <= self.upsilon[1:] + 2 * self.upsilon_stderr[1:]))

    def to_dict(self) -> dict:
        return {"scales": self.scales.to_dict(), "upsilon": self.upsilon.tolist(),
                "upsilon_tilde": self.upsilon_tilde.tolist(), "upsilon_stderr": self.upsilon_stderr.tolist(),
                "upsilon_tilde_stderr": self.upsilon_tilde_stderr.tolist(), "n_samples": self.n_samples}


def upsilon_series(params: ModelParams, L0: int, K: int, ambient_box: Sequence[Site], n_disorder: int,
                   seed: int, jobs: Optional[int] = None, integrator: Optional[str] = None) -> UpsilonSeries:
    """Upsilon(L_k) for k = 0..K and the reduced sums at L_{k+1} from one set of realizations."""
    scales = scale_sequence(L0, K)
    _check_ambient(ambient_box, params.d, scales[K])
    blocks: List[List[Pair]] = []
    for k in range(K + 1):
        L = scales[k]
        blocks.append(upsilon_pairs(params.d, L, L // 2, L // 2))
    for k in range(1, K + 1):
        half = scales[k - 1] // 2
        blocks.append(upsilon_pairs(params.d, scales[k], half, half))
    index: Dict[Pair, int] = {}
    for block in blocks:
        for pair in block:
            index.setdefault(pair, len(index))
    reducer = np.zeros((len(blocks), len(index)))
    for row, block in enumerate(blocks):
        for pair in block:
            reducer[row, index[pair]] = 1.0
    pairs = sorted(index, key=index.get)
    with get_benchmark_tracker().stage("moments", "upsilon_series", K=K, pairs=len(pairs), n_disorder=n_disorder):
        acc = sample_moments(params, ambient_box, pairs, reducer, n_disorder, seed, jobs, integrator)
    means, errs = acc.means, acc.stderrs
    return UpsilonSeries(scales, means[:K + 1], means[K + 1:], errs[:K + 1], errs[K + 1:], acc.count)


@dataclass
class RecursionAudit:
    series: UpsilonSeries
    a: float
    A: float
    nu: float
    q: float
    fitted: bool
    steps: List[dict]
    envelope: Optional[np.ndarray]          # predicted worst-case Upsilon(L_k)
    mu_tilde: Optional[float]
    rate_envelope: Optional[np.ndarray]     # e^{-mu_tilde L_k} scaled like `envelope`
    hypothesis_ok: bool

    @property
    def all_hold(self) -> bool:
        return all(step["holds"] for step in self.steps)

    def to_dict(self) -> dict:
        return {
            "series": self.series.to_dict(), "a": self.a, "A": self.A, "nu": self.nu, "q": self.q,
            "fitted": self.fitted, "steps": self.steps, "all_hold": self.all_hold,
            "envelope": self.envelope.tolist() if self.envelope is not None else None,
            "mu_tilde": self.mu_tilde,
            "rate_envelope": self.rate_envelope.tolist() if self.rate_envelope is not None else None,
            "hypothesis_ok": self.hypothesis_ok,
        }


def _required_A(a: float, targets: np.ndarray, quad_part: np.ndarray, poly: np.ndarray) -> float:
    need = np.maximum(targets - a * quad_part, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.max(np.where(poly > 0, need / poly, 0.0), initial=0.0))


def _joint_constants(targets: np.ndarray, quad_part: np.ndarray, poly: np.ndarray) -> Tuple[float, float]:
    """Smallest (a, A) with a * quad_part + A * poly >= targets at every step.

    Each constant is measured against the value it needs on its own and the normalized sum
    is minimised. The objective is piecewise linear in a, so the minimum sits on a breakpoint.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        a_alone = float(np.max(np.where(quad_part > 0, targets / quad_part, 0.0), initial=0.0))
    A_alone = _required_A(0.0, targets, quad_part, poly)
    if a_alone <= 0 or A_alone <= 0:
        return 0.0, A_alone
    candidates = {0.0, a_alone}
    usable = quad_part > 0
    candidates.update((targets[usable] / quad_part[usable]).tolist())
    for i in range(targets.size):
        for j in range(i + 1, targets.size):
            if poly[i] > 0 and poly[j] > 0:
                denom = quad_part[i] / poly[i] - quad_part[j] / poly[j]
                if denom != 0:
                    candidates.add((targets[i] / poly[i] - targets[j] / poly[j]) / denom)
    grid = sorted(c for c in candidates if 0.0 <= c <= a_alone)
    best = min(grid, key=lambda c: c / a_alone + _required_A(c, targets, quad_part, poly) / A_alone)
    return float(best), _required_A(best, targets, quad_part, poly)


def recursion_audit(params: ModelParams, L0: int, K: int, ambient: Sequence[Site], n_disorder: int, seed: int,
                    a: Optional[float] = None, A: Optional[float] = None, nu: float = 0.25,
                    q: Optional[float] = None, jobs: Optional[int] = None,
                    integrator: Optional[str] = None) -> RecursionAudit:
    """Check Upsilon(L_{k+1}) <= (a/|g|^s) Upsilon(L_k)^2 + A L_{k+1}^{2q} e^{-2 nu L_k} step by step.

    Missing constants are fitted as the smallest values making every step hold, jointly when
    both are missing; each step is judged within two standard errors. Upsilon(L_0) then
    seeds the worst-case quadratic recursion, giving the predicted envelope.
    """
    if K < 1:
        raise ValidationError([f"recursion_audit needs K >= 1 (got {K})"])
    if not nu > 0:
        raise ValidationError([f"nu must be positive (got {nu})"])
    series = upsilon_series(params, L0, K, ambient, n_disorder, seed, jobs, integrator)
    q = float(4 * params.d - 2) if q is None else float(q)
    gs = abs(params.g) ** params.s
    ups, errs, L = series.upsilon, series.upsilon_stderr, series.scales
    poly = np.array([L[k + 1] ** (2 * q) * math.exp(-2 * nu * L[k]) for k in range(K)])
    quad_part = np.array([ups[k] ** 2 / gs for k in range(K)])
    targets = ups[1:]
    fitted = a is None or A is None
    if a is None and A is None:
        a, A = _joint_constants(targets, quad_part, poly)
    elif a is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            a = float(np.max(np.where(quad_part > 0, np.maximum(targets - A * poly, 0.0) / quad_part, 0.0)))
    elif A is None:
        A = _required_A(a, targets, quad_part, poly)
    steps = []
    for k in range(K):
        upper_prev = ups[k] + 2 * errs[k]
        rhs = a / gs * upper_prev ** 2 + A * poly[k]
        lhs = ups[k + 1] - 2 * errs[k + 1]
        steps.append({"k": k, "L_k": L[k], "L_k1": L[k + 1], "upsilon_k": float(ups[k]),
                      "upsilon_k1": float(ups[k + 1]), "rhs": float(rhs), "holds": bool(lhs <= rhs * (1 + 1e-12)),
                      "ratio": float(ups[k + 1] / ups[k]) if ups[k] > 0 else float("nan")})

    envelope = rate_envelope = mu_tilde = None
    hypothesis_ok = False
    M = 2.0 * a / gs
    if M > 0:
        beta0 = math.exp(2 * nu) * M * float(ups[0])
        hypothesis_ok = 0 < beta0 < math.exp(-nu)
        if hypothesis_ok:
            sim = quad_recursion_simulate(RecursionParams(nu, beta0, L0, K))
            scale_back = math.exp(-2 * nu) / M
            envelope = sim.envelope * scale_back
            mu_tilde = min(nu, sim.mu / 2.0)
            rate_envelope = np.array([math.exp(-mu_tilde * Lk) for Lk in L.values]) * scale_back
    logger.info("Recursion audit: %d/%d steps hold (a=%.4g, A=%.4g, fitted=%s)",
                sum(s["holds"] for s in steps), K, a, A, fitted)
    return RecursionAudit(series, float(a), float(A), nu, q, fitted, steps, envelope, mu_tilde, rate_envelope, hypothesis_ok)

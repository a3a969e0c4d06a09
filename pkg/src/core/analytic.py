"""
Exact analytic tools for rational Green functions and the multi-scale bookkeeping.

Level-set measures of f(E) = sum c_i / (lambda_i - E) (Boole's identity for positive
coefficients), fractional energy integrals of |f|^s by the layer-cake formula or by
pole-splitting quadrature, the EFC -> GF bound, the quadratic recursion of the scaling
step, the one-for-all interpolation inequality and the length-scale sequence.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from ..utils.config import Config
from .errors import ConvergenceError, HypothesisViolation
from .greens import FULL_LINE, EigenSystem, RationalFunction, efc, green_rational
from .hamiltonian import Interval

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Level sets
# ---------------------------------------------------------------------------

def _polish(func, deriv, x0: float) -> float:
    """One Newton step, kept only when it does not increase |func|."""
    fx = float(func(x0))
    dfx = float(deriv(x0))
    if dfx == 0 or not math.isfinite(dfx):
        return x0
    x1 = x0 - fx / dfx
    if math.isfinite(x1) and abs(float(func(x1))) <= abs(fx):
        return x1
    return x0


def _brent(func, a: float, b: float) -> float:
    if not b > a:
        return a
    fa, fb = float(func(a)), float(func(b))
    if fa == 0:
        return a
    if fb == 0:
        return b
    try:
        root, info = optimize.brentq(
            func, a, b, xtol=Config.ROOT_TOLERANCE * min(1.0, abs(b - a)), rtol=4 * np.finfo(float).eps,
            maxiter=500, full_output=True,
        )
    except ValueError as exc:
        raise ConvergenceError(f"Root bracket [{a:.6g}, {b:.6g}] failed: {exc}") from exc
    if not info.converged:
        raise ConvergenceError(f"Root finder did not converge on [{a:.6g}, {b:.6g}]")
    return root


def _positive_level_offsets(f: RationalFunction, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Level-set pieces of a rational function with positive coefficients.

    f is increasing between consecutive poles. Returns (left, right) offsets: for every
    pole lambda_k, `left[k]` is the length of {f > t} just left of lambda_k and
    `right[k]` the length of {f < -t} just right of it.
    """
    poles, coeffs = f.poles, f.coeffs
    n = poles.size
    total = float(np.sum(coeffs))
    left = np.zeros(n)
    right = np.zeros(n)
    for k in range(n):
        # left of pole k: E = lambda_k - delta, f -> +inf as delta -> 0
        if k == 0:
            lo, hi = coeffs[0] / t, total / t
        else:
            gap = poles[k] - poles[k - 1]
            margin = 2.0 * total / gap
            lo = 0.5 * coeffs[k] / (t + margin)
            hi = gap - 0.5 * coeffs[k - 1] / (t + margin)
        func = lambda delta, k=k: f.near_pole(k, -delta) - t
        deriv = lambda delta, k=k: -f.near_pole_derivative(k, -delta)
        left[k] = _polish(func, deriv, _brent(func, lo, hi))

        # right of pole k: E = lambda_k + eta, f -> -inf as eta -> 0
        if k == n - 1:
            lo, hi = coeffs[k] / t, total / t
        else:
            gap = poles[k + 1] - poles[k]
            margin = 2.0 * total / gap
            lo = 0.5 * coeffs[k] / (t + margin)
            hi = gap - 0.5 * coeffs[k + 1] / (t + margin)
        func = lambda eta, k=k: f.near_pole(k, eta) + t
        deriv = lambda eta, k=k: f.near_pole_derivative(k, eta)
        right[k] = _polish(func, deriv, _brent(func, lo, hi))
    return left, right


def boole_measure(f: RationalFunction, t: float) -> float:
    """Lebesgue measure of {E in R : |f(E)| > t} for positive coefficients; equals 2 sum c_i / t."""
    if not t > 0:
        raise HypothesisViolation(f"t must be positive (got {t})")
    if not f.is_positive:
        raise HypothesisViolation("Boole's identity needs strictly positive coefficients")
    left, right = _positive_level_offsets(f, t)
    return float(np.sum(left) + np.sum(right))


def _secular_roots(f: RationalFunction, t: float) -> np.ndarray:
    """Real roots of f(E) = t (t != 0) as eigenvalues of diag(lambda) - (1/t) u v^T."""
    u = np.sign(f.coeffs) * np.sqrt(np.abs(f.coeffs))
    v = np.sqrt(np.abs(f.coeffs))
    matrix = np.diag(f.poles) - np.outer(u, v) / t
    if np.all(f.coeffs > 0) or np.all(f.coeffs < 0):
        candidates = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    else:
        ev = np.linalg.eigvals(matrix)
        scale = max(1.0, float(np.max(np.abs(f.poles))))
        candidates = np.real(ev[np.abs(np.imag(ev)) <= 1e-7 * scale])
    roots = np.sort(candidates)
    if roots.size == 0:
        return roots
    # one vectorized Newton step, kept where it reduces the residual
    residual = f(roots) - t
    step = residual / f.derivative(roots)
    polished = roots - step
    better = np.isfinite(polished) & (np.abs(f(polished) - t) <= np.abs(residual))
    return np.where(better, polished, roots)


def _breakpoints(f: RationalFunction, t: float, lo: float, hi: float) -> np.ndarray:
    points = np.concatenate([f.poles, _secular_roots(f, t), _secular_roots(f, -t)])
    points = points[np.isfinite(points)]
    return np.unique(points)


def _measure_direct(f: RationalFunction, t: float, interval: Interval) -> float:
    lo, hi = interval
    if f.is_zero:
        return 0.0
    pts = _breakpoints(f, t, lo, hi)
    # |f| < t outside [pts.min(), pts.max()] because f -> 0 at infinity
    lo_eff = max(lo, pts[0] - 1.0)
    hi_eff = min(hi, pts[-1] + 1.0)
    if lo_eff >= hi_eff:
        return 0.0
    inner = pts[(pts > lo_eff) & (pts < hi_eff)]
    edges = np.concatenate(([lo_eff], inner, [hi_eff]))
    a, b = edges[:-1], edges[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    mids = 0.5 * (a + b)
    inside = np.abs(f(mids)) > t
    return float(np.sum((b - a)[inside]))


def level_set_measure_on_interval(f: RationalFunction, t: float, interval: Interval = FULL_LINE,
                                  split: bool = False) -> float:
    """Measure of {E in I : |f(E)| > t}; I may be unbounded.

    With `split=True` the signed function is bounded through its positive and negative
    parts, returning mes{|f+| > t/2} + mes{|f-| > t/2} (an upper bound).
    At t = 0 the level set is all of I up to the finitely many zeros of f.
    """
    if not t >= 0:
        raise HypothesisViolation(f"t must be non-negative (got {t})")
    f = f.pruned()
    if f.is_zero:
        return 0.0
    if t == 0:
        return float(interval[1] - interval[0])
    if split and not (f.is_positive or (-f).is_positive):
        return (level_set_measure_on_interval(f.positive_part(), t / 2, interval)
                + level_set_measure_on_interval(-f.negative_part(), t / 2, interval))
    lo, hi = interval
    if (f.is_positive or (-f).is_positive) and lo == -np.inf and hi == np.inf:
        return boole_measure(f if f.is_positive else -f, t)
    return _measure_direct(f, t, interval)


# ---------------------------------------------------------------------------
# Fractional energy integrals
# ---------------------------------------------------------------------------

def _check_s(s: float) -> None:
    if not 0 < s < 1:
        raise HypothesisViolation(f"s must satisfy 0 < s < 1 (got {s})")


def _check_bounded(interval: Interval) -> Tuple[float, float]:
    lo, hi = float(interval[0]), float(interval[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise HypothesisViolation("Energy integrals need a bounded interval")
    if hi < lo:
        raise HypothesisViolation(f"Empty interval [{lo}, {hi}]")
    return lo, hi


def _sign_changes(func, a: float, b: float, samples: int = 64) -> List[float]:
    """Roots of func in (a, b) located by sign changes on a grid and refined by brentq."""
    if not b > a:
        return []
    grid = np.linspace(a, b, samples + 2)[1:-1]
    values = func(grid)
    roots = []
    for i in np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]:
        try:
            roots.append(optimize.brentq(func, grid[i], grid[i + 1], xtol=1e-14))
        except ValueError:
            continue
    return roots


def _pieces(poles: np.ndarray, lo: float, hi: float) -> List[Tuple[float, float, Optional[int]]]:
    """Half-pieces (a, b, pole) of [lo, hi]: cut at the interior poles and the midpoints between them.

    `pole` is the index of the pole sitting at `a` (offset grows away from it) or None.
    The sign of b - a tells the direction: b < a means the piece runs left from the pole.
    """
    inside = [k for k in range(poles.size) if lo <= poles[k] <= hi]
    nodes = [(lo, None)] + [(float(poles[k]), k) for k in inside] + [(hi, None)]
    pieces = []
    for (a, ka), (b, kb) in zip(nodes[:-1], nodes[1:]):
        if b <= a:
            continue
        m = 0.5 * (a + b)
        pieces.append((a, m, ka) if ka is not None else (m, a, None))
        pieces.append((b, m, kb) if kb is not None else (m, b, None))
    return pieces


def _critical_values(f: RationalFunction, lo: float, hi: float) -> List[float]:
    """|f| at the endpoints of I and at its local extrema inside I."""
    values = [abs(float(f(lo))), abs(float(f(hi)))]
    edges = [lo] + [p for p in f.poles if lo < p < hi] + [hi]
    for a, b in zip(edges[:-1], edges[1:]):
        pad = 1e-9 * max(1.0, b - a)
        for root in _sign_changes(f.derivative, a + pad, b - pad):
            values.append(abs(float(f(root))))
    return sorted(v for v in values if math.isfinite(v) and v > 0)


def _quad(func, a: float, b: float, **kwargs) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(
            func, a, b, epsabs=0.0, epsrel=Config.QUAD_RTOL, limit=Config.QUAD_LIMIT, **kwargs
        )
    if not math.isfinite(value):
        raise ConvergenceError(f"Quadrature diverged on [{a}, {b}]")
    if err > 1e-8 * max(abs(value), 1e-300) and err > 1e-14:
        logger.debug("quad error estimate %.3e on [%g, %g] (value %.6g)", err, a, b, value)
    return value


def layer_cake_integral(f: RationalFunction, s: float, interval: Interval) -> float:
    """int_I |f(E)|^s dE = s int_0^inf t^(s-1) mes{E in I : |f| > t} dt.

    [0, T] with T = 2 sum|c| / |I| carries the algebraic weight t^(s-1); on [T, inf) the
    pole asymptote A/t of the measure is integrated in closed form.
    """
    _check_s(s)
    lo, hi = _check_bounded(interval)
    f = f.pruned()
    if f.is_zero or hi == lo:
        return 0.0
    length = hi - lo
    T = 2.0 * f.mass / length

    def measure(t):
        return level_set_measure_on_interval(f, t, (lo, hi))

    critical = [c for c in _critical_values(f, lo, hi) if 0 < c < T]
    cuts = [0.0] + critical + [T]
    head = 0.0
    for k, (a, b) in enumerate(zip(cuts[:-1], cuts[1:])):
        if b <= a:
            continue
        if k == 0:
            head += s * _quad(measure, a, b, weight="alg", wvar=(s - 1.0, 0.0))
        else:
            head += _quad(lambda t: s * t ** (s - 1.0) * measure(t), a, b)

    inside = (f.poles > lo) & (f.poles < hi)
    on_edge = (f.poles == lo) | (f.poles == hi)
    A = 2.0 * np.sum(np.abs(f.coeffs[inside])) + np.sum(np.abs(f.coeffs[on_edge]))
    tail_cuts = [T] + [c for c in _critical_values(f, lo, hi) if c > T]
    tail = 0.0
    for a, b in zip(tail_cuts[:-1], tail_cuts[1:]):
        tail += _quad(lambda t: s * t ** (s - 1.0) * (measure(t) - A / t), a, b)
    tail += _quad(lambda t: s * t ** (s - 1.0) * (measure(t) - A / t), tail_cuts[-1], np.inf)
    tail += s * A * T ** (s - 1.0) / (1.0 - s) if A > 0 else 0.0
    return float(head + tail)


def pole_split_integral(f: RationalFunction, s: float, interval: Interval,
                        method: str = "adaptive", order: Optional[int] = None) -> float:
    """int_I |f|^s dE by splitting I at the poles and substituting E = lambda +- w^q, q = 1/(1-s).

    The substitution makes the integrand bounded near every pole; `adaptive` integrates
    each piece with QUADPACK, `gauss` with a fixed Gauss-Legendre rule.
    """
    _check_s(s)
    lo, hi = _check_bounded(interval)
    f = f.pruned()
    if f.is_zero or hi == lo:
        return 0.0
    if method == "gauss":
        return float(batched_pole_split_integrals(f.poles, f.coeffs[None, :], s, (lo, hi), order)[0])
    if method != "adaptive":
        raise ValueError(f"Unsupported pole-split method: {method}. Supported: adaptive, gauss")

    q = 1.0 / (1.0 - s)
    total = 0.0
    for a, b, k in _pieces(f.poles, lo, hi):
        if k is None:
            left, right = min(a, b), max(a, b)
            zeros = [z for z in _sign_changes(f, left, right) if left < z < right]
            total += _quad(lambda e: abs(float(f(e))) ** s, left, right, points=zeros or None)
            continue
        direction = 1.0 if b > a else -1.0
        W = abs(b - a) ** (1.0 / q)

        def integrand(w, k=k, direction=direction):
            if w == 0.0:
                return abs(f.coeffs[k]) ** s * q
            return abs(float(f.near_pole(k, direction * w ** q))) ** s * q * w ** (q - 1.0)

        zeros = _sign_changes(lambda w, k=k, direction=direction: f.near_pole(k, direction * np.asarray(w) ** q), 0.0, W)
        total += _quad(integrand, 0.0, W, points=zeros or None)
    return float(total)


def _gauss_nodes(poles: np.ndarray, interval: Interval, s: float, order: int):
    """(base, offset, weight) of the pole-split Gauss rule on `interval`."""
    lo, hi = interval
    x, w = np.polynomial.legendre.leggauss(order)
    unit_nodes = 0.5 * (x + 1.0)
    unit_weights = 0.5 * w
    q = 1.0 / (1.0 - s)
    bases, offsets, weights = [], [], []
    for a, b, k in _pieces(poles, lo, hi):
        length = abs(b - a)
        if k is None:
            left = min(a, b)
            bases.append(np.full(order, left))
            offsets.append(unit_nodes * length)
            weights.append(unit_weights * length)
        else:
            direction = 1.0 if b > a else -1.0
            W = length ** (1.0 / q)
            wn = unit_nodes * W
            bases.append(np.full(order, poles[k]))
            offsets.append(direction * wn ** q)
            weights.append(unit_weights * W * q * wn ** (q - 1.0))
    if not bases:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    return np.concatenate(bases), np.concatenate(offsets), np.concatenate(weights)


def batched_pole_split_integrals(poles: np.ndarray, coeff_matrix: np.ndarray, s: float,
                                 interval: Interval, order: Optional[int] = None,
                                 chunk: int = 4096) -> np.ndarray:
    """Gauss pole-split integrals of |sum_i C[p, i] / (lambda_i - E)|^s for every row p.

    All rows share the poles (one disorder realization, many probe pairs).
    """
    _check_s(s)
    lo, hi = _check_bounded(interval)
    order = order or Config.GAUSS_ORDER
    coeff_matrix = np.atleast_2d(np.asarray(coeff_matrix, dtype=float))
    poles = np.asarray(poles, dtype=float)
    if poles.size == 0 or hi == lo:
        return np.zeros(coeff_matrix.shape[0])

    # merge (near-)degenerate poles by summing their coefficient columns
    sorter = np.argsort(poles, kind="stable")
    poles, coeff_matrix = poles[sorter], coeff_matrix[:, sorter]
    starts = np.concatenate(([True], np.diff(poles) > Config.POLE_MERGE_TOLERANCE))
    group = np.cumsum(starts) - 1
    merged = np.zeros((coeff_matrix.shape[0], group[-1] + 1))
    np.add.at(merged.T, group, coeff_matrix.T)
    poles = np.bincount(group, weights=poles) / np.bincount(group)

    base, offset, weight = _gauss_nodes(poles, (lo, hi), s, order)
    result = np.zeros(merged.shape[0])
    for start in range(0, base.size, chunk):
        sl = slice(start, start + chunk)
        # (lambda_i - base) - offset is exactly -offset for the node's own pole
        denom = (poles[:, None] - base[None, sl]) - offset[None, sl]
        values = merged @ (1.0 / denom)
        result += (np.abs(values) ** s) @ weight[sl]
    return result


def resolve_integrator(integrator: Optional[str], n_poles: int) -> str:
    name = integrator or Config.ENERGY_INTEGRATOR
    if name == "auto":
        return "layer_cake" if n_poles <= Config.LAYER_CAKE_MAX_DIM else "gauss"
    if name not in ("layer_cake", "adaptive", "gauss"):
        raise ValueError(f"Unsupported energy integrator: {name}. Supported: auto, layer_cake, adaptive, gauss")
    return name


def fractional_energy_integral(f: RationalFunction, s: float, interval: Interval,
                               integrator: Optional[str] = None) -> float:
    """int_I |f(E)|^s dE with the configured integrator."""
    name = resolve_integrator(integrator, len(f))
    if name == "layer_cake":
        return layer_cake_integral(f, s, interval)
    return pole_split_integral(f, s, interval, method=name)


class EfcBound(NamedTuple):
    integral: float
    bound: float
    correlator: float


def efc_gf_bound_check(es: EigenSystem, x, y, interval: Interval, s: float,
                       restrict_to_interval: bool = False, integrator: str = "layer_cake") -> EfcBound:
    """int_I |G(x, y; E)|^s dE versus 2 |I|^(1-s) Q(x, y)^s / (1 - s).

    Q is the full correlator unless `restrict_to_interval` asks for Q(x, y; I).
    """
    _check_s(s)
    lo, hi = _check_bounded(interval)
    f = green_rational(es, x, y)
    integral = fractional_energy_integral(f, s, (lo, hi), integrator)
    q = efc(es, x, y, (lo, hi) if restrict_to_interval else FULL_LINE)
    bound = 2.0 * (hi - lo) ** (1.0 - s) * q ** s / (1.0 - s)
    return EfcBound(integral, bound, q)


# ---------------------------------------------------------------------------
# Length scales and recursions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleSequence:
    """L_{k+1} = 2 (L_k + 1), equivalently L_k = 2^k (L0 + 2) - 2."""
    L0: int
    values: Tuple[int, ...]

    def __getitem__(self, k: int) -> int:
        return self.values[k]

    def __len__(self) -> int:
        return len(self.values)

    def closed_form(self, k: int) -> int:
        return (1 << k) * (self.L0 + 2) - 2

    def is_consistent(self) -> bool:
        return all(v == self.closed_form(k) for k, v in enumerate(self.values))

    def to_dict(self) -> dict:
        return {"L0": self.L0, "values": list(self.values)}


def scale_sequence(L0: int, K: int) -> ScaleSequence:
    if L0 < 1:
        raise HypothesisViolation(f"L0 must be >= 1 (got {L0})")
    if K < 0:
        raise HypothesisViolation(f"K must be >= 0 (got {K})")
    values = [int(L0)]
    for _ in range(K):
        values.append(2 * (values[-1] + 1))
    return ScaleSequence(int(L0), tuple(values))


def scale_for_distance(L0: int, R: int) -> int:
    """The unique k >= 0 with L_k < R <= L_{k+1}."""
    if R <= L0:
        raise HypothesisViolation(f"R={R} must exceed L0={L0}")
    k = 0
    current = L0
    while not (current < R <= 2 * (current + 1)):
        current = 2 * (current + 1)
        k += 1
    return k


@dataclass(frozen=True)
class RecursionParams:
    nu: float
    beta0: float
    L0: int
    K: int

    def check(self) -> "RecursionParams":
        if not self.nu > 0:
            raise HypothesisViolation(f"nu must be positive (got {self.nu})")
        if not self.beta0 > 0:
            raise HypothesisViolation(f"beta0 must be positive (got {self.beta0})")
        if not self.beta0 < math.exp(-self.nu):
            raise HypothesisViolation(
                f"beta0 < exp(-nu) is required (beta0={self.beta0}, exp(-nu)={math.exp(-self.nu):.6g})"
            )
        scale_sequence(self.L0, self.K)
        return self


@dataclass
class RecursionResult:
    betas: np.ndarray
    bound_ok: bool
    mu: float
    scales: ScaleSequence
    envelope: np.ndarray            # max(e^{-nu L_k}, (e^{-nu} beta0)^{2^k})
    literal_bound_ok: bool          # against max(e^{-nu L_k}, e^{-mu L_k})
    violations: List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "betas": self.betas.tolist(),
            "bound_ok": self.bound_ok,
            "mu": self.mu,
            "scales": self.scales.to_dict(),
            "envelope": self.envelope.tolist(),
            "literal_bound_ok": self.literal_bound_ok,
            "violations": self.violations,
        }


def recursion_mu(nu: float, beta0: float, L0: int) -> float:
    return (nu + math.log(1.0 / beta0)) / (1.0 + L0 / 2.0)


def quad_recursion_simulate(p: RecursionParams, rtol: float = 1e-12) -> RecursionResult:
    """Iterate beta_{k+1} = e^{-2nu} (beta_k^2 + e^{-2 nu L_k}) / 2 with equality.

    For k >= 1 the iterates obey beta_k <= max(e^{-nu L_k}, (e^{-nu} beta0)^{2^k}), and
    (e^{-nu} beta0)^{2^k} = e^{-mu (L_k + 2) / 2}.
    """
    p.check()
    scales = scale_sequence(p.L0, p.K)
    mu = recursion_mu(p.nu, p.beta0, p.L0)
    betas = np.empty(p.K + 1)
    betas[0] = p.beta0
    decay = math.exp(-2.0 * p.nu)
    for k in range(p.K):
        betas[k + 1] = 0.5 * decay * betas[k] ** 2 + 0.5 * decay * math.exp(-2.0 * p.nu * scales[k])
    base = math.log(math.exp(-p.nu) * p.beta0)
    envelope = np.array([
        max(math.exp(-p.nu * scales[k]), math.exp(base * 2.0 ** k)) for k in range(p.K + 1)
    ])
    literal = np.array([max(math.exp(-p.nu * L), math.exp(-mu * L)) for L in scales.values])
    # the absolute slack absorbs subnormal underflow of the exponentials
    violations = [k for k in range(1, p.K + 1) if betas[k] > envelope[k] * (1.0 + rtol) + 1e-300]
    literal_ok = all(betas[k] <= literal[k] * (1.0 + rtol) + 1e-300 for k in range(1, p.K + 1))
    return RecursionResult(betas, not violations, mu, scales, envelope, literal_ok, violations)


@dataclass
class PerturbedRecursion:
    """Worst-case iterates of the perturbed recursion and their normalized form."""
    scales: ScaleSequence
    upsilon_hat: np.ndarray
    betas: np.ndarray
    A_second: float
    nu: float
    normalized_ok: List[bool]
    hypothesis_ok: bool
    envelope: Optional[np.ndarray]

    def to_dict(self) -> dict:
        return {
            "scales": self.scales.to_dict(),
            "upsilon_hat": self.upsilon_hat.tolist(),
            "betas": self.betas.tolist(),
            "A_second": self.A_second,
            "nu": self.nu,
            "normalized_ok": self.normalized_ok,
            "hypothesis_ok": self.hypothesis_ok,
            "envelope": self.envelope.tolist() if self.envelope is not None else None,
        }


def perturbed_recursion(upsilon0: float, M_s: float, A_prime: float, m: float, p: float,
                        L0: int, K: int, nu: Optional[float] = None) -> PerturbedRecursion:
    """Iterate U_{k+1} = M_s U_k^2 / 2 + A' L_{k+1}^p e^{-(m/2) L_k} / 2 and map to beta_k = e^{2nu} M_s U_k.

    In the beta variables the recursion reads beta_{k+1} = e^{-2nu} beta_k^2 / 2 + A'' L_{k+1}^p e^{-(m/2) L_k} / 2
    with A'' = A' M_s e^{2nu}; `normalized_ok[k]` tells whether the perturbation is already
    dominated by e^{-2nu} e^{-2nu L_k} / 2 at step k (the "L0 large enough" condition).
    The default nu is m/5 (any 0 < nu < m/4 is admissible).
    """
    if not (M_s > 0 and A_prime >= 0 and m > 0 and upsilon0 >= 0):
        raise HypothesisViolation("perturbed recursion needs M_s > 0, A' >= 0, m > 0, upsilon0 >= 0")
    nu = m / 5.0 if nu is None else nu
    if not 0 < nu < m / 4.0:
        raise HypothesisViolation(f"nu must satisfy 0 < nu < m/4 (got nu={nu}, m={m})")
    scales = scale_sequence(L0, K + 1)
    ups = np.empty(K + 1)
    ups[0] = upsilon0
    for k in range(K):
        ups[k + 1] = 0.5 * M_s * ups[k] ** 2 + 0.5 * A_prime * scales[k + 1] ** p * math.exp(-0.5 * m * scales[k])
    betas = math.exp(2.0 * nu) * M_s * ups
    A_second = A_prime * M_s * math.exp(2.0 * nu)
    normalized_ok = [
        A_second * scales[k + 1] ** p * math.exp(-0.5 * m * scales[k]) <= math.exp(-2.0 * nu) * math.exp(-2.0 * nu * scales[k])
        for k in range(K)
    ]
    hypothesis_ok = bool(betas[0] < math.exp(-nu))
    envelope = None
    if hypothesis_ok and betas[0] > 0:
        sim = quad_recursion_simulate(RecursionParams(nu, float(betas[0]), L0, K))
        envelope = sim.envelope * math.exp(-2.0 * nu) / M_s
    return PerturbedRecursion(ScaleSequence(L0, scales.values[:K + 1]), ups, betas, A_second, nu,
                              normalized_ok, hypothesis_ok, envelope)


def one_for_all_check(samples: Sequence[float], s1: float, s2: float, tau: float) -> Tuple[float, float]:
    """Hoelder interpolation of fractional moments on the empirical measure.

    lhs = mean X^tau, rhs = (mean X^s1)^((tau-s2)/(s1-s2)) (mean X^s2)^((s1-tau)/(s1-s2)).
    """
    if not 0 < s2 < tau < s1 < 1:
        raise HypothesisViolation(f"exponents must satisfy 0 < s2 < tau < s1 < 1 (got {s2}, {tau}, {s1})")
    x = np.abs(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise HypothesisViolation("one_for_all_check needs at least one sample")
    theta = (tau - s2) / (s1 - s2)
    lhs = float(np.mean(x ** tau))
    rhs = float(np.mean(x ** s1) ** theta * np.mean(x ** s2) ** (1.0 - theta))
    return lhs, rhs

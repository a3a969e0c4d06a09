"""
Green functions, eigen-decompositions, eigenfunction correlators and the exact
resolvent identities (geometric resolvent equation / inequality, second resolvent identity).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from ..utils.config import Config
from .errors import GeometryError, NearSpectrum
from .hamiltonian import Hamiltonian, Interval, Label
from .lattice import Config2, boundary_edges

logger = logging.getLogger(__name__)

FULL_LINE: Interval = (-np.inf, np.inf)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Sorted eigenvalues and real orthonormal eigenvectors (columns) of a Hamiltonian."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: Tuple[Label, ...]
    index: Dict[Label, int]

    @classmethod
    def from_hamiltonian(cls, H: Hamiltonian) -> "EigenSystem":
        values, vectors = linalg.eigh(H.matrix)
        return cls(values, vectors, H.labels, dict(H.index))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, labels: Sequence[Label]) -> "EigenSystem":
        values, vectors = linalg.eigh(matrix)
        labels = tuple(labels)
        return cls(values, vectors, labels, {label: i for i, label in enumerate(labels)})

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def row(self, label: Label) -> np.ndarray:
        """(psi_1(x), ..., psi_n(x))."""
        try:
            return self.eigenvectors[self.index[label]]
        except KeyError:
            raise GeometryError(f"{label} is not in the basis of this eigensystem") from None

    def coefficients(self, x: Label, y: Label) -> np.ndarray:
        return self.row(x) * self.row(y)

    def residual(self, matrix: np.ndarray) -> float:
        """max_i ||H v_i - lambda_i v_i||."""
        r = matrix @ self.eigenvectors - self.eigenvectors * self.eigenvalues
        return float(np.max(np.linalg.norm(r, axis=0))) if self.dim else 0.0

    def orthonormality_error(self) -> float:
        v = self.eigenvectors
        return float(np.max(np.abs(v.T @ v - np.eye(self.dim)))) if self.dim else 0.0


class RationalFunction:
    """E -> sum_i c_i / (lambda_i - E) with simple real poles.

    Poles closer than `merge_tolerance` are merged and their coefficients summed,
    so the stored poles are strictly increasing.
    """

    def __init__(self, poles: Iterable[float], coeffs: Iterable[float], merge_tolerance: Optional[float] = None):
        poles = np.asarray(list(poles) if not isinstance(poles, np.ndarray) else poles, dtype=float)
        coeffs = np.asarray(list(coeffs) if not isinstance(coeffs, np.ndarray) else coeffs, dtype=float)
        if poles.shape != coeffs.shape or poles.ndim != 1:
            raise ValueError("poles and coeffs must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(poles)) and np.all(np.isfinite(coeffs))):
            raise ValueError("poles and coeffs must be finite")
        tol = Config.POLE_MERGE_TOLERANCE if merge_tolerance is None else merge_tolerance
        self.poles, self.coeffs = _merge_poles(poles, coeffs, tol)

    def __repr__(self) -> str:
        return f"RationalFunction(n={self.poles.size}, mass={self.mass:.6g})"

    def __len__(self) -> int:
        return self.poles.size

    @property
    def mass(self) -> float:
        """sum_i |c_i|."""
        return float(np.sum(np.abs(self.coeffs)))

    @property
    def is_zero(self) -> bool:
        return self.poles.size == 0 or not np.any(self.coeffs)

    @property
    def is_positive(self) -> bool:
        return self.poles.size > 0 and bool(np.all(self.coeffs > 0))

    def __call__(self, E):
        E = np.asarray(E, dtype=float)
        return np.sum(self.coeffs[:, None] / (self.poles[:, None] - E.ravel()[None, :]), axis=0).reshape(E.shape)

    def derivative(self, E):
        E = np.asarray(E, dtype=float)
        diff = self.poles[:, None] - E.ravel()[None, :]
        return np.sum(self.coeffs[:, None] / diff ** 2, axis=0).reshape(E.shape)

    def near_pole(self, k: int, offset) -> np.ndarray:
        """f(lambda_k + offset), with the k-th term evaluated exactly as -c_k / offset."""
        offset = np.asarray(offset, dtype=float)
        flat = offset.ravel()
        diff = (self.poles - self.poles[k])[:, None] - flat[None, :]
        diff[k] = -flat
        return np.sum(self.coeffs[:, None] / diff, axis=0).reshape(offset.shape)

    def near_pole_derivative(self, k: int, offset) -> np.ndarray:
        offset = np.asarray(offset, dtype=float)
        flat = offset.ravel()
        diff = (self.poles - self.poles[k])[:, None] - flat[None, :]
        diff[k] = -flat
        return np.sum(self.coeffs[:, None] / diff ** 2, axis=0).reshape(offset.shape)

    def pruned(self, relative: float = 1e-15) -> "RationalFunction":
        """Drop coefficients with |c| <= relative * sum |c|."""
        keep = np.abs(self.coeffs) > relative * self.mass
        return RationalFunction(self.poles[keep], self.coeffs[keep], merge_tolerance=0.0)

    def positive_part(self) -> "RationalFunction":
        keep = self.coeffs > 0
        return RationalFunction(self.poles[keep], self.coeffs[keep], merge_tolerance=0.0)

    def negative_part(self) -> "RationalFunction":
        keep = self.coeffs < 0
        return RationalFunction(self.poles[keep], self.coeffs[keep], merge_tolerance=0.0)

    def __neg__(self) -> "RationalFunction":
        return RationalFunction(self.poles, -self.coeffs, merge_tolerance=0.0)

    def to_dict(self) -> dict:
        return {"poles": self.poles.tolist(), "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "RationalFunction":
        return cls(data["poles"], data["coeffs"])


def _merge_poles(poles: np.ndarray, coeffs: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    if poles.size == 0:
        return poles, coeffs
    order = np.argsort(poles, kind="stable")
    poles, coeffs = poles[order], coeffs[order]
    # a new group starts wherever the gap to the previous pole exceeds tol
    starts = np.concatenate(([True], np.diff(poles) > tol))
    group = np.cumsum(starts) - 1
    merged_coeffs = np.bincount(group, weights=coeffs)
    counts = np.bincount(group)
    merged_poles = np.bincount(group, weights=poles) / counts
    return merged_poles, merged_coeffs


def _tolerance(H: Hamiltonian) -> float:
    return Config.SPECTRAL_TOLERANCE * max(H.norm, 1.0)


def _check_energy(H: Hamiltonian, E: float) -> None:
    gap = H.spectral_gap(E)
    tol = _tolerance(H)
    if gap <= tol:
        raise NearSpectrum(E, gap, tol)


def _resolvent_column(H: Hamiltonian, x: Label, E: float) -> np.ndarray:
    """(H - E)^{-1} delta_x, i.e. G(x, .; E) by symmetry."""
    rhs = np.zeros(H.dim)
    rhs[H.index_of(x)] = 1.0
    return linalg.solve(H.matrix - E * np.eye(H.dim), rhs, assume_a="sym")


def green_column(H: Hamiltonian, x: Label, E: float) -> np.ndarray:
    """G(x, .; E) over the whole basis, after the near-spectrum check."""
    _check_energy(H, E)
    return _resolvent_column(H, x, E)


def green_solve(H: Hamiltonian, x: Label, y: Label, E: float) -> float:
    """G(x, y; E) = <delta_y, (H - E)^{-1} delta_x> by a direct linear solve."""
    _check_energy(H, E)
    column = _resolvent_column(H, x, E)
    return float(column[H.index_of(y)])


def green_rational(es: EigenSystem, x: Label, y: Label) -> RationalFunction:
    """G(x, y; .) as sum_i psi_i(x) psi_i(y) / (lambda_i - E)."""
    return RationalFunction(es.eigenvalues, es.coefficients(x, y))


def _in_interval(values: np.ndarray, interval: Interval) -> np.ndarray:
    lo, hi = interval
    return (values >= lo) & (values <= hi)


def efc(es: EigenSystem, x: Label, y: Label, interval: Interval = FULL_LINE) -> float:
    """Eigenfunction correlator Q(x, y; I) = sum over lambda_i in I of |psi_i(x) psi_i(y)|."""
    mask = _in_interval(es.eigenvalues, interval)
    return float(np.sum(np.abs(es.coefficients(x, y))[mask]))


def efc_noninteracting(es1: EigenSystem, es2: EigenSystem, x: Config2, y: Config2,
                       interval: Interval = FULL_LINE) -> float:
    """Two-particle correlator of H1 (x) 1 + 1 (x) H2 in the product eigenbasis.

    sum over lambda_i + mu_j in I of |phi_i(x1) phi_i(y1) psi_j(x2) psi_j(y2)|; well defined
    even when the exchange symmetry makes the two-particle spectrum degenerate.
    """
    a = np.abs(es1.coefficients(x.p1, y.p1))
    b = np.abs(es2.coefficients(x.p2, y.p2))
    mask = _in_interval(es1.eigenvalues[:, None] + es2.eigenvalues[None, :], interval)
    return float(np.sum(np.outer(a, b) * mask))


def _boundary_setup(H_outer: Hamiltonian, inner: Iterable[Config2], x: Config2, y: Config2):
    inner_set = set(inner)
    edges = boundary_edges(inner_set, H_outer.labels)
    if x not in inner_set:
        raise GeometryError(f"x={x.to_list()} must lie in the inner box")
    if y in inner_set or y not in H_outer:
        raise GeometryError(f"y={y.to_list()} must lie in the outer box but outside the inner box")
    return H_outer.restrict(inner_set), edges


def gre_check(H_outer: Hamiltonian, inner_box: Iterable[Config2], x: Config2, y: Config2,
              E: float) -> Tuple[float, float]:
    """Both sides of the geometric resolvent equation.

    lhs = G(x, y; E); rhs = -sum over boundary edges (w, w') of G_inner(x, w) H(w, w') G(w', y).
    The hopping amplitude is +1, so the sum carries a minus sign.
    """
    H_inner, edges = _boundary_setup(H_outer, inner_box, x, y)
    _check_energy(H_outer, E)
    _check_energy(H_inner, E)
    g_inner = _resolvent_column(H_inner, x, E)
    g_outer = _resolvent_column(H_outer, y, E)
    lhs = float(g_outer[H_outer.index_of(x)])
    rhs = 0.0
    for w, w2 in edges:
        hop = H_outer.matrix[H_outer.index_of(w), H_outer.index_of(w2)]
        rhs -= g_inner[H_inner.index_of(w)] * hop * g_outer[H_outer.index_of(w2)]
    return lhs, float(rhs)


def fgri_check(H_outer: Hamiltonian, inner_box: Iterable[Config2], x: Config2, y: Config2,
               E: float, s: float) -> Tuple[float, float]:
    """|G(x, y)|^s versus sum over boundary edges of |G_inner(x, w)|^s |G(w', y)|^s."""
    H_inner, edges = _boundary_setup(H_outer, inner_box, x, y)
    _check_energy(H_outer, E)
    _check_energy(H_inner, E)
    g_inner = _resolvent_column(H_inner, x, E)
    g_outer = _resolvent_column(H_outer, y, E)
    lhs = abs(g_outer[H_outer.index_of(x)]) ** s
    rhs = sum(
        abs(g_inner[H_inner.index_of(w)]) ** s * abs(g_outer[H_outer.index_of(w2)]) ** s
        for w, w2 in edges
    )
    return float(lhs), float(rhs)


def subadditivity_check(values: Sequence[float], s: float) -> Tuple[float, float]:
    """(|sum a_n|^s, sum |a_n|^s); the first never exceeds the second for 0 < s < 1."""
    a = np.asarray(values, dtype=float)
    return float(abs(np.sum(a)) ** s), float(np.sum(np.abs(a) ** s))


class ResolventCheck(NamedTuple):
    lhs: float
    rhs: float
    fractional_lhs: float
    fractional_rhs: float


def resolvent_perturbation_check(H: Hamiltonian, x: Config2, y: Config2, E: float, s: float) -> ResolventCheck:
    """Second resolvent identity G = G_ni - G_ni U G and its fractional consequence.

    G_ni is the resolvent of the same Hamiltonian with U removed.
    """
    H_ni = H.without_interaction()
    _check_energy(H, E)
    _check_energy(H_ni, E)
    u = H.interaction_diagonal()
    g_col = _resolvent_column(H, y, E)           # G(., y)
    g_ni_row = _resolvent_column(H_ni, x, E)     # G_ni(x, .)
    ix, iy = H.index_of(x), H.index_of(y)
    coupling = float(np.sum(g_ni_row * u * g_col))
    g = float(g_col[ix])
    g_ni = float(g_ni_row[iy])
    return ResolventCheck(
        lhs=g,
        rhs=g_ni - coupling,
        fractional_lhs=abs(g) ** s,
        fractional_rhs=abs(g_ni) ** s + abs(coupling) ** s,
    )

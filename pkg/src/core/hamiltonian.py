"""
Random two-particle Hamiltonian on a finite box.

    H = sum_j (H0^(j) + g V(x_j; omega)) + U(diam x)

restricted to Lambda^2 (simple truncation). H0 is the nearest-neighbour hopping
operator with amplitude +1; `laplacian_diagonal` adds the +2d diagonal per particle.
The random field V(u; omega) is drawn from a keyed stream so that it depends only on
(seed, site), which couples experiments run on different boxes with the same seed.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import GeometryError, ValidationError
from .lattice import Config2, Site, config_space, diam, neighbors

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]
Label = Union[Config2, Site]

INTERACTION_KINDS = ("none", "finite_range", "exponential", "subexponential")
DISORDER_KINDS = ("uniform01", "bounded_density")


@dataclass(frozen=True)
class InteractionSpec:
    """Two-body interaction U(r), r = diam x, in one of the admissible decay classes."""
    kind: str = "none"
    amplitude: float = 0.0
    r0: int = 0           # finite_range support radius
    mass: float = 1.0     # m' of the exponential / sub-exponential decay
    zeta: float = 1.0     # sub-exponential power

    @classmethod
    def none(cls) -> "InteractionSpec":
        return cls("none", 0.0)

    @classmethod
    def finite_range(cls, r0: int, amplitude: float = 1.0) -> "InteractionSpec":
        return cls("finite_range", amplitude, r0=int(r0))

    @classmethod
    def exponential(cls, mass: float, amplitude: float = 1.0) -> "InteractionSpec":
        return cls("exponential", amplitude, mass=mass)

    @classmethod
    def subexponential(cls, mass: float, zeta: float, amplitude: float = 1.0) -> "InteractionSpec":
        return cls("subexponential", amplitude, mass=mass, zeta=zeta)

    def problems(self) -> List[str]:
        errors = []
        if self.kind not in INTERACTION_KINDS:
            errors.append(f"interaction.kind must be one of {', '.join(INTERACTION_KINDS)} (got {self.kind!r})")
        if not self.amplitude >= 0:
            errors.append(f"interaction.amplitude must be >= 0 (got {self.amplitude})")
        if self.kind == "finite_range" and self.r0 < 0:
            errors.append(f"interaction.r0 must be >= 0 (got {self.r0})")
        if self.kind in ("exponential", "subexponential") and not self.mass > 0:
            errors.append(f"interaction.mass must be > 0 (got {self.mass})")
        if self.kind == "subexponential" and not self.zeta > 0:
            errors.append(f"interaction.zeta must be > 0 (got {self.zeta})")
        return errors

    def __call__(self, r: float) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "finite_range":
            return self.amplitude if r <= self.r0 else 0.0
        if self.kind == "exponential":
            return self.amplitude * math.exp(-self.mass * r)
        if self.kind == "subexponential":
            return self.amplitude * math.exp(-self.mass * r ** self.zeta)
        raise ValueError(f"Unsupported interaction kind: {self.kind}")

    def max_value(self) -> float:
        """sup of U; every admissible U is nonincreasing in r, so this is U(0)."""
        return self(0)

    def to_dict(self) -> dict:
        data = {"kind": self.kind, "amplitude": self.amplitude}
        if self.kind == "finite_range":
            data["r0"] = self.r0
        if self.kind in ("exponential", "subexponential"):
            data["mass"] = self.mass
        if self.kind == "subexponential":
            data["zeta"] = self.zeta
        return data

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "InteractionSpec":
        if not data:
            return cls.none()
        kind = data.get("kind", "none")
        return cls(
            kind=kind,
            amplitude=float(data.get("amplitude", 0.0 if kind == "none" else 1.0)),
            r0=int(data.get("r0", 0)),
            mass=float(data.get("mass", 1.0)),
            zeta=float(data.get("zeta", 1.0)),
        )


def interaction_energy(x: Config2, spec: InteractionSpec) -> float:
    return spec(diam(x))


@dataclass(frozen=True)
class DisorderSpec:
    """Single-site distribution of V on [0, 1]: uniform or a tabulated bounded density.

    The density is piecewise linear between the `grid` nodes; sampling inverts the
    exact piecewise-quadratic CDF.
    """
    kind: str = "uniform01"
    grid: Tuple[float, ...] = ()
    density: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        object.__setattr__(self, "density", tuple(float(v) for v in self.density))

    @classmethod
    def uniform(cls) -> "DisorderSpec":
        return cls("uniform01")

    @classmethod
    def bounded_density(cls, grid: Sequence[float], density: Sequence[float]) -> "DisorderSpec":
        spec = cls("bounded_density", tuple(grid), tuple(density))
        spec.check()
        return spec

    def problems(self) -> List[str]:
        if self.kind == "uniform01":
            return []
        if self.kind != "bounded_density":
            return [f"disorder.kind must be one of {', '.join(DISORDER_KINDS)} (got {self.kind!r})"]
        errors = []
        grid = np.asarray(self.grid)
        dens = np.asarray(self.density)
        if grid.size < 2 or grid.size != dens.size:
            return ["disorder.grid and disorder.density must have the same length >= 2"]
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(dens))):
            errors.append("disorder table must be finite")
        if abs(grid[0]) > 1e-12 or abs(grid[-1] - 1.0) > 1e-12:
            errors.append("disorder.grid must start at 0 and end at 1")
        if np.any(np.diff(grid) <= 0):
            errors.append("disorder.grid must be strictly increasing")
        if np.any(dens < 0):
            errors.append("disorder.density must be nonnegative")
        if not errors:
            total = trapezoid(dens, grid)
            if abs(total - 1.0) > 1e-8:
                errors.append(f"disorder.density must integrate to 1 within 1e-8 (got {total:.12g})")
        return errors

    def check(self) -> None:
        errors = self.problems()
        if errors:
            raise ValidationError(errors, "Malformed disorder specification")

    @property
    def sup_density(self) -> float:
        """Bound on the single-site density (the constant of the bounded-density assumption)."""
        if self.kind == "uniform01":
            return 1.0
        return float(max(self.density))

    @cached_property
    def _cdf(self) -> np.ndarray:
        return cumulative_trapezoid(np.asarray(self.density), np.asarray(self.grid), initial=0.0)

    def inverse_cdf(self, u: Union[float, np.ndarray]) -> np.ndarray:
        """Quantile function, vectorized over u in [0, 1]."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform01":
            return u.copy()
        grid = np.asarray(self.grid)
        dens = np.asarray(self.density)
        cdf = self._cdf
        # the last node may be slightly off 1 within the validation tolerance
        target = np.clip(u, 0.0, 1.0) * cdf[-1]
        cell = np.clip(np.searchsorted(cdf, target, side="right") - 1, 0, grid.size - 2)
        h = grid[cell + 1] - grid[cell]
        p0 = dens[cell]
        a = (dens[cell + 1] - p0) / (2.0 * h)
        rest = np.maximum(target - cdf[cell], 0.0)
        root = np.sqrt(np.maximum(p0 * p0 + 4.0 * a * rest, 0.0))
        denom = p0 + root
        tau = np.where(denom > 0, 2.0 * rest / np.where(denom > 0, denom, 1.0), 0.0)
        return grid[cell] + np.clip(tau, 0.0, h)

    def to_dict(self) -> dict:
        if self.kind == "uniform01":
            return {"kind": self.kind}
        return {"kind": self.kind, "grid": list(self.grid), "density": list(self.density)}

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "DisorderSpec":
        if not data:
            return cls.uniform()
        return cls(data.get("kind", "uniform01"), tuple(data.get("grid", ())), tuple(data.get("density", ())))


def _zigzag(n: int) -> int:
    return 2 * n if n >= 0 else -2 * n - 1


def _spawn_key(keys: Iterable) -> Tuple[int, ...]:
    out = []
    for key in keys:
        if isinstance(key, str):
            out.append(int.from_bytes(key.encode("utf-8")[:8].ljust(8, b"\0"), "little"))
        else:
            out.append(_zigzag(int(key)))
    return tuple(out)


def derive_seed(seed: int, *keys) -> int:
    """64-bit seed of the sub-stream labelled by `keys`; deterministic in (seed, keys)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_spawn_key(keys))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def site_uniform(seed: int, site: Site) -> float:
    """U(0,1) variate keyed by (seed, site)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_spawn_key(site.coords) + (site.d,))
    return float(np.random.default_rng(ss).random())


@dataclass(frozen=True)
class DisorderSample:
    """One realization of the random field on a finite set of sites."""
    values: Mapping[Site, float]
    seed: int

    def __getitem__(self, site: Site) -> float:
        try:
            return self.values[site]
        except KeyError:
            raise GeometryError(f"Site {site.to_list()} is outside the disorder sample") from None

    def __contains__(self, site: Site) -> bool:
        return site in self.values

    def shifted(self, c: float) -> "DisorderSample":
        """V -> V + c (leaves [0, 1]; used for the spectral-shift identity)."""
        return DisorderSample({u: v + c for u, v in self.values.items()}, self.seed)

    def with_values(self, updates: Mapping[Site, float]) -> "DisorderSample":
        """Freeze every other site and overwrite the given ones."""
        merged = dict(self.values)
        merged.update(updates)
        return DisorderSample(merged, self.seed)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "values": [[u.to_list(), v] for u, v in sorted(self.values.items())]}

    @classmethod
    def from_dict(cls, data: dict) -> "DisorderSample":
        return cls({Site.of(u): float(v) for u, v in data["values"]}, int(data["seed"]))


def sample_disorder(spec: DisorderSpec, sites: Iterable[Site], seed: int) -> DisorderSample:
    """IID draws V(u) for every site, each a function of (seed, u) only."""
    spec.check()
    ordered = sorted(set(sites))
    u = np.array([site_uniform(seed, site) for site in ordered])
    values = spec.inverse_cdf(u) if ordered else u
    return DisorderSample({site: float(v) for site, v in zip(ordered, values)}, int(seed))


@dataclass(frozen=True)
class ModelParams:
    """Model and moment parameters; `energy_interval=None` means the deterministic spectrum bounds."""
    d: int = 1
    g: float = 1.0
    s: float = 0.3
    interaction: InteractionSpec = field(default_factory=InteractionSpec.none)
    disorder: DisorderSpec = field(default_factory=DisorderSpec.uniform)
    laplacian_diagonal: bool = False
    energy_interval: Optional[Interval] = None

    def problems(self) -> List[str]:
        errors = []
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            errors.append(f"d must be a positive integer (got {self.d!r})")
        if not math.isfinite(self.g):
            errors.append(f"g must be finite (got {self.g})")
        if not (0 < self.s < 1):
            errors.append(f"s must satisfy 0 < s < 1 (got {self.s})")
        if self.energy_interval is not None:
            lo, hi = self.energy_interval
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                errors.append(f"energy_interval must satisfy E_lo < E_hi (got [{lo}, {hi}])")
        errors.extend(self.interaction.problems())
        errors.extend(self.disorder.problems())
        return errors

    def check(self) -> "ModelParams":
        errors = self.problems()
        if errors:
            raise ValidationError(errors, "Invalid model parameters")
        return self

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def interval(self, box: Sequence[Site]) -> Interval:
        if self.energy_interval is not None:
            return tuple(self.energy_interval)
        return spectrum_bounds(self, box)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "g": self.g,
            "s": self.s,
            "interaction": self.interaction.to_dict(),
            "disorder": self.disorder.to_dict(),
            "laplacian_diagonal": self.laplacian_diagonal,
            "energy_interval": list(self.energy_interval) if self.energy_interval is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        interval = data.get("energy_interval")
        return cls(
            d=int(data.get("d", 1)),
            g=float(data.get("g", 1.0)),
            s=float(data.get("s", 0.3)),
            interaction=InteractionSpec.from_dict(data.get("interaction")),
            disorder=DisorderSpec.from_dict(data.get("disorder")),
            laplacian_diagonal=bool(data.get("laplacian_diagonal", False)),
            energy_interval=tuple(float(v) for v in interval) if interval is not None else None,
        )


@dataclass(eq=False)
class Hamiltonian:
    """Dense real symmetric matrix over labelled basis vectors (configurations or sites)."""
    matrix: np.ndarray
    labels: Tuple[Label, ...]
    params: ModelParams
    disorder: Optional[DisorderSample] = None

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.index: Dict[Label, int] = {label: i for i, label in enumerate(self.labels)}
        if self.matrix.shape != (len(self.labels), len(self.labels)):
            raise GeometryError(
                f"Matrix shape {self.matrix.shape} does not match {len(self.labels)} labels"
            )

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def is_two_particle(self) -> bool:
        return bool(self.labels) and isinstance(self.labels[0], Config2)

    def index_of(self, label: Label) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise GeometryError(f"{label} is not in the box of this Hamiltonian") from None

    def __contains__(self, label: Label) -> bool:
        return label in self.index

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return linalg.eigvalsh(self.matrix)

    @property
    def norm(self) -> float:
        ev = self.eigenvalues
        return float(max(abs(ev[0]), abs(ev[-1]))) if ev.size else 0.0

    def spectral_gap(self, energy: float) -> float:
        """dist(E, sigma(H))."""
        return float(np.min(np.abs(self.eigenvalues - energy)))

    def restrict(self, labels: Iterable[Label]) -> "Hamiltonian":
        """Operator restriction (Dirichlet truncation) to a subset of the basis."""
        keep = sorted(set(labels))
        idx = np.array([self.index_of(label) for label in keep], dtype=int)
        return Hamiltonian(self.matrix[np.ix_(idx, idx)].copy(), tuple(keep), self.params, self.disorder)

    def interaction_diagonal(self) -> np.ndarray:
        if not self.is_two_particle:
            return np.zeros(self.dim)
        return np.array([interaction_energy(x, self.params.interaction) for x in self.labels])

    def without_interaction(self) -> "Hamiltonian":
        """Same disorder and hopping, U == 0."""
        matrix = self.matrix - np.diag(self.interaction_diagonal())
        return Hamiltonian(matrix, self.labels, replace(self.params, interaction=InteractionSpec.none()), self.disorder)


def _hopping(labels: Sequence[Label], neighbor_fn) -> np.ndarray:
    index = {label: i for i, label in enumerate(labels)}
    hop = np.zeros((len(labels), len(labels)))
    for i, label in enumerate(labels):
        for other in neighbor_fn(label):
            j = index.get(other)
            if j is not None:
                hop[i, j] = 1.0
    return hop


def _site_neighbors(u: Site) -> List[Site]:
    out = []
    for i in range(u.d):
        for step in (-1, 1):
            coords = list(u.coords)
            coords[i] += step
            out.append(Site(tuple(coords)))
    return out


def assemble(box_sites: Iterable[Site], disorder: DisorderSample, params: ModelParams) -> Hamiltonian:
    """Two-particle Hamiltonian on Lambda^2 with simple truncation."""
    sites = sorted(set(box_sites))
    for u in sites:
        if u.d != params.d:
            raise GeometryError(f"Site {u.to_list()} does not have dimension d={params.d}")
        disorder[u]  # raises GeometryError when uncovered
    configs = config_space(sites)
    kinetic_shift = 2 * 2 * params.d if params.laplacian_diagonal else 0.0
    diagonal = np.array([
        params.g * (disorder[x.p1] + disorder[x.p2]) + interaction_energy(x, params.interaction) + kinetic_shift
        for x in configs
    ])
    matrix = _hopping(configs, neighbors)
    matrix[np.diag_indices_from(matrix)] = diagonal
    logger.debug("Assembled two-particle Hamiltonian of dimension %d", len(configs))
    return Hamiltonian(matrix, tuple(configs), params, disorder)


def assemble_one_particle(box_sites: Iterable[Site], disorder: DisorderSample, params: ModelParams) -> Hamiltonian:
    """One-particle Hamiltonian H0 + gV on Lambda."""
    sites = sorted(set(box_sites))
    shift = 2 * params.d if params.laplacian_diagonal else 0.0
    matrix = _hopping(sites, _site_neighbors)
    matrix[np.diag_indices_from(matrix)] = [params.g * disorder[u] + shift for u in sites]
    return Hamiltonian(matrix, tuple(sites), params, disorder)


def spectrum_bounds(params: ModelParams, box: Optional[Sequence[Site]] = None) -> Interval:
    """Deterministic interval containing sigma(H) for every realization of V in [0, 1].

    Each particle's hopping part lies in [-2d, 2d] (shifted by +2d with the diagonal flag),
    the potential g(V1 + V2) in [min(0, 2g), max(0, 2g)] and 0 <= U <= U(0).
    """
    kin = 2 * params.d
    kin_lo, kin_hi = (0.0, 2.0 * kin) if params.laplacian_diagonal else (-float(kin), float(kin))
    u_max = params.interaction.max_value()
    if box:
        # only diameters realized in the box can contribute
        coords = np.array([u.coords for u in box])
        widest = int(np.max(coords.max(axis=0) - coords.min(axis=0)))
        u_max = max(params.interaction(r) for r in range(widest + 1))
    lo = min(0.0, 2 * params.g) + 2 * kin_lo
    hi = max(0.0, 2 * params.g) + u_max + 2 * kin_hi
    return (float(lo), float(hi))

"""
Configuration-space geometry for two particles on Z^d.

Sites, two-particle configurations, sup-norm boxes in the doubled space Z^{2d},
the symmetrized and Hausdorff distances, and relative (edge / inner vertex) boundaries.

Conventions:
    * distances use the sup-norm |.|_inf, adjacency uses the l1 norm (|x - y|_1 = 1);
    * every enumeration is in lexicographic order of the flattened 2d-vector
      (p1 coordinates first, then p2), so matrix indices are reproducible.
"""

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

from .errors import DimensionMismatch, GeometryError

SiteLike = Union["Site", int, Sequence[int]]


@dataclass(frozen=True, order=True)
class Site:
    """A lattice point of Z^d."""
    coords: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        if not self.coords:
            raise GeometryError("A site needs at least one coordinate")

    @classmethod
    def of(cls, value: SiteLike) -> "Site":
        """Coerce an int (d=1), a coordinate sequence or a Site."""
        if isinstance(value, Site):
            return value
        if isinstance(value, (int,)) or hasattr(value, "__index__"):
            return cls((int(value),))
        return cls(tuple(value))

    @classmethod
    def origin(cls, d: int) -> "Site":
        return cls((0,) * d)

    @property
    def d(self) -> int:
        return len(self.coords)

    def __add__(self, other: "Site") -> "Site":
        _check_dims(self.d, other.d)
        return Site(tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __sub__(self, other: "Site") -> "Site":
        _check_dims(self.d, other.d)
        return Site(tuple(a - b for a, b in zip(self.coords, other.coords)))

    def norm_inf(self) -> int:
        return max(abs(c) for c in self.coords)

    def to_list(self) -> List[int]:
        return list(self.coords)


@dataclass(frozen=True, order=True)
class Config2:
    """Two-particle configuration x = (x1, x2); particles are distinguishable."""
    p1: Site
    p2: Site

    def __post_init__(self):
        object.__setattr__(self, "p1", Site.of(self.p1))
        object.__setattr__(self, "p2", Site.of(self.p2))
        _check_dims(self.p1.d, self.p2.d)

    @classmethod
    def of(cls, a: SiteLike, b: SiteLike) -> "Config2":
        return cls(Site.of(a), Site.of(b))

    @classmethod
    def from_vector(cls, vec: Sequence[int], d: int) -> "Config2":
        if len(vec) != 2 * d:
            raise DimensionMismatch(len(vec), 2 * d)
        return cls(Site(tuple(vec[:d])), Site(tuple(vec[d:])))

    @property
    def d(self) -> int:
        return self.p1.d

    def as_vector(self) -> Tuple[int, ...]:
        return self.p1.coords + self.p2.coords

    def swapped(self) -> "Config2":
        return Config2(self.p2, self.p1)

    def projection(self) -> Set[Site]:
        """The site set Pi x = {x1, x2}."""
        return {self.p1, self.p2}

    def to_list(self) -> List[List[int]]:
        return [self.p1.to_list(), self.p2.to_list()]

    @classmethod
    def from_list(cls, data: Sequence) -> "Config2":
        return cls.of(data[0], data[1])


@dataclass(frozen=True)
class Box:
    """Sup-norm ball of radius `radius` around `center` in Z^{2d}."""
    center: Config2
    radius: int

    def __post_init__(self):
        if int(self.radius) < 0:
            raise GeometryError(f"Box radius must be nonnegative (got {self.radius})")
        object.__setattr__(self, "radius", int(self.radius))

    @classmethod
    def centered(cls, d: int, radius: int) -> "Box":
        """B_radius(0) in the doubled space."""
        zero = Site.origin(d)
        return cls(Config2(zero, zero), radius)

    @property
    def d(self) -> int:
        return self.center.d

    def contains(self, x: Config2) -> bool:
        _check_dims(self.d, x.d)
        return all(
            abs(a - c) <= self.radius for a, c in zip(x.as_vector(), self.center.as_vector())
        )

    def __contains__(self, x: Config2) -> bool:
        return self.contains(x)

    def bounds(self) -> List[Tuple[int, int]]:
        return [(c - self.radius, c + self.radius) for c in self.center.as_vector()]

    def surface(self) -> List[Config2]:
        """Inner vertex boundary of the box in Z^{2d}: configurations at sup-distance exactly `radius`."""
        center = self.center.as_vector()
        return [
            x for x in enumerate_box(self)
            if max(abs(a - c) for a, c in zip(x.as_vector(), center)) == self.radius
        ]

    def to_dict(self) -> dict:
        return {"center": self.center.to_list(), "radius": self.radius}


@dataclass(frozen=True)
class EdgeSet:
    """Ordered boundary edges (w, w') with w inside and w' outside the inner set."""
    edges: Tuple[Tuple[Config2, Config2], ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self) -> Iterator[Tuple[Config2, Config2]]:
        return iter(self.edges)

    def inner_vertices(self) -> List[Config2]:
        return sorted({w for w, _ in self.edges})

    def outer_vertices(self) -> List[Config2]:
        return sorted({w2 for _, w2 in self.edges})


def _check_dims(d1: int, d2: int) -> None:
    if d1 != d2:
        raise DimensionMismatch(d1, d2)


def _sup(a: Site, b: Site) -> int:
    return max(abs(u - v) for u, v in zip(a.coords, b.coords))


def sym_distance(x: Config2, y: Config2) -> int:
    """min over particle permutations of the sup-norm distance between configurations."""
    _check_dims(x.d, y.d)
    direct = max(_sup(x.p1, y.p1), _sup(x.p2, y.p2))
    crossed = max(_sup(x.p1, y.p2), _sup(x.p2, y.p1))
    return min(direct, crossed)


def hausdorff_distance(x: Config2, y: Config2) -> int:
    """Hausdorff distance between the projected site sets Pi x and Pi y, computed directly."""
    _check_dims(x.d, y.d)
    a_set, b_set = x.projection(), y.projection()
    forward = max(min(_sup(a, b) for b in b_set) for a in a_set)
    backward = max(min(_sup(a, b) for a in a_set) for b in b_set)
    return max(forward, backward)


def diam(x: Config2) -> int:
    return _sup(x.p1, x.p2)


def translate(x: Config2, shift: SiteLike) -> Config2:
    """Move both particles by the same lattice vector."""
    c = Site.of(shift)
    return Config2(x.p1 + c, x.p2 + c)


def neighbors(x: Config2) -> List[Config2]:
    """The 4d l1-neighbours of x in Z^{2d}, ordered by coordinate then by step (-1, +1)."""
    vec = x.as_vector()
    out = []
    for i in range(len(vec)):
        for step in (-1, 1):
            moved = list(vec)
            moved[i] += step
            out.append(Config2.from_vector(moved, x.d))
    return out


def site_box(center: SiteLike, radius: int) -> List[Site]:
    """One-particle cube Lambda = {u : |u - center|_inf <= radius}, lexicographic."""
    if radius < 0:
        raise GeometryError(f"Box radius must be nonnegative (got {radius})")
    c = Site.of(center)
    ranges = [range(a - radius, a + radius + 1) for a in c.coords]
    return [Site(coords) for coords in product(*ranges)]


def config_space(sites: Iterable[Site]) -> List[Config2]:
    """Lambda^2 in the lexicographic order used for matrix assembly."""
    ordered = sorted(set(sites))
    if ordered:
        d = ordered[0].d
        for u in ordered:
            _check_dims(d, u.d)
    return [Config2(a, b) for a in ordered for b in ordered]


def enumerate_box(b: Box, ambient: Optional[Box] = None) -> List[Config2]:
    """All configurations of b (intersected with `ambient` if given), lexicographic."""
    bounds = b.bounds()
    if ambient is not None:
        _check_dims(b.d, ambient.d)
        bounds = [
            (max(lo, alo), min(hi, ahi)) for (lo, hi), (alo, ahi) in zip(bounds, ambient.bounds())
        ]
    ranges = [range(lo, hi + 1) for lo, hi in bounds]
    return [Config2.from_vector(vec, b.d) for vec in product(*ranges)]


def boundary_edges(inner: Iterable[Config2], outer: Iterable[Config2]) -> EdgeSet:
    """Edge boundary of `inner` relative to `outer`: pairs (w, w') with w in inner, w' in outer minus inner."""
    inner_set = set(inner)
    outer_set = set(outer)
    if not inner_set <= outer_set:
        missing = sorted(inner_set - outer_set)[:3]
        raise GeometryError(
            f"Inner set is not contained in the outer set (e.g. {[m.to_list() for m in missing]})"
        )
    edges = []
    for w in sorted(inner_set):
        for w2 in neighbors(w):
            if w2 in outer_set and w2 not in inner_set:
                edges.append((w, w2))
    return EdgeSet(tuple(edges))


def inner_boundary(
    configs: Iterable[Config2], universe: Optional[Iterable[Config2]] = None
) -> List[Config2]:
    """Inner vertex boundary: members with a neighbour outside the set (and inside `universe`, if given)."""
    members = set(configs)
    allowed = set(universe) if universe is not None else None
    out = []
    for x in sorted(members):
        for z in neighbors(x):
            if z not in members and (allowed is None or z in allowed):
                out.append(x)
                break
    return out

"""
Experiment configuration: parsing, validation and the geometry it declares.

An experiment file is YAML (or JSON for scripting) with a versioned schema:

    schema_version: 1
    kind: decay
    seed: 20240611
    model:    {d: 1, g: 20, s: 0.2, interaction: {kind: finite_range, r0: 1, amplitude: 1}}
    geometry: {box_radius: 12, anchor: [[0], [0]], distances: [2, 4, 6, 8]}
    budget:   {n_disorder: 400}
    options:  {integrator: auto}
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from ..core.analytic import scale_sequence
from ..core.errors import ValidationError
from ..core.hamiltonian import ModelParams
from ..core.lattice import Config2, Site, site_box
from ..utils.config import INTEGRATORS, Config

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("moment", "decay", "split", "apriori", "upsilon", "recursion", "verify-identities")


def _config2(value: Any, d: int, name: str, problems: List[str]) -> Optional[Config2]:
    try:
        x = Config2.from_list(value)
    except Exception:
        problems.append(f"geometry.{name} must be a pair of sites, e.g. [[0], [1]] (got {value!r})")
        return None
    if x.d != d:
        problems.append(f"geometry.{name} has dimension {x.d}, model.d is {d}")
        return None
    return x


def _inside(x: Config2, radius: int) -> bool:
    return max(x.p1.norm_inf(), x.p2.norm_inf()) <= radius


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description; every random stream derives from `seed`."""
    kind: str
    seed: int
    model: ModelParams = field(default_factory=ModelParams)
    geometry: Dict[str, Any] = field(default_factory=dict)
    budget: Dict[str, Any] = field(default_factory=dict)
    options: Dict[str, Any] = field(default_factory=dict)
    output_dir: Optional[str] = None
    schema_version: int = SCHEMA_VERSION

    # ---- construction -------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Build and validate; every problem found is reported in one ValidationError."""
        if not isinstance(data, dict):
            raise ValidationError([f"experiment file must contain a mapping (got {type(data).__name__})"],
                                  "Invalid experiment configuration")
        problems: List[str] = []
        unknown = set(data) - {"schema_version", "kind", "seed", "model", "geometry", "budget", "options", "output_dir"}
        if unknown:
            problems.append(f"unknown top-level keys: {', '.join(sorted(unknown))}")
        if data.get("schema_version") != SCHEMA_VERSION:
            problems.append(f"schema_version must be {SCHEMA_VERSION} (got {data.get('schema_version')!r})")
        seed = data.get("seed")
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            problems.append(f"seed must be a nonnegative integer; no implicit randomness (got {seed!r})")
            seed = 0
        try:
            model = ModelParams.from_dict(data.get("model") or {})
        except (TypeError, ValueError) as exc:
            problems.append(f"model is malformed: {exc}")
            model = ModelParams()
        config = cls(
            kind=str(data.get("kind")),
            seed=int(seed),
            model=model,
            geometry=dict(data.get("geometry") or {}),
            budget=dict(data.get("budget") or {}),
            options=dict(data.get("options") or {}),
            output_dir=data.get("output_dir"),
            schema_version=data.get("schema_version", SCHEMA_VERSION),
        )
        problems.extend(config.problems())
        if problems:
            raise ValidationError(problems, "Invalid experiment configuration")
        return config

    @classmethod
    def verify_suite(cls, seed: int = 0, trials_scale: float = 1.0) -> "ExperimentConfig":
        """The default exact-identity suite run by `verify`."""
        return cls(kind="verify-identities", seed=seed, options={"trials_scale": trials_scale})

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes) if changes else self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "seed": self.seed,
            "model": self.model.to_dict(),
            "geometry": self.geometry,
            "budget": self.budget,
            "options": self.options,
            "output_dir": self.output_dir,
        }

    # ---- validation ---------------------------------------------------

    def problems(self) -> List[str]:
        errors: List[str] = []
        if self.kind not in KINDS:
            errors.append(f"kind must be one of {', '.join(KINDS)} (got {self.kind!r})")
            return errors
        if self.kind != "verify-identities":
            errors.extend(self.model.problems())
        integrator = self.options.get("integrator", "auto")
        if integrator not in INTEGRATORS:
            errors.append(f"options.integrator must be one of {', '.join(INTEGRATORS)} (got {integrator!r})")
        for key in ("n_disorder", "n_outer", "n_inner", "n_energy"):
            if key in self.budget and not (isinstance(self.budget[key], int) and self.budget[key] >= 1):
                errors.append(f"budget.{key} must be a positive integer (got {self.budget[key]!r})")
        if errors or self.kind == "verify-identities":
            return errors

        d = self.model.d
        radius = self.geometry.get("box_radius")
        if not (isinstance(radius, int) and radius >= 0):
            errors.append(f"geometry.box_radius must be a nonnegative integer (got {radius!r})")
            return errors
        check = getattr(self, f"_{self.kind}_problems")
        errors.extend(check(d, radius))
        return errors

    def _moment_problems(self, d: int, radius: int) -> List[str]:
        errors: List[str] = []
        for name in ("x", "y"):
            if name not in self.geometry:
                errors.append(f"geometry.{name} is required for kind=moment")
                continue
            z = _config2(self.geometry[name], d, name, errors)
            if z is not None and not _inside(z, radius):
                errors.append(f"geometry.{name}={z.to_list()} lies outside the box of radius {radius}")
        return errors

    def _distances(self, errors: List[str]) -> List[int]:
        distances = self.geometry.get("distances")
        if not (isinstance(distances, list) and distances and all(isinstance(r, int) for r in distances)):
            errors.append(f"geometry.distances must be a nonempty list of integers (got {distances!r})")
            return []
        if any(r < 0 for r in distances):
            errors.append("geometry.distances must be nonnegative")
        return distances

    def _decay_problems(self, d: int, radius: int) -> List[str]:
        errors: List[str] = []
        anchor = _config2(self.geometry.get("anchor", [[0] * d, [0] * d]), d, "anchor", errors)
        distances = self._distances(errors)
        if anchor is not None:
            if not _inside(anchor, radius):
                errors.append(f"geometry.anchor lies outside the box of radius {radius}")
            reach = max(anchor.p1.norm_inf(), anchor.p2.norm_inf())
            for R in distances:
                if R > radius + reach:
                    errors.append(f"distance {R} exceeds the box (radius {radius})")
        if len(distances) < 3:
            errors.append("kind=decay needs at least 3 distances for the decay fit")
        probes = self.geometry.get("probes_per_distance", Config.DEFAULT_PROBES_PER_DISTANCE)
        if not (isinstance(probes, int) and probes >= 1):
            errors.append(f"geometry.probes_per_distance must be a positive integer (got {probes!r})")
        return errors

    def _split_problems(self, d: int, radius: int) -> List[str]:
        errors: List[str] = []
        distances = self._distances(errors)
        for R in distances:
            if R < 1 or R > radius:
                errors.append(f"split distance {R} must satisfy 1 <= R <= box_radius={radius}")
        return errors

    def _apriori_problems(self, d: int, radius: int) -> List[str]:
        errors: List[str] = []
        points = {}
        for name in ("x", "y"):
            if name not in self.geometry:
                errors.append(f"geometry.{name} is required for kind=apriori")
                continue
            points[name] = _config2(self.geometry[name], d, name, errors)
        for name in ("u1", "u2"):
            if name not in self.geometry:
                errors.append(f"geometry.{name} is required for kind=apriori")
                continue
            try:
                points[name] = Site.of(self.geometry[name])
            except Exception:
                errors.append(f"geometry.{name} must be a site (got {self.geometry[name]!r})")
        x, y, u1, u2 = (points.get(k) for k in ("x", "y", "u1", "u2"))
        if x is not None and u1 is not None and u1 not in x.projection():
            errors.append("geometry.u1 must be one of the sites of x")
        if y is not None and u2 is not None and u2 not in y.projection():
            errors.append("geometry.u2 must be one of the sites of y")
        for name, z in (("x", x), ("y", y)):
            if z is not None and not _inside(z, radius):
                errors.append(f"geometry.{name} lies outside the box of radius {radius}")
        couplings = self.options.get("couplings", [5, 10, 20, 40])
        if not (isinstance(couplings, list) and len(couplings) >= 2 and all(isinstance(g, (int, float)) and g != 0 for g in couplings)):
            errors.append(f"options.couplings must list at least two nonzero couplings (got {couplings!r})")
        return errors

    def _upsilon_problems(self, d: int, radius: int) -> List[str]:
        errors: List[str] = []
        scales = self.geometry.get("L")
        scales = [scales] if isinstance(scales, int) else scales
        if not (isinstance(scales, list) and scales and all(isinstance(L, int) and L >= 1 for L in scales)):
            errors.append(f"geometry.L must be a positive integer or a list of them (got {self.geometry.get('L')!r})")
            return errors
        for L in scales:
            if L > radius:
                errors.append(f"B_{L}(0) does not fit in the ambient box of radius {radius}")
        return errors

    def _recursion_problems(self, d: int, radius: int) -> List[str]:
        errors: List[str] = []
        L0, K = self.geometry.get("L0"), self.geometry.get("K")
        if not (isinstance(L0, int) and L0 >= 1):
            errors.append(f"geometry.L0 must be a positive integer (got {L0!r})")
        if not (isinstance(K, int) and K >= 1):
            errors.append(f"geometry.K must be a positive integer (got {K!r})")
        if errors:
            return errors
        top = scale_sequence(L0, K)[K]
        if top > radius:
            errors.append(f"B_{top}(0) (scale L_{K}) does not fit in the ambient box of radius {radius}")
        nu = self.options.get("nu", 0.25)
        if not (isinstance(nu, (int, float)) and nu > 0):
            errors.append(f"options.nu must be positive (got {nu!r})")
        return errors

    # ---- derived geometry ---------------------------------------------

    @property
    def sites(self) -> List[Site]:
        return site_box(Site.origin(self.model.d), int(self.geometry["box_radius"]))

    def point(self, name: str) -> Config2:
        return Config2.from_list(self.geometry[name])

    @property
    def anchor(self) -> Config2:
        d = self.model.d
        return Config2.from_list(self.geometry.get("anchor", [[0] * d, [0] * d]))

    @property
    def n_disorder(self) -> int:
        return int(self.budget.get("n_disorder", Config.DEFAULT_N_DISORDER))

    @property
    def integrator(self) -> Optional[str]:
        return self.options.get("integrator")


def load_experiment(path: Path) -> ExperimentConfig:
    """Read an experiment file (.yaml/.yml or .json); a run.json re-runs its config snapshot."""
    path = Path(path)
    if not path.exists():
        raise ValidationError([f"{path} does not exist"], "Cannot read experiment configuration")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValidationError([f"{path.name} is not valid {path.suffix.lstrip('.').upper() or 'YAML'}: {exc}"],
                              "Cannot read experiment configuration") from exc
    if isinstance(data, dict) and "config" in data and "rows" in data:
        logger.info("Re-running the configuration recorded in %s", path)
        data = data["config"]
    return ExperimentConfig.from_dict(data)

"""
Experiment configuration files.

A configuration is a JSON object; parsing validates every field, fills in defaults and
records which fields were defaulted so that the resolved configuration in the manifest
reproduces the run on its own.

Example:
```json
{
  "kind": "risk_curve",
  "grid": {"d": 1, "b": 1.0, "n": 256},
  "theta": {"beta": [2.0], "r": ["inf"], "L": [1.0]},
  "p": 2,
  "eps": [0.2, 0.1, 0.05, 0.025],
  "reps": 100,
  "seed": 7
}
```
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from django.core.exceptions import ImproperlyConfigured, ValidationError

from django_adaptive_kernels.app_settings import KernelProfile, app_settings, validate_c2_table
from django_adaptive_kernels.experiment_registry import registry
from django_adaptive_kernels.kernels import ProductKernel, default_kernel
from django_adaptive_kernels.model import Grid, InvalidGrid, make_grid
from django_adaptive_kernels.nikolskii import ClassSpec
from django_adaptive_kernels.risk import MIN_RISK_REPS, MIN_UPPER_FUNCTION_REPS, Method, StderrMethod
from django_adaptive_kernels.utils import parse_real, to_jsonable

CAP_KEYS = (
    "level_cap",
    "r_cap",
    "bandwidth_set_cap",
    "oracle_grid_cap",
    "box_cap",
    "vg_restarts",
    "quadrature_nodes",
    "resolvability_cells",
    "bootstrap_resamples",
)

DEFAULT_REPS = {
    "risk_curve": 100,
    "oracle_check": 200,
    "upper_function_check": 500,
}

MIN_REPS = {
    "risk_curve": MIN_RISK_REPS,
    "oracle_check": 1,
    "upper_function_check": MIN_UPPER_FUNCTION_REPS,
}

KINDS_WITHOUT_GRID = ("rates_table",)
KINDS_WITHOUT_EPS = ("rates_table",)
SIGNAL_NAMES = ("holder", "bump", "sharp")


class BandwidthRecipe(str, Enum):
    CONST_LATTICE = "const_lattice"
    DYADIC_VARYING = "dyadic_varying"
    ORACLE_GRID = "oracle_grid"


@dataclass(frozen=True)
class GridConfig:
    d: int
    b: float
    n: int

    def build(self) -> Grid:
        return make_grid(self.d, self.b, self.n)


@dataclass(frozen=True)
class KernelConfig:
    profile: KernelProfile
    ell: int

    def build(self, d: int) -> ProductKernel:
        return default_kernel(d, self.ell, self.profile)


@dataclass(frozen=True)
class BandwidthConfig:
    recipe: BandwidthRecipe = BandwidthRecipe.CONST_LATTICE
    levels: Optional[Tuple[int, ...]] = None
    partition_level: int = 2
    size: int = 16
    h: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class SignalConfig:
    name: str = "holder"
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ConstantsConfig:
    c2_table: Dict[int, float] = field(default_factory=dict)
    c1_scale: float = 1.0
    bound_scale: float = 1.0
    psi_eps: Optional[float] = None
    membership_slack: Optional[float] = None
    stderr_method: StderrMethod = StderrMethod.BOOTSTRAP
    slope_tolerance: Optional[float] = None
    h_eps: Optional[float] = None
    A_eps: Optional[float] = None
    C1_lb: float = 1.0
    family_size: int = 10
    ratio_spread_tolerance: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    classes: Tuple[ClassSpec, ...]
    p_values: Tuple[float, ...]
    q: float
    grid: Optional[GridConfig]
    kernel: KernelConfig
    eps: Tuple[float, ...]
    bandwidths: BandwidthConfig
    method: Method
    signal: SignalConfig
    reps: int
    seed: int
    caps: Dict[str, int] = field(default_factory=dict)
    constants: ConstantsConfig = field(default_factory=ConstantsConfig)
    name: Optional[str] = None
    defaults_used: Tuple[str, ...] = ()

    @property
    def theta(self) -> ClassSpec:
        return self.classes[0]

    @property
    def p(self) -> float:
        return self.p_values[0]

    def build_grid(self) -> Grid:
        if self.grid is None:
            raise ValidationError(f"grid: required for kind {self.kind}")
        return self.grid.build()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        defaults_used = tuple(path for path in self.defaults_used if path != "seed")
        return dataclasses.replace(self, seed=seed, defaults_used=defaults_used)

    def to_json(self) -> dict:
        data = {
            "kind": self.kind,
            "name": self.name,
            "classes": [theta.to_json() for theta in self.classes],
            "p": self.p_values,
            "q": self.q,
            "grid": dataclasses.asdict(self.grid) if self.grid else None,
            "kernel": {"profile": self.kernel.profile.value, "ell": self.kernel.ell},
            "eps": self.eps,
            "bandwidths": {**dataclasses.asdict(self.bandwidths), "recipe": self.bandwidths.recipe.value},
            "method": self.method.value,
            "signal": dataclasses.asdict(self.signal),
            "reps": self.reps,
            "seed": self.seed,
            "caps": self.caps,
            "constants": {
                **dataclasses.asdict(self.constants),
                "c2_table": {str(r): value for r, value in sorted(self.constants.c2_table.items())},
                "stderr_method": self.constants.stderr_method.value,
            },
            "defaults_used": sorted(self.defaults_used),
        }
        return to_jsonable(data)


class _Parser:
    """Collects field-path errors instead of stopping at the first one."""

    def __init__(self, data: Mapping[str, Any]) -> None:
        self.data = data
        self.errors: List[str] = []
        self.defaults_used: List[str] = []

    def error(self, path: str, message: str) -> None:
        self.errors.append(f"{path}: {message}")

    def default(self, path: str, value: Any) -> Any:
        self.defaults_used.append(path)
        return value

    def section(self, key: str) -> Mapping[str, Any]:
        value = self.data.get(key, {})
        if not isinstance(value, Mapping):
            self.error(key, "must be an object")
            return {}
        return value

    def real(self, path: str, value: Any, minimum: Optional[float] = None, allow_inf: bool = False) -> float:
        try:
            number = parse_real(value)
        except (TypeError, ValueError):
            self.error(path, f"must be a number, got {value!r}")
            return math.nan
        if isinstance(value, bool) or math.isnan(number) or (math.isinf(number) and not allow_inf):
            self.error(path, f"must be a finite number, got {value!r}")
            return math.nan
        if minimum is not None and number < minimum:
            self.error(path, f"must be at least {minimum}, got {value!r}")
        return number

    def integer(self, path: str, value: Any, minimum: Optional[int] = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(path, f"must be an integer, got {value!r}")
            return 0
        if minimum is not None and value < minimum:
            self.error(path, f"must be at least {minimum}, got {value!r}")
        return value

    def integers(self, path: str, value: Any) -> Optional[Tuple[int, ...]]:
        if value is None:
            return None
        if not isinstance(value, list) or not value:
            self.error(path, "must be a nonempty list of integers")
            return None
        return tuple(self.integer(f"{path}[{i}]", item) for i, item in enumerate(value))

    def choice(self, path: str, value: Any, enum: Any) -> Any:
        try:
            return enum(value)
        except ValueError:
            valid = [member.value for member in enum]
            self.error(path, f"invalid value {value!r}. Valid options are {valid}")
            return next(iter(enum))


def _parse_class(parser: _Parser, path: str, raw: Any) -> Optional[ClassSpec]:
    if not isinstance(raw, Mapping):
        parser.error(path, "must be an object with keys beta, r and L")
        return None
    for key in ("beta", "r"):
        if key not in raw:
            parser.error(f"{path}.{key}", "required")
    if "beta" not in raw or "r" not in raw:
        return None
    Ls = raw.get("L")
    if Ls is None and isinstance(raw["beta"], list):
        Ls = parser.default(f"{path}.L", [1.0] * len(raw["beta"]))
    try:
        return ClassSpec(betas=tuple(raw["beta"]), rs=tuple(raw["r"]), Ls=tuple(Ls))
    except (TypeError, ValueError) as err:
        parser.error(path, str(err))
        return None


def _parse_classes(parser: _Parser) -> Tuple[ClassSpec, ...]:
    data = parser.data
    if "classes" in data:
        if not isinstance(data["classes"], list) or not data["classes"]:
            parser.error("classes", "must be a nonempty list of classes")
            return ()
        parsed = [_parse_class(parser, f"classes[{i}]", raw) for i, raw in enumerate(data["classes"])]
    elif "theta" in data:
        parsed = [_parse_class(parser, "theta", data["theta"])]
    else:
        parser.error("theta", "required")
        return ()
    return tuple(theta for theta in parsed if theta is not None)


def _parse_p(parser: _Parser, classes: Tuple[ClassSpec, ...]) -> Tuple[float, ...]:
    raw = parser.data.get("p")
    if raw is None:
        if not classes:
            return (2.0,)
        return parser.default("p", (min(classes[0].rs),))
    values = raw if isinstance(raw, list) else [raw]
    if not values:
        parser.error("p", "must not be empty")
        return (2.0,)
    return tuple(parser.real(f"p[{i}]", value, minimum=1, allow_inf=True) for i, value in enumerate(values))


def _parse_grid(parser: _Parser, kind: str, classes: Tuple[ClassSpec, ...]) -> Optional[GridConfig]:
    if "grid" not in parser.data:
        if kind not in KINDS_WITHOUT_GRID:
            parser.error("grid", f"required for kind {kind}")
        return None
    raw = parser.section("grid")
    missing = [key for key in ("d", "b", "n") if key not in raw]
    for key in missing:
        parser.error(f"grid.{key}", "required")
    if missing:
        return None
    grid = GridConfig(
        d=parser.integer("grid.d", raw["d"], minimum=1),
        b=parser.real("grid.b", raw["b"]),
        n=parser.integer("grid.n", raw["n"], minimum=2),
    )
    try:
        grid.build()
    except InvalidGrid as err:
        parser.error("grid", str(err))
    if any(theta.dim != grid.d for theta in classes):
        parser.error("grid.d", f"does not match the class dimension {[theta.dim for theta in classes]}")
    return grid


def _parse_kernel(parser: _Parser, classes: Tuple[ClassSpec, ...]) -> KernelConfig:
    raw = parser.section("kernel")
    if "profile" in raw:
        profile = parser.choice("kernel.profile", raw["profile"], KernelProfile)
    else:
        profile = parser.default("kernel.profile", app_settings.KERNEL_PROFILE)
    if "ell" in raw:
        ell = parser.integer("kernel.ell", raw["ell"], minimum=1)
    else:
        ell = parser.default("kernel.ell", max((max(theta.ks) for theta in classes), default=2))
    return KernelConfig(profile=profile, ell=ell)


def _parse_eps(parser: _Parser, kind: str) -> Tuple[float, ...]:
    raw = parser.data.get("eps")
    if raw is None:
        if kind not in KINDS_WITHOUT_EPS:
            parser.error("eps", f"required for kind {kind}")
        return ()
    if not isinstance(raw, list) or not raw:
        parser.error("eps", "must be a nonempty list of noise levels")
        return ()
    values = []
    for i, value in enumerate(raw):
        number = parser.real(f"eps[{i}]", value)
        if not math.isnan(number) and not 0 < number < 1:
            parser.error(f"eps[{i}]", f"must lie in (0, 1), got {value!r}")
        values.append(number)
    return tuple(values)


def _parse_bandwidths(parser: _Parser) -> BandwidthConfig:
    raw = parser.section("bandwidths")
    defaults = BandwidthConfig()
    values: Dict[str, Any] = {}
    if "recipe" in raw:
        values["recipe"] = parser.choice("bandwidths.recipe", raw["recipe"], BandwidthRecipe)
    else:
        values["recipe"] = parser.default("bandwidths.recipe", defaults.recipe)
    values["levels"] = parser.integers("bandwidths.levels", raw.get("levels"))
    values["h"] = parser.integers("bandwidths.h", raw.get("h"))
    for key in ("partition_level", "size"):
        if key in raw:
            values[key] = parser.integer(f"bandwidths.{key}", raw[key], minimum=1)
        else:
            values[key] = parser.default(f"bandwidths.{key}", getattr(defaults, key))
    return BandwidthConfig(**values)


def _parse_method(parser: _Parser, bandwidths: BandwidthConfig) -> Method:
    if "method" in parser.data:
        method = parser.choice("method", parser.data["method"], Method)
    elif bandwidths.recipe == BandwidthRecipe.DYADIC_VARYING:
        method = parser.default("method", Method.SELECT_VARYING)
    else:
        method = parser.default("method", Method.SELECT_CONST)
    if method == Method.FIXED_H and bandwidths.h is None:
        parser.error("bandwidths.h", "required for method fixed_h")
    if method == Method.SELECT_CONST and bandwidths.recipe == BandwidthRecipe.DYADIC_VARYING:
        parser.error("method", "select_const needs constant bandwidths, not the dyadic_varying recipe")
    return method


def _parse_signal(parser: _Parser) -> SignalConfig:
    raw = parser.section("signal")
    if "name" in raw:
        name = raw["name"]
        if name not in SIGNAL_NAMES:
            parser.error("signal.name", f"invalid value {name!r}. Valid options are {list(SIGNAL_NAMES)}")
    else:
        name = parser.default("signal.name", "holder")
    params = raw.get("params", {})
    if not isinstance(params, Mapping):
        parser.error("signal.params", "must be an object")
        params = {}
    return SignalConfig(name=name, params=dict(params))


def _parse_reps(parser: _Parser, kind: str) -> int:
    minimum = MIN_REPS.get(kind, 0)
    if "reps" not in parser.data:
        return parser.default("reps", DEFAULT_REPS.get(kind, 0))
    reps = parser.integer("reps", parser.data["reps"], minimum=0)
    if reps < minimum:
        parser.error("reps", f"must be at least {minimum} for kind {kind}, got {reps}")
    return reps


def _parse_caps(parser: _Parser) -> Dict[str, int]:
    raw = parser.section("caps")
    caps = {}
    for key, value in raw.items():
        if key not in CAP_KEYS:
            parser.error(f"caps.{key}", f"unknown cap. Valid options are {list(CAP_KEYS)}")
            continue
        caps[key] = parser.integer(f"caps.{key}", value, minimum=1)
    return caps


def _parse_constants(parser: _Parser) -> ConstantsConfig:
    raw = parser.section("constants")
    defaults = ConstantsConfig()
    values: Dict[str, Any] = {}

    if "c2_table" in raw:
        try:
            values["c2_table"] = validate_c2_table(raw["c2_table"])
        except ImproperlyConfigured as err:
            parser.error("constants.c2_table", str(err))
    else:
        values["c2_table"] = parser.default("constants.c2_table", app_settings.C2_TABLE)

    for key in ("c1_scale", "bound_scale", "C1_lb"):
        if key in raw:
            values[key] = parser.real(f"constants.{key}", raw[key])
            if not values[key] > 0:
                parser.error(f"constants.{key}", f"must be positive, got {raw[key]!r}")
        else:
            values[key] = parser.default(f"constants.{key}", getattr(defaults, key))

    for key in ("psi_eps", "membership_slack", "slope_tolerance", "h_eps", "A_eps"):
        if raw.get(key) is not None:
            values[key] = parser.real(f"constants.{key}", raw[key], minimum=0)

    if "stderr_method" in raw:
        values["stderr_method"] = parser.choice("constants.stderr_method", raw["stderr_method"], StderrMethod)
    else:
        values["stderr_method"] = parser.default("constants.stderr_method", defaults.stderr_method)

    if raw.get("ratio_spread_tolerance") is not None:
        values["ratio_spread_tolerance"] = parser.real(
            "constants.ratio_spread_tolerance", raw["ratio_spread_tolerance"], minimum=1
        )

    if "family_size" in raw:
        values["family_size"] = parser.integer("constants.family_size", raw["family_size"], minimum=1)
    else:
        values["family_size"] = parser.default("constants.family_size", defaults.family_size)

    unknown = set(raw) - {f.name for f in dataclasses.fields(ConstantsConfig)}
    for key in sorted(unknown):
        parser.error(f"constants.{key}", "unknown constant")
    return ConstantsConfig(**values)


def parse_config(data: Any) -> ExperimentConfig:
    """Validate a decoded configuration; raises `ValidationError` with one message per bad field."""
    if not isinstance(data, Mapping):
        raise ValidationError("config: must be a JSON object")
    parser = _Parser(data)

    kind = data.get("kind")
    if kind is None:
        parser.error("kind", "required")
        kind = ""
    elif kind not in registry.all():
        parser.error("kind", f"unknown experiment kind {kind!r}. Valid options are {sorted(registry.all())}")

    classes = _parse_classes(parser)
    p_values = _parse_p(parser, classes)
    if "q" in data:
        q = parser.real("q", data["q"], minimum=1)
    else:
        q = parser.default("q", 2.0)
    grid = _parse_grid(parser, kind, classes)
    kernel = _parse_kernel(parser, classes)
    eps = _parse_eps(parser, kind)
    bandwidths = _parse_bandwidths(parser)
    method = _parse_method(parser, bandwidths)
    signal = _parse_signal(parser)
    reps = _parse_reps(parser, kind)
    if "seed" in data:
        seed = parser.integer("seed", data["seed"], minimum=0)
    else:
        seed = parser.default("seed", 0)
    caps = _parse_caps(parser)
    constants = _parse_constants(parser)

    if parser.errors:
        raise ValidationError(parser.errors)

    return ExperimentConfig(
        kind=kind,
        name=data.get("name"),
        classes=classes,
        p_values=p_values,
        q=q,
        grid=grid,
        kernel=kernel,
        eps=eps,
        bandwidths=bandwidths,
        method=method,
        signal=signal,
        reps=reps,
        seed=seed,
        caps=caps,
        constants=constants,
        defaults_used=tuple(sorted(parser.defaults_used)),
    )


def _enum_schema(enum: Any) -> Dict[str, Any]:
    return {"type": "string", "enum": [member.value for member in enum]}


def _field_schema(cls: Any, name: str) -> Dict[str, Any]:
    annotation = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    text = str(annotation)
    if "Dict" in text:
        return {"type": "object"}
    if "Tuple" in text:
        return {"type": "array", "items": {"type": "integer"}, "minItems": 1}
    if "int" in text and "float" not in text:
        return {"type": "integer", "minimum": 1}
    return {"type": "number"}


def config_schema() -> Dict[str, Any]:
    """
    JSON Schema of experiment configuration files, built from the parsed field set.

    The schema describes shapes and value sets; cross-field rules such as the grid dimension
    matching the class dimension are only checked by `parse_config`.
    """
    real = {"oneOf": [{"type": "number"}, {"type": "string", "enum": ["inf"]}]}
    positive_reals = {"type": "array", "items": real, "minItems": 1}
    class_schema = {
        "type": "object",
        "properties": {"beta": positive_reals, "r": positive_reals, "L": positive_reals},
        "required": ["beta", "r"],
    }
    constants: Dict[str, Any] = {}
    for f in dataclasses.fields(ConstantsConfig):
        if f.name == "stderr_method":
            constants[f.name] = _enum_schema(StderrMethod)
        else:
            constants[f.name] = _field_schema(ConstantsConfig, f.name)
    bandwidths: Dict[str, Any] = {"recipe": _enum_schema(BandwidthRecipe)}
    for f in dataclasses.fields(BandwidthConfig):
        if f.name != "recipe":
            bandwidths[f.name] = _field_schema(BandwidthConfig, f.name)

    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "Experiment configuration",
        "type": "object",
        "required": ["kind"],
        "properties": {
            "kind": {"type": "string", "enum": sorted(registry.all())},
            "name": {"type": "string"},
            "theta": class_schema,
            "classes": {"type": "array", "items": class_schema, "minItems": 1},
            "p": {"oneOf": [real, {"type": "array", "items": real, "minItems": 1}]},
            "q": {"type": "number", "minimum": 1},
            "grid": {
                "type": "object",
                "properties": {
                    "d": {"type": "integer", "minimum": 1},
                    "b": {"type": "number"},
                    "n": {"type": "integer", "minimum": 2},
                },
                "required": ["d", "b", "n"],
            },
            "kernel": {
                "type": "object",
                "properties": {"profile": _enum_schema(KernelProfile), "ell": {"type": "integer", "minimum": 1}},
            },
            "eps": {
                "type": "array",
                "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "minItems": 1,
            },
            "bandwidths": {"type": "object", "properties": bandwidths},
            "method": _enum_schema(Method),
            "signal": {
                "type": "object",
                "properties": {"name": {"type": "string", "enum": list(SIGNAL_NAMES)}, "params": {"type": "object"}},
            },
            "reps": {"type": "integer", "minimum": 0},
            "seed": {"type": "integer", "minimum": 0},
            "caps": {
                "type": "object",
                "properties": {key: {"type": "integer", "minimum": 1} for key in CAP_KEYS},
                "additionalProperties": False,
            },
            "constants": {"type": "object", "properties": constants, "additionalProperties": False},
        },
    }


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise ValidationError(f"config: cannot read {path}: {err}")
    except json.JSONDecodeError as err:
        raise ValidationError(f"config: invalid JSON in {path}: {err}")
    return parse_config(data)

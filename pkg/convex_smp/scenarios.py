"""
Scenario files and the built-in scenario library.

A scenario is JSON (or YAML) with expression strings for every coefficient, validated
into a pydantic model. Built-ins are compiled in so they run without files on disk.
"""

import copy
import json
import math
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .convex import ConvexBody, InvalidBodyError, body_from_config
from .expr import Expr, ExpressionEvaluationError, parse_expression, variables_for
from .solver import Grid, Problem
from .system import InvalidSystemError, SystemSpec
from .utils import ConvexSMPError

DIVISIBILITY_TOL = 1e-9


class ScenarioError(ConvexSMPError, ValueError):
    """A scenario failed to load or validate."""


class Tolerances(BaseModel):
    """Check tolerances. Relative ones are multiplied by the body's scale (its diameter)."""

    model_config = ConfigDict(extra="forbid")

    eigen: float = Field(1e-8, gt=0)
    weak: float = Field(1e-8, ge=0)
    touching: float = Field(1e-12, ge=0)
    touch_rel: float = Field(1e-6, gt=0)
    flat_rel: float = Field(1e-4, gt=0)
    residual: Optional[float] = Field(None, ge=0)
    stencil_radius: int = Field(2, ge=1)
    trials: int = Field(99, ge=0)
    boundary_samples: int = Field(64, ge=1)
    vectors_per_point: int = Field(4, ge=1)
    lipschitz_pairs: int = Field(10_000, ge=0)


class Domain(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lo: List[float]
    hi: List[float]
    points: List[int]


class LipschitzConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    c: float = Field(0.0, ge=0)
    m: List[float] = []
    p: float = Field(0.0, ge=0)


def _count(label: str, items: List[Any], expected: int, what: str = "expressions") -> None:
    if len(items) != expected:
        raise ValueError(f"{label}: expected {expected} {what}, got {len(items)}")


class Scenario(BaseModel):
    """A complete experiment: system, convex body, grid, data, horizon and tolerances."""

    model_config = ConfigDict(extra="forbid")

    name: str
    description: str = ""
    n: int = Field(ge=1, le=2)
    k: int = Field(ge=1)
    domain: Domain
    body: Dict[str, Any]
    a: List[List[str]]
    D: List[List[str]]
    M: List[List[List[str]]]
    phi: List[str]
    lipschitz: LipschitzConfig = LipschitzConfig()
    initial: List[str]
    boundary: List[str]
    t_end: float = Field(gt=0)
    snapshot_interval: float = Field(gt=0)
    scheme: Literal["euler", "rk4"] = "euler"
    tolerances: Tolerances = Tolerances()
    seed: int = 0

    @model_validator(mode="after")
    def _check_consistency(self) -> "Scenario":
        _count("initial data", self.initial, self.k)
        _count("boundary data", self.boundary, self.k)
        _count("domain.lo", self.domain.lo, self.n, "entries")
        _count("domain.hi", self.domain.hi, self.n, "entries")
        _count("domain.points", self.domain.points, self.n, "entries")
        if not self.lipschitz.m:
            self.lipschitz.m = [0.0] * self.n
        _count("lipschitz.m", self.lipschitz.m, self.n, "entries")
        if any(m < 0 for m in self.lipschitz.m):
            raise ValueError("lipschitz.m: constants must be >= 0")
        if not divides(self.snapshot_interval, self.t_end):
            raise ValueError(
                f"snapshot_interval: {self.snapshot_interval} does not divide t_end {self.t_end}"
            )
        try:
            Grid(self.domain.lo, self.domain.hi, self.domain.points)
        except ValueError as e:
            raise ValueError(f"domain: {e}") from e
        try:
            spec = self.system
            body = self.convex_body
        except (InvalidSystemError, InvalidBodyError) as e:
            raise ValueError(str(e)) from e
        except ConvexSMPError as e:
            raise ValueError(f"expression: {e}") from e
        if body.dim != spec.k:
            raise ValueError(f"body: lives in R^{body.dim} but k = {spec.k}")
        self._data_expressions()
        return self

    @cached_property
    def system(self) -> SystemSpec:
        return SystemSpec.from_strings(
            n=self.n,
            k=self.k,
            a=self.a,
            D=self.D,
            M=self.M,
            phi=self.phi,
            lipschitz={"c": self.lipschitz.c, "m": self.lipschitz.m, "p": self.lipschitz.p},
        )

    @cached_property
    def convex_body(self) -> ConvexBody:
        return body_from_config(self.body)

    def _data_expressions(self) -> Dict[str, List[Expr]]:
        space = variables_for(self.n, self.k, time=False, state=False)
        space_time = variables_for(self.n, self.k, state=False)
        out: Dict[str, List[Expr]] = {"initial": [], "boundary": []}
        for label, sources, allowed in (
            ("initial", self.initial, space),
            ("boundary", self.boundary, space_time),
        ):
            for i, src in enumerate(sources):
                try:
                    out[label].append(parse_expression(src, allowed))
                except ConvexSMPError as e:
                    raise ValueError(f"{label} data u{i + 1}: {e}") from e
        return out

    @property
    def scale(self) -> float:
        return self.convex_body.scale

    @property
    def eps_touch(self) -> float:
        return self.tolerances.touch_rel * self.scale

    @property
    def eps_flat(self) -> float:
        return self.tolerances.flat_rel * self.scale

    def grid(self, h: Optional[float] = None) -> Grid:
        grid = Grid(self.domain.lo, self.domain.hi, self.domain.points)
        return grid.refined(h) if h is not None else grid

    def problem(self, t_end: Optional[float] = None, h: Optional[float] = None) -> Problem:
        """
        The integration problem, with optional horizon and grid-spacing overrides.

        Raises:
            ScenarioError: the overridden horizon is negative or not a multiple of the interval
        """
        horizon = self.t_end if t_end is None else t_end
        if horizon < 0:
            raise ScenarioError(f"t_end must be >= 0, got {horizon}")
        if horizon > 0 and not divides(self.snapshot_interval, horizon):
            raise ScenarioError(
                f"t_end {horizon} is not a multiple of snapshot_interval {self.snapshot_interval}"
            )
        data = self._data_expressions()
        grid = self.grid(h)
        canonical = self.model_dump(mode="json")
        canonical["t_end"] = horizon
        canonical["domain"]["points"] = list(grid.points)
        return Problem(
            name=self.name,
            spec=self.system,
            grid=grid,
            initial=tuple(data["initial"]),
            boundary=tuple(data["boundary"]),
            t_end=horizon,
            snapshot_interval=self.snapshot_interval,
            scheme=self.scheme,
            canonical=canonical,
        )


def divides(interval: float, total: float) -> bool:
    ratio = total / interval
    return abs(ratio - round(ratio)) <= DIVISIBILITY_TOL * max(1.0, ratio)


_ZERO_M = [[["0"]]]

BUILTIN_SCENARIOS: Dict[str, Dict[str, Any]] = {
    "heat-interval": {
        "name": "heat-interval",
        "description": "Scalar heat equation in K = [0, 1]; data stays strictly inside.",
        "n": 1,
        "k": 1,
        "domain": {"lo": [0.0], "hi": [1.0], "points": [101]},
        "body": {"type": "box", "lo": [0.0], "hi": [1.0]},
        "a": [["1"]],
        "D": [["1"]],
        "M": _ZERO_M,
        "phi": ["0"],
        "lipschitz": {"c": 0.0, "m": [0.0], "p": 0.0},
        "initial": ["0.5 + 0.4*sin(pi*x1)"],
        "boundary": ["0.5"],
        "t_end": 0.1,
        "snapshot_interval": 0.01,
    },
    "ball-sink": {
        "name": "ball-sink",
        "description": "Two components in the unit ball with the inward reaction phi = -z.",
        "n": 1,
        "k": 2,
        "domain": {"lo": [0.0], "hi": [1.0], "points": [101]},
        "body": {"type": "ball", "center": [0.0, 0.0], "radius": 1.0},
        "a": [["1"]],
        "D": [["1", "0"], ["0", "1"]],
        "M": [[["0", "0"], ["0", "0"]]],
        "phi": ["-z1", "-z2"],
        "lipschitz": {"c": 0.0, "m": [0.0], "p": 1.0},
        "initial": ["0.3 + 0.4*sin(pi*x1)", "0.2*cos(pi*x1)"],
        "boundary": ["0.3 + 0.4*sin(pi*x1)", "0.2*cos(pi*x1)"],
        "t_end": 0.1,
        "snapshot_interval": 0.01,
    },
    "simplex-face": {
        "name": "simplex-face",
        "description": "Simplex {z >= 0, z1 + z2 <= 1}; the second component stays on its face.",
        "n": 1,
        "k": 2,
        "domain": {"lo": [0.0], "hi": [1.0], "points": [101]},
        "body": {"type": "hpoly", "normals": [[1, 0], [0, 1], [-1, -1]], "offsets": [0, 0, -1]},
        "a": [["1"]],
        "D": [["1", "0"], ["0", "1"]],
        "M": [[["0", "0"], ["0", "0"]]],
        "phi": ["0", "0"],
        "lipschitz": {"c": 0.0, "m": [0.0], "p": 0.0},
        "initial": ["0.5 + 0.4*sin(pi*x1)", "0"],
        "boundary": ["0.5", "0"],
        "t_end": 0.1,
        "snapshot_interval": 0.01,
    },
    "anisotropic-2d": {
        "name": "anisotropic-2d",
        "description": "Two space dimensions, mixed diffusion a12 = 0.3, state-dependent D.",
        "n": 2,
        "k": 1,
        "domain": {"lo": [0.0, 0.0], "hi": [1.0, 1.0], "points": [21, 21]},
        "body": {"type": "box", "lo": [0.0], "hi": [1.0]},
        "a": [["1", "0.3"], ["0.3", "0.8"]],
        "D": [["1 + 0.5*z1"]],
        "M": [[["0.2"]], [["-0.1"]]],
        "phi": ["z1*(1 - z1)"],
        "lipschitz": {"c": 0.5, "m": [0.0, 0.0], "p": 1.0},
        "initial": ["0.5 + 0.3*sin(pi*x1)*sin(pi*x2)"],
        "boundary": ["0.5"],
        "t_end": 0.05,
        "snapshot_interval": 0.01,
    },
    "incompatible-sink": {
        "name": "incompatible-sink",
        "description": "phi = -1 points out of K = [0, 1] at v = 0; the solution leaves K.",
        "n": 1,
        "k": 1,
        "domain": {"lo": [0.0], "hi": [1.0], "points": [51]},
        "body": {"type": "box", "lo": [0.0], "hi": [1.0]},
        "a": [["1"]],
        "D": [["1"]],
        "M": _ZERO_M,
        "phi": ["-1"],
        "lipschitz": {"c": 0.0, "m": [0.0], "p": 0.0},
        "initial": ["0"],
        "boundary": ["0"],
        "t_end": 0.1,
        "snapshot_interval": 0.01,
    },
    "instant-detachment": {
        "name": "instant-detachment",
        "description": "A tent touching both ends of [0, 1] at t = 0 detaches for every t > 0.",
        "n": 1,
        "k": 1,
        "domain": {"lo": [0.0], "hi": [1.0], "points": [201]},
        "body": {"type": "box", "lo": [0.0], "hi": [1.0]},
        "a": [["1"]],
        "D": [["1"]],
        "M": _ZERO_M,
        "phi": ["0"],
        "lipschitz": {"c": 0.0, "m": [0.0], "p": 0.0},
        "initial": ["max(0, 1 - 4*abs(x1 - 0.5))"],
        "boundary": ["0"],
        "t_end": 0.05,
        "snapshot_interval": 0.01,
    },
    "coupled-box": {
        "name": "coupled-box",
        "description": "Constant coupled D in the unit square: facet normals are not eigenvectors.",
        "n": 1,
        "k": 2,
        "domain": {"lo": [0.0], "hi": [1.0], "points": [51]},
        "body": {"type": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "a": [["1"]],
        "D": [["1", "0.5"], ["0.5", "1"]],
        "M": [[["0", "0"], ["0", "0"]]],
        "phi": ["0", "0"],
        "lipschitz": {"c": 0.0, "m": [0.0], "p": 0.0},
        "initial": ["0.5 + 0.3*sin(pi*x1)", "0.5"],
        "boundary": ["0.5", "0.5"],
        "t_end": 0.05,
        "snapshot_interval": 0.01,
    },
    "heat-halfline": {
        "name": "heat-halfline",
        "description": "K = [0, inf) as a one-facet polytope with a positive gamma margin.",
        "n": 1,
        "k": 1,
        "domain": {"lo": [0.0], "hi": [1.0], "points": [101]},
        "body": {"type": "hpoly", "normals": [[1]], "offsets": [0]},
        "a": [["1"]],
        "D": [["1"]],
        "M": _ZERO_M,
        "phi": ["0"],
        "lipschitz": {"c": 0.0, "m": [0.0], "p": 0.1},
        "initial": ["1 + 0.5*sin(pi*x1)"],
        "boundary": ["1"],
        "t_end": 0.1,
        "snapshot_interval": 0.01,
    },
    "diagonal-box": {
        "name": "diagonal-box",
        "description": "D = diag(1, 4) in the unit square; initial data picks the contact facet.",
        "n": 1,
        "k": 2,
        "domain": {"lo": [0.0], "hi": [1.0], "points": [51]},
        "body": {"type": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "a": [["1"]],
        "D": [["1", "0"], ["0", "4"]],
        "M": [[["0", "0"], ["0", "0"]]],
        "phi": ["0", "0"],
        "lipschitz": {"c": 0.0, "m": [0.0], "p": 0.0},
        "initial": ["0.1 + 0.1*sin(pi*x1)", "0.5"],
        "boundary": ["0.1", "0.5"],
        "t_end": 0.05,
        "snapshot_interval": 0.01,
    },
}


def builtin_names() -> List[str]:
    return sorted(BUILTIN_SCENARIOS)


def _validation_message(source: str, error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "scenario"
        message = str(item["msg"]).removeprefix("Value error, ")
        problems.append(f"{location}: {message}" if item["loc"] else message)
    return f"Invalid scenario {source}: " + "; ".join(problems)


def scenario_from_dict(data: Dict[str, Any], source: str = "<dict>") -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise ScenarioError(_validation_message(source, e)) from e
    except (ExpressionEvaluationError, TypeError) as e:
        raise ScenarioError(f"Invalid scenario {source}: {e}") from e


def load_scenario(name_or_path: Union[str, Path]) -> Scenario:
    """
    Load a built-in scenario by name or a scenario file (.json, .yaml, .yml).

    Raises:
        ScenarioError: unknown name, unreadable or malformed file, or failed validation
    """
    key = str(name_or_path)
    if key in BUILTIN_SCENARIOS:
        return scenario_from_dict(copy.deepcopy(BUILTIN_SCENARIOS[key]), source=key)

    path = Path(name_or_path)
    if not path.exists():
        raise ScenarioError(
            f"No scenario file or built-in named {key!r}. "
            f"Built-ins: {', '.join(builtin_names())}"
        )
    suffix = path.suffix.lower()
    try:
        content = path.read_text(encoding="utf-8")
        if suffix == ".json":
            data = json.loads(content)
        elif suffix in (".yaml", ".yml"):
            data = yaml.safe_load(content)
        else:
            raise ScenarioError(f"Unsupported scenario file format: {suffix or '(none)'}")
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}") from e
    except yaml.YAMLError as e:
        raise ScenarioError(f"{path}: invalid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a mapping at the top level")
    data.setdefault("name", path.stem)
    return scenario_from_dict(data, source=str(path))


def describe(scenario: Scenario) -> str:
    """One-line summary for listings."""
    body = scenario.body.get("type", "?")
    return (
        f"n={scenario.n} k={scenario.k} K={body} t_end={scenario.t_end:g} "
        f"- {scenario.description}"
    ).strip()


def snapshot_count(scenario: Scenario) -> int:
    return int(math.floor(scenario.t_end / scenario.snapshot_interval + 0.5)) + 1

"""
Explicit finite-difference integration of the system on a rectangular grid.

Grid arrays have shape (*grid.shape, k) in 'ij' index order. Spatial derivatives use
central differences on interior nodes (the mixed term uses the 4-point cross), boundary
nodes carry Dirichlet data, and time stepping is forward Euler or classical RK4.
"""

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .expr import Expr, ExpressionEvaluationError, evaluate_expression
from .reports import dumps
from .system import SystemSpec
from .utils import ConvexSMPError, format_float, save_artifact

if TYPE_CHECKING:
    from .scenarios import Scenario

logger = logging.getLogger(__name__)

SAFETY = 0.4
SCHEMES = ("euler", "rk4")

ProgressCallback = Callable[[int, int, float], None]


class SolverError(ConvexSMPError, ArithmeticError):
    """Non-finite values appeared; carries the first offending node and time."""

    def __init__(self, message: str, node: Optional[Tuple[int, ...]] = None,
                 t: Optional[float] = None):
        self.node = node
        self.t = t
        where = f" at node {node}" if node is not None else ""
        when = f", t = {t:.6g}" if t is not None else ""
        super().__init__(f"{message}{where}{when}")


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor grid on [lo, hi] per axis; boundary nodes have an extreme index on some axis."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    points: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "points", tuple(int(v) for v in self.points))
        if not (len(self.lo) == len(self.hi) == len(self.points)) or self.n not in (1, 2):
            raise ValueError("Grid needs 1 or 2 axes with matching lo, hi and points")
        for axis, (lo, hi, count) in enumerate(zip(self.lo, self.hi, self.points)):
            if count < 3:
                raise ValueError(f"Axis {axis + 1} needs at least 3 points, got {count}")
            if not hi > lo:
                raise ValueError(f"Axis {axis + 1} has an empty extent [{lo}, {hi}]")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.points

    @property
    def h(self) -> np.ndarray:
        return np.array([(hi - lo) / (p - 1) for lo, hi, p in zip(self.lo, self.hi, self.points)])

    @property
    def h_min(self) -> float:
        return float(np.min(self.h))

    @property
    def axes(self) -> List[np.ndarray]:
        return [np.linspace(lo, hi, p) for lo, hi, p in zip(self.lo, self.hi, self.points)]

    @property
    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (*shape, n)."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def interior(self) -> Tuple[slice, ...]:
        return (slice(1, -1),) * self.n

    @property
    def interior_shape(self) -> Tuple[int, ...]:
        return tuple(p - 2 for p in self.points)

    @property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.interior] = True
        return mask

    def interior_coordinates(self) -> np.ndarray:
        """Interior node coordinates flattened to (N_interior, n)."""
        return self.coordinates[self.interior].reshape(-1, self.n)

    def refined(self, h: float) -> "Grid":
        """Same extent with spacing as close to h as the extent allows."""
        points = tuple(max(3, int(round((hi - lo) / h)) + 1) for lo, hi in zip(self.lo, self.hi))
        return Grid(self.lo, self.hi, points)

    def to_dict(self) -> Dict[str, object]:
        return {
            "lo": list(self.lo),
            "hi": list(self.hi),
            "points": list(self.points),
            "h": [float(v) for v in self.h],
        }


@dataclass(frozen=True, eq=False)
class Field:
    values: np.ndarray
    t: float


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything needed to integrate: system, grid, data expressions and cadence."""

    name: str
    spec: SystemSpec
    grid: Grid
    initial: Tuple[Expr, ...]
    boundary: Tuple[Expr, ...]
    t_end: float
    snapshot_interval: float
    scheme: str = "euler"
    canonical: Dict[str, object] = dataclass_field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"Unknown scheme {self.scheme!r} (expected one of {SCHEMES})")
        if len(self.initial) != self.spec.k or len(self.boundary) != self.spec.k:
            raise ValueError(f"Initial and boundary data need {self.spec.k} expressions")
        if self.grid.n != self.spec.n:
            raise ValueError(f"Grid has {self.grid.n} axes but the system has n = {self.spec.n}")

    @property
    def spec_hash(self) -> str:
        text = json.dumps(self.canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class Derivatives:
    """Central differences at interior nodes: first (n, *ishape, k), second (n, n, *ishape, k)."""

    first: np.ndarray
    second: np.ndarray


def _shift(values: np.ndarray, offsets: Sequence[int]) -> np.ndarray:
    index = tuple(slice(1 + o, size - 1 + o) for o, size in zip(offsets, values.shape))
    return values[index]


def spatial_derivatives(values: np.ndarray, grid: Grid) -> Derivatives:
    n, h = grid.n, grid.h
    center = _shift(values, (0,) * n)

    def unit(i: int, sign: int) -> List[int]:
        off = [0] * n
        off[i] = sign
        return off

    first = np.empty((n,) + center.shape)
    second = np.empty((n, n) + center.shape)
    for i in range(n):
        plus, minus = _shift(values, unit(i, 1)), _shift(values, unit(i, -1))
        first[i] = (plus - minus) / (2.0 * h[i])
        second[i, i] = (plus - 2.0 * center + minus) / h[i] ** 2
        for j in range(i + 1, n):
            corners = {}
            for si in (1, -1):
                for sj in (1, -1):
                    off = [0] * n
                    off[i], off[j] = si, sj
                    corners[si, sj] = _shift(values, off)
            cross = (
                corners[1, 1] - corners[1, -1] - corners[-1, 1] + corners[-1, -1]
            ) / (4.0 * h[i] * h[j])
            second[i, j] = cross
            second[j, i] = cross
    return Derivatives(first=first, second=second)


def _check_finite(values: np.ndarray, t: float, message: str) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0][:-1])
        raise SolverError(message, node=node, t=t)


def rhs_eval(field: Field, spec: SystemSpec, grid: Grid, t: Optional[float] = None) -> np.ndarray:
    """
    Time derivative at interior nodes, shape (*interior_shape, k).

    D(x,t,u) sum_ij a_ij u_xixj + sum_i M_i(x,t,u) u_xi + phi(x,t,u), node by node.
    """
    t = field.t if t is None else t
    k = spec.k
    derivs = spatial_derivatives(field.values, grid)
    X = grid.interior_coordinates()
    U = field.values[grid.interior].reshape(-1, k)
    count = X.shape[0]

    A = spec.eval_a(X, t)
    second = derivs.second.reshape(grid.n, grid.n, count, k)
    diffusion = np.einsum("nij,ijnk->nk", A, second)
    out = np.einsum("nab,nb->na", spec.eval_D(X, t, U), diffusion)
    M = spec.eval_M(X, t, U)
    first = derivs.first.reshape(grid.n, count, k)
    out += np.einsum("inab,inb->na", M, first)
    out += spec.eval_phi(X, t, U)

    out = out.reshape(grid.interior_shape + (k,))
    bad = ~np.isfinite(out)
    if np.any(bad):
        node = tuple(int(i) + 1 for i in np.argwhere(bad)[0][:-1])
        raise SolverError("Right-hand side is not finite", node=node, t=t)
    return out


def stable_dt(spec: SystemSpec, grid: Grid, field: Field, t: Optional[float] = None,
              snapshot_interval: Optional[float] = None) -> float:
    """
    Explicit step bound safety * h_min^2 / (2 n A D + h_min M).

    A, D and M are node maxima of sum_ij |a_ij|, the max row sum of |D| and
    sum_i (max row sum of |M_i|), evaluated at the current field.
    """
    t = field.t if t is None else t
    X = grid.coordinates.reshape(-1, grid.n)
    U = field.values.reshape(-1, spec.k)
    a_hat = float(np.max(np.sum(np.abs(spec.eval_a(X, t)), axis=(1, 2))))
    d_hat = float(np.max(np.max(np.sum(np.abs(spec.eval_D(X, t, U)), axis=2), axis=1)))
    row_sums = np.max(np.sum(np.abs(spec.eval_M(X, t, U)), axis=3), axis=2)
    m_hat = float(np.max(np.sum(row_sums, axis=0)))

    h_min = grid.h_min
    denominator = 2.0 * grid.n * a_hat * d_hat + h_min * m_hat
    dt = SAFETY * h_min**2 / denominator if denominator > 0 else math.inf
    if snapshot_interval is not None and snapshot_interval > 0:
        dt = min(dt, snapshot_interval)
    return dt


def _evaluate_data(exprs: Sequence[Expr], grid: Grid, t: float, label: str) -> np.ndarray:
    coords = grid.coordinates
    env = {f"x{i + 1}": coords[..., i] for i in range(grid.n)}
    env["t"] = t
    out = np.empty(grid.shape + (len(exprs),))
    for i, expr in enumerate(exprs):
        try:
            out[..., i] = np.broadcast_to(evaluate_expression(expr, env), grid.shape)
        except ExpressionEvaluationError as e:
            raise SolverError(f"{label} data u{i + 1}: {e}", t=t) from e
    _check_finite(out, t, f"{label} data is not finite")
    return out


def initial_field(problem: Problem) -> Field:
    return Field(_evaluate_data(problem.initial, problem.grid, 0.0, "initial"), 0.0)


def apply_boundary(values: np.ndarray, grid: Grid, boundary: Sequence[Expr], t: float) -> None:
    """Overwrite boundary nodes in place with the Dirichlet data at time t."""
    data = _evaluate_data(boundary, grid, t, "boundary")
    edge = ~grid.interior_mask
    values[edge] = data[edge]


def step(field: Field, spec: SystemSpec, grid: Grid, dt: float,
         boundary: Sequence[Expr], scheme: str = "euler") -> Field:
    """Advance one step of size dt; boundary nodes take the Dirichlet data at each stage time."""
    t = field.t
    inner = grid.interior

    def stage(base: np.ndarray, increment: np.ndarray, at: float) -> np.ndarray:
        values = base.copy()
        values[inner] += increment
        apply_boundary(values, grid, boundary, at)
        return values

    if scheme == "euler":
        values = stage(field.values, dt * rhs_eval(field, spec, grid, t), t + dt)
    elif scheme == "rk4":
        k1 = rhs_eval(field, spec, grid, t)
        u2 = stage(field.values, 0.5 * dt * k1, t + 0.5 * dt)
        k2 = rhs_eval(Field(u2, t + 0.5 * dt), spec, grid)
        u3 = stage(field.values, 0.5 * dt * k2, t + 0.5 * dt)
        k3 = rhs_eval(Field(u3, t + 0.5 * dt), spec, grid)
        u4 = stage(field.values, dt * k3, t + dt)
        k4 = rhs_eval(Field(u4, t + dt), spec, grid)
        values = stage(field.values, dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t + dt)
    else:
        raise ValueError(f"Unknown scheme {scheme!r} (expected one of {SCHEMES})")

    _check_finite(values, t + dt, "Integration became unstable")
    return Field(values, t + dt)


@dataclass(frozen=True, eq=False)
class Trajectory:
    problem: Problem
    snapshots: Tuple[Field, ...]
    dt: float

    @property
    def spec(self) -> SystemSpec:
        return self.problem.spec

    @property
    def grid(self) -> Grid:
        return self.problem.grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def values(self) -> np.ndarray:
        """All snapshots stacked, shape (S, *grid.shape, k)."""
        return np.stack([s.values for s in self.snapshots])

    def manifest(self) -> Dict[str, object]:
        return {
            "name": self.problem.name,
            "n": self.spec.n,
            "k": self.spec.k,
            "grid": self.grid.to_dict(),
            "scheme": self.problem.scheme,
            "dt": self.dt,
            "times": [float(t) for t in self.times],
            "snapshots": [f"snapshot_{j:04d}.csv" for j in range(len(self.snapshots))],
            "spec_hash": self.problem.spec_hash,
        }

    def dump(self, output_dir: Path) -> List[Path]:
        """
        Write one CSV per snapshot (columns x1[,x2],u1..uk) and manifest.json.

        Nodes are listed in lexicographic index order.
        """
        coords = self.grid.coordinates.reshape(-1, self.grid.n)
        header = [f"x{i + 1}" for i in range(self.grid.n)] + [
            f"u{i + 1}" for i in range(self.spec.k)
        ]
        written = []
        for j, snapshot in enumerate(self.snapshots):
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(header)
            for x, u in zip(coords, snapshot.values.reshape(-1, self.spec.k)):
                writer.writerow([format_float(v) for v in x] + [format_float(v) for v in u])
            written.append(save_artifact(output_dir, f"snapshot_{j:04d}.csv", buffer.getvalue()))
        written.append(save_artifact(output_dir, "manifest.json", dumps(self.manifest())))
        return written


def integrate(problem: Problem, progress: Optional[ProgressCallback] = None) -> Trajectory:
    """
    Integrate from t = 0 to t_end, recording a snapshot every snapshot_interval.

    The internal step is recomputed from stable_dt at the start of each interval and
    shrunk so a whole number of steps lands on the snapshot time.
    """
    spec, grid = problem.spec, problem.grid
    current = initial_field(problem)
    snapshots = [current]
    if problem.t_end <= 0:
        return Trajectory(problem, tuple(snapshots), dt=0.0)

    interval = problem.snapshot_interval
    count = int(round(problem.t_end / interval))
    used_dt = math.inf
    for j in range(1, count + 1):
        bound = stable_dt(spec, grid, current, snapshot_interval=interval)
        nsteps = max(1, math.ceil(interval / bound - 1e-12))
        dt = interval / nsteps
        used_dt = min(used_dt, dt)
        target = j * interval
        for _ in range(nsteps):
            current = step(current, spec, grid, dt, problem.boundary, problem.scheme)
        # land exactly on the snapshot time
        current = Field(current.values, target)
        snapshots.append(current)
        logger.debug(
            "Snapshot %d/%d at t=%.6g after %d steps of %.3e", j, count, target, nsteps, dt
        )
        if progress is not None:
            progress(j, count, target)
    return Trajectory(problem, tuple(snapshots), dt=used_dt)


def run_scenario(scenario: "Scenario", t_end: Optional[float] = None,
                 h: Optional[float] = None,
                 progress: Optional[ProgressCallback] = None) -> Trajectory:
    """Build the scenario's problem (with optional t_end and h overrides) and integrate it."""
    return integrate(scenario.problem(t_end=t_end, h=h), progress=progress)

"""
Maximum-principle harness: the distance field along a trajectory, the weak and strong
maximum-principle checks, and the coefficient fields of the inequality for d-bar.
"""

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..convex import ConvexBody, contact_choice, point_label
from ..reports import (
    CoefficientSummary,
    LipschitzSummary,
    Location,
    SnapshotValue,
    StrongMPReport,
    WeakMPReport,
)
from ..solver import Trajectory, spatial_derivatives
from ..system import (
    EIGEN_TOL,
    Lipschitz,
    SystemSpec,
    left_eigen_residuals,
    positive_definite_floors,
)
from ..utils import ConvexSMPError, format_float, save_artifact

logger = logging.getLogger(__name__)

WEAK_TOL = 1e-8


class CompatibilityViolation(ConvexSMPError):
    """The contact normal is not a left eigenvector of D or M_i at a trajectory node."""

    def __init__(self, matrix: str, residual: float, node: Tuple[int, ...], snapshot: int,
                 t: float):
        self.matrix = matrix
        self.residual = residual
        self.node = node
        self.snapshot = snapshot
        self.t = t
        super().__init__(
            f"Contact normal is not a left eigenvector of {matrix} "
            f"(residual {residual:.3e}) at node {node}, snapshot {snapshot} (t = {t:.6g})"
        )


@dataclass(frozen=True, eq=False)
class DistanceField:
    """
    Signed distance d-bar and contact data per snapshot and node.

    values: (S, *shape); contact and normal: (S, *shape, k); inside and unique: (S, *shape).
    """

    trajectory: Trajectory
    values: np.ndarray
    contact: np.ndarray
    normal: np.ndarray
    inside: np.ndarray
    unique: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def grid(self):
        return self.trajectory.grid

    def interior(self, array: np.ndarray) -> np.ndarray:
        """Restrict a (S, *shape, ...) array to interior nodes."""
        return array[(slice(None),) + self.grid.interior]


def distance_field(traj: Trajectory, K: ConvexBody) -> DistanceField:
    """
    d-bar(x, t) with the deterministic contact (v, nu) at every node of every snapshot.

    Outside K the value is the negative signed distance and the contact comes from the
    most violated constraint, so weak-MP violations stay measurable.
    """
    if K.dim != traj.spec.k:
        raise ValueError(f"K lives in R^{K.dim} but the trajectory has k = {traj.spec.k}")
    u = traj.values
    S, shape, k = u.shape[0], u.shape[1:-1], u.shape[-1]
    values = np.empty((S,) + shape)
    contact = np.empty((S,) + shape + (k,))
    normal = np.empty_like(contact)
    inside = np.empty((S,) + shape, dtype=bool)
    unique = np.empty((S,) + shape, dtype=bool)
    for j in range(S):
        for idx in np.ndindex(*shape):
            choice = contact_choice(K, u[(j,) + idx])
            values[(j,) + idx] = choice.dist
            contact[(j,) + idx] = choice.v
            normal[(j,) + idx] = choice.nu
            inside[(j,) + idx] = choice.inside
            unique[(j,) + idx] = choice.unique
    return DistanceField(traj, values, contact, normal, inside, unique)


def _location(traj: Trajectory, snapshot: int, node: Tuple[int, ...]) -> Location:
    return Location(
        x=point_label(traj.grid.coordinates[node]),
        t=float(traj.times[snapshot]),
        node=list(node),
        snapshot=snapshot,
    )


def weak_mp_check(traj: Trajectory, K: ConvexBody, tol: float = WEAK_TOL) -> WeakMPReport:
    """
    u stays in K when the initial snapshot and the boundary data lie in K.

    A violated premise makes the check "not_applicable". The worst signed distance is
    reported overall and per snapshot.
    """
    signed = K.signed_distance(traj.values)
    edge = ~traj.grid.interior_mask
    premise_worst = float(min(np.min(signed[0]), np.min(signed[:, edge])))
    per_snapshot = [
        SnapshotValue(t=float(t), value=float(np.min(s))) for t, s in zip(traj.times, signed)
    ]
    flat_index = int(np.argmin(signed))
    at = np.unravel_index(flat_index, signed.shape)
    worst = float(signed[at])
    location = _location(traj, int(at[0]), tuple(int(i) for i in at[1:]))

    if premise_worst < -tol:
        logger.info("Weak MP premise fails (worst %.3e); check not applicable", premise_worst)
        return WeakMPReport(
            passed=True,
            status="not_applicable",
            tolerance=tol,
            worst_signed_distance=worst,
            location=location,
            premise_worst=premise_worst,
            per_snapshot=per_snapshot,
        )
    passed = worst >= -tol
    return WeakMPReport(
        passed=passed,
        status="pass" if passed else "fail",
        tolerance=tol,
        worst_signed_distance=worst,
        location=location,
        premise_worst=premise_worst,
        per_snapshot=per_snapshot,
    )


def strong_mp_check(dfield: DistanceField, eps_touch: float, eps_flat: float,
                    weak: Optional[WeakMPReport] = None) -> StrongMPReport:
    """
    If u touches the boundary at an interior node at t0 > 0, it must be flat before.

    Touching means interior d-bar <= eps_touch at the earliest snapshot with t > 0; flatness
    means d-bar <= eps_flat at every interior node of snapshots 1..t0. The t = 0 slice is
    outside the open time domain and is only recorded as information.
    """
    traj = dfield.trajectory
    interior = dfield.interior(dfield.values)
    minima = [
        SnapshotValue(t=float(t), value=float(np.min(s))) for t, s in zip(traj.times, interior)
    ]
    common = dict(eps_touch=eps_touch, eps_flat=eps_flat, min_interior_distance=minima)
    if weak is not None and (not weak.passed or weak.status == "not_applicable"):
        return StrongMPReport(passed=True, status="not_applicable",
                              outcome="not_applicable", **common)

    def offset(idx: Tuple[int, ...]) -> Tuple[int, ...]:
        return tuple(int(i) + 1 for i in idx)

    touch = None
    for j in range(1, len(interior)):
        if np.min(interior[j]) <= eps_touch:
            touch = j
            break

    if touch is None:
        margin = min((m.value for m in minima[1:]), default=None)
        logger.info("No interior touching for t > 0; margin %s", margin)
        return StrongMPReport(passed=True, status="pass", outcome="never_touches",
                              margin=margin, **common)

    node = offset(np.unravel_index(int(np.argmin(interior[touch])), interior.shape[1:]))
    window = interior[1 : touch + 1]
    at = np.unravel_index(int(np.argmax(window)), window.shape)
    worst = float(window[at])
    flat = worst <= eps_flat
    return StrongMPReport(
        passed=flat,
        status="pass" if flat else "fail",
        outcome="flat" if flat else "not_flat",
        touch_time=float(traj.times[touch]),
        touch_location=_location(traj, touch, node),
        worst_flatness=worst,
        worst_flatness_location=_location(traj, int(at[0]) + 1, offset(at[1:])),
        initial_slice_flat=bool(np.max(interior[0]) <= eps_flat),
        **common,
    )


def gamma_field(traj: Trajectory, spec: Optional[SystemSpec] = None) -> np.ndarray:
    """
    gamma = c |sum_ij a_ij u_xixj| + sum_i m_i |u_xi| + p at interior nodes, shape (S, *ishape).
    """
    spec = spec or traj.spec
    grid = traj.grid
    X = grid.interior_coordinates()
    lip = spec.lipschitz
    out = []
    for snapshot in traj.snapshots:
        d = spatial_derivatives(snapshot.values, grid)
        count = X.shape[0]
        second = d.second.reshape(grid.n, grid.n, count, spec.k)
        first = d.first.reshape(grid.n, count, spec.k)
        diffusion = np.einsum("nij,ijnk->nk", spec.eval_a(X, snapshot.t), second)
        gamma = lip.c * np.linalg.norm(diffusion, axis=1) + lip.p
        for i in range(grid.n):
            gamma = gamma + lip.m[i] * np.linalg.norm(first[i], axis=1)
        out.append(gamma.reshape(grid.interior_shape))
    return np.stack(out)


@dataclass(frozen=True, eq=False)
class CoefficientFields:
    """
    Per interior node and snapshot: gamma, mu, lambda_i, alpha = mu a, beta = lambda.

    Shapes: gamma, mu (S, *ishape); lam (n, S, *ishape); alpha (S, *ishape, n, n).
    The remaining arrays support the run-level summary.
    """

    gamma: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    a_floor: np.ndarray
    D_floor: np.ndarray
    D_norm: np.ndarray
    M_norm: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return self.lam

    def alpha_floor(self) -> np.ndarray:
        return positive_definite_floors(self.alpha)


def effective_coefficients(traj: Trajectory, dfield: DistanceField,
                           spec: Optional[SystemSpec] = None, tol: float = EIGEN_TOL,
                           gamma: Optional[np.ndarray] = None) -> CoefficientFields:
    """
    Eigenvalues of D and M_i along the contact normals of the trajectory.

    Raises:
        CompatibilityViolation: a contact normal fails the left-eigenvector test
    """
    spec = spec or traj.spec
    grid = traj.grid
    X = grid.interior_coordinates()
    ishape = grid.interior_shape
    V = dfield.interior(dfield.contact)
    NU = dfield.interior(dfield.normal)
    gamma = gamma_field(traj, spec) if gamma is None else gamma

    mu, lam, alpha = [], [], []
    a_floor, D_floor, D_norm, M_norm = [], [], [], []
    for j, t in enumerate(traj.times):
        v = V[j].reshape(-1, spec.k)
        nu = NU[j].reshape(-1, spec.k)

        def require(label: str, residual: np.ndarray) -> None:
            worst = int(np.argmax(residual))
            if residual[worst] > tol:
                node = tuple(int(i) + 1 for i in np.unravel_index(worst, ishape))
                raise CompatibilityViolation(label, float(residual[worst]), node, j, float(t))

        D = spec.eval_D(X, t, v)
        mu_j, res = left_eigen_residuals(nu, D)
        require("D", res)
        lam_j = []
        M = spec.eval_M(X, t, v)
        for i, Mi in enumerate(M):
            value, res = left_eigen_residuals(nu, Mi)
            require(f"M{i + 1}", res)
            lam_j.append(value)
        A = spec.eval_a(X, t)

        mu.append(mu_j.reshape(ishape))
        lam.append(np.stack(lam_j).reshape((spec.n,) + ishape))
        alpha.append((mu_j[:, None, None] * A).reshape(ishape + (spec.n, spec.n)))
        a_floor.append(positive_definite_floors(A).reshape(ishape))
        D_floor.append(positive_definite_floors(D).reshape(ishape))
        D_norm.append(np.linalg.norm(D, ord=2, axis=(1, 2)).reshape(ishape))
        M_norm.append(np.linalg.norm(M, ord=2, axis=(2, 3)).reshape((spec.n,) + ishape))

    return CoefficientFields(
        gamma=gamma,
        mu=np.stack(mu),
        lam=np.stack(lam, axis=1),
        alpha=np.stack(alpha),
        a_floor=np.stack(a_floor),
        D_floor=np.stack(D_floor),
        D_norm=np.stack(D_norm),
        M_norm=np.stack(M_norm, axis=1),
    )


def _ratio_max(numerator: np.ndarray, denominator: np.ndarray) -> float:
    safe = denominator > 1e-300
    if not np.any(safe):
        return 0.0
    return float(np.max(numerator[safe] / denominator[safe]))


def summarize_coefficients(coeffs: CoefficientFields, declared: Lipschitz,
                           estimated: Optional[Lipschitz] = None,
                           exceeded: Optional[List[str]] = None) -> CoefficientSummary:
    """Run-level summary: extremes of gamma, mu, lambda, the alpha floor and norm bounds."""
    alpha_floor = coeffs.alpha_floor()
    n = coeffs.lam.shape[0]
    return CoefficientSummary(
        gamma_min=float(np.min(coeffs.gamma)),
        mu_min=float(np.min(coeffs.mu)),
        mu_max=float(np.max(coeffs.mu)),
        max_abs_lambda=[float(np.max(np.abs(coeffs.lam[i]))) for i in range(n)],
        alpha_floor_min=float(np.min(alpha_floor)),
        alpha_floor_slack_min=float(np.min(alpha_floor - coeffs.mu * coeffs.a_floor)),
        min_sampled_D_floor=float(np.min(coeffs.D_floor)),
        mu_over_norm_max=_ratio_max(coeffs.mu, coeffs.D_norm),
        lambda_over_norm_max=[
            _ratio_max(np.abs(coeffs.lam[i]), coeffs.M_norm[i]) for i in range(n)
        ],
        lipschitz_declared=LipschitzSummary(**declared.as_dict()),
        lipschitz_estimated=LipschitzSummary(**estimated.as_dict()) if estimated else None,
        lipschitz_exceeded=list(exceeded or []),
    )


def node_fields_csv(dfield: DistanceField, coeffs: CoefficientFields) -> str:
    """Per interior node and snapshot: coordinates, d-bar, gamma, mu and each lambda_i."""
    grid = dfield.grid
    n = grid.n
    coords = grid.coordinates[grid.interior].reshape(-1, n)
    dbar = dfield.interior(dfield.values)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["snapshot", "t"] + [f"x{i + 1}" for i in range(n)] + ["dbar", "gamma", "mu"]
        + [f"lambda{i + 1}" for i in range(n)]
    )
    for j, t in enumerate(dfield.times):
        rows = zip(
            coords,
            dbar[j].ravel(),
            coeffs.gamma[j].ravel(),
            coeffs.mu[j].ravel(),
            coeffs.lam[:, j].reshape(n, -1).T,
        )
        for x, d, g, m, lam in rows:
            writer.writerow(
                [j, format_float(t)] + [format_float(v) for v in x]
                + [format_float(d), format_float(g), format_float(m)]
                + [format_float(v) for v in lam]
            )
    return buffer.getvalue()


def dump_node_fields(dfield: DistanceField, coeffs: CoefficientFields, output_dir: Path) -> Path:
    return save_artifact(output_dir, "node_fields.csv", node_fields_csv(dfield, coeffs))

"""
The two inequality layers for d-bar along a trajectory.

ell layer: with the contact (v, nu) of a node held fixed, l-bar = nu.(u - v) is differenced
like u itself and must satisfy l_t - mu sum a_ij l_ij - sum lambda_i l_i + gamma l >= 0.

Viscosity layer: quadratics psi that touch d-bar from below on a finite space-time stencil
must satisfy R(psi) = p_t - sum alpha_ij H_ij - sum beta_i g_i + gamma d-bar >= 0.
Candidates are sampled, so a clean run reports "no violation found", never "verified".
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..convex import ConvexBody, SupportingFunctional, nearest_boundary_point, point_label
from ..reports import CoefficientSummary, EllResidualReport, Location, SupersolutionReport
from ..solver import Grid, Trajectory, spatial_derivatives
from .mp_harness import CoefficientFields, DistanceField

logger = logging.getLogger(__name__)

TOUCH_TOL = 1e-12
DEFAULT_RADIUS = 2
DEFAULT_TRIALS = 99
NICE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class NiceQuadruple:
    """A node (x, t) with its selected boundary point v and supporting functional l."""

    x: np.ndarray
    t: float
    v: np.ndarray
    functional: SupportingFunctional

    @property
    def nu(self) -> np.ndarray:
        return self.functional.nu


def nice_quadruple(traj: Trajectory, K: ConvexBody, snapshot: int,
                   node: Tuple[int, ...]) -> NiceQuadruple:
    """
    Package (x, t, v, l) for a node whose value lies in K.

    Raises:
        ConvexDomainError: u(node) is outside K
    """
    u = traj.snapshots[snapshot].values[node]
    choice = nearest_boundary_point(K, u)
    return NiceQuadruple(
        x=traj.grid.coordinates[node],
        t=float(traj.times[snapshot]),
        v=choice.v,
        functional=choice.functional,
    )


def residual_tolerance(traj: Trajectory) -> float:
    """
    10 (h^2 + dt) scale + 1e-12 with dt the solver step (not the snapshot spacing) and
    scale the largest second difference of u at any node.
    """
    h = float(np.max(traj.grid.h))
    dt = float(traj.dt)
    scale = 0.0
    for snapshot in traj.snapshots:
        second = spatial_derivatives(snapshot.values, traj.grid).second
        scale = max(scale, float(np.max(np.abs(second))))
    return 10.0 * (h**2 + dt) * scale + 1e-12


def _location(dfield: DistanceField, snapshot: int, node: Tuple[int, ...]) -> Location:
    index = (snapshot,) + node
    return Location(
        x=point_label(dfield.grid.coordinates[node]),
        t=float(dfield.times[snapshot]),
        node=list(node),
        snapshot=snapshot,
        v=point_label(dfield.contact[index]),
        nu=point_label(dfield.normal[index]),
    )


def ell_residuals(dfield: DistanceField, coeffs: CoefficientFields) -> np.ndarray:
    """
    Residual of the ell inequality per interior node, shape (S, *ishape).

    The first and last snapshots have no centered time difference and are NaN.
    """
    traj = dfield.trajectory
    grid, spec = traj.grid, traj.spec
    ishape = grid.interior_shape
    X = grid.interior_coordinates()
    u = traj.values
    times = traj.times
    out = np.full((len(times),) + ishape, np.nan)
    for j in range(1, len(times) - 1):
        nu = dfield.interior(dfield.normal)[j].reshape(-1, spec.k)
        v = dfield.interior(dfield.contact)[j].reshape(-1, spec.k)
        center = u[j][grid.interior].reshape(-1, spec.k)
        ell = np.einsum("nk,nk->n", nu, center - v)

        forward = u[j + 1][grid.interior].reshape(-1, spec.k)
        backward = u[j - 1][grid.interior].reshape(-1, spec.k)
        ell_t = np.einsum("nk,nk->n", nu, forward - backward) / (times[j + 1] - times[j - 1])

        d = spatial_derivatives(u[j], grid)
        count = X.shape[0]
        ell_first = np.einsum("ink,nk->in", d.first.reshape(grid.n, count, spec.k), nu)
        ell_second = np.einsum(
            "ijnk,nk->ijn", d.second.reshape(grid.n, grid.n, count, spec.k), nu
        )
        A = spec.eval_a(X, times[j])
        mu = coeffs.mu[j].ravel()
        lam = coeffs.lam[:, j].reshape(grid.n, -1)
        gamma = coeffs.gamma[j].ravel()

        residual = (
            ell_t
            - mu * np.einsum("nij,ijn->n", A, ell_second)
            - np.einsum("in,in->n", lam, ell_first)
            + gamma * ell
        )
        out[j] = residual.reshape(ishape)
    return out


def ell_report(dfield: DistanceField, coeffs: CoefficientFields, tol: float,
               summary: CoefficientSummary) -> EllResidualReport:
    residuals = ell_residuals(dfield, coeffs)
    checked = int(np.count_nonzero(~np.isnan(residuals)))
    if checked == 0:
        logger.warning("Fewer than three snapshots; the ell check has no interior snapshot")
        return EllResidualReport(passed=True, status="vacuous", tolerance=tol,
                                 checked_nodes=0, coefficients=summary)
    flat = int(np.nanargmin(residuals))
    at = np.unravel_index(flat, residuals.shape)
    worst = float(residuals[at])
    passed = worst >= -tol
    return EllResidualReport(
        passed=passed,
        status="pass" if passed else "fail",
        tolerance=tol,
        min_residual=worst,
        location=_location(dfield, int(at[0]), tuple(int(i) + 1 for i in at[1:])),
        checked_nodes=checked,
        coefficients=summary,
    )


@dataclass(frozen=True, eq=False)
class Stencil:
    """Offsets (xi, tau) around a node with the d-bar values there; excludes the node."""

    xi: np.ndarray
    tau: np.ndarray
    values: np.ndarray
    center: float
    h: np.ndarray
    backward: float
    forward: float


def build_stencil(dbar: np.ndarray, times: np.ndarray, h: np.ndarray, snapshot: int,
                  node: Tuple[int, ...], radius: int) -> Stencil:
    """
    Space-time stencil: |index offset| <= radius per axis (clipped to the grid) crossed
    with the previous, current and next snapshot.
    """
    shape = dbar.shape[1:]
    ranges = [
        range(max(-radius, -i), min(radius, size - 1 - i) + 1) for i, size in zip(node, shape)
    ]
    xi, tau, values = [], [], []
    for lag in (-1, 0, 1):
        dt = float(times[snapshot + lag] - times[snapshot])
        for offset in np.ndindex(*[len(r) for r in ranges]):
            shift = tuple(r[o] for r, o in zip(ranges, offset))
            if lag == 0 and not any(shift):
                continue
            xi.append(np.array(shift, dtype=float) * h)
            tau.append(dt)
            values.append(dbar[(snapshot + lag,) + tuple(i + s for i, s in zip(node, shift))])
    center = float(dbar[(snapshot,) + node])
    backward = (center - float(dbar[(snapshot - 1,) + node])) / float(
        times[snapshot] - times[snapshot - 1]
    )
    forward = (float(dbar[(snapshot + 1,) + node]) - center) / float(
        times[snapshot + 1] - times[snapshot]
    )
    return Stencil(
        xi=np.array(xi), tau=np.array(tau), values=np.array(values), center=center,
        h=np.asarray(h, dtype=float), backward=backward, forward=forward,
    )


@dataclass(frozen=True, eq=False)
class TouchingQuadratic:
    """psi(xi, tau) = p0 + pt tau + g.xi + xi^T H xi / 2 around the base node."""

    snapshot: int
    node: Tuple[int, ...]
    p0: float
    pt: float
    g: np.ndarray
    H: np.ndarray
    radius: int

    def value(self, xi: np.ndarray, tau: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(xi)
        quad = 0.5 * np.einsum("pi,ij,pj->p", xi, self.H, xi)
        return self.p0 + self.pt * np.asarray(tau) + xi @ self.g + quad

    def touches(self, stencil: Stencil, tol: float = TOUCH_TOL) -> bool:
        return bool(np.all(self.value(stencil.xi, stencil.tau) <= stencil.values + tol))

    def as_dict(self) -> Dict[str, object]:
        return {
            "p0": float(self.p0),
            "pt": float(self.pt),
            "g": [float(v) for v in self.g],
            "H": [[float(v) for v in row] for row in self.H],
            "radius": self.radius,
        }


def _touching_mask(stencil: Stencil, p0: float, pt: np.ndarray, g: np.ndarray,
                   H: np.ndarray, tol: float = TOUCH_TOL) -> np.ndarray:
    """Vectorized touching test for a batch of (pt, g, H): shapes (T,), (T, n), (T, n, n)."""
    quad = 0.5 * np.einsum("pi,tij,pj->tp", stencil.xi, H, stencil.xi)
    psi = p0 + pt[:, None] * stencil.tau[None, :] + g @ stencil.xi.T + quad
    return np.all(psi <= stencil.values[None, :] + tol, axis=1)


def discrete_jet(dbar: np.ndarray, times: np.ndarray, h: np.ndarray, snapshot: int,
                 node: Tuple[int, ...]) -> Tuple[float, np.ndarray, np.ndarray]:
    """Central differences of d-bar at a node: time slope, gradient and Hessian."""
    n = len(node)
    j = snapshot
    pt = float(dbar[(j + 1,) + node] - dbar[(j - 1,) + node]) / float(times[j + 1] - times[j - 1])
    window = dbar[j][tuple(slice(i - 1, i + 2) for i in node)]
    derivs = spatial_derivatives(window[..., None], _window_grid(h))
    g = derivs.first.reshape(n)
    H = derivs.second.reshape(n, n)
    return pt, g, H


def _window_grid(h: np.ndarray) -> Grid:
    n = len(h)
    return Grid(lo=(0.0,) * n, hi=tuple(2.0 * float(v) for v in h), points=(3,) * n)


def touching_candidates(dfield: DistanceField, snapshot: int, node: Tuple[int, ...],
                        radius: int = DEFAULT_RADIUS, trials: int = DEFAULT_TRIALS,
                        rng: Optional[np.random.Generator] = None,
                        touch_tol: float = TOUCH_TOL) -> List[TouchingQuadratic]:
    """
    Quadratics touching d-bar from below at an interior node of an interior snapshot.

    The discrete jet comes first: its time slope is clipped into the [backward, forward]
    difference interval and its Hessian relaxed by delta I for delta in {0, h, 1}, then by
    the smallest shift that clears every stencil point. Random candidates around the jet
    follow and are kept only when they touch. Nothing is generated where d-bar is concave in
    time. An empty list means no test function was found at this node.
    """
    return _candidate_search(dfield, snapshot, node, radius, trials, rng, touch_tol)[0]


def _candidate_search(dfield: DistanceField, snapshot: int, node: Tuple[int, ...],
                      radius: int, trials: int, rng: Optional[np.random.Generator],
                      touch_tol: float) -> Tuple[List[TouchingQuadratic], int]:
    """Touching candidates and how many were generated: 0, or the jet plus `trials`."""
    dbar, times = dfield.values, dfield.times
    h = dfield.grid.h
    n = len(node)
    rng = rng if rng is not None else np.random.default_rng(0)
    stencil = build_stencil(dbar, times, h, snapshot, node, radius)
    if stencil.backward > stencil.forward + touch_tol:
        return [], 0

    pt, g, H = discrete_jet(dbar, times, h, snapshot, node)
    pt = float(np.clip(pt, stencil.backward, stencil.forward))
    p0 = stencil.center
    eye = np.eye(n)

    def make(pt_: float, g_: np.ndarray, H_: np.ndarray) -> TouchingQuadratic:
        return TouchingQuadratic(snapshot, node, p0, pt_, g_, H_, radius)

    out: List[TouchingQuadratic] = []
    jet = None
    for delta in (0.0, float(np.min(h)), 1.0):
        candidate = make(pt, g, H - delta * eye)
        if candidate.touches(stencil, touch_tol):
            jet = candidate
            break
    if jet is None:
        sq = np.einsum("pi,pi->p", stencil.xi, stencil.xi)
        spatial = sq > 0
        excess = make(pt, g, H).value(stencil.xi, stencil.tau) - stencil.values - 0.5 * touch_tol
        sigma = float(np.max(2.0 * excess[spatial] / sq[spatial], initial=0.0))
        for _ in range(4):
            candidate = make(pt, g, H - sigma * eye)
            if candidate.touches(stencil, touch_tol):
                jet = candidate
                break
            sigma = 2.0 * sigma + float(np.min(h))
    if jet is not None:
        out.append(jet)

    if trials > 0:
        scale_t = max(abs(pt), 1.0)
        scale_g = max(float(np.linalg.norm(g)), 1.0)
        scale_H = max(float(np.linalg.norm(H)), 1.0)
        pts = pt + 0.5 * scale_t * rng.uniform(-1.0, 1.0, trials)
        gs = g[None, :] + 0.5 * scale_g * rng.uniform(-1.0, 1.0, (trials, n))
        noise = 0.5 * scale_H * rng.uniform(-1.0, 1.0, (trials, n, n))
        Hs = H[None, :, :] + 0.5 * (noise + np.swapaxes(noise, 1, 2))
        keep = _touching_mask(stencil, p0, pts, gs, Hs, touch_tol)
        out.extend(make(float(pts[i]), gs[i], Hs[i]) for i in np.flatnonzero(keep))
    return out, 1 + max(trials, 0)


def supersolution_residual(candidate: TouchingQuadratic, alpha: np.ndarray, beta: np.ndarray,
                           gamma: float, dbar: float) -> float:
    """R(psi) = p_t - sum alpha_ij H_ij - sum beta_i g_i + gamma d-bar."""
    return float(
        candidate.pt - np.sum(alpha * candidate.H) - float(beta @ candidate.g) + gamma * dbar
    )


def supersolution_check(dfield: DistanceField, coeffs: CoefficientFields, tol: float,
                        radius: int = DEFAULT_RADIUS, trials: int = DEFAULT_TRIALS,
                        seed: int = 0, consistency_gap: Optional[float] = None,
                        touch_tol: float = TOUCH_TOL) -> SupersolutionReport:
    """
    Evaluate R on every touching candidate at every interior node of interior snapshots.

    Each node draws from its own generator seeded by (seed, snapshot, flat node index),
    so results do not depend on visiting order. Nodes where d-bar is concave in time are
    skipped: no candidate is generated there. When no node yields a candidate the report
    is "vacuous".
    """
    grid = dfield.grid
    ishape = grid.interior_shape
    S = len(dfield.times)
    worst: Optional[float] = None
    worst_at: Optional[Tuple[int, Tuple[int, ...]]] = None
    worst_candidate: Optional[TouchingQuadratic] = None
    nodes = attempted = accepted = empty = skipped = 0
    min_attempts: Optional[int] = None

    for j in range(1, S - 1):
        for flat in range(int(np.prod(ishape))):
            inner = np.unravel_index(flat, ishape)
            node = tuple(int(i) + 1 for i in inner)
            rng = np.random.default_rng([seed, j, flat])
            candidates, generated = _candidate_search(dfield, j, node, radius, trials, rng,
                                                      touch_tol)
            nodes += 1
            attempted += generated
            skipped += int(generated == 0)
            min_attempts = generated if min_attempts is None else min(min_attempts, generated)
            accepted += len(candidates)
            if not candidates:
                empty += 1
                continue
            index = (j,) + tuple(int(i) for i in inner)
            alpha = coeffs.alpha[index]
            beta = coeffs.lam[(slice(None),) + index]
            gamma = float(coeffs.gamma[index])
            dbar = float(dfield.values[(j,) + node])
            for candidate in candidates:
                value = supersolution_residual(candidate, alpha, beta, gamma, dbar)
                if worst is None or value < worst:
                    worst, worst_at, worst_candidate = value, (j, node), candidate

    if empty:
        logger.info("%d of %d nodes had no touching candidate (%d concave in time)",
                    empty, nodes, skipped)
    passed = worst is None or worst >= -tol
    if empty == nodes:
        logger.warning("No touching candidate at any node; supersolution check is vacuous")
        status = "vacuous"
    else:
        status = "no_violation_found" if passed else "violation_found"
    return SupersolutionReport(
        passed=passed,
        status=status,
        tolerance=tol,
        worst_residual=worst,
        location=_location(dfield, *worst_at) if worst_at else None,
        worst_candidate=worst_candidate.as_dict() if worst_candidate else None,
        nodes_checked=nodes,
        candidates_attempted=attempted,
        candidates_accepted=accepted,
        min_attempts_per_node=min_attempts or 0,
        empty_nodes=empty,
        skipped_nodes=skipped,
        layer_consistency_gap=consistency_gap,
    )


def discrete_jet_residual(dfield: DistanceField, coeffs: CoefficientFields) -> np.ndarray:
    """
    The supersolution residual of the raw discrete jet of d-bar, shape (S, *ishape).

    First and last snapshots are NaN.
    """
    grid = dfield.grid
    ishape = grid.interior_shape
    times = dfield.times
    dbar = dfield.values
    out = np.full((len(times),) + ishape, np.nan)
    for j in range(1, len(times) - 1):
        d = spatial_derivatives(dbar[j][..., None], grid)
        first = d.first[..., 0]
        second = d.second[..., 0]
        dbar_t = (dbar[j + 1] - dbar[j - 1])[grid.interior] / (times[j + 1] - times[j - 1])
        alpha = np.moveaxis(coeffs.alpha[j], (-2, -1), (0, 1))
        out[j] = (
            dbar_t
            - np.sum(alpha * second, axis=(0, 1))
            - np.sum(coeffs.lam[:, j] * first, axis=0)
            + coeffs.gamma[j] * dbar[j][grid.interior]
        )
    return out


def smooth_contact_mask(dfield: DistanceField) -> np.ndarray:
    """
    Interior nodes of interior snapshots whose unique contact (v, nu) is shared by the
    immediate space-time neighbours, so d-bar equals l-bar across the stencil.
    """
    grid = dfield.grid
    S = len(dfield.times)
    mask = np.zeros((S,) + grid.interior_shape, dtype=bool)
    nu = dfield.normal
    v = dfield.contact
    ok = dfield.unique & dfield.inside
    for j in range(1, S - 1):
        for flat in range(int(np.prod(grid.interior_shape))):
            inner = np.unravel_index(flat, grid.interior_shape)
            node = tuple(int(i) + 1 for i in inner)
            window = (slice(j - 1, j + 2),) + tuple(slice(i - 1, i + 2) for i in node)
            if not np.all(ok[window]):
                continue
            ref_nu, ref_v = nu[(j,) + node], v[(j,) + node]
            same_nu = np.all(np.abs(nu[window] - ref_nu) <= NICE_TOL)
            same_plane = np.all(
                np.abs(np.einsum("...k,k->...", v[window] - ref_v, ref_nu)) <= NICE_TOL
            )
            mask[(j,) + tuple(inner)] = bool(same_nu and same_plane)
    return mask


def layer_consistency_gap(dfield: DistanceField, coeffs: CoefficientFields,
                          ell: Optional[np.ndarray] = None) -> Optional[float]:
    """Largest |jet residual - ell residual| over smooth-contact nodes; None when there are none."""
    ell = ell_residuals(dfield, coeffs) if ell is None else ell
    jet = discrete_jet_residual(dfield, coeffs)
    mask = smooth_contact_mask(dfield)
    if not np.any(mask):
        return None
    return float(np.max(np.abs(jet[mask] - ell[mask])))

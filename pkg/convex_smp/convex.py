"""
Closed convex bodies K in R^k and the convex analysis used by the maximum principle checks.

Three families are supported: H-polytopes in inward-normal form, Euclidean balls and
finite intersections of those. Every body answers the same questions: signed distance
to the boundary, the deterministic nearest boundary point with its supporting affine
functional, and the inward pointing vectors available at a boundary point.

All functions here are pure; bodies are immutable once constructed.
"""

from __future__ import annotations

import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial import cKDTree

from .utils import ConvexSMPError

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-12
MEMBERSHIP_TOL = 1e-12
BOUNDARY_TOL = 1e-9
TIE_TOL = 1e-12
INTERIOR_MARGIN = 1e-9

Candidate = Tuple[np.ndarray, np.ndarray]


class InvalidBodyError(ConvexSMPError, ValueError):
    """A convex body description is malformed or has empty interior."""


class ConvexDomainError(ConvexSMPError, ValueError):
    """A point is outside K, or not on its boundary when it has to be."""

    def __init__(self, message: str, constraint: str, value: float):
        super().__init__(f"{message}: {constraint} (value {value:.3e})")
        self.constraint = constraint
        self.value = value


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SupportingFunctional:
    """The affine functional l(z) = nu . (z - v) with |nu| = 1 and l(v) = 0."""

    v: np.ndarray
    nu: np.ndarray

    def __post_init__(self) -> None:
        v = _frozen(self.v)
        nu = _frozen(self.nu)
        if v.shape != nu.shape or v.ndim != 1:
            raise InvalidBodyError(f"Functional shapes differ: v{v.shape} nu{nu.shape}")
        norm = float(np.linalg.norm(nu))
        if abs(norm - 1.0) > UNIT_TOL:
            raise InvalidBodyError(f"Inward vector must be a unit vector, |nu| = {norm!r}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "nu", nu)

    @property
    def gradient(self) -> np.ndarray:
        return self.nu

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z, dtype=float) - self.v) @ self.nu

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SupportingFunctional):
            return NotImplemented
        return np.array_equal(self.v, other.v) and np.array_equal(self.nu, other.nu)

    def __hash__(self) -> int:
        return hash((self.v.tobytes(), self.nu.tobytes()))


@dataclass(frozen=True, eq=False)
class NiceChoice:
    """
    Nearest boundary point v with its supporting functional and the distance |z - v|.

    `inside` is False for the signed extension used outside K; `dist` is then negative.
    `unique` is False when several boundary points achieve the distance.
    """

    v: np.ndarray
    functional: SupportingFunctional
    dist: float
    unique: bool = True
    inside: bool = True

    @property
    def nu(self) -> np.ndarray:
        return self.functional.nu


def _lexicographic_min(candidates: Sequence[Candidate]) -> Tuple[Candidate, bool]:
    """Pick the candidate with lexicographically smallest v, then smallest normal."""
    pool = list(candidates)
    for axis in range(len(pool[0][0])):
        best = min(c[0][axis] for c in pool)
        pool = [c for c in pool if c[0][axis] <= best + TIE_TOL]
    distinct_points = _distinct([c[0] for c in candidates])
    for axis in range(len(pool[0][1])):
        best = min(c[1][axis] for c in pool)
        pool = [c for c in pool if c[1][axis] <= best + TIE_TOL]
    return pool[0], len(distinct_points) == 1


def _distinct(vectors: Iterable[np.ndarray], tol: float = TIE_TOL) -> List[np.ndarray]:
    """First occurrences of vectors more than `tol` apart in the max norm, in input order."""
    kept = list(vectors)
    if len(kept) < 2:
        return kept
    points = np.asarray(kept, dtype=float).reshape(len(kept), -1)
    pairs = cKDTree(points).query_pairs(tol, p=np.inf, output_type="ndarray")
    keep = np.ones(len(points), dtype=bool)
    # i < j in every pair; sorting on j settles keep[i] before it is consulted
    for i, j in pairs[np.argsort(pairs[:, 1], kind="stable")]:
        if keep[i]:
            keep[j] = False
    return [kept[i] for i in np.flatnonzero(keep)]


class ConvexBody(ABC):
    """A closed convex set with nonempty interior."""

    dim: int
    interior_point: np.ndarray
    inradius: float

    @abstractmethod
    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance to the boundary inside K, negative outside (vectorized on the last axis)."""

    @abstractmethod
    def describe_violation(self, z: np.ndarray) -> Tuple[str, float]:
        """The most violated constraint at z and its value."""

    @abstractmethod
    def _nearest_candidates(self, z: np.ndarray, dist: float) -> Tuple[List[Candidate], bool]:
        """Boundary points at distance `dist` from z, each with its inward normal."""

    @abstractmethod
    def _exterior_candidates(self, z: np.ndarray) -> List[Candidate]:
        """Contact data for a point outside K."""

    @abstractmethod
    def supporting_functionals(self, z: np.ndarray) -> List[SupportingFunctional]:
        """The representable supporting functionals relevant at z."""

    @abstractmethod
    def normal_generators(self, v: np.ndarray) -> List[np.ndarray]:
        """Unit generators of the inward normal cone at a boundary point."""

    @abstractmethod
    def boundary_samples(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """
        Points on the boundary, stratified by face dimension where that applies.

        `count` random points are drawn in total (spread over the facets of a polytope,
        per member of an intersection) on top of the deterministic vertices and centroids.
        """

    @property
    @abstractmethod
    def diameter(self) -> float:
        """Diameter of K (inf when unbounded)."""

    @property
    def scale(self) -> float:
        """Length scale for relative tolerances: the diameter, or 1 for unbounded bodies."""
        return self.diameter if np.isfinite(self.diameter) else 1.0

    def contains(self, z: np.ndarray, slack: float = MEMBERSHIP_TOL) -> bool:
        return bool(self.signed_distance(np.asarray(z, dtype=float)) >= -slack)

    def _check_point(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ConvexDomainError(
                "Point has wrong dimension", f"expected shape ({self.dim},)", float(z.size)
            )
        return z


class HPolytope(ConvexBody):
    """K = {z : nu_i . z >= b_i for all i} with unit inward normals nu_i."""

    def __init__(self, normals: Sequence[Sequence[float]], offsets: Sequence[float]):
        N = np.atleast_2d(np.array(normals, dtype=float))
        b = np.atleast_1d(np.array(offsets, dtype=float))
        if N.ndim != 2 or b.ndim != 1 or N.shape[0] != b.shape[0] or N.shape[0] == 0:
            raise InvalidBodyError(
                f"Need m normals and m offsets, got normals{N.shape} offsets{b.shape}"
            )
        if not (np.all(np.isfinite(N)) and np.all(np.isfinite(b))):
            raise InvalidBodyError("Polytope data must be finite")
        norms = np.linalg.norm(N, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
        if bad.size:
            raise InvalidBodyError(f"Facet normal {int(bad[0])} is not a unit vector")

        self.dim = N.shape[1]
        self.normals = _frozen(N)
        self.offsets = _frozen(b)
        self.bounded = self._is_bounded()
        center, radius = self._chebyshev_center()
        if radius <= INTERIOR_MARGIN:
            raise InvalidBodyError(
                f"Polytope has empty interior (best facet margin {radius:.3e})"
            )
        self.interior_point = _frozen(center)
        self.inradius = float(radius)

    @classmethod
    def from_halfspaces(
        cls, normals: Sequence[Sequence[float]], offsets: Sequence[float]
    ) -> "HPolytope":
        """Build from un-normalized half-spaces a . z >= c."""
        A = np.atleast_2d(np.array(normals, dtype=float))
        c = np.atleast_1d(np.array(offsets, dtype=float))
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0.0):
            raise InvalidBodyError("Half-space normal must be nonzero")
        return cls(A / norms[:, None], c / norms)

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "HPolytope":
        lo_arr = np.array(lo, dtype=float)
        hi_arr = np.array(hi, dtype=float)
        if lo_arr.shape != hi_arr.shape or lo_arr.ndim != 1:
            raise InvalidBodyError("Box bounds must be vectors of equal length")
        eye = np.eye(lo_arr.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([lo_arr, -hi_arr]))

    def _is_bounded(self) -> bool:
        A_ub = -self.normals
        b_ub = -self.offsets
        free = [(None, None)] * self.dim
        for axis in range(self.dim):
            for sign in (1.0, -1.0):
                c = np.zeros(self.dim)
                c[axis] = sign
                res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=free, method="highs")
                if res.status == 3:
                    return False
                if res.status == 2:
                    raise InvalidBodyError("Polytope is empty")
        return True

    def _chebyshev_center(self) -> Tuple[np.ndarray, float]:
        # maximize s subject to nu_i . z - s >= b_i
        m, k = self.normals.shape
        c = np.zeros(k + 1)
        c[-1] = -1.0
        A_ub = np.hstack([-self.normals, np.ones((m, 1))])
        s_cap = None if self.bounded else 1.0
        bounds = [(None, None)] * k + [(0.0, s_cap)]
        res = linprog(c, A_ub=A_ub, b_ub=-self.offsets, bounds=bounds, method="highs")
        if res.status != 0:
            raise InvalidBodyError(f"Interior point search failed: {res.message}")
        center = res.x[:k]
        return center, float(np.min(self.normals @ center - self.offsets))

    def facet_values(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normals.T - self.offsets

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.min(self.facet_values(points), axis=-1)

    def describe_violation(self, z: np.ndarray) -> Tuple[str, float]:
        values = self.facet_values(z)
        i = int(np.argmin(values))
        nu = np.array2string(self.normals[i], precision=6)
        return f"facet {i}: {nu} . z >= {self.offsets[i]:.6g}", float(values[i])

    def _projections(self, z: np.ndarray, facets: np.ndarray) -> List[Candidate]:
        values = self.facet_values(z)
        return [(z - values[i] * self.normals[i], self.normals[i]) for i in facets]

    def _nearest_candidates(self, z: np.ndarray, dist: float) -> Tuple[List[Candidate], bool]:
        values = self.facet_values(z)
        achieving = np.flatnonzero(values <= dist + TIE_TOL)
        return self._projections(z, achieving), False

    def _exterior_candidates(self, z: np.ndarray) -> List[Candidate]:
        values = self.facet_values(z)
        worst = np.flatnonzero(values <= values.min() + TIE_TOL)
        return self._projections(z, worst)

    def supporting_functionals(self, z: np.ndarray) -> List[SupportingFunctional]:
        # v is the foot of z on each facet hyperplane; l(z) is unchanged by the choice of v
        return [
            SupportingFunctional(v, nu)
            for v, nu in self._projections(z, np.arange(len(self.offsets)))
        ]

    def active_facets(self, v: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        return np.flatnonzero(np.abs(self.facet_values(v)) <= tol)

    def normal_generators(self, v: np.ndarray) -> List[np.ndarray]:
        return _distinct([self.normals[i] for i in self.active_facets(v)])

    @cached_property
    def vertices(self) -> np.ndarray:
        k = self.dim
        found: List[np.ndarray] = []
        for rows in itertools.combinations(range(len(self.offsets)), k):
            A = self.normals[list(rows)]
            if abs(np.linalg.det(A)) < 1e-12:
                continue
            p = np.linalg.solve(A, self.offsets[list(rows)])
            if self.signed_distance(p) >= -BOUNDARY_TOL:
                found.append(p)
        vertices = _distinct(found, tol=BOUNDARY_TOL)
        return _frozen(np.array(vertices).reshape(-1, k))

    @cached_property
    def _diameter(self) -> float:
        if not self.bounded:
            return float("inf")
        verts = self.vertices
        diffs = verts[:, None, :] - verts[None, :, :]
        return float(np.max(np.linalg.norm(diffs, axis=-1)))

    @property
    def diameter(self) -> float:
        return self._diameter

    def boundary_samples(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Vertices, edge midpoints (k >= 3), facet centroids, then `count` facet points."""
        k = self.dim
        chunks: List[np.ndarray] = [self.vertices]

        if k >= 3:
            mids = [
                (p + q) / 2.0
                for p, q in itertools.combinations(self.vertices, 2)
                if self._shares_edge(p, q)
            ]
            chunks.append(np.array(mids).reshape(-1, k))

        m = len(self.offsets)
        per_facet = -(-count // m) if count > 0 else 0
        for i in range(m):
            on_facet = [p for p in self.vertices if i in self.active_facets(p)]
            if on_facet:
                chunks.append(np.mean(on_facet, axis=0)[None, :])
            if per_facet == 0:
                continue
            base = self.interior_point + self.scale * rng.standard_normal((per_facet, k))
            feet = base - np.outer(base @ self.normals[i] - self.offsets[i], self.normals[i])
            chunks.append(feet[self.signed_distance(feet) >= -BOUNDARY_TOL])

        points = np.vstack(chunks)
        return np.array(_distinct(points, tol=BOUNDARY_TOL)).reshape(-1, k)

    def _shares_edge(self, p: np.ndarray, q: np.ndarray) -> bool:
        common = np.intersect1d(self.active_facets(p), self.active_facets(q))
        k = self.dim
        return len(common) >= k - 1 and np.linalg.matrix_rank(self.normals[common]) == k - 1


class Ball(ConvexBody):
    """Closed Euclidean ball B(c, R)."""

    def __init__(self, center: Sequence[float], radius: float):
        c = np.atleast_1d(np.array(center, dtype=float))
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise InvalidBodyError("Ball center must be a finite vector")
        if not (np.isfinite(radius) and radius > 0):
            raise InvalidBodyError(f"Ball radius must be positive, got {radius!r}")
        self.dim = c.size
        self.center = _frozen(c)
        self.radius = float(radius)
        self.interior_point = self.center
        self.inradius = self.radius

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return self.radius - np.linalg.norm(np.asarray(points, dtype=float) - self.center, axis=-1)

    def describe_violation(self, z: np.ndarray) -> Tuple[str, float]:
        return f"|z - c| <= {self.radius:.6g}", float(self.signed_distance(z))

    def _radial(self, z: np.ndarray) -> Candidate:
        offset = z - self.center
        v = self.center + self.radius * offset / np.linalg.norm(offset)
        return v, (self.center - v) / np.linalg.norm(self.center - v)

    def _nearest_candidates(self, z: np.ndarray, dist: float) -> Tuple[List[Candidate], bool]:
        if np.linalg.norm(z - self.center) <= TIE_TOL:
            # every sphere point is nearest; the lexicographic minimum is c - R e_1
            e1 = np.zeros(self.dim)
            e1[0] = 1.0
            return [(self.center - self.radius * e1, e1)], True
        return [self._radial(z)], False

    def _exterior_candidates(self, z: np.ndarray) -> List[Candidate]:
        return [self._radial(z)]

    def supporting_functionals(self, z: np.ndarray) -> List[SupportingFunctional]:
        v, nu = self._nearest_candidates(z, 0.0)[0][0]
        return [SupportingFunctional(v, nu)]

    def normal_generators(self, v: np.ndarray) -> List[np.ndarray]:
        inward = self.center - np.asarray(v, dtype=float)
        return [inward / np.linalg.norm(inward)]

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def boundary_samples(self, count: int, rng: np.random.Generator) -> np.ndarray:
        eye = np.eye(self.dim)
        axes = np.vstack([self.center - self.radius * eye, self.center + self.radius * eye])
        if count <= 0:
            return axes
        g = rng.standard_normal((count, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return np.vstack([axes, self.center + self.radius * g])


class Intersection(ConvexBody):
    """Finite intersection of convex bodies of equal dimension."""

    def __init__(self, members: Sequence[ConvexBody]):
        members = tuple(members)
        if not members:
            raise InvalidBodyError("Intersection needs at least one member")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise InvalidBodyError(f"Intersection members disagree on dimension: {sorted(dims)}")
        self.members = members
        self.dim = members[0].dim
        center = self._interior_search()
        margin = float(self.signed_distance(center))
        if margin <= INTERIOR_MARGIN:
            raise InvalidBodyError(f"Intersection has empty interior (best margin {margin:.3e})")
        self.interior_point = _frozen(center)
        self.inradius = margin

    @cached_property
    def _merged(self) -> Optional[HPolytope]:
        """The single H-polytope equal to the intersection when every member is one."""
        if not all(isinstance(m, HPolytope) for m in self.members):
            return None
        return HPolytope(
            np.vstack([m.normals for m in self.members]),
            np.concatenate([m.offsets for m in self.members]),
        )

    def _interior_search(self) -> np.ndarray:
        if self._merged is not None:
            return np.array(self._merged.interior_point)
        x0 = np.mean([m.interior_point for m in self.members], axis=0)
        res = minimize(
            lambda z: -float(self.signed_distance(z)),
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000 * self.dim},
        )
        logger.debug("Interior search: margin %.3e after %d iterations", -res.fun, res.nit)
        return res.x if -res.fun >= self.signed_distance(x0) else x0

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        # d over the intersection is the min over members: the boundary of A n B lies in
        # the union of the member boundaries, and d <= l for every member functional.
        return np.minimum.reduce([m.signed_distance(points) for m in self.members])

    def describe_violation(self, z: np.ndarray) -> Tuple[str, float]:
        values = [float(m.signed_distance(z)) for m in self.members]
        i = int(np.argmin(values))
        constraint, value = self.members[i].describe_violation(z)
        return f"member {i}: {constraint}", value

    def _achieving(self, z: np.ndarray, dist: float) -> List[ConvexBody]:
        return [m for m in self.members if m.signed_distance(z) <= dist + TIE_TOL]

    def _nearest_candidates(self, z: np.ndarray, dist: float) -> Tuple[List[Candidate], bool]:
        candidates: List[Candidate] = []
        continuum = False
        for member in self._achieving(z, dist):
            found, member_continuum = member._nearest_candidates(z, dist)
            candidates.extend(found)
            continuum = continuum or member_continuum
        return candidates, continuum

    def _exterior_candidates(self, z: np.ndarray) -> List[Candidate]:
        worst = float(self.signed_distance(z))
        candidates: List[Candidate] = []
        for member in self._achieving(z, worst):
            candidates.extend(member._exterior_candidates(z))
        return candidates

    def supporting_functionals(self, z: np.ndarray) -> List[SupportingFunctional]:
        return [ell for m in self.members for ell in m.supporting_functionals(z)]

    def normal_generators(self, v: np.ndarray) -> List[np.ndarray]:
        # corners shared by several members merge the members' normal cones
        active = [m for m in self.members if abs(float(m.signed_distance(v))) <= BOUNDARY_TOL]
        return _distinct([g for m in active for g in m.normal_generators(v)])

    @property
    def diameter(self) -> float:
        """
        Exact for intersections of polytopes. With a ball member this is the smallest
        member diameter, an upper bound on the true one.
        """
        if self._merged is not None:
            return self._merged.diameter
        return min(m.diameter for m in self.members)

    def boundary_samples(self, count: int, rng: np.random.Generator) -> np.ndarray:
        chunks = [np.empty((0, self.dim))]
        for member in self.members:
            pts = member.boundary_samples(count, rng)
            chunks.append(pts[np.abs(self.signed_distance(pts)) <= BOUNDARY_TOL])
        kept = np.vstack(chunks)
        return np.array(_distinct(kept, tol=BOUNDARY_TOL)).reshape(-1, self.dim)


def _require_member(K: ConvexBody, z: np.ndarray) -> Tuple[np.ndarray, float]:
    z = K._check_point(z)
    sd = float(K.signed_distance(z))
    if sd < -MEMBERSHIP_TOL:
        constraint, value = K.describe_violation(z)
        raise ConvexDomainError("Point is not in K", constraint, value)
    return z, max(sd, 0.0)


def signed_distance(K: ConvexBody, z: np.ndarray) -> float:
    """Distance to the boundary for z in K, minus the worst constraint violation outside."""
    return float(K.signed_distance(K._check_point(z)))


def distance_to_boundary(K: ConvexBody, z: np.ndarray) -> float:
    """d(z) = inf{|z - w| : w on the boundary of K}, for z in K."""
    return _require_member(K, z)[1]


def functional_value(ell: SupportingFunctional, z: np.ndarray) -> float:
    return float(ell(z))


def infimum_over_functionals(K: ConvexBody, z: np.ndarray) -> float:
    """Infimum of l(z) over the body's representable supporting functionals."""
    z, _ = _require_member(K, z)
    return min(functional_value(ell, z) for ell in K.supporting_functionals(z))


def _choice(candidates: List[Candidate], z: np.ndarray, continuum: bool, inside: bool,
            signed: float) -> NiceChoice:
    (v, normal), unique = _lexicographic_min(candidates)
    dist = float(np.linalg.norm(z - v))
    if inside and dist > 1e-14:
        nu = (z - v) / dist
    else:
        nu = normal
    return NiceChoice(
        v=_frozen(v),
        functional=SupportingFunctional(v, nu),
        dist=dist if inside else signed,
        unique=unique and not continuum,
        inside=inside,
    )


def nearest_boundary_point(K: ConvexBody, z: np.ndarray) -> NiceChoice:
    """
    The lexicographically smallest nearest boundary point and its unique functional.

    Ties between candidate points are resolved on the first coordinate, then the second,
    and so on, with an equality slack of 1e-12. For d(z) > 0 the inward vector is
    (z - v) / |z - v|; on the boundary it is the smallest achieving facet or radial normal.
    """
    z, dist = _require_member(K, z)
    candidates, continuum = K._nearest_candidates(z, dist)
    return _choice(candidates, z, continuum, inside=True, signed=dist)


def contact_choice(K: ConvexBody, z: np.ndarray) -> NiceChoice:
    """nearest_boundary_point inside K; the most violated constraint's contact outside."""
    z = K._check_point(z)
    sd = float(K.signed_distance(z))
    if sd >= -MEMBERSHIP_TOL:
        return nearest_boundary_point(K, z)
    return _choice(K._exterior_candidates(z), z, False, inside=False, signed=sd)


def inward_vector_samples(
    K: ConvexBody, v: np.ndarray, count: int, seed: int = 0
) -> List[np.ndarray]:
    """
    Up to `count` distinct inward pointing unit vectors at the boundary point v.

    Smooth points give their single normal. At corners the normal cone generators come
    first, then normalized pairwise sums, the normalized centroid, then random convex
    combinations.
    """
    v = K._check_point(v)
    if count < 1:
        raise ValueError("count must be positive")
    sd = float(K.signed_distance(v))
    if abs(sd) > BOUNDARY_TOL:
        constraint, value = K.describe_violation(v)
        raise ConvexDomainError("Point is not on the boundary of K", constraint, value)

    generators = K.normal_generators(v)
    if len(generators) <= 1:
        return generators[:count]

    samples = list(generators)
    combos = [a + b for a, b in itertools.combinations(generators, 2)]
    if len(generators) > 2:
        combos.append(np.sum(generators, axis=0))
    rng = np.random.default_rng(seed)
    G = np.array(generators)
    attempts = 0
    while len(samples) < count and attempts < 10 * count + 10:
        if combos:
            candidate = combos.pop(0)
        else:
            candidate = rng.dirichlet(np.ones(len(generators))) @ G
            attempts += 1
        norm = float(np.linalg.norm(candidate))
        if norm < 1e-12:
            continue
        unit = candidate / norm
        if all(np.max(np.abs(unit - s)) > TIE_TOL for s in samples):
            samples.append(unit)
    return samples[:count]


def distance_bound_gap(K: ConvexBody, z: np.ndarray, count: int, rng: np.random.Generator,
                       vectors_per_point: int = 3) -> float:
    """min over sampled supporting functionals of l(z) - d(z); d <= l makes it >= 0."""
    z, dist = _require_member(K, z)
    gap = float("inf")
    for v in K.boundary_samples(count, rng):
        for nu in inward_vector_samples(K, v, vectors_per_point):
            gap = min(gap, functional_value(SupportingFunctional(v, nu), z) - dist)
    return gap


def body_from_config(config: dict) -> ConvexBody:
    """
    Build a body from its scenario description.

    Accepted shapes: {"type": "box", "lo", "hi"}, {"type": "hpoly", "normals", "offsets"},
    {"type": "ball", "center", "radius"}, {"type": "intersection", "members"}.
    Polytope normals are normalized on load.
    """
    kind = config.get("type")
    try:
        if kind == "box":
            return HPolytope.box(config["lo"], config["hi"])
        if kind == "hpoly":
            return HPolytope.from_halfspaces(config["normals"], config["offsets"])
        if kind == "ball":
            return Ball(config["center"], float(config["radius"]))
        if kind == "intersection":
            return Intersection([body_from_config(m) for m in config["members"]])
    except KeyError as e:
        raise InvalidBodyError(f"Body of type {kind!r} is missing field {e.args[0]!r}") from e
    raise InvalidBodyError(
        f"Unknown body type {kind!r} (expected box, hpoly, ball or intersection)"
    )


def point_label(z: Optional[np.ndarray]) -> Optional[List[float]]:
    return None if z is None else [float(c) for c in np.asarray(z).ravel()]

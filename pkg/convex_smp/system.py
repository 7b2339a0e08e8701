"""
PDE system data and the compatibility condition between K and the coefficients.

The system is u_t = D(x,t,u) sum_ij a_ij(x,t) u_xixj + sum_i M_i(x,t,u) u_xi + phi(x,t,u).
Coefficients are expression ASTs evaluated vectorized over stacked sample points:
`x` has shape (N, n), `t` is a scalar or shape (N,), `z` has shape (N, k).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .convex import ConvexBody, inward_vector_samples, point_label
from .expr import (
    Expr,
    ExpressionEvaluationError,
    evaluate_expression,
    parse_expression,
    variables_for,
)
from .reports import CompatibilityReport, Location
from .utils import ConvexSMPError

logger = logging.getLogger(__name__)

EIGEN_TOL = 1e-8
UNIT_NORM_TOL = 1e-9

Matrix = Tuple[Tuple[Expr, ...], ...]


class InvalidSystemError(ConvexSMPError, ValueError):
    """Inconsistent dimensions, asymmetric a or negative Lipschitz constants."""


class SystemEvaluationError(ConvexSMPError, ArithmeticError):
    """A coefficient could not be evaluated; `location` holds the offending (x, t, z)."""

    def __init__(self, message: str, location: Optional[Dict[str, object]] = None):
        self.location = location
        where = f" at {location}" if location else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class Lipschitz:
    """Lipschitz-in-z constants: c for D, m[i] for M_i, p for phi."""

    c: float
    m: Tuple[float, ...]
    p: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "m", tuple(float(v) for v in self.m))
        for name, value in [("c", self.c), ("p", self.p)] + [
            (f"m{i + 1}", v) for i, v in enumerate(self.m)
        ]:
            if not np.isfinite(value) or value < 0:
                raise InvalidSystemError(f"Lipschitz constant {name} must be >= 0, got {value!r}")

    def as_dict(self) -> Dict[str, object]:
        return {"c": float(self.c), "m": list(self.m), "p": float(self.p)}


@dataclass(frozen=True)
class LeftEigenvalue:
    """Rayleigh value nu.A nu and the left-eigenvector residual |nu^T A - lambda nu^T|."""

    rayleigh: float
    residual: float
    tol: float

    @property
    def accepted(self) -> bool:
        return self.residual <= self.tol

    @property
    def value(self) -> Optional[float]:
        return self.rayleigh if self.accepted else None


def _matrix(rows: Sequence[Sequence[Expr]]) -> Matrix:
    return tuple(tuple(row) for row in rows)


@dataclass(frozen=True)
class SystemSpec:
    n: int
    k: int
    a: Matrix
    D: Matrix
    M: Tuple[Matrix, ...]
    phi: Tuple[Expr, ...]
    lipschitz: Lipschitz

    def __post_init__(self) -> None:
        if self.n not in (1, 2):
            raise InvalidSystemError(f"Spatial dimension must be 1 or 2, got {self.n}")
        if self.k < 1:
            raise InvalidSystemError(f"State dimension must be >= 1, got {self.k}")
        self._check_square("a", self.a, self.n)
        self._check_square("D", self.D, self.k)
        if len(self.M) != self.n:
            raise InvalidSystemError(f"M: expected {self.n} matrices, got {len(self.M)}")
        for i, Mi in enumerate(self.M):
            self._check_square(f"M{i + 1}", Mi, self.k)
        if len(self.phi) != self.k:
            raise InvalidSystemError(f"phi: expected {self.k} entries, got {len(self.phi)}")
        if len(self.lipschitz.m) != self.n:
            raise InvalidSystemError(
                f"lipschitz.m: expected {self.n} entries, got {len(self.lipschitz.m)}"
            )

        for i in range(self.n):
            for j in range(i + 1, self.n):
                if self.a[i][j] != self.a[j][i]:
                    raise InvalidSystemError(
                        f"a is not symmetric: a{i + 1}{j + 1} = {self.a[i][j]} "
                        f"but a{j + 1}{i + 1} = {self.a[j][i]}"
                    )
        # share the upper-triangle objects so a_ij and a_ji are the same Expr
        a = [list(row) for row in self.a]
        for i in range(self.n):
            for j in range(i):
                a[i][j] = a[j][i]
        object.__setattr__(self, "a", _matrix(a))

        allowed_a = variables_for(self.n, self.k, state=False)
        allowed = variables_for(self.n, self.k)
        for label, expr in self._entries():
            names = expr.variables()
            permitted = allowed_a if label.startswith("a") else allowed
            if not names <= permitted:
                extra = ", ".join(sorted(names - permitted))
                raise InvalidSystemError(f"{label} uses variables outside its scope: {extra}")

    @staticmethod
    def _check_square(label: str, matrix: Matrix, size: int) -> None:
        if len(matrix) != size or any(len(row) != size for row in matrix):
            raise InvalidSystemError(f"{label}: expected a {size}x{size} matrix")

    @classmethod
    def from_strings(
        cls,
        n: int,
        k: int,
        a: Sequence[Sequence[str]],
        D: Sequence[Sequence[str]],
        M: Sequence[Sequence[Sequence[str]]],
        phi: Sequence[str],
        lipschitz: Union[Lipschitz, Mapping[str, object]],
    ) -> "SystemSpec":
        """Parse row-major string matrices into a spec."""
        allowed_a = variables_for(n, k, state=False)
        allowed = variables_for(n, k)
        if not isinstance(lipschitz, Lipschitz):
            lipschitz = Lipschitz(
                c=float(lipschitz.get("c", 0.0)),  # type: ignore[arg-type]
                m=tuple(lipschitz.get("m", [0.0] * n)),  # type: ignore[arg-type]
                p=float(lipschitz.get("p", 0.0)),  # type: ignore[arg-type]
            )
        return cls(
            n=n,
            k=k,
            a=_matrix([[parse_expression(s, allowed_a) for s in row] for row in a]),
            D=_matrix([[parse_expression(s, allowed) for s in row] for row in D]),
            M=tuple(
                _matrix([[parse_expression(s, allowed) for s in row] for row in Mi]) for Mi in M
            ),
            phi=tuple(parse_expression(s, allowed) for s in phi),
            lipschitz=lipschitz,
        )

    def _entries(self) -> List[Tuple[str, Expr]]:
        out = [(f"a{i + 1}{j + 1}", e) for i, row in enumerate(self.a) for j, e in enumerate(row)]
        out += [(f"D{i + 1}{j + 1}", e) for i, row in enumerate(self.D) for j, e in enumerate(row)]
        for m, Mi in enumerate(self.M):
            out += [
                (f"M{m + 1}[{i + 1}{j + 1}]", e)
                for i, row in enumerate(Mi)
                for j, e in enumerate(row)
            ]
        out += [(f"phi{i + 1}", e) for i, e in enumerate(self.phi)]
        return out

    def to_dict(self) -> Dict[str, object]:
        """Canonical description with every expression printed back to source."""
        def rows(matrix: Matrix) -> List[List[str]]:
            return [[e.to_source() for e in row] for row in matrix]

        return {
            "n": self.n,
            "k": self.k,
            "a": rows(self.a),
            "D": rows(self.D),
            "M": [rows(Mi) for Mi in self.M],
            "phi": [e.to_source() for e in self.phi],
            "lipschitz": self.lipschitz.as_dict(),
        }

    def env(self, x: np.ndarray, t: Union[float, np.ndarray],
            z: Optional[np.ndarray] = None) -> Dict[str, Union[float, np.ndarray]]:
        x = np.asarray(x, dtype=float).reshape(-1, self.n)
        env: Dict[str, Union[float, np.ndarray]] = {
            f"x{i + 1}": x[:, i] for i in range(self.n)
        }
        env["t"] = t if np.ndim(t) == 0 else np.asarray(t, dtype=float)
        if z is not None:
            z = np.asarray(z, dtype=float).reshape(-1, self.k)
            env.update({f"z{i + 1}": z[:, i] for i in range(self.k)})
        return env

    def _evaluate(self, label: str, exprs: Sequence[Tuple[Tuple[int, ...], Expr]],
                  dims: Tuple[int, ...], x: np.ndarray, t: Union[float, np.ndarray],
                  z: Optional[np.ndarray]) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.n)
        count = x.shape[0]
        env = self.env(x, t, z)
        out = np.empty((count,) + dims)
        for index, expr in exprs:
            try:
                value = evaluate_expression(expr, env)
            except ExpressionEvaluationError as e:
                raise SystemEvaluationError(
                    f"{label}{''.join(str(i + 1) for i in index)}: {e}",
                    self._first_failure(expr, x, t, z),
                ) from e
            column = np.broadcast_to(value, (count,))
            bad = ~np.isfinite(column)
            if np.any(bad):
                raise SystemEvaluationError(
                    f"{label}{''.join(str(i + 1) for i in index)} is not finite",
                    self._point(int(np.argmax(bad)), x, t, z),
                )
            out[(slice(None),) + index] = column
        return out

    def _point(self, i: int, x: np.ndarray, t: Union[float, np.ndarray],
               z: Optional[np.ndarray]) -> Dict[str, object]:
        where: Dict[str, object] = {
            "x": point_label(x[i]),
            "t": float(t) if np.ndim(t) == 0 else float(np.asarray(t)[i]),
        }
        if z is not None:
            where["z"] = point_label(np.asarray(z).reshape(-1, self.k)[i])
        return where

    def _first_failure(self, expr: Expr, x: np.ndarray, t: Union[float, np.ndarray],
                       z: Optional[np.ndarray]) -> Optional[Dict[str, object]]:
        for i in range(x.shape[0]):
            ti = t if np.ndim(t) == 0 else np.asarray(t)[i]
            zi = None if z is None else np.asarray(z).reshape(-1, self.k)[i : i + 1]
            try:
                evaluate_expression(expr, self.env(x[i : i + 1], ti, zi))
            except ExpressionEvaluationError:
                return self._point(i, x, t, z)
        return None

    def eval_a(self, x: np.ndarray, t: Union[float, np.ndarray]) -> np.ndarray:
        """a at each point, shape (N, n, n)."""
        exprs = [((i, j), e) for i, row in enumerate(self.a) for j, e in enumerate(row)]
        return self._evaluate("a", exprs, (self.n, self.n), x, t, None)

    def eval_D(self, x: np.ndarray, t: Union[float, np.ndarray], z: np.ndarray) -> np.ndarray:
        """D at each point, shape (N, k, k)."""
        exprs = [((i, j), e) for i, row in enumerate(self.D) for j, e in enumerate(row)]
        return self._evaluate("D", exprs, (self.k, self.k), x, t, z)

    def eval_M(self, x: np.ndarray, t: Union[float, np.ndarray], z: np.ndarray) -> np.ndarray:
        """All M_i at each point, shape (n, N, k, k)."""
        mats = []
        for m, Mi in enumerate(self.M):
            exprs = [((i, j), e) for i, row in enumerate(Mi) for j, e in enumerate(row)]
            mats.append(self._evaluate(f"M{m + 1}_", exprs, (self.k, self.k), x, t, z))
        return np.stack(mats)

    def eval_phi(self, x: np.ndarray, t: Union[float, np.ndarray], z: np.ndarray) -> np.ndarray:
        """phi at each point, shape (N, k)."""
        exprs = [((i,), e) for i, e in enumerate(self.phi)]
        return self._evaluate("phi", exprs, (self.k,), x, t, z)


def left_eigenvalue(nu: np.ndarray, A: np.ndarray, tol: float = EIGEN_TOL) -> LeftEigenvalue:
    """
    Test whether nu is a left eigenvector of A.

    Args:
        nu: Unit vector (|nu| = 1 within 1e-9)
        A: Square matrix
        tol: Acceptance bound on the residual 2-norm

    Returns:
        The Rayleigh value nu.(A^T nu), the residual |nu^T A - lambda nu^T|_2 and the tolerance

    Raises:
        ValueError: nu is not a unit vector
        SystemEvaluationError: A has non-finite entries
    """
    nu = np.asarray(nu, dtype=float)
    A = np.asarray(A, dtype=float)
    if abs(float(np.linalg.norm(nu)) - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"nu must be a unit vector, |nu| = {np.linalg.norm(nu)!r}")
    if not np.all(np.isfinite(A)):
        raise SystemEvaluationError("Matrix has non-finite entries")
    rayleigh, residual = left_eigen_residuals(nu[None, :], A[None, :, :])
    return LeftEigenvalue(float(rayleigh[0]), float(residual[0]), tol)


def left_eigen_residuals(nus: np.ndarray, As: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Batched Rayleigh values and left-eigenvector residuals for stacks (N, k), (N, k, k)."""
    rows = np.einsum("ni,nij->nj", nus, As)
    rayleigh = np.einsum("nj,nj->n", rows, nus)
    residual = np.linalg.norm(rows - rayleigh[:, None] * nus, axis=1)
    return rayleigh, residual


def positive_definite_floor(A: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part (A + A^T) / 2."""
    return float(positive_definite_floors(np.asarray(A, dtype=float)[None])[0])


def positive_definite_floors(As: np.ndarray) -> np.ndarray:
    As = np.asarray(As, dtype=float)
    sym = 0.5 * (As + np.swapaxes(As, -1, -2))
    return np.linalg.eigvalsh(sym)[..., 0]


@dataclass(frozen=True, eq=False)
class CompatibilitySamples:
    """Sampled spacetime points, boundary points of K and inward unit vectors per point."""

    x: np.ndarray
    t: np.ndarray
    boundary: np.ndarray
    normals: Tuple[np.ndarray, ...]

    def rows(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Flatten to one row per (spacetime point, boundary point, inward vector)."""
        pairs = [(b, nu) for b, normals in enumerate(self.normals) for nu in normals]
        P, R = len(self.t), len(pairs)
        if R == 0 or P == 0:
            n = self.x.shape[1] if self.x.ndim == 2 else 1
            k = self.boundary.shape[1] if self.boundary.ndim == 2 else 1
            return np.empty((0, n)), np.empty(0), np.empty((0, k)), np.empty((0, k))
        X = np.repeat(self.x, R, axis=0)
        T = np.repeat(self.t, R)
        V = np.tile(np.array([self.boundary[b] for b, _ in pairs]), (P, 1))
        NU = np.tile(np.array([nu for _, nu in pairs]), (P, 1))
        return X, T, V, NU


def default_compatibility_samples(
    K: ConvexBody,
    points: np.ndarray,
    times: Sequence[float],
    boundary_count: int = 64,
    vectors_per_point: int = 4,
    spatial_count: int = 8,
    seed: int = 0,
) -> CompatibilitySamples:
    """
    Build the sample set used by check-compat.

    Spatial points are an evenly spaced subset of `points` (the interior grid nodes),
    crossed with every entry of `times`. Boundary points come from K.boundary_samples.
    """
    rng = np.random.default_rng(seed)
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    count = min(spatial_count, len(points))
    picks = np.unique(np.round(np.linspace(0, len(points) - 1, count)).astype(int))
    spatial = points[picks]
    times = np.asarray(list(times), dtype=float)
    x = np.repeat(spatial, len(times), axis=0)
    t = np.tile(times, len(spatial))
    boundary = K.boundary_samples(boundary_count, rng)
    normals = tuple(
        np.array(inward_vector_samples(K, v, vectors_per_point, seed=seed)) for v in boundary
    )
    return CompatibilitySamples(x=x, t=t, boundary=boundary, normals=normals)


def _location(X: np.ndarray, T: np.ndarray, V: np.ndarray, NU: np.ndarray, i: int) -> Location:
    return Location(
        x=point_label(X[i]), t=float(T[i]), v=point_label(V[i]), nu=point_label(NU[i])
    )


def check_compatibility(
    spec: SystemSpec, K: ConvexBody, samples: CompatibilitySamples, tol: float = EIGEN_TOL
) -> CompatibilityReport:
    """
    Verify phi.nu >= 0 and that nu is a left eigenvector of D and every M_i on the samples.

    Positive-definiteness floors of D (at the sampled boundary values) and of a are
    recorded but do not decide the verdict.

    Raises:
        InvalidSystemError: K and the system disagree on k
        SystemEvaluationError: a coefficient failed to evaluate, with its (x, t, v)
    """
    if K.dim != spec.k:
        raise InvalidSystemError(f"K lives in R^{K.dim} but the system has k = {spec.k}")
    X, T, V, NU = samples.rows()
    rows = len(T)
    counts = {
        "spacetime": int(len(samples.t)),
        "boundary": int(len(samples.boundary)),
        "rows": rows,
    }
    if rows == 0:
        logger.warning("No compatibility samples; the check is vacuous")
        return CompatibilityReport(
            passed=True,
            status="vacuous",
            tolerance=tol,
            worst_phi_deficit=float("inf"),
            worst_D_residual=0.0,
            worst_M_residuals=[0.0] * spec.n,
            worst_M_locations=[None] * spec.n,
            min_rayleigh_mu=float("inf"),
            min_D_floor=float("inf"),
            min_a_floor=float("inf"),
            positive_definite=True,
            sample_counts=counts,
        )

    phi = spec.eval_phi(X, T, V)
    deficit = np.einsum("nk,nk->n", phi, NU)
    i_phi = int(np.argmin(deficit))

    D = spec.eval_D(X, T, V)
    mu, res_D = left_eigen_residuals(NU, D)
    i_D = int(np.argmax(res_D))

    M = spec.eval_M(X, T, V)
    res_M, loc_M = [], []
    for Mi in M:
        _, res = left_eigen_residuals(NU, Mi)
        j = int(np.argmax(res))
        res_M.append(float(res[j]))
        loc_M.append(_location(X, T, V, NU, j))

    min_D_floor = float(np.min(positive_definite_floors(D)))
    min_a_floor = float(np.min(positive_definite_floors(spec.eval_a(samples.x, samples.t))))

    worst_deficit = float(deficit[i_phi])
    worst_D = float(res_D[i_D])
    passed = worst_deficit >= -tol and worst_D <= tol and all(r <= tol for r in res_M)
    logger.info(
        "Compatibility over %d rows: min phi.nu %.3e, max D residual %.3e",
        rows, worst_deficit, worst_D,
    )
    return CompatibilityReport(
        passed=passed,
        status="pass" if passed else "fail",
        tolerance=tol,
        worst_phi_deficit=worst_deficit,
        worst_phi_location=_location(X, T, V, NU, i_phi),
        worst_D_residual=worst_D,
        worst_D_location=_location(X, T, V, NU, i_D),
        worst_M_residuals=res_M,
        worst_M_locations=loc_M,
        min_rayleigh_mu=float(np.min(mu)),
        min_D_floor=min_D_floor,
        min_a_floor=min_a_floor,
        positive_definite=min_D_floor > 0 and min_a_floor > 0,
        sample_counts=counts,
    )


def estimate_lipschitz(
    spec: SystemSpec,
    x: np.ndarray,
    t: np.ndarray,
    values: np.ndarray,
    rng: np.random.Generator,
    pairs: int = 10_000,
) -> Lipschitz:
    """
    Empirical Lipschitz-in-z constants from random pairs in the hull of trajectory values.

    Each pair shares one random (x, t) from the inputs; both z's are random convex
    combinations of three observed values. Matrix differences use the operator 2-norm.
    """
    x = np.asarray(x, dtype=float).reshape(-1, spec.n)
    t = np.asarray(t, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1, spec.k)

    at = rng.integers(len(x), size=pairs)
    hull = []
    for _ in range(2):
        weights = rng.dirichlet(np.ones(3), size=pairs)
        picks = rng.integers(len(values), size=(pairs, 3))
        hull.append(np.einsum("pj,pjk->pk", weights, values[picks]))
    z1, z2 = hull
    dz = np.linalg.norm(z1 - z2, axis=1)
    keep = dz > 1e-12
    if not np.any(keep):
        return Lipschitz(c=0.0, m=(0.0,) * spec.n, p=0.0)
    X, T, z1, z2, dz = x[at][keep], t[at][keep], z1[keep], z2[keep], dz[keep]

    def quotient(diff: np.ndarray, matrix: bool) -> float:
        if matrix:
            norms = np.linalg.norm(diff, ord=2, axis=(-2, -1))
        else:
            norms = np.linalg.norm(diff, axis=-1)
        return float(np.max(norms / dz))

    c = quotient(spec.eval_D(X, T, z1) - spec.eval_D(X, T, z2), matrix=True)
    M_diff = spec.eval_M(X, T, z1) - spec.eval_M(X, T, z2)
    m = tuple(quotient(Mi, matrix=True) for Mi in M_diff)
    p = quotient(spec.eval_phi(X, T, z1) - spec.eval_phi(X, T, z2), matrix=False)
    return Lipschitz(c=c, m=m, p=p)


def lipschitz_overruns(declared: Lipschitz, estimated: Lipschitz, slack: float = 1e-9) -> List[str]:
    """Messages for every estimated constant above its declared value; each is logged."""
    pairs = [("c", declared.c, estimated.c), ("p", declared.p, estimated.p)]
    pairs += [(f"m{i + 1}", d, e) for i, (d, e) in enumerate(zip(declared.m, estimated.m))]
    messages = []
    for name, have, seen in pairs:
        if seen > have * (1 + slack) + slack:
            message = f"Lipschitz constant {name}: estimated {seen:.6g} exceeds declared {have:.6g}"
            logger.warning(message)
            messages.append(message)
    return messages

import numpy as np
import pytest

from convex_smp.convex import Ball, HPolytope
from convex_smp.expr import UnknownIdentifierError
from convex_smp.system import (
    CompatibilitySamples,
    InvalidSystemError,
    Lipschitz,
    SystemEvaluationError,
    SystemSpec,
    check_compatibility,
    default_compatibility_samples,
    estimate_lipschitz,
    left_eigenvalue,
    lipschitz_overruns,
    positive_definite_floor,
)


def _spec(k=2, D=None, phi=None, a=None, M=None, n=1, lipschitz=None):
    D = D or [["1" if i == j else "0" for j in range(k)] for i in range(k)]
    return SystemSpec.from_strings(
        n=n,
        k=k,
        a=a or [["1"]],
        D=D,
        M=M or [[["0"] * k for _ in range(k)] for _ in range(n)],
        phi=phi or ["0"] * k,
        lipschitz=lipschitz or {"c": 0.0, "m": [0.0] * n, "p": 0.0},
    )


def _samples(K, seed=0, boundary=64):
    points = np.linspace(0.1, 0.9, 5)[:, None]
    return default_compatibility_samples(
        K, points, [0.0, 0.05, 0.1], boundary_count=boundary, seed=seed
    )


def test_left_eigenvalue_identity(rng):
    nu = rng.standard_normal(3)
    nu /= np.linalg.norm(nu)
    result = left_eigenvalue(nu, np.eye(3))
    assert result.value == pytest.approx(1.0)
    assert result.residual == pytest.approx(0.0, abs=1e-15)


def test_left_eigenvalue_diagonal():
    assert left_eigenvalue(np.array([1.0, 0.0]), np.diag([2.0, 5.0])).value == 2.0


def test_left_eigenvalue_rejects_with_residual():
    result = left_eigenvalue(np.array([1.0, 0.0]), np.array([[2.0, 1.0], [0.0, 3.0]]))
    assert not result.accepted
    assert result.value is None
    assert result.residual == pytest.approx(1.0)
    assert result.rayleigh == 2.0


def test_left_eigenvalue_scale_consistent(rng):
    A = np.array([[3.0, 0.0], [1.0, 2.0]])
    nu = np.array([0.0, 1.0])
    base = left_eigenvalue(nu, A).value
    for s in rng.uniform(0.1, 10.0, size=5):
        assert left_eigenvalue(nu, s * A).value == pytest.approx(s * base)


def test_left_eigenvalue_input_errors():
    with pytest.raises(ValueError):
        left_eigenvalue(np.array([1.0, 1.0]), np.eye(2))
    with pytest.raises(SystemEvaluationError):
        left_eigenvalue(np.array([1.0, 0.0]), np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_positive_definite_floor_examples():
    assert positive_definite_floor(np.eye(2)) == pytest.approx(1.0)
    assert positive_definite_floor(np.diag([3.0, 0.5])) == pytest.approx(0.5)
    assert positive_definite_floor(np.array([[2.0, 1.0], [-1.0, 2.0]])) == pytest.approx(2.0)


def test_positive_definite_floor_certifies_quadratic_form(rng):
    A = rng.standard_normal((4, 4)) + 4.0 * np.eye(4)
    floor = positive_definite_floor(A)
    assert floor > 0
    z = rng.standard_normal((10_000, 4))
    quad = np.einsum("ni,ij,nj->n", z, A, z)
    assert np.all(quad >= floor * np.sum(z * z, axis=1) - 1e-9)


def test_spec_shares_symmetric_entries():
    spec = _spec(k=1, n=2, a=[["1", "0.3"], ["0.3", "0.8"]])
    assert spec.a[1][0] is spec.a[0][1]


def test_spec_rejects_asymmetric_a_and_bad_scope():
    with pytest.raises(InvalidSystemError, match="not symmetric"):
        _spec(k=1, n=2, a=[["1", "0.3"], ["0.2", "1"]])
    with pytest.raises(UnknownIdentifierError):
        _spec(k=1, a=[["1 + z1"]])


def test_spec_rejects_wrong_dimensions():
    with pytest.raises(InvalidSystemError, match="phi"):
        _spec(k=2, phi=["0"])
    with pytest.raises(InvalidSystemError):
        Lipschitz(c=-1.0, m=(0.0,), p=0.0)


def test_eval_shapes():
    spec = _spec(k=2, n=2, a=[["1", "0"], ["0", "1"]], D=[["1 + z1", "0"], ["0", "x2"]])
    x = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
    z = np.ones((3, 2))
    assert spec.eval_a(x, 0.0).shape == (3, 2, 2)
    D = spec.eval_D(x, 0.0, z)
    assert D.shape == (3, 2, 2)
    np.testing.assert_allclose(D[:, 0, 0], 2.0)
    np.testing.assert_allclose(D[:, 1, 1], [0.2, 0.4, 0.6])
    assert spec.eval_M(x, 0.0, z).shape == (2, 3, 2, 2)
    assert spec.eval_phi(x, 0.0, z).shape == (3, 2)


def test_eval_error_locates_first_failure():
    spec = _spec(k=1, phi=["1/(x1 - 0.5)"])
    x = np.array([[0.1], [0.5], [0.9]])
    with pytest.raises(SystemEvaluationError) as info:
        spec.eval_phi(x, 0.0, np.zeros((3, 1)))
    assert info.value.location["x"] == [0.5]


def test_identity_system_compatible_with_box(unit_box):
    report = check_compatibility(_spec(), unit_box, _samples(unit_box))
    assert report.passed
    assert report.worst_D_residual <= 1e-15
    assert report.worst_M_residuals == [0.0]
    assert report.positive_definite


def test_ball_sink_compatible(unit_ball):
    spec = _spec(phi=["-z1", "-z2"], lipschitz={"c": 0.0, "m": [0.0], "p": 1.0})
    report = check_compatibility(spec, unit_ball, _samples(unit_ball, boundary=1000))
    assert report.passed
    assert report.worst_phi_deficit >= 1.0 - 1e-9


def test_coupled_diffusion_fails_at_facet_normals(unit_box):
    spec = _spec(D=[["1", "0.5"], ["0.5", "1"]])
    report = check_compatibility(spec, unit_box, _samples(unit_box))
    assert not report.passed
    assert report.worst_D_residual >= 0.5 - 1e-9
    nu = np.array(report.worst_D_location.nu)
    assert np.count_nonzero(nu) == 1


def test_incompatible_reaction_reports_deficit(unit_interval):
    spec = _spec(k=1, phi=["-1"])
    report = check_compatibility(spec, unit_interval, _samples(unit_interval))
    assert not report.passed
    assert report.worst_phi_deficit == -1.0
    assert report.worst_phi_location.v == [0.0]
    assert report.worst_phi_location.nu == [1.0]


def test_residuals_ignore_reaction_vanishing_on_boundary(unit_ball):
    samples = _samples(unit_ball)
    plain = check_compatibility(_spec(D=[["1", "0.5*z1"], ["0", "1"]]), unit_ball, samples)
    shifted = check_compatibility(
        _spec(D=[["1", "0.5*z1"], ["0", "1"]], phi=["1 - z1^2 - z2^2", "0"]), unit_ball, samples
    )
    assert plain.worst_D_residual == shifted.worst_D_residual


def test_empty_samples_are_vacuous(unit_box):
    samples = CompatibilitySamples(
        x=np.empty((0, 1)), t=np.empty(0), boundary=np.empty((0, 2)), normals=()
    )
    report = check_compatibility(_spec(), unit_box, samples)
    assert report.passed
    assert report.status == "vacuous"


def test_dimension_mismatch(unit_box):
    with pytest.raises(InvalidSystemError):
        check_compatibility(_spec(k=1), unit_box, _samples(unit_box))


def test_estimate_lipschitz_for_logistic_reaction(rng):
    spec = _spec(k=1, phi=["z1*(1 - z1)"], D=[["1 + 0.5*z1"]])
    values = rng.uniform(0.2, 0.8, size=(500, 1))
    x = rng.uniform(0, 1, size=(500, 1))
    t = np.zeros(500)
    estimated = estimate_lipschitz(spec, x, t, values, rng, pairs=2000)
    assert estimated.c == pytest.approx(0.5)
    # |1 - z - w| over the hull [0.2, 0.8] stays below 0.6
    assert 0.0 < estimated.p <= 0.6 + 1e-12
    assert estimated.m == (0.0,)


def test_lipschitz_overruns_warn(caplog):
    declared = Lipschitz(c=0.1, m=(0.0,), p=1.0)
    estimated = Lipschitz(c=0.5, m=(0.0,), p=0.6)
    with caplog.at_level("WARNING", logger="convex_smp"):
        messages = lipschitz_overruns(declared, estimated)
    assert len(messages) == 1
    assert "c" in messages[0]
    assert "exceeds declared" in caplog.text


def test_compatibility_on_ball_with_radial_diffusion():
    K = Ball([0.0, 0.0], 1.0)
    # D = I + z z^T has every radial direction as an eigenvector on the sphere
    spec = _spec(D=[["1 + z1*z1", "z1*z2"], ["z1*z2", "1 + z2*z2"]])
    report = check_compatibility(spec, K, _samples(K, boundary=200))
    assert report.worst_D_residual <= 1e-12
    assert report.min_rayleigh_mu == pytest.approx(2.0)


def test_polytope_samples_cover_vertices(simplex):
    samples = _samples(simplex, boundary=4)
    vertices = {tuple(v) for v in np.round(simplex.vertices, 12)}
    sampled = {tuple(v) for v in np.round(samples.boundary, 12)}
    assert vertices <= sampled
    corner = [i for i, v in enumerate(samples.boundary) if np.allclose(v, [0.0, 0.0])][0]
    assert len(samples.normals[corner]) == 4
    assert isinstance(simplex, HPolytope)

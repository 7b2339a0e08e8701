import math

import numpy as np
import pytest

from convex_smp.convex import (
    Ball,
    ConvexDomainError,
    HPolytope,
    Intersection,
    InvalidBodyError,
    SupportingFunctional,
    body_from_config,
    contact_choice,
    distance_to_boundary,
    functional_value,
    infimum_over_functionals,
    inward_vector_samples,
    distance_bound_gap,
    nearest_boundary_point,
    signed_distance,
)
from convex_smp.convex import _distinct


def _sample_inside(K, rng, count, lo=-1.5, hi=1.5):
    pts = rng.uniform(lo, hi, size=(count * 20, K.dim))
    return pts[K.signed_distance(pts) >= 0][:count]


def _random_polytope(rng, k, facets):
    normals = rng.standard_normal((facets, k))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    offsets = -rng.uniform(0.5, 1.5, size=facets)
    return HPolytope(normals, offsets)


def _random_bounded_polytope(rng, k, extra):
    tilted = rng.standard_normal((extra, k))
    tilted /= np.linalg.norm(tilted, axis=1, keepdims=True)
    normals = np.vstack([np.eye(k), -np.eye(k), tilted])
    return HPolytope(normals, -rng.uniform(0.5, 1.5, size=len(normals)))


def _random_body(rng, k):
    kind = int(rng.integers(3))
    ball = Ball(0.2 * rng.uniform(-1, 1, size=k), float(rng.uniform(0.8, 1.5)))
    if kind == 0:
        return ball
    polytope = _random_bounded_polytope(rng, k, int(rng.integers(0, 4)))
    return polytope if kind == 1 else Intersection([ball, polytope])


def _inside_point(K, rng):
    direction = rng.standard_normal(K.dim)
    direction /= np.linalg.norm(direction)
    return K.interior_point + 0.9 * K.inradius * rng.uniform() * direction


def test_distance_center_of_unit_ball(unit_ball):
    assert distance_to_boundary(unit_ball, np.zeros(2)) == 1.0


def test_distance_to_nearest_box_facet(unit_box):
    assert distance_to_boundary(unit_box, np.array([0.25, 0.5])) == pytest.approx(0.25, abs=1e-15)


def test_distance_outside_raises_with_constraint(unit_box):
    with pytest.raises(ConvexDomainError) as info:
        distance_to_boundary(unit_box, np.array([1.5, 0.5]))
    assert info.value.value == pytest.approx(-0.5)
    assert "facet" in info.value.constraint


def test_random_polytope_distance_beats_sampled_boundary(rng):
    K = _random_polytope(rng, 3, 8)
    boundary = K.boundary_samples(2000, rng)
    for z in _sample_inside(K, rng, 20):
        d = distance_to_boundary(K, z)
        assert d <= np.min(np.linalg.norm(boundary - z, axis=1)) + 1e-9
        choice = nearest_boundary_point(K, z)
        assert abs(float(K.signed_distance(choice.v))) <= 1e-9
        assert np.linalg.norm(z - choice.v) == pytest.approx(d, abs=1e-10)


def test_infimum_over_functionals_matches_distance(rng):
    for _ in range(100):
        k = int(rng.integers(1, 5))
        K = _random_polytope(rng, k, int(rng.integers(k + 1, 2 * k + 4)))
        z = K.interior_point + 0.1 * K.inradius * rng.uniform(-1, 1, size=k)
        assert abs(infimum_over_functionals(K, z) - distance_to_boundary(K, z)) <= 1e-10


def test_infimum_symmetric_box_and_ball(unit_box, unit_ball):
    assert infimum_over_functionals(unit_box, np.array([0.5, 0.5])) == pytest.approx(0.5)
    assert infimum_over_functionals(unit_ball, np.array([0.3, 0.0])) == pytest.approx(0.7)


def test_nearest_point_box_center_is_lexicographic(unit_box):
    choice = nearest_boundary_point(unit_box, np.array([0.5, 0.5]))
    np.testing.assert_array_equal(choice.v, [0.0, 0.5])
    np.testing.assert_array_equal(choice.nu, [1.0, 0.0])
    assert not choice.unique


def test_nearest_point_ball_center(unit_ball):
    choice = nearest_boundary_point(unit_ball, np.zeros(2))
    np.testing.assert_array_equal(choice.v, [-1.0, 0.0])
    np.testing.assert_array_equal(choice.nu, [1.0, 0.0])
    assert choice.dist == 1.0


def test_nearest_point_unique_projection(unit_box):
    z = np.array([0.25, 0.5])
    choice = nearest_boundary_point(unit_box, z)
    np.testing.assert_allclose(choice.v, [0.0, 0.5])
    assert choice.unique
    # with dist > 0 the functional is forced to nu = (z - v) / dist
    np.testing.assert_array_equal(choice.nu, (z - choice.v) / choice.dist)
    assert functional_value(choice.functional, z) == pytest.approx(choice.dist, abs=1e-10)


def test_nearest_point_is_deterministic(simplex):
    z = np.array([0.2, 0.3])
    first = nearest_boundary_point(simplex, z)
    second = nearest_boundary_point(simplex, z.copy())
    assert first.v.tobytes() == second.v.tobytes()
    assert first.nu.tobytes() == second.nu.tobytes()


def test_projection_optimality_on_ball(unit_ball, rng):
    boundary = unit_ball.boundary_samples(10_000, rng)
    for z in _sample_inside(unit_ball, rng, 25):
        choice = nearest_boundary_point(unit_ball, z)
        assert np.linalg.norm(z - choice.v) <= np.min(np.linalg.norm(boundary - z, axis=1)) + 1e-6


def test_functional_value_affine():
    ell = SupportingFunctional(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
    assert functional_value(ell, np.array([0.3, 7.0])) == pytest.approx(0.3)
    assert functional_value(ell, ell.v) == 0.0


def test_facet_functional_supports_box(unit_box, rng):
    ell = SupportingFunctional(np.array([0.0, 0.5]), np.array([1.0, 0.0]))
    z = rng.uniform(0.0, 1.0, size=(1000, 2))
    assert np.all(ell(z) >= 0.0)


def test_functional_rejects_non_unit_normal():
    with pytest.raises(InvalidBodyError):
        SupportingFunctional(np.zeros(2), np.array([1.0, 1.0]))


def test_inward_vectors_smooth_points(unit_ball, unit_box):
    vectors = inward_vector_samples(unit_ball, np.array([1.0, 0.0]), 5)
    assert len(vectors) == 1
    np.testing.assert_allclose(vectors[0], [-1.0, 0.0])

    facet = inward_vector_samples(unit_box, np.array([0.5, 0.0]), 4)
    assert len(facet) == 1
    np.testing.assert_array_equal(facet[0], [0.0, 1.0])


def test_inward_vectors_box_vertex(unit_box, rng):
    vectors = inward_vector_samples(unit_box, np.array([0.0, 0.0]), 3)
    expected = [[1.0, 0.0], [0.0, 1.0], [math.sqrt(0.5), math.sqrt(0.5)]]
    np.testing.assert_allclose(np.array(vectors), expected, atol=1e-15)

    z = rng.uniform(0.0, 1.0, size=(10_000, 2))
    for nu in vectors:
        assert np.all(z @ nu >= 0.0)


def test_inward_vectors_off_boundary_raises(unit_box):
    with pytest.raises(ConvexDomainError):
        inward_vector_samples(unit_box, np.array([0.5, 0.5]), 2)


def test_supporting_property_for_sampled_functionals(simplex, rng):
    z = _sample_inside(simplex, rng, 10_000, lo=0.0, hi=1.0)
    for v in simplex.boundary_samples(16, rng):
        for nu in inward_vector_samples(simplex, v, 4):
            assert np.min(SupportingFunctional(v, nu)(z)) >= -1e-9


def test_distance_bound_gap_nonnegative(simplex, unit_ball, rng):
    assert distance_bound_gap(simplex, np.array([0.2, 0.3]), 16, rng) >= -1e-10
    assert distance_bound_gap(unit_ball, np.array([0.1, -0.4]), 64, rng) >= -1e-10


def test_intersection_distance_and_corner_normals(unit_ball):
    half_disc = Intersection([unit_ball, HPolytope([[0.0, 1.0]], [0.0])])
    assert distance_to_boundary(half_disc, np.array([0.0, 0.25])) == pytest.approx(0.25)
    assert distance_to_boundary(half_disc, np.array([0.0, 0.75])) == pytest.approx(0.25)

    # the corner (1, 0) merges the ball's radial normal with the half-plane normal
    vectors = inward_vector_samples(half_disc, np.array([1.0, 0.0]), 3)
    np.testing.assert_allclose(vectors[0], [-1.0, 0.0])
    np.testing.assert_allclose(vectors[1], [0.0, 1.0])
    assert len(vectors) == 3


def test_signed_distance_outside(unit_box, unit_ball):
    assert signed_distance(unit_box, np.array([-0.2, 0.5])) == pytest.approx(-0.2)
    assert signed_distance(unit_ball, np.array([2.0, 0.0])) == pytest.approx(-1.0)


def test_contact_choice_outside_uses_most_violated_facet(unit_box):
    choice = contact_choice(unit_box, np.array([-0.2, 0.5]))
    assert not choice.inside
    assert choice.dist == pytest.approx(-0.2)
    np.testing.assert_allclose(choice.v, [0.0, 0.5])
    np.testing.assert_array_equal(choice.nu, [1.0, 0.0])


def test_contact_choice_inside_matches_nearest(simplex):
    z = np.array([0.1, 0.6])
    assert contact_choice(simplex, z).v.tobytes() == nearest_boundary_point(simplex, z).v.tobytes()


def test_invalid_bodies():
    with pytest.raises(InvalidBodyError):
        HPolytope([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
    with pytest.raises(InvalidBodyError):
        Ball([0.0], -1.0)
    with pytest.raises(InvalidBodyError):
        HPolytope([[2.0, 0.0]], [0.0])


def test_body_from_config_variants():
    box = body_from_config({"type": "box", "lo": [0, 0], "hi": [1, 2]})
    assert box.diameter == pytest.approx(math.sqrt(5))

    halfline = body_from_config({"type": "hpoly", "normals": [[2]], "offsets": [0]})
    assert math.isinf(halfline.diameter)
    assert halfline.scale == 1.0

    ball = body_from_config({"type": "ball", "center": [0, 0, 0], "radius": 2})
    assert ball.scale == 4.0

    with pytest.raises(InvalidBodyError, match="missing field"):
        body_from_config({"type": "ball", "center": [0]})
    with pytest.raises(InvalidBodyError, match="Unknown body type"):
        body_from_config({"type": "cube"})


@pytest.mark.slow
def test_distance_and_projection_on_random_bodies():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        k = int(rng.integers(1, 5))
        K = _random_body(rng, k)
        z = _inside_point(K, rng)
        d = distance_to_boundary(K, z)
        assert abs(infimum_over_functionals(K, z) - d) <= 1e-10

        choice = nearest_boundary_point(K, z)
        assert np.linalg.norm(z - choice.v) == pytest.approx(d, abs=1e-10)
        boundary = K.boundary_samples(10_000, rng)
        assert d <= np.min(np.linalg.norm(boundary - z, axis=1)) + 1e-3


def test_boundary_samples_count_is_a_total(unit_box, rng):
    points = unit_box.boundary_samples(400, rng)
    # 4 vertices, 4 facet centroids, at most 100 feet per facet
    assert len(points) <= 408
    assert np.all(np.abs(unit_box.signed_distance(points)) <= 1e-9)


def test_boundary_samples_scale_to_ten_thousand(rng):
    K = HPolytope.box([-1.0, -1.0], [1.0, 1.0])
    points = K.boundary_samples(10_000, rng)
    assert len(points) > 1000
    assert np.all(np.abs(K.signed_distance(points)) <= 1e-9)


def test_distinct_keeps_first_of_each_cluster():
    vectors = [np.array([0.0]), np.array([0.6e-12]), np.array([1.2e-12]), np.array([1.0])]
    kept = _distinct(vectors)
    # 0.6e-12 duplicates 0.0; 1.2e-12 is only close to the dropped point
    assert [float(v[0]) for v in kept] == [0.0, 1.2e-12, 1.0]


def test_intersection_diameter(unit_ball):
    boxes = Intersection([HPolytope.box([0, 0], [2, 2]), HPolytope.box([1, 1], [3, 3])])
    assert boxes.diameter == pytest.approx(math.sqrt(2))
    lens = Intersection([unit_ball, Ball([1.5, 0.0], 1.0)])
    assert lens.diameter == 2.0

import copy
import dataclasses

import numpy as np
import pytest

from conftest import simulated
from convex_smp.checks import (
    CompatibilityViolation,
    distance_field,
    dump_node_fields,
    effective_coefficients,
    gamma_field,
    strong_mp_check,
    summarize_coefficients,
    weak_mp_check,
)
from convex_smp.scenarios import BUILTIN_SCENARIOS, scenario_from_dict
from convex_smp.solver import run_scenario


def _variant(name, **changes):
    data = copy.deepcopy(BUILTIN_SCENARIOS[name])
    data.update(changes)
    return scenario_from_dict(data)


def test_distance_field_heat_contacts_upper_facet(heat_run):
    scenario, traj, dfield = heat_run
    assert dfield.values.shape == (11, 101)
    inner = dfield.interior(dfield.values)
    u = traj.values[(slice(None),) + traj.grid.interior][..., 0]
    np.testing.assert_allclose(inner, 1.0 - u, atol=1e-12)
    assert np.all(dfield.interior(dfield.normal)[..., 0] == -1.0)
    assert np.all(dfield.inside)


def test_distance_field_rejects_dimension_mismatch(heat_run):
    _, traj, _ = heat_run
    with pytest.raises(ValueError):
        distance_field(traj, simulated("ball-sink")[0].convex_body)


@pytest.mark.parametrize("name", ["heat-interval", "ball-sink", "simplex-face", "anisotropic-2d"])
def test_weak_mp_holds_on_compatible_scenarios(name):
    scenario, traj, _ = simulated(name)
    report = weak_mp_check(traj, scenario.convex_body)
    assert report.passed
    assert report.status == "pass"
    assert report.worst_signed_distance >= -1e-8
    assert len(report.per_snapshot) == len(traj.snapshots)


def test_weak_mp_fails_for_outward_reaction(sink_run):
    scenario, traj, _ = sink_run
    report = weak_mp_check(traj, scenario.convex_body)
    assert not report.passed
    assert report.status == "fail"
    assert report.worst_signed_distance <= -0.05
    assert report.premise_worst == 0.0
    assert report.location.t > 0
    # the violation deepens with time
    values = [s.value for s in report.per_snapshot]
    assert values == sorted(values, reverse=True)


def test_weak_mp_not_applicable_when_data_leaves_body():
    scenario = _variant("heat-interval", initial=["1.2"], boundary=["1.2"])
    traj = run_scenario(scenario, t_end=0.02)
    weak = weak_mp_check(traj, scenario.convex_body)
    assert weak.status == "not_applicable"
    assert weak.passed
    assert weak.premise_worst == pytest.approx(-0.2)

    strong = strong_mp_check(distance_field(traj, scenario.convex_body), 1e-6, 1e-4, weak)
    assert strong.outcome == "not_applicable"


def test_strong_mp_never_touches_with_margin(heat_run):
    scenario, traj, dfield = heat_run
    weak = weak_mp_check(traj, scenario.convex_body)
    report = strong_mp_check(dfield, scenario.eps_touch, scenario.eps_flat, weak)
    assert report.passed
    assert report.outcome == "never_touches"
    assert report.margin >= 0.09
    assert report.touch_time is None


def test_strong_mp_simplex_face_is_flat():
    scenario, traj, dfield = simulated("simplex-face")
    report = strong_mp_check(dfield, scenario.eps_touch, scenario.eps_flat)
    assert report.outcome == "flat"
    assert report.touch_time == pytest.approx(0.01)
    assert report.worst_flatness <= 1e-8
    assert report.initial_slice_flat


def test_strong_mp_instant_detachment():
    scenario, traj, dfield = simulated("instant-detachment")
    report = strong_mp_check(dfield, scenario.eps_touch, scenario.eps_flat)
    assert report.outcome == "never_touches"
    # the t = 0 slice touches but lies outside the open time domain
    assert report.min_interior_distance[0].value == pytest.approx(0.0, abs=1e-12)
    assert all(m.value > 0 for m in report.min_interior_distance[1:])
    assert report.initial_slice_flat is None


def test_strong_mp_flags_touching_without_flatness(heat_run):
    _, _, dfield = heat_run
    values = dfield.values.copy()
    values[3, 50] = 0.0
    forged = dataclasses.replace(dfield, values=values)
    report = strong_mp_check(forged, 1e-6, 1e-4)
    assert not report.passed
    assert report.outcome == "not_flat"
    assert report.touch_time == pytest.approx(0.03)
    assert report.touch_location.node == [50]
    assert report.worst_flatness > 0.1
    assert 1 <= report.worst_flatness_location.snapshot <= 3


def test_gamma_field_constant_margin():
    scenario, traj, _ = simulated("heat-halfline")
    gamma = gamma_field(traj)
    assert gamma.shape == (11, 99)
    np.testing.assert_allclose(gamma, 0.1)


def test_gamma_field_includes_diffusion_term():
    scenario = _variant("heat-interval", lipschitz={"c": 2.0, "m": [0.0], "p": 0.0})
    traj = run_scenario(scenario, t_end=0.0)
    gamma = gamma_field(traj)
    # u = 0.5 + 0.4 sin(pi x) has |u_xx| close to 0.4 pi^2 at the center
    assert gamma[0, 49] == pytest.approx(2.0 * 0.4 * np.pi**2, rel=1e-3)


def test_effective_coefficients_follow_contact_facet():
    scenario, traj, dfield = simulated("diagonal-box")
    coeffs = effective_coefficients(traj, dfield)
    np.testing.assert_array_equal(coeffs.mu, 1.0)
    np.testing.assert_array_equal(coeffs.lam, 0.0)
    np.testing.assert_array_equal(coeffs.alpha[..., 0, 0], 1.0)


def test_effective_coefficients_on_second_facet():
    scenario = _variant(
        "diagonal-box", initial=["0.5", "0.1 + 0.1*sin(pi*x1)"], boundary=["0.5", "0.1"]
    )
    traj = run_scenario(scenario)
    coeffs = effective_coefficients(traj, distance_field(traj, scenario.convex_body))
    np.testing.assert_array_equal(coeffs.mu, 4.0)
    summary = summarize_coefficients(coeffs, scenario.system.lipschitz)
    assert summary.mu_min == summary.mu_max == 4.0
    assert summary.alpha_floor_min == pytest.approx(4.0)
    assert summary.mu_over_norm_max == pytest.approx(1.0)
    assert summary.lipschitz_estimated is None


def test_effective_coefficients_raise_on_incompatible_normal():
    scenario, traj, dfield = simulated("coupled-box")
    with pytest.raises(CompatibilityViolation) as info:
        effective_coefficients(traj, dfield)
    assert info.value.matrix == "D"
    assert info.value.residual >= 0.5 - 1e-9
    assert info.value.snapshot == 0


def test_dump_node_fields(heat_run, tmp_path):
    _, traj, dfield = heat_run
    coeffs = effective_coefficients(traj, dfield)
    path = dump_node_fields(dfield, coeffs, tmp_path)
    lines = path.read_text().splitlines()
    assert lines[0] == "snapshot,t,x1,dbar,gamma,mu,lambda1"
    assert len(lines) == 1 + 11 * 99

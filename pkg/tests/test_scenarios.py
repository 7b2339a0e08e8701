import copy
import json

import pytest
import yaml

from convex_smp.config import Config, load_config, validate_config
from convex_smp.scenarios import (
    BUILTIN_SCENARIOS,
    ScenarioError,
    builtin_names,
    describe,
    divides,
    load_scenario,
    scenario_from_dict,
    snapshot_count,
)


def _heat(**changes):
    data = copy.deepcopy(BUILTIN_SCENARIOS["heat-interval"])
    data.update(changes)
    return data


def test_required_builtins_present():
    required = {"heat-interval", "ball-sink", "simplex-face", "anisotropic-2d", "incompatible-sink"}
    assert required <= set(builtin_names())


@pytest.mark.parametrize("name", builtin_names())
def test_builtins_validate(name):
    scenario = load_scenario(name)
    assert scenario.name == name
    assert scenario.convex_body.dim == scenario.k
    assert scenario.system.n == scenario.n


def test_anisotropic_builtin_has_mixed_term():
    scenario = load_scenario("anisotropic-2d")
    assert scenario.n == 2
    assert scenario.a[0][1] != "0"


def test_loading_builtin_does_not_share_state():
    scenario = load_scenario("heat-interval")
    scenario.initial[0] = "0"
    assert BUILTIN_SCENARIOS["heat-interval"]["initial"] == ["0.5 + 0.4*sin(pi*x1)"]


def test_data_count_mismatch():
    data = copy.deepcopy(BUILTIN_SCENARIOS["ball-sink"])
    data["initial"] = ["0.5"]
    with pytest.raises(ScenarioError, match="initial data: expected 2 expressions, got 1"):
        scenario_from_dict(data, source="ball")


def test_state_variable_rejected_in_initial_data():
    with pytest.raises(ScenarioError, match="initial data u1"):
        scenario_from_dict(_heat(initial=["z1 + x1"]))


def test_time_allowed_in_boundary_data():
    scenario = scenario_from_dict(_heat(boundary=["0.5 + 0*t"]))
    assert scenario.problem().boundary[0].variables() == frozenset({"t"})


def test_unknown_identifier_in_coefficients():
    with pytest.raises(ScenarioError, match="Invalid scenario"):
        scenario_from_dict(_heat(phi=["y"]))


def test_unknown_fields_rejected():
    with pytest.raises(ScenarioError, match="tolerances"):
        scenario_from_dict(_heat(tolerances={"eigen": 1e-8, "bogus": 1}))
    with pytest.raises(ScenarioError):
        scenario_from_dict(_heat(colour="blue"))


def test_body_dimension_must_match_k():
    with pytest.raises(ScenarioError, match="body"):
        scenario_from_dict(_heat(body={"type": "ball", "center": [0, 0], "radius": 1}))


def test_interval_must_divide_horizon():
    assert divides(0.01, 0.1)
    assert not divides(0.03, 0.1)
    with pytest.raises(ScenarioError, match="snapshot_interval"):
        scenario_from_dict(_heat(snapshot_interval=0.03))


def test_lipschitz_m_defaults_to_zero():
    scenario = scenario_from_dict(_heat(lipschitz={"c": 0.0, "p": 0.5}))
    assert scenario.lipschitz.m == [0.0]
    assert scenario.system.lipschitz.p == 0.5


def test_problem_overrides():
    scenario = load_scenario("heat-interval")
    assert scenario.problem(t_end=0.05).t_end == 0.05
    assert scenario.problem(h=0.02).grid.points == (51,)
    assert scenario.problem().canonical["domain"]["points"] == [101]
    with pytest.raises(ScenarioError, match="not a multiple"):
        scenario.problem(t_end=0.015)
    with pytest.raises(ScenarioError):
        scenario.problem(t_end=-0.1)


def test_tolerances_scale_with_body():
    scenario = load_scenario("heat-interval")
    assert scenario.eps_touch == pytest.approx(1e-6 * scenario.scale)
    assert scenario.eps_flat == pytest.approx(1e-4 * scenario.scale)


def test_load_json_and_yaml_files(tmp_path):
    data = _heat()
    data.pop("name")
    json_path = tmp_path / "mine.json"
    json_path.write_text(json.dumps(data))
    assert load_scenario(json_path).name == "mine"

    yaml_path = tmp_path / "other.yaml"
    yaml_path.write_text(yaml.safe_dump(data))
    scenario = load_scenario(str(yaml_path))
    assert scenario.name == "other"
    assert scenario.phi == ["0"]


def test_load_errors(tmp_path):
    with pytest.raises(ScenarioError, match="Built-ins"):
        load_scenario("no-such-scenario")

    bad = tmp_path / "bad.json"
    bad.write_text("{\"n\": 1,")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(bad)

    text = tmp_path / "scenario.txt"
    text.write_text("n: 1")
    with pytest.raises(ScenarioError, match="Unsupported"):
        load_scenario(text)

    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ScenarioError, match="mapping"):
        load_scenario(listing)


def test_describe_and_snapshot_count():
    scenario = load_scenario("heat-interval")
    assert snapshot_count(scenario) == 11
    line = describe(scenario)
    assert line.startswith("n=1 k=1 K=box t_end=0.1")


def test_config_defaults_and_validation(tmp_path):
    config = load_config()
    assert isinstance(config, Config)
    assert config.report_format == "json"
    assert validate_config(config) == []

    blocker = tmp_path / "file"
    blocker.write_text("")
    errors = validate_config(
        load_config(output_dir=blocker, report_format="xml", h=0.0, t_end=-1.0, tol=-1.0, seed=-1)
    )
    assert len(errors) == 6
    assert any("not a directory" in e for e in errors)


def test_config_log_level_from_environment(monkeypatch):
    monkeypatch.setenv("CONVEX_SMP_LOG", "debug")
    assert Config().log_level == "debug"

import json

import pytest

from convex_smp.config import load_config
from convex_smp.pipeline import COMMAND_STAGES, VerificationPipeline
from convex_smp.scenarios import load_scenario

REPORT_FILES = {
    "compatibility.json",
    "weak_mp.json",
    "strong_mp.json",
    "ell_residuals.json",
    "supersolution.json",
}


def _run(tmp_path, name, command="all", **overrides):
    config = load_config(output_dir=tmp_path, **overrides)
    return VerificationPipeline(config).run(load_scenario(name), command)


def test_all_on_heat_passes_and_writes_five_reports(tmp_path):
    results = _run(tmp_path, "heat-interval")
    assert results["exit_code"] == 0
    assert results["status"] == "completed"
    assert {p.name for p in tmp_path.iterdir()} == REPORT_FILES
    assert [r["check"] for r in results["reports"]] == [
        "compatibility", "weak_mp", "strong_mp", "ell_residuals", "supersolution"
    ]
    assert list(results["stages"]) == list(COMMAND_STAGES["all"])


def test_all_is_byte_reproducible(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    _run(first, "heat-halfline", t_end=0.05)
    _run(second, "heat-halfline", t_end=0.05)
    for name in REPORT_FILES:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_simulate_writes_snapshots_and_manifest(tmp_path):
    results = _run(tmp_path, "heat-interval", command="simulate", t_end=0.02)
    assert results["exit_code"] == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"snapshot_0000.csv", "snapshot_0001.csv", "snapshot_0002.csv",
                     "manifest.json"}
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["spec_hash"] == results["stages"]["simulate"]["spec_hash"]


def test_check_compat_on_incompatible_sink(tmp_path):
    results = _run(tmp_path, "incompatible-sink", command="check-compat")
    assert results["exit_code"] == 2
    report = json.loads((tmp_path / "compatibility.json").read_text())
    assert report["pass"] is False
    assert report["worst_phi_deficit"] == -1.0
    assert report["worst_phi_location"]["v"] == [0.0]


def test_all_on_incompatible_sink_reports_every_failure(tmp_path):
    results = _run(tmp_path, "incompatible-sink")
    assert results["exit_code"] == 2
    assert results["status"] == "failed"
    verdicts = {r["check"]: r["pass"] for r in results["reports"]}
    assert verdicts["compatibility"] is False
    assert verdicts["weak_mp"] is False
    assert verdicts["ell_residuals"] is False


def test_contact_normal_violation_stops_the_run(tmp_path):
    results = _run(tmp_path, "coupled-box")
    assert results["exit_code"] == 2
    assert results["status"] == "stopped"
    assert "left eigenvector of D" in results["error"]
    assert "viscosity" not in results["stages"]


def test_csv_summary_format(tmp_path):
    results = _run(tmp_path, "heat-interval", command="verify-mp", report_format="csv-summary")
    assert results["exit_code"] == 0
    assert {p.name for p in tmp_path.iterdir()} == {"summary.csv"}
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == "check,pass,status,worst,location"
    assert [line.split(",")[0] for line in lines[1:]] == ["weak_mp", "strong_mp"]


def test_dump_fields_adds_node_fields(tmp_path):
    results = _run(tmp_path, "heat-interval", command="verify-viscosity", t_end=0.03,
                   dump_fields=True)
    assert results["exit_code"] == 0
    assert "node_fields.csv" in results["artifacts"]
    assert (tmp_path / "manifest.json").exists()


def test_tolerance_override_is_used(tmp_path):
    _run(tmp_path, "heat-halfline", command="verify-viscosity", t_end=0.05, tol=0.25)
    report = json.loads((tmp_path / "ell_residuals.json").read_text())
    assert report["tolerance"] == 0.25


def test_solver_failure_is_an_error(tmp_path):
    scenario = load_scenario("heat-interval")
    scenario.initial[0] = "1/(x1 - 0.5)"
    config = load_config(output_dir=tmp_path)
    results = VerificationPipeline(config).run(scenario, "simulate")
    assert results["exit_code"] == 1
    assert results["status"] == "error"


def test_unknown_command(tmp_path):
    with pytest.raises(ValueError, match="Unknown command"):
        VerificationPipeline(load_config(output_dir=tmp_path)).run(
            load_scenario("heat-interval"), "prove"
        )


@pytest.mark.slow
@pytest.mark.parametrize(
    "name",
    ["heat-interval", "ball-sink", "simplex-face", "anisotropic-2d", "heat-halfline",
     "instant-detachment", "diagonal-box"],
)
def test_all_passes_on_compatible_builtins(tmp_path, name):
    results = _run(tmp_path, name)
    failed = [r["check"] for r in results["reports"] if not r["pass"]]
    assert results["exit_code"] == 0, failed

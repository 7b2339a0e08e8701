import csv
import io
import json
import math

import pytest

from convex_smp.reports import (
    Location,
    SnapshotValue,
    StrongMPReport,
    WeakMPReport,
    dumps,
    emit_report,
    load_report,
    report_to_json,
    summary_csv,
)
from convex_smp.utils import format_float


def _weak(passed=True, worst=-1e-12):
    return WeakMPReport(
        passed=passed,
        status="pass" if passed else "fail",
        tolerance=1e-8,
        worst_signed_distance=worst,
        location=Location(x=[0.5], t=0.1, node=[50], snapshot=10),
        premise_worst=0.0,
        per_snapshot=[SnapshotValue(t=0.0, value=0.0), SnapshotValue(t=0.1, value=worst)],
    )


def test_format_float_round_trips():
    for value in [0.1, 1 / 3, -2.5e-17, 123456789.123456789, math.pi]:
        assert float(format_float(value)) == value


def test_dumps_layout():
    text = dumps({"a": 1, "b": [1.0, 2.5], "c": None, "d": True, "e": {}, "f": []})
    assert json.loads(text) == {"a": 1, "b": [1.0, 2.5], "c": None, "d": True, "e": {}, "f": []}
    assert text.endswith("\n")
    assert '"b": [1, 2.5]' in text


def test_dumps_non_finite_as_null():
    assert json.loads(dumps({"x": float("nan"), "y": float("inf")})) == {"x": None, "y": None}


def test_dumps_rejects_unknown_types():
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_report_json_uses_pass_key_and_field_order():
    data = json.loads(report_to_json(_weak()))
    assert list(data)[:3] == ["check", "pass", "status"]
    assert data["check"] == "weak_mp"
    assert data["pass"] is True
    assert data["per_snapshot"][1]["value"] == -1e-12


def test_report_reload_is_field_by_field_equal(tmp_path):
    report = _weak(worst=-0.123456789012345678)
    path = emit_report(report, tmp_path)
    assert path.name == "weak_mp.json"
    reloaded = WeakMPReport.model_validate(load_report(path))
    assert reloaded == report


def test_summary_row_and_csv():
    strong = StrongMPReport(
        passed=True, status="pass", outcome="never_touches", eps_touch=1e-6, eps_flat=1e-4,
        margin=0.138,
    )
    text = summary_csv([_weak(passed=False, worst=-0.09), strong])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["check", "pass", "status", "worst", "location"]
    assert rows[1][:4] == ["weak_mp", "false", "fail", "-0.089999999999999997"]
    assert json.loads(rows[1][4])["node"] == [50]
    assert rows[2] == ["strong_mp", "true", "pass", "0.13800000000000001", ""]


def test_emit_report_formats(tmp_path):
    csv_path = emit_report(_weak(), tmp_path, fmt="csv-summary")
    assert csv_path.name == "weak_mp.csv"
    assert csv_path.read_text().startswith("check,pass,status,worst,location\n")
    with pytest.raises(ValueError, match="csv-summary"):
        emit_report(_weak(), tmp_path, fmt="xml")

import json

import pytest

from osodd.errors import IoFailure, SchemaMismatch
from osodd.report import MetricReport, emit_report, load_report, to_json, to_text


def sample(**kw):
    base = dict(task_id=1, map_previous=None, map_current=0.5, udr=0.75, udp=None, acc=1 / 3,
                nmi=0.25, purity=0.5, k_est=4, counts={"b": 2, "a": 1}, config={"seed": 0},
                wall_time_seconds=1.234)
    base.update(kw)
    return MetricReport(**base)


def test_none_renders_as_null_and_na():
    doc = json.loads(to_json(sample()))
    assert doc["udp"] is None and doc["map_previous"] is None
    assert "n/a" in [line.split()[-1] for line in to_text(sample()).splitlines() if line.startswith("UDP")]


def test_fixed_float_format_and_timing():
    text = to_json(sample())
    assert '"acc": 0.333333' in text
    assert "wall_time_seconds" not in text
    assert '"wall_time_seconds": 1.234000' in to_json(sample(), include_timing=True)


def test_emissions_are_byte_identical(tmp_path):
    emit_report(sample(), tmp_path / "a.json")
    emit_report(sample(wall_time_seconds=9.0), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_text_table_rows():
    labels = [line.split("  ")[0].strip() for line in to_text(sample()).splitlines()]
    for row in ("UDR", "UDP", "mAP (current known)", "mAP (previous known)", "ACC", "NMI", "Purity", "k_est"):
        assert row in labels


def test_load_round_trip(tmp_path):
    emit_report(sample(acc=0.5), tmp_path / "r.json")
    back = load_report(tmp_path / "r.json")
    assert back == sample(acc=0.5, wall_time_seconds=None)
    emit_report(sample(), tmp_path / "t.txt", fmt="text")


def test_load_errors(tmp_path):
    (tmp_path / "v.json").write_text('{"version": 2, "task_id": 1}')
    with pytest.raises(SchemaMismatch):
        load_report(tmp_path / "v.json")
    (tmp_path / "x.json").write_text('{"version": 1, "task_id": 1, "surprise": 0}')
    with pytest.raises(SchemaMismatch):
        load_report(tmp_path / "x.json")
    with pytest.raises(IoFailure):
        emit_report(sample(), tmp_path / "missing" / "r.json")


def test_validation():
    with pytest.raises(ValueError):
        sample(acc=1.5)
    with pytest.raises(ValueError):
        to_json(sample(config={"x": float("nan")}))

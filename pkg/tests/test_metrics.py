import json

import pytest

from multipliers import get_model, get_subject
from multipliers.aggregate import build_plan
from multipliers.metrics import (
    check_published_nmed,
    emit_report,
    error_distance,
    internal_consistency,
    load_reports,
    range_histogram,
    render_report,
    reproduce_reference,
    sweep,
)
from multipliers.mulcore import MultiplierModel
from utils.errors import DomainError, WidthCapError
from utils.provenance import build_provenance


def test_mul3x3_1_metrics():
    report = sweep(get_model("mul3x3_1"))
    assert report.n == 3
    assert report.pairs == 64
    assert report.mismatch_count == 6
    assert report.er == 6 / 64
    assert report.ed_sum == 72
    assert report.med == 1.125
    assert report.nmed == 1.125 / 49
    assert report.max_ed == 20
    assert report.ed_histogram == {8: 2, 12: 3, 20: 1}


def test_mul3x3_2_metrics():
    report = sweep(get_model("mul3x3_2"))
    assert report.mismatch_count == 6
    assert report.ed_sum == 32
    assert report.med == 0.5
    assert report.ed_histogram == {4: 4, 8: 2}


@pytest.mark.parametrize("name", ["exact3", "exact8", "exact8x8_agg"])
def test_exact_models_have_no_error(name):
    report = sweep(get_subject(name))
    assert report.er == 0.0
    assert report.med == 0.0
    assert report.mred == 0.0
    assert report.ed_histogram == {}


@pytest.mark.parametrize("name", ["mul3x3_1", "mul3x3_2", "expr3x3_1", "mul8x8_1", "mul8x8_2", "mul8x8_3"])
def test_reports_are_internally_consistent(name):
    report = sweep(get_subject(name))
    assert internal_consistency(report)


def test_consistency_check_catches_a_bad_report():
    report = sweep(get_model("mul3x3_1"))
    assert not internal_consistency(report.model_copy(update={"med": 1.0}))
    assert not internal_consistency(report.model_copy(update={"ed_histogram": {8: 2}}))


def test_aggregated_sweep_uses_every_pair():
    report = sweep(build_plan(1), threads=2)
    assert report.model_name == "mul8x8_1"
    assert report.n == 8
    assert report.pairs == 65536
    assert report.er > 0


def test_variant_3_has_larger_error_than_variant_2():
    assert sweep(build_plan(3)).med > sweep(build_plan(2)).med


def test_sweep_caps():
    uneven = MultiplierModel("uneven", 3, 2, 5, lambda a, b: a * b)
    with pytest.raises(DomainError):
        sweep(uneven)
    wide = MultiplierModel("wide", 13, 13, 26, lambda a, b: a * b)
    with pytest.raises(WidthCapError):
        sweep(wide)


def test_flags_name_the_reference_disagreements():
    assert any("38" in flag and "46" in flag for flag in sweep(get_model("mul3x3_2")).flags)
    assert any("(2,2)" in flag for flag in sweep(get_model("mul3x3_1")).flags)
    assert sweep(get_model("exact3")).flags == []
    assert any("38" in flag for flag in sweep(build_plan(3)).flags)


def test_json_report_round_trip(tmp_path):
    reports = [sweep(get_model("mul3x3_1")), sweep(get_model("mul3x3_2"))]
    path = tmp_path / "reports.json"
    emit_report(reports, str(path), "json")

    payload = json.loads(path.read_text())
    assert payload["provenance"]["index_map"].startswith("M0=(A low,B low)")
    assert payload["reports"][0]["model_name"] == "mul3x3_1"

    provenance, loaded = load_reports(str(path))
    assert loaded == reports
    assert provenance == build_provenance()


def test_csv_report_round_trip(tmp_path):
    reports = [sweep(get_model("mul3x3_1")), sweep(get_model("exact3"))]
    path = tmp_path / "reports.csv"
    emit_report(reports, str(path), "csv")

    header = path.read_text().splitlines()[0]
    assert header.startswith("model_name,n,pairs,er,med,nmed,mred")
    assert header.endswith(",provenance")

    _, loaded = load_reports(str(path))
    assert [r.model_name for r in loaded] == ["mul3x3_1", "exact3"]
    assert loaded[0].ed_histogram == {8: 2, 12: 3, 20: 1}
    assert loaded[0].med == pytest.approx(1.125)
    assert loaded[0].flags == reports[0].flags


def test_unknown_format():
    with pytest.raises(DomainError):
        render_report([sweep(get_model("exact2"))], "xml")


def test_range_histogram():
    assert range_histogram([0, 5, 31, 32, 200], [(0, 31), (32, 255)]) == [0.6, 0.4]
    assert range_histogram([100, 100], [(96, 159), (0, 95)]) == [1.0, 0.0]
    with pytest.raises(DomainError):
        range_histogram([], [(0, 31)])
    with pytest.raises(DomainError):
        range_histogram([1], [(40, 31)])


def test_published_nmed_agrees_with_published_med():
    rows = check_published_nmed()
    assert {row["design"] for row in rows} == {"mul8x8_1", "mul8x8_2", "mul8x8_3", "PKM"}
    assert all(row["consistent"] for row in rows)


def test_reproduction_table_ranks_every_hypothesis():
    reproduction = reproduce_reference()
    table = reproduction.table
    assert len(table) == 30
    assert sorted(reproduction.closest) == [1, 2, 3]
    assert int(table["closest"].sum()) == 3
    assert int(table["default_map"].sum()) == 3
    for variant, label in reproduction.closest.items():
        assert label in set(table.loc[table["variant"] == variant, "hypothesis"])
    assert isinstance(reproduction.passed, bool)


def test_error_distance():
    assert error_distance(29, 49) == 20
    assert error_distance(40, 36) == 4
    assert error_distance(17, 17) == 0

import pytest

from multipliers import get_model
from multipliers.logicsynth import (
    SopCover,
    cost_estimate,
    covers_to_table,
    emit_verilog,
    minimize,
    published_covers,
    read_pla,
    read_verilog,
    synthesize,
    verify_equivalence,
    write_pla,
)
from multipliers.mulcore import MultiplierModel, TruthTable, enumerate_table
from utils.errors import DataFormatError, DomainError, WidthCapError


@pytest.fixture(scope="module")
def mul3x3_1_table():
    return enumerate_table(get_model("mul3x3_1"))


def _covers(table):
    return [minimize(table, bit) for bit in range(table.num_inputs)]


def test_lowest_product_bit_is_a_single_and():
    table = enumerate_table(get_model("exact3"))
    assert minimize(table, 0).cubes == ("--1--1",)


def test_unused_output_bit_is_constant_zero(mul3x3_1_table):
    cover = minimize(mul3x3_1_table, 5)
    assert cover.cubes == ()
    assert cover.is_constant
    assert minimize(enumerate_table(get_model("exact3")), 5).cubes != ()


def test_constant_one_column():
    table = TruthTable(1, 1, 1, (1, 1, 1, 1))
    assert minimize(table, 0).cubes == ("--",)


def test_output_index_domain(mul3x3_1_table):
    with pytest.raises(DomainError):
        minimize(mul3x3_1_table, 6)


@pytest.mark.parametrize("name", ["exact2", "exact3", "mul3x3_1", "mul3x3_2"])
def test_minimized_covers_are_sound(name):
    table = enumerate_table(get_model(name))
    covers = _covers(table)
    for cover in covers:
        assert verify_equivalence(cover, table, cover.output_index) == (True, None)
    assert covers_to_table(covers, get_model(name).width_a).entries == table.entries


def test_dropping_a_cube_breaks_equivalence():
    table = enumerate_table(get_model("exact3"))
    cover = minimize(table, 1)
    assert len(cover.cubes) > 1
    broken = SopCover(cover.num_inputs, 1, cover.cubes[1:])
    equivalent, witness = verify_equivalence(broken, table, 1)
    assert not equivalent
    a, b = witness
    assert (a * b >> 1) & 1 == 1


def test_published_expressions_disagree_only_on_bit_1(mul3x3_1_table):
    results = [verify_equivalence(cover, mul3x3_1_table, cover.output_index) for cover in published_covers()]
    assert [ok for ok, _ in results] == [True, False, True, True, True, True]
    assert results[1][1] == (2, 2)


def test_cover_rejects_bad_cubes():
    with pytest.raises(DomainError):
        SopCover(3, 0, ("1x0",))
    with pytest.raises(DomainError):
        SopCover(2, 0, ("--", "1-"))


def test_cost_of_a_single_and():
    cost = cost_estimate([SopCover(6, 0, ("--1--1",))])
    assert (cost.literal_count, cost.cube_count, cost.two_level_depth, cost.output_count) == (2, 1, 2, 1)


def test_constant_outputs_cost_nothing():
    cost = cost_estimate([SopCover(2, 0, ()), SopCover(2, 1, ("--",))])
    assert (cost.literal_count, cost.cube_count, cost.two_level_depth) == (0, 0, 0)


def test_verilog_round_trip(mul3x3_1_table):
    covers = _covers(mul3x3_1_table)
    text = emit_verilog("mul3x3_1", covers, 3)
    assert "module mul3x3_1(a, b, o);" in text
    assert "  input [2:0] a;" in text
    assert "  output [5:0] o;" in text
    assert "  assign o[0] = (a[0] & b[0]);" in text
    assert "  assign o[5] = 1'b0;  // constant output bit" in text
    assert text.rstrip().endswith("endmodule")

    netlist = read_verilog(text)
    assert netlist.name == "mul3x3_1"
    assert (netlist.width_a, netlist.width_b) == (3, 3)
    assert list(netlist.covers) == covers


def test_verilog_writer_checks_its_inputs(mul3x3_1_table):
    covers = _covers(mul3x3_1_table)
    with pytest.raises(DomainError):
        emit_verilog("3bad", covers)
    with pytest.raises(DomainError):
        emit_verilog("gap", covers[:2] + covers[3:])


def test_verilog_reader_rejects_other_netlists():
    with pytest.raises(DataFormatError):
        read_verilog("module m(a, b, o);\n  wire x;\nendmodule\n")
    with pytest.raises(DataFormatError):
        read_verilog("module m(a, b, o);\n  input [0:0] a;\n  input [0:0] b;\n  output [1:0] o;\n"
                     "  assign o[0] = (a[0] & b[0]);\nendmodule\n")


def test_pla_round_trip(mul3x3_1_table):
    covers = _covers(mul3x3_1_table)
    text = write_pla(covers, 3)
    lines = text.splitlines()
    assert lines[:4] == [".i 6", ".o 6", ".ilb a[2] a[1] a[0] b[2] b[1] b[0]", ".ob o[0] o[1] o[2] o[3] o[4] o[5]"]
    assert lines[5] == "--1--1 100000"
    assert lines[-1] == ".e"
    assert read_pla(text) == covers


def test_pla_reader_checks_row_count():
    with pytest.raises(DataFormatError):
        read_pla(".i 2\n.o 1\n.p 2\n11 1\n.e\n")
    with pytest.raises(DataFormatError):
        read_pla(".i 2\n.o 1\n111 1\n.e\n")


def test_synthesize_mul3x3_1():
    report, covers = synthesize(get_model("mul3x3_1"), threads=2)
    assert len(covers) == 6
    assert all(output.equivalent for output in report.outputs)
    assert [output.published_equivalent for output in report.outputs] == [True, False, True, True, True, True]
    assert report.outputs[1].published_counterexample == (2, 2)
    assert report.outputs[5].cubes == []
    assert report.published_cost is not None
    assert report.cost.literal_count == sum(cover.literal_count for cover in covers)


def test_synthesize_exact_design_has_no_published_comparison():
    report, _ = synthesize(get_model("exact3"))
    assert report.published_cost is None
    assert all(output.published_cubes is None for output in report.outputs)


def test_minimization_cap():
    wide = MultiplierModel("wide", 7, 6, 13, lambda a, b: a * b)
    with pytest.raises(WidthCapError):
        synthesize(wide)


def test_approximate_design_is_cheaper_than_the_exact_one():
    approximate, _ = synthesize(get_model("mul3x3_1"))
    exact, _ = synthesize(get_model("exact3"))
    assert approximate.cost.literal_count < exact.cost.literal_count
    assert (approximate.cost.literal_count, exact.cost.literal_count) == (82, 143)

import numpy as np
import pytest

from multipliers.aggregate import (
    CANDIDATE_SEGMENT_WIDTHS,
    LUT_HEADER,
    LUT_MAGIC,
    SegmentSplit,
    aggregate_mul,
    aggregate_table,
    build_exact_plan,
    build_plan,
    describe,
    export_lut16,
    hypothesis_plans,
    product_error_terms,
    prune,
    read_lut16,
)
from multipliers.mulcore import operand_grid
from utils.errors import DataFormatError, DomainError


def test_default_split():
    split = SegmentSplit.default()
    assert split.widths == (3, 3, 2)
    assert [(s.name, s.offset) for s in split.segments_a] == [("low", 0), ("mid", 3), ("high", 6)]


@pytest.mark.parametrize("widths", [(3, 3, 3), (4, 4), (1, 3, 3)])
def test_bad_splits_are_rejected(widths):
    with pytest.raises(DomainError):
        SegmentSplit.from_widths(widths)


@pytest.mark.parametrize("widths", CANDIDATE_SEGMENT_WIDTHS)
def test_exact_plan_reproduces_the_product(widths):
    plan = build_exact_plan(SegmentSplit.from_widths(widths))
    a, b = operand_grid(8, 8)
    assert np.array_equal(aggregate_table(plan), a * b)


def test_plans_use_the_exact_2x2_on_the_two_bit_pair():
    for variant in (1, 2, 3):
        plan = build_plan(variant)
        high_high = plan.product("M8")
        assert high_high.model.name == "exact2"
        assert high_high.shift == 12
        others = {p.model.name for p in plan.products if p.id != "M8"}
        assert others == {"mul3x3_1" if variant == 1 else "mul3x3_2"}


def test_variant_3_prunes_one_product():
    plan = build_plan(3)
    assert plan.name == "mul8x8_3"
    assert plan.pruned == frozenset({"M2"})
    assert len(plan.active_products) == 8


def test_unknown_variant():
    with pytest.raises(DomainError):
        build_plan(4)


def test_pruning_the_low_low_product_is_refused():
    with pytest.raises(DomainError):
        prune(build_plan(2), "M0")


def test_prune_is_idempotent():
    once = prune(build_plan(2), "M5")
    assert prune(once, "M5") == once


def test_pruning_is_monotone():
    full = aggregate_table(build_plan(2))
    pruned = aggregate_table(build_plan(3))
    assert np.all(pruned <= full)


def test_small_operands_only_see_the_low_low_product():
    plan = build_plan(1)
    assert aggregate_mul(plan, 7, 7) == 29
    assert aggregate_mul(plan, 5, 3) == 15


def test_operand_domain():
    with pytest.raises(DomainError):
        aggregate_mul(build_plan(1), 256, 0)


def test_table_is_independent_of_thread_count():
    plan = build_plan(1)
    assert np.array_equal(aggregate_table(plan, threads=1), aggregate_table(plan, threads=4))


def test_error_terms_sum_to_the_total_error():
    plan = build_plan(2)
    a, b = operand_grid(8, 8)
    terms = product_error_terms(plan)
    assert np.array_equal(sum(terms.values()), aggregate_table(plan) - a * b)
    assert not np.any(terms["M8"])


@pytest.mark.parametrize("variant", [1, 2])
def test_error_comes_only_from_the_low_and_mid_products(variant):
    terms = product_error_terms(build_plan(variant))
    assert {product_id for product_id, term in terms.items() if np.any(term)} == {"M0", "M1", "M3", "M4"}


def test_pruned_variant_matches_variant_2_below_64():
    full = aggregate_table(build_plan(2)).reshape(256, 256)
    pruned = aggregate_table(build_plan(3)).reshape(256, 256)
    assert np.array_equal(pruned[:, :64], full[:, :64])
    assert not np.array_equal(pruned[:, 64:], full[:, 64:])


def test_mid_segment_product_is_shifted_by_three():
    assert aggregate_mul(build_plan(1), 7, 56) == 232


@pytest.mark.parametrize("variant", [1, 2])
def test_pruning_the_other_cross_product_is_monotone(variant):
    full = aggregate_table(build_plan(variant))
    pruned = aggregate_table(prune(build_plan(variant), "M6"))
    assert np.all(pruned <= full)
    assert np.any(pruned < full)


def test_describe_lists_every_product():
    text = describe(build_plan(3))
    lines = text.splitlines()
    assert lines[0].startswith("# plan mul8x8_3 variant 3")
    assert "M0=(A low,B low)" in lines[1]
    assert lines[2] == "M0 A[2:0] B[2:0] mul3x3_2 0 active"
    assert lines[4] == "M2 A[2:0] B[7:6] mul3x3_2 6 pruned"
    assert len(lines) == 11


def test_lut_round_trip(tmp_path):
    path = tmp_path / "mul8x8_3.lut"
    export_lut16(build_plan(3), str(path))
    raw = path.read_bytes()
    assert len(raw) == 16 + 4 * 65536
    assert raw[:8] == LUT_MAGIC

    header, table = read_lut16(str(path))
    assert (header.width_a, header.width_b, header.out_width, header.variant) == (8, 8, 17, 3)
    assert header.pruned_mask == 1 << 2
    assert np.array_equal(table, aggregate_table(build_plan(3)))

    export_lut16(build_plan(3), str(path))
    assert path.read_bytes() == raw


def test_lut_reader_rejects_bad_files(tmp_path):
    path = tmp_path / "bad.lut"
    path.write_bytes(LUT_HEADER.pack(b"NOTALUT\x00", 8, 8, 17, 1, 0))
    with pytest.raises(DataFormatError):
        read_lut16(str(path))

    path.write_bytes(LUT_HEADER.pack(LUT_MAGIC, 8, 8, 17, 1, 0) + b"\x00" * 100)
    with pytest.raises(DataFormatError):
        read_lut16(str(path))


def test_lut_reader_checks_the_output_width(tmp_path):
    path = tmp_path / "narrow.lut"
    table = aggregate_table(build_plan(1)).astype("<u4")
    path.write_bytes(LUT_HEADER.pack(LUT_MAGIC, 8, 8, 16, 1, 0) + table.tobytes())
    with pytest.raises(DataFormatError):
        read_lut16(str(path))

    table[(7 << 8) | 7] = 1 << 17
    path.write_bytes(LUT_HEADER.pack(LUT_MAGIC, 8, 8, 17, 1, 0) + table.tobytes())
    with pytest.raises(DataFormatError) as error:
        read_lut16(str(path))
    assert error.value.offset == 16 + 4 * ((7 << 8) | 7)


def test_hypotheses_cover_every_order_and_prune():
    hypotheses = hypothesis_plans()
    # Per order: variants 1 and 2 plus eight prunable products.
    assert len(hypotheses) == len(CANDIDATE_SEGMENT_WIDTHS) * 10
    labels = [label for label, _, _ in hypotheses]
    assert "widths 3/3/2 variant 1" in labels
    assert "widths 3/3/2 variant 3 pruning M2" in labels
    assert all(plan.name == "mul8x8_3" for _, variant, plan in hypotheses if variant == 3)


def test_either_cross_product_may_be_pruned():
    plan = prune(build_plan(2), "M6")
    assert plan.pruned == frozenset({"M6"})
    assert aggregate_mul(build_plan(2), 192, 7) == 21 << 6
    assert aggregate_mul(plan, 192, 7) == 0

"""
8x8 multipliers built from 3x3 and 2x2 sub-multipliers

Each operand is split into three segments; every segment pair is multiplied
by one sub-multiplier and the shifted partial products are summed with full
precision integer addition.
"""

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from multipliers.mulcore import LOW_WIDTH_MODELS, MultiplierModel, operand_grid
from utils.errors import DataFormatError, DomainError

logger = logging.getLogger("aggregate")

OPERAND_WIDTH = 8
PRODUCT_WIDTH = 17
SEGMENT_NAMES = ("low", "mid", "high")
DEFAULT_SEGMENT_WIDTHS = (3, 3, 2)

# Every arrangement of the two-bit segment (top, bottom, middle).
CANDIDATE_SEGMENT_WIDTHS = ((3, 3, 2), (2, 3, 3), (3, 2, 3))

# Row-major over (A segment, B segment); M2 and M6 are the pair that touches
# a high two-bit segment against a low segment.
DEFAULT_INDEX_MAP: Tuple[Tuple[str, Tuple[str, str]], ...] = (
    ("M0", ("low", "low")),
    ("M1", ("low", "mid")),
    ("M2", ("low", "high")),
    ("M3", ("mid", "low")),
    ("M4", ("mid", "mid")),
    ("M5", ("mid", "high")),
    ("M6", ("high", "low")),
    ("M7", ("high", "mid")),
    ("M8", ("high", "high")),
)

VARIANT_SUB_MODELS = {1: "mul3x3_1", 2: "mul3x3_2", 3: "mul3x3_2"}
DEFAULT_PRUNED_ID = "M2"

LUT_MAGIC = b"AMLUT1\x00\x00"
LUT_HEADER = struct.Struct("<8sBBBBI")
LUT_ENTRIES = 1 << (2 * OPERAND_WIDTH)
CUSTOM_VARIANT_CODE = 255


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    width: int

    def extract(self, value):
        """Segment bits of an int or an integer array"""
        return (value >> self.offset) & ((1 << self.width) - 1)

    def label(self, operand: str) -> str:
        return f"{operand}[{self.offset + self.width - 1}:{self.offset}]"


def _check_cover(segments: Sequence[Segment], operand: str) -> None:
    covered = 0
    for segment in segments:
        bits = ((1 << segment.width) - 1) << segment.offset
        if covered & bits:
            raise DomainError(f"segments of operand {operand} overlap at {segment.label(operand)}")
        covered |= bits
    if covered != (1 << OPERAND_WIDTH) - 1:
        raise DomainError(f"segments of operand {operand} do not cover bits 0..{OPERAND_WIDTH - 1}")


@dataclass(frozen=True)
class SegmentSplit:
    """Ordered (offset, width) segments of both 8-bit operands"""

    segments_a: Tuple[Segment, ...]
    segments_b: Tuple[Segment, ...]

    def __post_init__(self):
        _check_cover(self.segments_a, "A")
        _check_cover(self.segments_b, "B")

    @classmethod
    def from_widths(cls, widths: Sequence[int] = DEFAULT_SEGMENT_WIDTHS) -> "SegmentSplit":
        """
        Build a split from segment widths listed from the least significant end

        Args:
            widths: Three widths, low segment first, summing to 8

        Returns:
            The same split applied to both operands
        """
        if len(widths) != len(SEGMENT_NAMES) or sum(widths) != OPERAND_WIDTH:
            raise DomainError(f"segment widths {tuple(widths)} must be three widths summing to {OPERAND_WIDTH}")
        segments = []
        offset = 0
        for name, width in zip(SEGMENT_NAMES, widths):
            segments.append(Segment(name, offset, width))
            offset += width
        return cls(tuple(segments), tuple(segments))

    @classmethod
    def default(cls) -> "SegmentSplit":
        return cls.from_widths(DEFAULT_SEGMENT_WIDTHS)

    @property
    def widths(self) -> Tuple[int, ...]:
        return tuple(segment.width for segment in self.segments_a)

    def segment(self, operand: str, name: str) -> Segment:
        segments = self.segments_a if operand == "a" else self.segments_b
        for segment in segments:
            if segment.name == name:
                return segment
        raise DomainError(f"no segment named {name!r} for operand {operand}")


@dataclass(frozen=True)
class PartialProduct:
    id: str
    segment_a: Segment
    segment_b: Segment
    model: MultiplierModel
    shift: int

    @property
    def is_low_low(self) -> bool:
        return self.segment_a.offset == 0 and self.segment_b.offset == 0


@dataclass(frozen=True)
class AggregationPlan:
    """
    Assignment of sub-multipliers to segment pairs

    Args:
        name: Design name
        variant: 1..3 for the published designs, 0 for the exact plan
        split: Operand segmentation
        products: One partial product per segment pair
        pruned: Ids of the products that are omitted from the sum
        index_map: Id to (A segment, B segment) map the plan was built with
    """

    name: str
    variant: int
    split: SegmentSplit
    products: Tuple[PartialProduct, ...]
    pruned: FrozenSet[str] = frozenset()
    index_map: Tuple[Tuple[str, Tuple[str, str]], ...] = field(default=DEFAULT_INDEX_MAP, compare=False)

    def __post_init__(self):
        expected_pairs = {(sa.name, sb.name) for sa in self.split.segments_a for sb in self.split.segments_b}
        pairs = [(p.segment_a.name, p.segment_b.name) for p in self.products]
        if len(pairs) != len(expected_pairs) or set(pairs) != expected_pairs:
            raise DomainError(f"plan {self.name} must assign every one of the {len(expected_pairs)} segment pairs once")

        ids = {p.id for p in self.products}
        if len(ids) != len(self.products):
            raise DomainError(f"plan {self.name} has duplicate product ids")
        unknown = set(self.pruned) - ids
        if unknown:
            raise DomainError(f"plan {self.name} prunes unassigned ids {sorted(unknown)}")

        for p in self.products:
            if p.shift != p.segment_a.offset + p.segment_b.offset:
                raise DomainError(f"{p.id}: shift {p.shift} is not the sum of its segment offsets")
            if p.model.width_a < p.segment_a.width or p.model.width_b < p.segment_b.width:
                raise DomainError(f"{p.id}: {p.model.name} is narrower than its segments")
            if p.segment_a.width == 2 and p.segment_b.width == 2 and not (p.model.exact and p.model.width_a == 2):
                raise DomainError(f"{p.id}: the two-bit segment pair must use the exact 2x2 multiplier")

    @property
    def product_ids(self) -> List[str]:
        return [p.id for p in self.products]

    @property
    def active_products(self) -> List[PartialProduct]:
        return [p for p in self.products if p.id not in self.pruned]

    def product(self, product_id: str) -> PartialProduct:
        for p in self.products:
            if p.id == product_id:
                return p
        raise DomainError(f"plan {self.name} has no product {product_id!r}; known ids: {self.product_ids}")

    def to_model(self) -> MultiplierModel:
        return MultiplierModel(
            self.name,
            OPERAND_WIDTH,
            OPERAND_WIDTH,
            PRODUCT_WIDTH,
            partial(aggregate_mul, self),
            partial(aggregate_array, self),
            exact=self.variant == 0,
        )


def _assemble_plan(
    name: str,
    variant: int,
    sub_model: MultiplierModel,
    split: Optional[SegmentSplit],
    index_map: Optional[Sequence[Tuple[str, Tuple[str, str]]]],
) -> AggregationPlan:
    split = split or SegmentSplit.default()
    index_map = tuple(index_map or DEFAULT_INDEX_MAP)
    exact_2x2 = LOW_WIDTH_MODELS["exact2"]

    products = []
    for product_id, (name_a, name_b) in index_map:
        segment_a = split.segment("a", name_a)
        segment_b = split.segment("b", name_b)
        model = exact_2x2 if segment_a.width == 2 and segment_b.width == 2 else sub_model
        products.append(PartialProduct(product_id, segment_a, segment_b, model, segment_a.offset + segment_b.offset))

    return AggregationPlan(name, variant, split, tuple(products), frozenset(), index_map)


def build_plan(
    variant: int,
    split: Optional[SegmentSplit] = None,
    index_map: Optional[Sequence[Tuple[str, Tuple[str, str]]]] = None,
    pruned_id: str = DEFAULT_PRUNED_ID,
) -> AggregationPlan:
    """
    Build one of the three published 8x8 designs

    Args:
        variant: 1 (mul3x3_1 everywhere), 2 (mul3x3_2 everywhere) or
            3 (variant 2 with one product pruned)
        split: Operand segmentation, default high 2 / mid 3 / low 3 bits
        index_map: Product id to segment pair map
        pruned_id: Product removed by variant 3

    Returns:
        The aggregation plan
    """
    if variant not in VARIANT_SUB_MODELS:
        raise DomainError(f"unknown variant {variant!r}; valid variants are {sorted(VARIANT_SUB_MODELS)}")

    sub_model = LOW_WIDTH_MODELS[VARIANT_SUB_MODELS[variant]]
    plan = _assemble_plan(f"mul8x8_{variant}", variant, sub_model, split, index_map)
    if variant == 3:
        plan = replace(prune(plan, pruned_id), name="mul8x8_3")
    return plan


def build_exact_plan(split: Optional[SegmentSplit] = None) -> AggregationPlan:
    """All-exact reference plan: exact 3x3 everywhere, exact 2x2 on the two-bit pair"""
    return _assemble_plan("exact8x8_agg", 0, LOW_WIDTH_MODELS["exact3"], split, None)


def prune(plan: AggregationPlan, product_id: str) -> AggregationPlan:
    """
    Omit one partial product (and its shifter) from a plan

    Pruning the low x low product is refused: it would zero every small
    product.
    """
    product = plan.product(product_id)
    if product.is_low_low:
        raise DomainError(f"refusing to prune {product_id}: it is the low x low product")
    if product_id in plan.pruned:
        return plan
    logger.debug(f"Pruning {product_id} from {plan.name}")
    return replace(plan, name=f"{plan.name}-{product_id}", pruned=plan.pruned | {product_id})


def aggregate_mul(plan: AggregationPlan, a: int, b: int) -> int:
    """Aggregated product of two 8-bit operands"""
    for label, value in (("a", a), ("b", b)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or not 0 <= value < 256:
            raise DomainError(f"operand {label}={value!r} does not fit in {OPERAND_WIDTH} bits")

    total = 0
    for p in plan.active_products:
        total += p.model.eval(int(p.segment_a.extract(a)), int(p.segment_b.extract(b))) << p.shift
    return total


def aggregate_array(plan: AggregationPlan, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized aggregate_mul over int64 operand arrays"""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    total = np.zeros(np.broadcast(a, b).shape, dtype=np.int64)
    for p in plan.active_products:
        total += p.model.eval_array(p.segment_a.extract(a), p.segment_b.extract(b)) << p.shift
    return total


def _table_rows(plan: AggregationPlan, a_values: np.ndarray) -> np.ndarray:
    a = np.repeat(a_values.astype(np.int64), 1 << OPERAND_WIDTH)
    b = np.tile(np.arange(1 << OPERAND_WIDTH, dtype=np.int64), len(a_values))
    return aggregate_array(plan, a, b)


def aggregate_table(plan: AggregationPlan, threads: int = 1) -> np.ndarray:
    """
    All 65536 products of a plan, indexed by (a << 8) | b

    Args:
        plan: The aggregation plan
        threads: Number of workers; rows of a are split into contiguous ranges

    Returns:
        int64 array of products
    """
    # Sub-model tables are built once here rather than inside the workers.
    for p in plan.active_products:
        p.model.table_array

    chunks = np.array_split(np.arange(1 << OPERAND_WIDTH), max(1, threads))
    if len(chunks) == 1:
        return _table_rows(plan, chunks[0])

    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(partial(_table_rows, plan), chunks))
    return np.concatenate(parts)


def product_error_terms(plan: AggregationPlan) -> Dict[str, np.ndarray]:
    """Signed error of every active partial product over all 65536 operand pairs"""
    a, b = operand_grid(OPERAND_WIDTH, OPERAND_WIDTH)
    terms = {}
    for p in plan.active_products:
        seg_a = p.segment_a.extract(a)
        seg_b = p.segment_b.extract(b)
        terms[p.id] = (p.model.eval_array(seg_a, seg_b) - seg_a * seg_b) << p.shift
    return terms


def describe(plan: AggregationPlan) -> str:
    """Human-readable plan: one line per product (id, A segment, B segment, model, shift, pruned)"""
    index_map = " ".join(f"{pid}=(A {sa},B {sb})" for pid, (sa, sb) in plan.index_map)
    lines = [
        f"# plan {plan.name} variant {plan.variant} segment widths (low..high) {'/'.join(map(str, plan.split.widths))}",
        f"# index map {index_map}",
    ]
    for p in plan.products:
        lines.append(
            f"{p.id} {p.segment_a.label('A')} {p.segment_b.label('B')} {p.model.name} "
            f"{p.shift} {'pruned' if p.id in plan.pruned else 'active'}"
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LutHeader:
    width_a: int
    width_b: int
    out_width: int
    variant: int
    pruned_mask: int


def _pruned_mask(plan: AggregationPlan) -> int:
    mask = 0
    for position, product_id in enumerate(plan.product_ids):
        if product_id in plan.pruned:
            mask |= 1 << position
    return mask


def export_lut16(plan: AggregationPlan, path: str, threads: int = 1) -> None:
    """
    Write the 65536-entry product table of a plan

    Layout: 16-byte header (magic, operand widths, output width, variant id,
    pruned-product bitmask) followed by one little-endian uint32 per entry,
    entry index (a << 8) | b.
    """
    table = aggregate_table(plan, threads)
    variant = plan.variant if 0 <= plan.variant <= 3 else CUSTOM_VARIANT_CODE
    header = LUT_HEADER.pack(LUT_MAGIC, OPERAND_WIDTH, OPERAND_WIDTH, PRODUCT_WIDTH, variant, _pruned_mask(plan))
    with open(path, "wb") as f:
        f.write(header)
        f.write(table.astype("<u4").tobytes())
    logger.info(f"Wrote {plan.name} LUT to {path}")


def read_lut16(path: str) -> Tuple[LutHeader, np.ndarray]:
    """
    Read a LUT written by export_lut16

    Returns:
        Header fields and the int64 table
    """
    with open(path, "rb") as f:
        raw = f.read()

    expected = LUT_HEADER.size + 4 * LUT_ENTRIES
    if len(raw) < LUT_HEADER.size:
        raise DataFormatError("LUT header truncated", path=path, offset=len(raw))
    magic, width_a, width_b, out_width, variant, pruned_mask = LUT_HEADER.unpack_from(raw)
    if magic != LUT_MAGIC:
        raise DataFormatError(f"bad LUT magic {magic!r}", path=path, offset=0)
    if (width_a, width_b) != (OPERAND_WIDTH, OPERAND_WIDTH):
        raise DataFormatError(f"unsupported LUT operand widths {width_a}x{width_b}", path=path, offset=8)
    if out_width != PRODUCT_WIDTH:
        raise DataFormatError(f"unsupported LUT output width {out_width}, expected {PRODUCT_WIDTH}", path=path, offset=10)
    if len(raw) != expected:
        raise DataFormatError(f"LUT has {len(raw)} bytes, expected {expected}", path=path, offset=min(len(raw), expected))

    table = np.frombuffer(raw, dtype="<u4", offset=LUT_HEADER.size).astype(np.int64)
    too_wide = np.flatnonzero(table >> out_width)
    if too_wide.size:
        index = int(too_wide[0])
        raise DataFormatError(
            f"LUT entry {index} = {int(table[index])} does not fit in {out_width} bits",
            path=path, offset=LUT_HEADER.size + 4 * index,
        )
    return LutHeader(width_a, width_b, out_width, variant, pruned_mask), table


def hypothesis_plans() -> List[Tuple[str, int, AggregationPlan]]:
    """
    Every candidate reconstruction of the three designs

    Returns:
        (label, target variant, plan) for each segment order x variant, and
        for variant 3 each single prunable product
    """
    hypotheses = []
    for widths in CANDIDATE_SEGMENT_WIDTHS:
        split = SegmentSplit.from_widths(widths)
        order = "/".join(map(str, widths))
        for variant in (1, 2):
            hypotheses.append((f"widths {order} variant {variant}", variant, build_plan(variant, split)))
        for product_id, _ in DEFAULT_INDEX_MAP:
            plan = build_plan(2, split)
            if plan.product(product_id).is_low_low:
                continue
            pruned = replace(prune(plan, product_id), name="mul8x8_3", variant=3)
            hypotheses.append((f"widths {order} variant 3 pruning {product_id}", 3, pruned))
    return hypotheses


AGGREGATED_PLAN_BUILDERS = {
    "mul8x8_1": partial(build_plan, 1),
    "mul8x8_2": partial(build_plan, 2),
    "mul8x8_3": partial(build_plan, 3),
    "exact8x8_agg": build_exact_plan,
}


def plan_for_name(name: str) -> AggregationPlan:
    if name not in AGGREGATED_PLAN_BUILDERS:
        raise DomainError(f"unknown aggregated design {name!r}; valid names: {sorted(AGGREGATED_PLAN_BUILDERS)}")
    return AGGREGATED_PLAN_BUILDERS[name]()


def resolve_subject(subject: Union[MultiplierModel, AggregationPlan]) -> MultiplierModel:
    return subject.to_model() if isinstance(subject, AggregationPlan) else subject

"""
Bit-exact models of the exact and approximate low-width multipliers

The 3x3 designs are defined by table lookup: every input pair whose exact
product fits in five bits is left untouched and the six pairs whose product
needs the sixth output bit are replaced by the modified rows.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property, partial
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from data.reference_values import MUL3X3_1_MODIFIED_ROWS, PUBLISHED_331_EXPRESSIONS
from utils.errors import DataFormatError, DomainError, WidthCapError

logger = logging.getLogger("mulcore")

# Enumerating more than 2^24 operand pairs is refused.
MAX_TABLE_INPUT_BITS = 24

MUL3X3_1_OVERRIDES: Dict[Tuple[int, int], int] = {
    (int(a_bits, 2), int(b_bits, 2)): int(out_bits, 2)
    for a_bits, b_bits, _, out_bits, _, _ in MUL3X3_1_MODIFIED_ROWS
}


def _check_operand(value: int, width: int, label: str) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise DomainError(f"operand {label} must be an unsigned integer, got {value!r}")
    if value < 0 or value >= (1 << width):
        raise DomainError(f"operand {label}={value} does not fit in {width} bits")


def operand_grid(width_a: int, width_b: int) -> Tuple[np.ndarray, np.ndarray]:
    """All (a, b) operand pairs in row-major order as two int64 arrays"""
    a = np.repeat(np.arange(1 << width_a, dtype=np.int64), 1 << width_b)
    b = np.tile(np.arange(1 << width_b, dtype=np.int64), 1 << width_a)
    return a, b


@dataclass(frozen=True)
class TruthTable:
    """
    Complete output map of an n x m-bit function

    Entries are indexed by (a << in_width_b) | b.
    """

    in_width_a: int
    in_width_b: int
    out_width: int
    entries: Tuple[int, ...]

    def __post_init__(self):
        expected = 1 << (self.in_width_a + self.in_width_b)
        if len(self.entries) != expected:
            raise DomainError(
                f"truth table of {self.in_width_a}x{self.in_width_b} bits needs {expected} entries, "
                f"got {len(self.entries)}"
            )
        limit = 1 << self.out_width
        for index, value in enumerate(self.entries):
            if value < 0 or value >= limit:
                raise DomainError(f"entry {index} = {value} does not fit in {self.out_width} output bits")

    @property
    def num_inputs(self) -> int:
        return self.in_width_a + self.in_width_b

    def index(self, a: int, b: int) -> int:
        _check_operand(a, self.in_width_a, "a")
        _check_operand(b, self.in_width_b, "b")
        return (a << self.in_width_b) | b

    def operands(self, index: int) -> Tuple[int, int]:
        return index >> self.in_width_b, index & ((1 << self.in_width_b) - 1)

    def lookup(self, a: int, b: int) -> int:
        return self.entries[self.index(a, b)]

    def column(self, bit: int) -> List[int]:
        """Values of output bit `bit` for every input index (0 beyond out_width)"""
        return [(value >> bit) & 1 for value in self.entries]

    def to_array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=np.int64)

    def to_text(self) -> str:
        lines = [f"tt {self.in_width_a} {self.in_width_b} {self.out_width}"]
        lines.extend(str(value) for value in self.entries)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, path: Optional[str] = None) -> "TruthTable":
        lines = text.splitlines()
        if not lines:
            raise DataFormatError("empty truth table", path=path)

        header = lines[0].split()
        if len(header) != 4 or header[0] != "tt":
            raise DataFormatError(f"bad truth table header {lines[0]!r}", path=path, offset=0)
        try:
            width_a, width_b, out_width = (int(token) for token in header[1:])
        except ValueError:
            raise DataFormatError(f"bad truth table header {lines[0]!r}", path=path, offset=0)

        expected = 1 << (width_a + width_b)
        body = lines[1:]
        if len(body) != expected:
            raise DataFormatError(f"expected {expected} entries, found {len(body)}", path=path)

        entries = []
        for line_no, line in enumerate(body, start=1):
            try:
                entries.append(int(line.strip()))
            except ValueError:
                raise DataFormatError(f"entry {line.strip()!r} is not an integer", path=path, offset=line_no)

        try:
            return cls(width_a, width_b, out_width, tuple(entries))
        except DomainError as e:
            raise DataFormatError(str(e), path=path)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_text())

    @classmethod
    def read(cls, path: str) -> "TruthTable":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read(), path=path)


@dataclass(frozen=True)
class MultiplierModel:
    """
    An evaluable unsigned x unsigned -> unsigned multiplier

    Args:
        name: Registry name of the model
        width_a: Bit width of operand a
        width_b: Bit width of operand b
        out_width: Bit width of the product code
        func: Scalar evaluator, called only with in-domain operands
        table_func: Optional vectorized evaluator over int64 operand arrays
        exact: Whether the model is the exact product
    """

    name: str
    width_a: int
    width_b: int
    out_width: int
    func: Callable[[int, int], int] = field(repr=False, compare=False)
    table_func: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(
        default=None, repr=False, compare=False
    )
    exact: bool = False

    def eval(self, a: int, b: int) -> int:
        _check_operand(a, self.width_a, "a")
        _check_operand(b, self.width_b, "b")
        value = int(self.func(int(a), int(b)))
        if value < 0 or value >= (1 << self.out_width):
            raise DomainError(f"{self.name}({a}, {b}) = {value} exceeds {self.out_width} output bits")
        return value

    @cached_property
    def table_array(self) -> np.ndarray:
        """Outputs for every operand pair, indexed by (a << width_b) | b"""
        return enumerate_table(self).to_array()

    def eval_array(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorized evaluation; operands are assumed in range"""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if self.table_func is not None:
            return np.asarray(self.table_func(a, b), dtype=np.int64)
        return self.table_array[(a << self.width_b) | b]


def exact_mul(a: int, b: int, k: int) -> int:
    """Exact k-bit x k-bit product"""
    _check_operand(a, k, "a")
    _check_operand(b, k, "b")
    return a * b


def exact_mul2x2(a: int, b: int) -> int:
    return exact_mul(a, b, 2)


def mul3x3_1(a: int, b: int) -> int:
    """
    Approximate 3x3 multiplier with the sixth output bit removed

    Args:
        a: 3-bit operand
        b: 3-bit operand

    Returns:
        5-bit product code; exact whenever a*b <= 31
    """
    _check_operand(a, 3, "a")
    _check_operand(b, 3, "b")
    return MUL3X3_1_OVERRIDES.get((a, b), a * b)


def prediction_unit(a: int, b: int) -> bool:
    """a2 & a1 & b2 & b1"""
    return (a >> 1) & 0b11 == 0b11 and (b >> 1) & 0b11 == 0b11


def mul3x3_2(a: int, b: int) -> int:
    """
    Approximate 3x3 multiplier with a prediction unit driving O5/O4

    When the prediction unit fires the mul3x3_1 output is kept except that
    O5 is forced to 1 and O4 to 0.
    """
    value = mul3x3_1(a, b)
    if prediction_unit(a, b):
        value = (value | 0b100000) & ~0b010000
    return value


def cube_covers(cube: str, index: int) -> bool:
    """
    Whether a product term covers an input index

    Args:
        cube: One character per input, most significant input first:
            '1' positive literal, '0' negated literal, '-' absent
        index: Input assignment packed as an integer

    Returns:
        True if every literal of the cube is satisfied
    """
    width = len(cube)
    for position, literal in enumerate(cube):
        if literal == "-":
            continue
        bit = (index >> (width - 1 - position)) & 1
        if bit != (literal == "1"):
            return False
    return True


def eval_expressions_331(a: int, b: int) -> int:
    """Evaluate the published O0..O5 sum-of-products expressions literally"""
    _check_operand(a, 3, "a")
    _check_operand(b, 3, "b")
    index = (a << 3) | b
    value = 0
    for output_bit, cubes in sorted(PUBLISHED_331_EXPRESSIONS.items()):
        if any(cube_covers(cube, index) for cube in cubes):
            value |= 1 << output_bit
    return value


def _exact_table_func(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a * b


LOW_WIDTH_MODELS: Dict[str, MultiplierModel] = {
    "exact2": MultiplierModel("exact2", 2, 2, 4, exact_mul2x2, _exact_table_func, exact=True),
    "exact3": MultiplierModel("exact3", 3, 3, 6, partial(exact_mul, k=3), _exact_table_func, exact=True),
    "exact8": MultiplierModel("exact8", 8, 8, 16, partial(exact_mul, k=8), _exact_table_func, exact=True),
    "mul3x3_1": MultiplierModel("mul3x3_1", 3, 3, 5, mul3x3_1),
    "mul3x3_2": MultiplierModel("mul3x3_2", 3, 3, 6, mul3x3_2),
    "expr3x3_1": MultiplierModel("expr3x3_1", 3, 3, 5, eval_expressions_331),
}


def enumerate_table(model: MultiplierModel) -> TruthTable:
    """
    Enumerate a model over its whole operand domain

    Args:
        model: The model to enumerate

    Returns:
        Truth table with entries in row-major (a, b) order
    """
    input_bits = model.width_a + model.width_b
    if input_bits > MAX_TABLE_INPUT_BITS:
        raise WidthCapError(
            f"{model.name} has {input_bits} input bits; enumeration is capped at {MAX_TABLE_INPUT_BITS}"
        )

    logger.debug(f"Enumerating {model.name} over {1 << input_bits} operand pairs")
    if model.table_func is not None:
        a, b = operand_grid(model.width_a, model.width_b)
        values = np.asarray(model.table_func(a, b), dtype=np.int64)
        entries = tuple(int(v) for v in values)
    else:
        entries = tuple(
            model.eval(a, b) for a in range(1 << model.width_a) for b in range(1 << model.width_b)
        )
    return TruthTable(model.width_a, model.width_b, model.out_width, entries)


def modified_rows(model: MultiplierModel) -> List[Dict[str, object]]:
    """Rows where the model differs from the exact product, in operand order"""
    table = enumerate_table(model)
    rows = []
    for index, approx in enumerate(table.entries):
        a, b = table.operands(index)
        exact = a * b
        if approx != exact:
            rows.append({
                "a": a,
                "b": b,
                "exact": exact,
                "approx": approx,
                "ed": abs(approx - exact),
                "bits": format(approx, f"0{max(model.out_width, 6)}b"),
            })
    return rows


def symmetry_table(model: MultiplierModel) -> List[Tuple[int, int]]:
    """Operand pairs (a < b) where swapping the operands changes the output"""
    if model.width_a != model.width_b:
        raise DomainError(f"{model.name} has unequal operand widths; symmetry is undefined")
    table = enumerate_table(model)
    size = 1 << model.width_a
    return [
        (a, b)
        for a in range(size)
        for b in range(a + 1, size)
        if table.lookup(a, b) != table.lookup(b, a)
    ]


def expression_discrepancies() -> List[Dict[str, object]]:
    """
    Compare the literal expression evaluator against the mul3x3_1 table

    Returns:
        One record per mismatching input, with the output bits that differ
    """
    mismatches = []
    for a in range(8):
        for b in range(8):
            expected = mul3x3_1(a, b)
            actual = eval_expressions_331(a, b)
            if expected != actual:
                diff = expected ^ actual
                mismatches.append({
                    "a": a,
                    "b": b,
                    "expected": expected,
                    "actual": actual,
                    "differing_bits": [bit for bit in range(6) if (diff >> bit) & 1],
                })
    if mismatches:
        logger.warning(
            f"Published expressions disagree with the mul3x3_1 table on {len(mismatches)} inputs: "
            + ", ".join(f"({m['a']},{m['b']})" for m in mismatches)
        )
    return mismatches

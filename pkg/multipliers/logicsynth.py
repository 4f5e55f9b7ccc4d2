"""
Two-level logic minimization of multiplier truth tables

Covers are lists of PLA-style cubes: one character per input, most
significant input first (a[wa-1] .. a[0], b[wb-1] .. b[0]), with '1' for a
positive literal, '0' for a negated literal and '-' for an absent input.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel

from data.reference_values import PUBLISHED_331_EXPRESSIONS
from multipliers.mulcore import MultiplierModel, TruthTable, cube_covers, enumerate_table
from utils.errors import DataFormatError, DomainError, WidthCapError

logger = logging.getLogger("logicsynth")

MAX_MINIMIZE_INPUTS = 12
EXACT_COVER_LIMIT = 64

_IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")

Implicant = Tuple[int, int]  # (value, dash mask)


@dataclass(frozen=True)
class SopCover:
    """Sum-of-products cover of one output bit"""

    num_inputs: int
    output_index: int
    cubes: Tuple[str, ...] = ()

    def __post_init__(self):
        for cube in self.cubes:
            if len(cube) != self.num_inputs or set(cube) - set("01-"):
                raise DomainError(f"cube {cube!r} is not a {self.num_inputs}-input cube over 0/1/-")
        if any(set(cube) == {"-"} for cube in self.cubes) and len(self.cubes) != 1:
            raise DomainError("a literal-free cube is only allowed as the whole constant-1 cover")

    @property
    def is_constant(self) -> bool:
        return not self.cubes or set(self.cubes[0]) <= {"-"}

    @property
    def literal_count(self) -> int:
        return sum(len(cube) - cube.count("-") for cube in self.cubes)

    def evaluate(self, index: int) -> int:
        return int(any(cube_covers(cube, index) for cube in self.cubes))


class CostEstimate(BaseModel):
    literal_count: int
    cube_count: int
    two_level_depth: int
    output_count: int


def _check_inputs(num_inputs: int) -> None:
    if num_inputs > MAX_MINIMIZE_INPUTS:
        raise WidthCapError(f"{num_inputs} inputs exceed the {MAX_MINIMIZE_INPUTS}-input minimization cap")


def _implicant_cube(implicant: Implicant, num_inputs: int) -> str:
    value, mask = implicant
    chars = []
    for bit in range(num_inputs - 1, -1, -1):
        flag = 1 << bit
        chars.append("-" if mask & flag else ("1" if value & flag else "0"))
    return "".join(chars)


def _literals(implicant: Implicant, num_inputs: int) -> int:
    return num_inputs - bin(implicant[1]).count("1")


def prime_implicants(num_inputs: int, minterms: Sequence[int]) -> List[Implicant]:
    """
    Quine-McCluskey prime implicant generation

    Implicants are (value, mask) pairs; mask bits are absent inputs and the
    matching value bits are zero.
    """
    current = {(m, 0) for m in minterms}
    primes = set()
    while current:
        merged = set()
        used = set()
        for value, mask in current:
            for bit in range(num_inputs):
                flag = 1 << bit
                if (mask | value) & flag:
                    continue
                partner = (value | flag, mask)
                if partner in current:
                    merged.add((value, mask | flag))
                    used.add((value, mask))
                    used.add(partner)
        primes |= current - used
        current = merged
    return sorted(primes, key=lambda p: _implicant_cube(p, num_inputs))


def _exact_cover(
    uncovered: frozenset,
    covering: Dict[int, List[int]],
    primes: List[Implicant],
    num_inputs: int,
) -> Tuple[int, ...]:
    best: List[Optional[Tuple[Tuple[int, int], Tuple[int, ...]]]] = [None]

    def search(remaining: frozenset, selection: Tuple[int, ...], literals: int) -> None:
        cost = (len(selection), literals)
        if best[0] is not None:
            if cost >= best[0][0]:
                return
            if remaining and len(selection) + 1 > best[0][0][0]:
                return
        if not remaining:
            best[0] = (cost, selection)
            return

        pivot = min(remaining, key=lambda m: (len(covering[m]), m))
        for index in sorted(covering[pivot], key=lambda i: (_literals(primes[i], num_inputs), i)):
            value, mask = primes[index]
            rest = frozenset(m for m in remaining if m & ~mask != value)
            search(rest, selection + (index,), literals + _literals(primes[index], num_inputs))

    search(uncovered, (), 0)
    return best[0][1]


def _greedy_cover(
    uncovered: set,
    candidates: List[int],
    primes: List[Implicant],
    num_inputs: int,
) -> Tuple[int, ...]:
    selection = []
    while uncovered:
        def gain(index):
            value, mask = primes[index]
            hits = sum(1 for m in uncovered if m & ~mask == value)
            return hits, -_literals(primes[index], num_inputs), -index

        index = max(candidates, key=gain)
        value, mask = primes[index]
        uncovered = {m for m in uncovered if m & ~mask != value}
        selection.append(index)
    return tuple(selection)


def minimize(table: TruthTable, output_index: int) -> SopCover:
    """
    Minimal sum-of-products cover of one output column

    Args:
        table: Fully specified truth table (no don't-cares)
        output_index: Output bit; bits at or above the table's output width are constant 0

    Returns:
        Cover with essential primes plus an exact (up to 64 primes) or greedy selection
    """
    num_inputs = table.num_inputs
    _check_inputs(num_inputs)
    if not 0 <= output_index < num_inputs:
        raise DomainError(f"output bit {output_index} is outside 0..{num_inputs - 1}")

    column = table.column(output_index)
    minterms = [index for index, bit in enumerate(column) if bit]
    if not minterms:
        return SopCover(num_inputs, output_index, ())
    if len(minterms) == len(column):
        return SopCover(num_inputs, output_index, ("-" * num_inputs,))

    primes = prime_implicants(num_inputs, minterms)
    covering = {
        m: [i for i, (value, mask) in enumerate(primes) if m & ~mask == value]
        for m in minterms
    }

    chosen = {options[0] for options in covering.values() if len(options) == 1}
    uncovered = {m for m in minterms if not chosen.intersection(covering[m])}
    if uncovered:
        if len(primes) <= EXACT_COVER_LIMIT:
            chosen.update(_exact_cover(frozenset(uncovered), covering, primes, num_inputs))
        else:
            candidates = sorted({i for m in uncovered for i in covering[m]})
            logger.debug(f"{len(primes)} primes for bit {output_index}; using greedy cover selection")
            chosen.update(_greedy_cover(uncovered, candidates, primes, num_inputs))

    cubes = tuple(sorted(_implicant_cube(primes[i], num_inputs) for i in chosen))
    return SopCover(num_inputs, output_index, cubes)


def verify_equivalence(
    cover: SopCover, table: TruthTable, output_index: int
) -> Tuple[bool, Optional[Tuple[int, int]]]:
    """
    Exhaustively compare a cover with a truth-table column

    Returns:
        (True, None) when they agree everywhere, else (False, first mismatching (a, b))
    """
    if cover.num_inputs != table.num_inputs:
        raise DomainError(f"cover has {cover.num_inputs} inputs, table has {table.num_inputs}")
    for index, expected in enumerate(table.column(output_index)):
        if cover.evaluate(index) != expected:
            return False, table.operands(index)
    return True, None


def covers_to_table(covers: Sequence[SopCover], width_a: int) -> TruthTable:
    """Truth table realized by a set of covers, output bit i taken from the cover for bit i"""
    num_inputs = covers[0].num_inputs
    _check_inputs(num_inputs)
    out_width = max(cover.output_index for cover in covers) + 1
    entries = []
    for index in range(1 << num_inputs):
        value = 0
        for cover in covers:
            value |= cover.evaluate(index) << cover.output_index
        entries.append(value)
    return TruthTable(width_a, num_inputs - width_a, out_width, tuple(entries))


def input_names(num_inputs: int, width_a: Optional[int] = None) -> List[str]:
    """Input names in cube order: a[wa-1] .. a[0], b[wb-1] .. b[0]"""
    width_a = num_inputs // 2 if width_a is None else width_a
    width_b = num_inputs - width_a
    return [f"a[{i}]" for i in range(width_a - 1, -1, -1)] + [f"b[{i}]" for i in range(width_b - 1, -1, -1)]


def _ordered_covers(covers: Sequence[SopCover]) -> List[SopCover]:
    if not covers:
        raise DomainError("at least one cover is required")
    if len({cover.num_inputs for cover in covers}) != 1:
        raise DomainError("covers disagree on the number of inputs")
    ordered = sorted(covers, key=lambda cover: cover.output_index)
    if [cover.output_index for cover in ordered] != list(range(len(ordered))):
        raise DomainError("covers must describe output bits 0..k-1 exactly once")
    return ordered


def _sop_expression(cover: SopCover, names: List[str]) -> str:
    if not cover.cubes:
        return "1'b0"
    if cover.is_constant:
        return "1'b1"
    terms = []
    for cube in cover.cubes:
        literals = [
            name if literal == "1" else f"~{name}"
            for literal, name in zip(cube, names)
            if literal != "-"
        ]
        terms.append("(" + " & ".join(literals) + ")")
    return " | ".join(terms)


def emit_verilog(name: str, covers: Sequence[SopCover], width_a: Optional[int] = None) -> str:
    """
    Structural two-level Verilog module for a set of output covers

    Args:
        name: Module identifier
        covers: One cover per output bit 0..k-1, all over the same inputs
        width_a: Width of operand a; half the inputs when omitted

    Returns:
        Module text with inputs a and b, output vector o and one assign per bit
    """
    if not _IDENTIFIER.match(name):
        raise DomainError(f"{name!r} is not a Verilog identifier")
    ordered = _ordered_covers(covers)
    num_inputs = ordered[0].num_inputs
    width_a = num_inputs // 2 if width_a is None else width_a
    width_b = num_inputs - width_a
    names = input_names(num_inputs, width_a)

    lines = [
        f"// {name}: two-level sum-of-products, {len(ordered)} output bits",
        f"module {name}(a, b, o);",
        f"  input [{width_a - 1}:0] a;",
        f"  input [{width_b - 1}:0] b;",
        f"  output [{len(ordered) - 1}:0] o;",
    ]
    for cover in ordered:
        line = f"  assign o[{cover.output_index}] = {_sop_expression(cover, names)};"
        if cover.is_constant:
            line += "  // constant output bit"
        lines.append(line)
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Netlist:
    name: str
    width_a: int
    width_b: int
    covers: Tuple[SopCover, ...]


_MODULE_RE = re.compile(r"module\s+(\w+)\s*\(")
_PORT_RE = re.compile(r"(input|output)\s*\[(\d+):0\]\s*(\w+)\s*;")
_ASSIGN_RE = re.compile(r"assign\s+o\[(\d+)\]\s*=\s*(.+?)\s*;")
_LITERAL_RE = re.compile(r"(~?)([ab])\[(\d+)\]$")


def read_verilog(text: str) -> Netlist:
    """Parse the structural subset written by emit_verilog back into covers"""
    name = None
    widths: Dict[str, int] = {}
    assigns: Dict[int, str] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        if name is None and (match := _MODULE_RE.match(line)):
            name = match.group(1)
        elif match := _PORT_RE.match(line):
            widths[match.group(3)] = int(match.group(2)) + 1
        elif match := _ASSIGN_RE.match(line):
            assigns[int(match.group(1))] = match.group(2)
        elif line != "endmodule":
            raise DataFormatError(f"unsupported netlist line {line!r}", offset=line_no)

    if name is None or not {"a", "b", "o"} <= set(widths):
        raise DataFormatError("netlist lacks a module header or the a/b/o ports")
    if sorted(assigns) != list(range(widths["o"])):
        raise DataFormatError(f"netlist assigns bits {sorted(assigns)} of a {widths['o']}-bit output")

    width_a, width_b = widths["a"], widths["b"]
    num_inputs = width_a + width_b
    covers = []
    for bit in range(widths["o"]):
        expression = assigns[bit]
        if expression == "1'b0":
            covers.append(SopCover(num_inputs, bit, ()))
            continue
        if expression == "1'b1":
            covers.append(SopCover(num_inputs, bit, ("-" * num_inputs,)))
            continue

        cubes = []
        for term in expression.split("|"):
            cube = ["-"] * num_inputs
            for literal in term.strip().strip("()").split("&"):
                match = _LITERAL_RE.match(literal.strip())
                if not match:
                    raise DataFormatError(f"o[{bit}]: cannot parse literal {literal.strip()!r}")
                negated, port, position = match.group(1), match.group(2), int(match.group(3))
                slot = num_inputs - 1 - position - (width_b if port == "a" else 0)
                cube[slot] = "0" if negated else "1"
            cubes.append("".join(cube))
        covers.append(SopCover(num_inputs, bit, tuple(cubes)))

    return Netlist(name, width_a, width_b, tuple(covers))


def cost_estimate(covers: Sequence[SopCover]) -> CostEstimate:
    """Literal and cube counts summed over outputs; constants cost nothing"""
    nonconstant = [cover for cover in covers if not cover.is_constant]
    return CostEstimate(
        literal_count=sum(cover.literal_count for cover in nonconstant),
        cube_count=sum(len(cover.cubes) for cover in nonconstant),
        two_level_depth=2 if nonconstant else 0,
        output_count=len(covers),
    )


def write_pla(covers: Sequence[SopCover], width_a: Optional[int] = None) -> str:
    """
    Multi-output PLA text for a set of covers

    One line per (output, cube) in output order; constant-0 outputs
    contribute no lines.
    """
    ordered = _ordered_covers(covers)
    num_inputs = ordered[0].num_inputs
    rows = []
    for cover in ordered:
        outputs = "".join("1" if other.output_index == cover.output_index else "0" for other in ordered)
        rows.extend(f"{cube} {outputs}" for cube in cover.cubes)

    lines = [
        f".i {num_inputs}",
        f".o {len(ordered)}",
        ".ilb " + " ".join(input_names(num_inputs, width_a)),
        ".ob " + " ".join(f"o[{cover.output_index}]" for cover in ordered),
        f".p {len(rows)}",
    ]
    lines.extend(rows)
    lines.append(".e")
    return "\n".join(lines) + "\n"


def read_pla(text: str) -> List[SopCover]:
    """Parse PLA text into one cover per output column"""
    num_inputs = num_outputs = declared_rows = None
    rows: List[Tuple[str, str]] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        keyword = fields[0]
        try:
            if keyword == ".i":
                num_inputs = int(fields[1])
            elif keyword == ".o":
                num_outputs = int(fields[1])
            elif keyword == ".p":
                declared_rows = int(fields[1])
            elif keyword == ".e":
                break
            elif keyword.startswith("."):
                continue
            else:
                cube, outputs = fields
                rows.append((cube, outputs))
        except (IndexError, ValueError):
            raise DataFormatError(f"malformed PLA line {line!r}", offset=line_no)

    if num_inputs is None or num_outputs is None:
        raise DataFormatError("PLA lacks .i or .o")
    if declared_rows is not None and declared_rows != len(rows):
        raise DataFormatError(f".p declares {declared_rows} rows, found {len(rows)}")

    cubes: List[List[str]] = [[] for _ in range(num_outputs)]
    for cube, outputs in rows:
        if len(cube) != num_inputs or len(outputs) != num_outputs:
            raise DataFormatError(f"row {cube} {outputs} does not match .i {num_inputs} / .o {num_outputs}")
        for bit, flag in enumerate(outputs):
            if flag == "1":
                cubes[bit].append(cube)

    try:
        return [SopCover(num_inputs, bit, tuple(bit_cubes)) for bit, bit_cubes in enumerate(cubes)]
    except DomainError as e:
        raise DataFormatError(str(e))


def published_covers() -> List[SopCover]:
    """The transcribed O0..O5 expressions of the five-output 3x3 design as covers"""
    return [
        SopCover(6, bit, tuple(cubes))
        for bit, cubes in sorted(PUBLISHED_331_EXPRESSIONS.items())
    ]


class OutputSynthesis(BaseModel):
    output_index: int
    cubes: List[str]
    literal_count: int
    equivalent: bool
    counterexample: Optional[Tuple[int, int]] = None
    published_cubes: Optional[List[str]] = None
    published_literal_count: Optional[int] = None
    published_equivalent: Optional[bool] = None
    published_counterexample: Optional[Tuple[int, int]] = None


class SynthesisReport(BaseModel):
    model_name: str
    width_a: int
    width_b: int
    outputs: List[OutputSynthesis]
    cost: CostEstimate
    published_cost: Optional[CostEstimate] = None


def synthesize(model: MultiplierModel, threads: int = 1) -> Tuple[SynthesisReport, List[SopCover]]:
    """
    Minimize, verify and cost every output bit of a model

    Output bits run over the full product width a.width + b.width, so bits the
    model never drives appear as constant-0 covers.

    Args:
        model: Multiplier model with at most 12 input bits
        threads: Workers for the per-column minimization

    Returns:
        The synthesis report and the minimized covers
    """
    num_inputs = model.width_a + model.width_b
    _check_inputs(num_inputs)
    table = enumerate_table(model)
    logger.info(f"Synthesizing {model.name}: {num_inputs} inputs, {num_inputs} output bits")

    bits = list(range(num_inputs))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        covers = list(pool.map(partial(minimize, table), bits))

    published = published_covers() if model.name in ("mul3x3_1", "expr3x3_1") else None
    outputs = []
    for cover in covers:
        equivalent, counterexample = verify_equivalence(cover, table, cover.output_index)
        if not equivalent:
            raise DomainError(f"{model.name}: minimized bit {cover.output_index} fails at {counterexample}")
        entry = OutputSynthesis(
            output_index=cover.output_index,
            cubes=list(cover.cubes),
            literal_count=cover.literal_count,
            equivalent=equivalent,
        )
        if published is not None:
            reference = published[cover.output_index]
            ok, witness = verify_equivalence(reference, table, cover.output_index)
            entry.published_cubes = list(reference.cubes)
            entry.published_literal_count = reference.literal_count
            entry.published_equivalent = ok
            entry.published_counterexample = witness
            if not ok:
                logger.warning(
                    f"Published expression for bit {cover.output_index} disagrees with {model.name} at {witness}"
                )
        outputs.append(entry)

    report = SynthesisReport(
        model_name=model.name,
        width_a=model.width_a,
        width_b=model.width_b,
        outputs=outputs,
        cost=cost_estimate(covers),
        published_cost=cost_estimate(published) if published is not None else None,
    )
    logger.info(f"{model.name}: {report.cost.literal_count} literals in {report.cost.cube_count} cubes")
    return report, covers

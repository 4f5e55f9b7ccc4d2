"""
Exhaustive error analysis of multiplier models and aggregation plans

ER and MED are accumulated as exact fractions; floats appear only in the
report fields.
"""

import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from data.reference_values import KNOWN_DISCREPANCIES, REFERENCE_8X8_METRICS
from multipliers.aggregate import (
    AggregationPlan,
    DEFAULT_SEGMENT_WIDTHS,
    aggregate_table,
    hypothesis_plans,
)
from multipliers.mulcore import MultiplierModel, expression_discrepancies, operand_grid
from utils.errors import DataFormatError, DomainError, WidthCapError
from utils.provenance import Provenance, build_provenance

logger = logging.getLogger("metrics")

MAX_SWEEP_WIDTH = 12
CONSISTENCY_TOLERANCE = 1e-12

# Reconstruction tolerance for the published 8x8 numbers.
ER_TOLERANCE_PP = 3.0
MED_TOLERANCE_REL = 0.25

Subject = Union[MultiplierModel, AggregationPlan]


class ErrorReport(BaseModel):
    """Error metrics of one model against the exact product"""

    model_name: str
    n: int
    pairs: int
    er: float
    med: float
    nmed: float
    mred: float
    mred_approx_denominator: float
    max_ed: int
    ed_sum: int
    mismatch_count: int
    ed_histogram: Dict[int, int]
    flags: List[str] = []


def error_distance(approx: int, exact: int) -> int:
    return abs(approx - exact)


def _model_rows(model: MultiplierModel, a_values: np.ndarray) -> np.ndarray:
    a = np.repeat(a_values.astype(np.int64), 1 << model.width_b)
    b = np.tile(np.arange(1 << model.width_b, dtype=np.int64), len(a_values))
    return model.eval_array(a, b)


def _approx_table(subject: Subject, threads: int) -> np.ndarray:
    if isinstance(subject, AggregationPlan):
        return aggregate_table(subject, threads)

    model = subject
    if model.table_func is None:
        return model.table_array

    chunks = np.array_split(np.arange(1 << model.width_a), max(1, threads))
    if len(chunks) == 1:
        return _model_rows(model, chunks[0])
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return np.concatenate(list(pool.map(partial(_model_rows, model), chunks)))


def discrepancy_flags(subject: Subject) -> List[str]:
    """Notes on reference-material disagreements that affect a subject"""
    if isinstance(subject, AggregationPlan):
        sub_models = {p.model.name for p in subject.products}
    else:
        sub_models = {subject.name}

    flags = []
    if "mul3x3_2" in sub_models:
        flags.extend(KNOWN_DISCREPANCIES)
    if sub_models & {"mul3x3_1", "expr3x3_1"}:
        mismatches = expression_discrepancies()
        if mismatches:
            inputs = ", ".join(f"({m['a']},{m['b']})" for m in mismatches)
            bits = sorted({bit for m in mismatches for bit in m["differing_bits"]})
            flags.append(
                f"published expressions disagree with the mul3x3_1 table at {inputs} "
                f"(output bits {bits}); the table is used"
            )
    return flags


def sweep(subject: Subject, threads: int = 1, flags: Optional[List[str]] = None) -> ErrorReport:
    """
    Enumerate every operand pair of a model or plan and measure its error

    Args:
        subject: Multiplier model or aggregation plan
        threads: Workers used to build the product table
        flags: Discrepancy notes; derived from the subject when omitted

    Returns:
        ErrorReport against the exact product
    """
    model = subject.to_model() if isinstance(subject, AggregationPlan) else subject
    if model.width_a != model.width_b:
        raise DomainError(f"{model.name}: sweeps need equal operand widths")
    n = model.width_a
    if n > MAX_SWEEP_WIDTH:
        raise WidthCapError(f"{model.name}: {n}-bit operands exceed the {MAX_SWEEP_WIDTH}-bit sweep cap")

    pairs = 1 << (2 * n)
    logger.info(f"Sweeping {model.name} over {pairs} operand pairs")

    approx = np.asarray(_approx_table(subject, threads), dtype=np.int64)
    a, b = operand_grid(n, n)
    exact = a * b
    ed = np.abs(approx - exact)

    mismatch_count = int(np.count_nonzero(ed))
    ed_sum = int(ed.sum())
    values, counts = np.unique(ed[ed > 0], return_counts=True)
    histogram = {int(v): int(c) for v, c in zip(values, counts)}

    nonzero_exact = exact != 0
    mred = math.fsum((ed[nonzero_exact] / exact[nonzero_exact]).tolist()) / int(nonzero_exact.sum())
    nonzero_approx = approx != 0
    mred_approx = (
        math.fsum((ed[nonzero_approx] / approx[nonzero_approx]).tolist()) / int(nonzero_approx.sum())
        if nonzero_approx.any()
        else 0.0
    )

    max_product = ((1 << n) - 1) ** 2
    return ErrorReport(
        model_name=model.name,
        n=n,
        pairs=pairs,
        er=float(Fraction(mismatch_count, pairs)),
        med=float(Fraction(ed_sum, pairs)),
        nmed=float(Fraction(ed_sum, pairs * max_product)),
        mred=mred,
        mred_approx_denominator=mred_approx,
        max_ed=int(ed.max()) if ed.size else 0,
        ed_sum=ed_sum,
        mismatch_count=mismatch_count,
        ed_histogram=histogram,
        flags=discrepancy_flags(subject) if flags is None else list(flags),
    )


def _close(value: float, expected: float, rel: float = CONSISTENCY_TOLERANCE) -> bool:
    if expected == 0:
        return value == 0
    return abs(value - expected) <= rel * abs(expected)


def internal_consistency(report: ErrorReport) -> bool:
    """
    Check that the derived fields of a report agree with its counts

    Returns:
        True iff NMED = MED/(2^n-1)^2, ER = mismatches/2^(2n), MED = ED sum/2^(2n)
        and the histogram sums to the mismatch count and the ED sum
    """
    max_product = ((1 << report.n) - 1) ** 2
    checks = [
        report.pairs == 1 << (2 * report.n),
        0.0 <= report.er <= 1.0,
        report.med >= 0.0,
        _close(report.nmed, report.med / max_product),
        _close(report.er, report.mismatch_count / report.pairs),
        _close(report.med, report.ed_sum / report.pairs),
        sum(report.ed_histogram.values()) == report.mismatch_count,
        sum(ed * count for ed, count in report.ed_histogram.items()) == report.ed_sum,
    ]
    return all(checks)


def check_published_nmed() -> List[Dict[str, object]]:
    """Printed NMED against MED/65025 at the printed precision, for each published 8x8 row"""
    max_product = 255 ** 2
    rows = []
    for design, values in REFERENCE_8X8_METRICS.items():
        if values["med"] is None or values["nmed"] is None:
            continue
        derived = 100.0 * values["med"] / max_product
        rows.append({
            "design": design,
            "med": values["med"],
            "printed_nmed": values["nmed"],
            "derived_nmed": derived,
            "consistent": round(derived, 2) == values["nmed"],
        })
    return rows


def range_histogram(values: Sequence[int], ranges: Sequence[Tuple[int, int]]) -> List[float]:
    """
    Fraction of 8-bit codes falling in each inclusive range

    Args:
        values: Codes in 0..255
        ranges: Inclusive (lo, hi) bounds within 0..255

    Returns:
        One fraction per range, in the given order
    """
    codes = np.asarray(values).ravel()
    if codes.size == 0:
        raise DomainError("range_histogram needs at least one code")
    for lo, hi in ranges:
        if not 0 <= lo <= hi <= 255:
            raise DomainError(f"range [{lo},{hi}] is not within [0,255]")
    return [float(np.count_nonzero((codes >= lo) & (codes <= hi)) / codes.size) for lo, hi in ranges]


@dataclass
class Reproduction:
    """Metric vectors of every reconstruction hypothesis next to the published ones"""

    table: pd.DataFrame
    passed: bool
    closest: Dict[int, str]


def reproduce_reference(threads: int = 1) -> Reproduction:
    """
    Sweep every reconstruction hypothesis and compare with the published 8x8 metrics

    Returns:
        Reproduction with one row per hypothesis, the closest hypothesis per
        variant, and whether the default reconstruction meets the tolerance
    """
    default_order = "/".join(map(str, DEFAULT_SEGMENT_WIDTHS))
    records = []
    for label, variant, plan in hypothesis_plans():
        report = sweep(plan, threads=threads, flags=[])
        reference = REFERENCE_8X8_METRICS[f"mul8x8_{variant}"]
        er_pp = 100.0 * report.er
        delta_er = er_pp - reference["er"]
        delta_med = (report.med - reference["med"]) / reference["med"]
        delta_mred = 100.0 * report.mred - reference["mred"]
        records.append({
            "hypothesis": label,
            "variant": variant,
            "default_map": label in (
                f"widths {default_order} variant {variant}",
                f"widths {default_order} variant 3 pruning M2",
            ),
            "er_pct": er_pp,
            "med": report.med,
            "nmed_pct": 100.0 * report.nmed,
            "mred_pct": 100.0 * report.mred,
            "ref_er_pct": reference["er"],
            "ref_med": reference["med"],
            "ref_nmed_pct": reference["nmed"],
            "ref_mred_pct": reference["mred"],
            "delta_er_pp": delta_er,
            "delta_med_rel": delta_med,
            "delta_mred_pp": delta_mred,
            "distance": abs(delta_er) / reference["er"] + abs(delta_med) + abs(delta_mred) / reference["mred"],
        })

    table = pd.DataFrame.from_records(records)
    table["closest"] = False
    closest = {}
    for variant, group in table.groupby("variant", sort=True):
        best = group["distance"].idxmin()
        table.loc[best, "closest"] = True
        closest[int(variant)] = table.loc[best, "hypothesis"]

    defaults = table[table["default_map"] & table["variant"].isin([1, 2])]
    passed = bool(
        ((defaults["delta_er_pp"].abs() <= ER_TOLERANCE_PP) & (defaults["delta_med_rel"].abs() <= MED_TOLERANCE_REL)).all()
    )
    if passed:
        logger.info("Default reconstruction reproduces the published 8x8 metrics within tolerance")
    else:
        logger.warning(
            "Default reconstruction misses the published 8x8 metrics; closest hypotheses: "
            + "; ".join(f"variant {v}: {h}" for v, h in closest.items())
        )
    return Reproduction(table=table, passed=passed, closest=closest)


def render_report(
    reports: Sequence[ErrorReport],
    fmt: str = "json",
    provenance: Optional[Provenance] = None,
) -> str:
    """
    Serialize error reports

    Args:
        reports: Reports, one per model, in output order
        fmt: "json" (one document) or "csv" (one row per report)
        provenance: Provenance block; the default index map is assumed when omitted

    Returns:
        Report text
    """
    provenance = provenance or build_provenance()
    if fmt == "json":
        payload = {
            "provenance": provenance.model_dump(mode="json"),
            "reports": [report.model_dump(mode="json") for report in reports],
        }
        text = json.dumps(payload, indent=2) + "\n"
    elif fmt == "csv":
        rows = []
        for report in reports:
            row = report.model_dump(mode="json")
            row["ed_histogram"] = json.dumps(row["ed_histogram"])
            row["flags"] = json.dumps(row["flags"])
            row["provenance"] = provenance.model_dump_json()
            rows.append(row)
        columns = list(ErrorReport.model_fields) + ["provenance"]
        text = pd.DataFrame.from_records(rows, columns=columns).to_csv(index=False, lineterminator="\n")
    else:
        raise DomainError(f"unknown report format {fmt!r}; valid formats: csv, json")
    return text


def emit_report(
    reports: Sequence[ErrorReport],
    path: str,
    fmt: str = "json",
    provenance: Optional[Provenance] = None,
) -> None:
    """Write error reports to a file; see render_report"""
    text = render_report(reports, fmt, provenance)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.info(f"Wrote {len(reports)} report(s) to {path}")


def load_reports(path: str) -> Tuple[Provenance, List[ErrorReport]]:
    """Read a JSON or CSV report file written by emit_report"""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()

    try:
        if text.lstrip().startswith("{"):
            payload = json.loads(text)
            provenance = Provenance.model_validate(payload["provenance"])
            reports = [ErrorReport.model_validate(item) for item in payload["reports"]]
            return provenance, reports

        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
        reports = []
        provenance = build_provenance()
        for record in frame.to_dict(orient="records"):
            provenance = Provenance.model_validate_json(record.pop("provenance"))
            record["ed_histogram"] = json.loads(record["ed_histogram"])
            record["flags"] = json.loads(record["flags"])
            reports.append(ErrorReport.model_validate(record))
        return provenance, reports
    except (KeyError, ValueError) as e:
        raise DataFormatError(f"malformed report: {e}", path=path)


def render_reproduction(reproduction: Reproduction, fmt: str = "json", provenance: Optional[Provenance] = None) -> str:
    """Serialize the hypothesis sweep: one row per hypothesis plus the verdict"""
    if fmt == "csv":
        return reproduction.table.to_csv(index=False, lineterminator="\n")
    if fmt != "json":
        raise DomainError(f"unknown report format {fmt!r}; valid formats: csv, json")

    provenance = provenance or build_provenance()
    payload = {
        "provenance": provenance.model_dump(mode="json"),
        "passed": reproduction.passed,
        "closest": {str(variant): label for variant, label in sorted(reproduction.closest.items())},
        "published_nmed_check": check_published_nmed(),
        "hypotheses": json.loads(reproduction.table.to_json(orient="records", double_precision=15)),
    }
    return json.dumps(payload, indent=2) + "\n"

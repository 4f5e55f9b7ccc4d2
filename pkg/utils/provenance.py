"""Provenance block attached to every report file"""

from typing import Dict, List, Optional

from pydantic import BaseModel

TOOL_NAME = "approxmul"
TOOL_VERSION = "1.0.0"

METRIC_DEFINITIONS: Dict[str, str] = {
    "er": "mismatching pairs / 2^(2n)",
    "med": "sum of |approx - exact| / 2^(2n), accumulated as an exact fraction",
    "nmed": "med / (2^n - 1)^2",
    "mred": "mean of ED / exact over pairs with exact != 0",
    "mred_approx_denominator": "mean of ED / approx over pairs with approx != 0",
}


class Provenance(BaseModel):
    tool: str = TOOL_NAME
    tool_version: str = TOOL_VERSION
    index_map: str = ""
    segment_widths: str = ""
    metric_definitions: Dict[str, str] = dict(METRIC_DEFINITIONS)
    interpretations: List[str] = []
    discrepancies: List[str] = []


def build_provenance(
    index_map: Optional[str] = None,
    segment_widths: Optional[str] = None,
    interpretations: Optional[List[str]] = None,
    discrepancies: Optional[List[str]] = None,
) -> Provenance:
    """
    Build the provenance block for a report

    Args:
        index_map: Assumed product id to segment pair map
        segment_widths: Assumed segment widths, low segment first
        interpretations: Modelling choices a reader must know to compare numbers
        discrepancies: Known disagreements in the reference material

    Returns:
        Provenance model
    """
    # Imported here so that utils stays importable without the multiplier stack.
    from multipliers.aggregate import DEFAULT_INDEX_MAP, DEFAULT_SEGMENT_WIDTHS

    if index_map is None:
        index_map = " ".join(f"{pid}=(A {sa},B {sb})" for pid, (sa, sb) in DEFAULT_INDEX_MAP)
    if segment_widths is None:
        segment_widths = "/".join(map(str, DEFAULT_SEGMENT_WIDTHS))
    return Provenance(
        index_map=index_map,
        segment_widths=segment_widths,
        interpretations=list(interpretations or []),
        discrepancies=list(discrepancies or []),
    )

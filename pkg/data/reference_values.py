"""Published reference rows, equations and results used as oracles

The rows below are transcribed as printed, including the one entry whose
value disagrees with its own output bits; code that consumes them decides
which column is authoritative.
"""

from typing import Dict, List, Optional, Tuple

# (a bits, b bits, exact value, printed output bits O5..O0, printed value', printed ED)
ReferenceRow = Tuple[str, str, int, str, int, int]

MUL3X3_1_MODIFIED_ROWS: List[ReferenceRow] = [
    ("101", "111", 35, "011011", 27, 8),
    ("110", "110", 36, "011000", 24, 12),
    ("110", "111", 42, "011110", 30, 12),
    ("111", "101", 35, "011011", 27, 8),
    ("111", "110", 42, "011110", 30, 12),
    ("111", "111", 49, "011101", 29, 20),
]

MUL3X3_2_MODIFIED_ROWS: List[ReferenceRow] = [
    ("101", "111", 35, "011011", 27, 8),
    ("110", "110", 36, "101000", 40, 4),
    ("110", "111", 42, "101110", 46, 4),
    ("111", "101", 35, "011011", 27, 8),
    ("111", "110", 42, "101110", 38, 4),
    ("111", "111", 49, "101101", 45, 4),
]

# Sum-of-products expressions for the five-output 3x3 design as printed.
# Each cube is a string over the inputs a2 a1 a0 b2 b1 b0 with '1' for a
# positive literal, '0' for a negated literal and '-' for an absent input.
PUBLISHED_331_EXPRESSIONS: Dict[int, List[str]] = {
    0: ["--1--1"],
    1: ["-01-1-", "-10-1-", "-1--01", "--1-10"],
    2: [
        "010-1-", "-1-010", "0011--",
        "0-110-", "-1-111", "100--1",
        "1-0-01", "1-10-1", "1-11-0",
    ],
    3: ["-101--", "011011", "-1-10-", "10--1-", "1-11-1", "1---10"],
    4: ["-1111-", "1--1--", "11--11"],
    5: [],
}

# Percent values except MED. None marks a value that was not published.
REFERENCE_8X8_METRICS: Dict[str, Dict[str, Optional[float]]] = {
    "mul8x8_1": {"er": 22.8, "med": 137.04, "nmed": 0.21, "mred": 1.50},
    "mul8x8_2": {"er": 20.49, "med": 114.83, "nmed": 0.18, "mred": 1.42},
    "mul8x8_3": {"er": 31.41, "med": 648.20, "nmed": 1.00, "mred": 2.53},
    "SiEi": {"er": 31.59, "med": None, "nmed": 0.20, "mred": 0.62},
    "PKM": {"er": 49.86, "med": 938.32, "nmed": 1.44, "mred": 3.89},
    "ETM": {"er": 98.88, "med": None, "nmed": 2.85, "mred": 25.21},
    "SV": {"er": None, "med": None, "nmed": 0.35, "mred": 6.75},
}

# Top-1 MNIST accuracy in percent: plain LeNet, LeNet retrained with
# regularization, and LeNet+.
REFERENCE_MNIST_ACCURACY: Dict[str, Dict[str, float]] = {
    "exact": {"lenet": 99.32, "regularization": 99.41, "lenet_plus": 99.51},
    "mul8x8_1": {"lenet": 98.98, "regularization": 99.02, "lenet_plus": 99.14},
    "mul8x8_2": {"lenet": 99.32, "regularization": 99.41, "lenet_plus": 99.51},
    "mul8x8_3": {"lenet": 98.49, "regularization": 99.12, "lenet_plus": 99.22},
}

# Code ranges where most activations and weights of a quantized LeNet fall.
ACTIVATION_CODE_RANGE: Tuple[int, int] = (0, 31)
WEIGHT_CODE_RANGE: Tuple[int, int] = (96, 159)

KNOWN_DISCREPANCIES: List[str] = [
    "mul3x3_2 (111,110): printed value' 38 disagrees with its printed output bits 101110 = 46; "
    "the output bits and the O5=1/O4=0 construction rule are used (46)",
]

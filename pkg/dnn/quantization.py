"""
Per-tensor affine quantization to unsigned 8-bit codes

real = scale * (code - zero_point); zero_point is chosen so that real 0 maps
to an exact code.
"""

import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from utils.errors import DomainError

logger = logging.getLogger("quantization")

CODE_MIN = 0
CODE_MAX = 255
SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int
    bits: int = 8

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError(f"quantization scale must be positive, got {self.scale}")
        if not CODE_MIN <= self.zero_point <= CODE_MAX:
            raise DomainError(f"zero point {self.zero_point} is not an 8-bit code")
        if self.bits != 8:
            raise DomainError("only 8-bit quantization is supported")

    def to_dict(self) -> Dict[str, object]:
        return {"scale": self.scale, "zero_point": self.zero_point, "bits": self.bits}

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "QuantParams":
        return cls(float(data["scale"]), int(data["zero_point"]), int(data.get("bits", 8)))


# Pixel bytes are the input codes.
INPUT_PARAMS = QuantParams(1.0 / 255.0, 0)


@dataclass
class QuantizedTensor:
    codes: np.ndarray
    params: QuantParams

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.size and (codes.min() < CODE_MIN or codes.max() > CODE_MAX):
            raise DomainError(f"codes must lie in {CODE_MIN}..{CODE_MAX}, got {codes.min()}..{codes.max()}")
        self.codes = codes.astype(np.uint8, copy=False)

    @property
    def shape(self):
        return self.codes.shape

    def dequantize(self) -> np.ndarray:
        return dequantize(self)


def round_half_away(values) -> np.ndarray:
    """Round to nearest, ties away from zero"""
    values = np.asarray(values, dtype=np.float64)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def choose_params(values) -> QuantParams:
    """
    Min/max calibration of one tensor

    The calibrated range always contains 0. A tensor whose values are all
    equal is reported; when its range is empty the scale floor applies.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DomainError("cannot calibrate an empty tensor")

    raw_min = float(values.min())
    raw_max = float(values.max())
    if raw_min == raw_max:
        logger.warning(f"Degenerate tensor: every value equals {raw_min}")

    rmin = min(raw_min, 0.0)
    rmax = max(raw_max, 0.0)
    scale = max((rmax - rmin) / (CODE_MAX - CODE_MIN), SCALE_FLOOR)
    zero_point = int(np.clip(round_half_away(-rmin / scale), CODE_MIN, CODE_MAX))
    return QuantParams(scale, zero_point)


def quantize(values, params: QuantParams) -> QuantizedTensor:
    values = np.asarray(values, dtype=np.float64)
    codes = np.clip(round_half_away(values / params.scale) + params.zero_point, CODE_MIN, CODE_MAX)
    return QuantizedTensor(codes.astype(np.uint8), params)


def dequantize(tensor: QuantizedTensor) -> np.ndarray:
    return tensor.params.scale * (tensor.codes.astype(np.float64) - tensor.params.zero_point)

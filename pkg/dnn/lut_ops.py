"""
Quantized linear and convolution kernels whose code products come from a LUT

Only the activation x weight code product is looked up; the zero-point
correction terms are exact integer sums:

    acc = sum lut[(a << 8) | w] - z_w * sum a - z_a * sum w + K * z_a * z_w

With the exact product table this equals sum (a - z_a) * (w - z_w).
"""

import logging
import os
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dnn.quantization import CODE_MAX, CODE_MIN, QuantParams, QuantizedTensor, round_half_away
from multipliers.aggregate import (
    AGGREGATED_PLAN_BUILDERS,
    LUT_ENTRIES,
    aggregate_table,
    plan_for_name,
    read_lut16,
)
from utils.errors import AccumulatorOverflowError, DomainError

logger = logging.getLogger("lut_ops")

ACC_LIMIT = 1 << 31

# Gathered elements per chunk (index and value arrays are int32).
CHUNK_ELEMENTS = 1 << 22

LUT_VARIANT_NAMES = {0: "exact8x8_agg", 1: "mul8x8_1", 2: "mul8x8_2", 3: "mul8x8_3"}


def exact_lut() -> np.ndarray:
    codes = np.arange(256, dtype=np.int64)
    return np.outer(codes, codes).ravel()


def load_lut(source: str, threads: int = 1) -> Tuple[str, np.ndarray]:
    """
    Resolve a LUT argument

    Args:
        source: "exact", an aggregated design name, or a LUT file path
        threads: Workers used when a design table has to be built

    Returns:
        (multiplier name, 65536-entry int64 table)
    """
    if source == "exact":
        return "exact", exact_lut()
    if source in AGGREGATED_PLAN_BUILDERS:
        return source, aggregate_table(plan_for_name(source), threads)

    header, table = read_lut16(source)
    name = LUT_VARIANT_NAMES.get(header.variant, os.path.splitext(os.path.basename(source))[0])
    logger.info(f"Loaded {name} LUT from {source}")
    return name, table


def _check_lut(lut: np.ndarray) -> np.ndarray:
    lut = np.asarray(lut)
    if lut.shape != (LUT_ENTRIES,):
        raise DomainError(f"LUT must have {LUT_ENTRIES} entries, got shape {lut.shape}")
    return lut.astype(np.int32, copy=False)


def _guard(acc: np.ndarray) -> np.ndarray:
    if acc.size and int(np.abs(acc).max()) >= ACC_LIMIT:
        raise AccumulatorOverflowError(f"accumulator magnitude {int(np.abs(acc).max())} reaches 2^31")
    return acc


def quantize_bias(bias: Optional[np.ndarray], input_scale: float, weight_scale: float, size: int) -> np.ndarray:
    """Bias as an int64 accumulator offset with scale s_a * s_w"""
    if bias is None:
        return np.zeros(size, dtype=np.int64)
    return round_half_away(np.asarray(bias, dtype=np.float64) / (input_scale * weight_scale)).astype(np.int64)


def requantize(acc: np.ndarray, input_scale: float, weight_scale: float, out_params: QuantParams) -> QuantizedTensor:
    """Scale accumulators to output codes, ties away from zero, clamped to 0..255"""
    multiplier = (input_scale * weight_scale) / out_params.scale
    codes = round_half_away(acc.astype(np.float64) * multiplier) + out_params.zero_point
    return QuantizedTensor(np.clip(codes, CODE_MIN, CODE_MAX).astype(np.uint8), out_params)


def code_product_sums(a_codes: np.ndarray, w_codes: np.ndarray, lut: np.ndarray) -> np.ndarray:
    """
    sum_k lut[(a[n, k] << 8) | w[o, k]] for every row n and output o

    Args:
        a_codes: (N, K) activation codes
        w_codes: (O, K) weight codes
        lut: Product table

    Returns:
        (N, O) int64 sums
    """
    a = a_codes.astype(np.int32)
    w = w_codes.astype(np.int32)
    table = _check_lut(lut)
    n_rows, k = a.shape
    n_out = w.shape[0]
    rows_per_chunk = max(1, CHUNK_ELEMENTS // max(1, n_out * k))
    w_shifted = w[np.newaxis, :, :]

    sums = np.empty((n_rows, n_out), dtype=np.int64)
    for start in range(0, n_rows, rows_per_chunk):
        block = a[start:start + rows_per_chunk, np.newaxis, :]
        index = (block << 8) | w_shifted
        sums[start:start + rows_per_chunk] = np.take(table, index).sum(axis=2, dtype=np.int64)
    return sums


def linear_accumulate(
    inputs: QuantizedTensor,
    weights: QuantizedTensor,
    bias_q: np.ndarray,
    lut: Optional[np.ndarray],
) -> np.ndarray:
    """
    Integer accumulators of a quantized dense layer, bias included

    Args:
        inputs: (N, K) activation codes
        weights: (O, K) weight codes
        bias_q: (O,) bias in accumulator units
        lut: Product table, or None for the reference pipeline that
            multiplies zero-point-shifted codes directly

    Returns:
        (N, O) int64 accumulators
    """
    a = inputs.codes
    w = weights.codes
    if a.ndim != 2 or w.ndim != 2 or a.shape[1] != w.shape[1]:
        raise DomainError(f"incompatible linear shapes {a.shape} x {w.shape}")

    z_a = inputs.params.zero_point
    z_w = weights.params.zero_point
    if lut is None:
        acc = (a.astype(np.int64) - z_a) @ (w.astype(np.int64) - z_w).T
    else:
        k = a.shape[1]
        acc = code_product_sums(a, w, lut)
        acc -= z_w * a.sum(axis=1, dtype=np.int64)[:, np.newaxis]
        acc -= z_a * w.sum(axis=1, dtype=np.int64)[np.newaxis, :]
        acc += k * z_a * z_w
    return _guard(acc + np.asarray(bias_q, dtype=np.int64)[np.newaxis, :])


def lut_linear(
    inputs: QuantizedTensor,
    weights: QuantizedTensor,
    bias: Optional[np.ndarray],
    lut: Optional[np.ndarray],
    out_params: QuantParams,
) -> QuantizedTensor:
    """
    Quantized dense layer with LUT products

    Args:
        inputs: (N, K) activations
        weights: (O, K) weights
        bias: (O,) real-valued bias or None
        lut: 65536-entry product table indexed by (a << 8) | w; None for exact
        out_params: Output quantization

    Returns:
        (N, O) output codes
    """
    bias_q = quantize_bias(bias, inputs.params.scale, weights.params.scale, weights.shape[0])
    acc = linear_accumulate(inputs, weights, bias_q, lut)
    return requantize(acc, inputs.params.scale, weights.params.scale, out_params)


def im2col(codes: np.ndarray, kh: int, kw: int, stride: int, padding: int, pad_value: int) -> Tuple[np.ndarray, int, int]:
    """
    Unfold (N, C, H, W) codes into (N * OH * OW, C * kh * kw) patches

    Padding uses pad_value, which is the input zero point so that padded
    positions are real zeros.
    """
    if padding:
        codes = np.pad(codes, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=pad_value)
    n, c = codes.shape[:2]
    windows = sliding_window_view(codes, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    patches = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * out_h * out_w, c * kh * kw)
    return patches, out_h, out_w


def conv2d_accumulate(
    inputs: QuantizedTensor,
    kernels: QuantizedTensor,
    bias_q: np.ndarray,
    lut: Optional[np.ndarray],
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """(N, O, OH, OW) int64 accumulators of a quantized convolution, bias included"""
    if inputs.codes.ndim != 4 or kernels.codes.ndim != 4 or inputs.shape[1] != kernels.shape[1]:
        raise DomainError(f"incompatible conv shapes {inputs.shape} x {kernels.shape}")
    n = inputs.shape[0]
    n_out, _, kh, kw = kernels.shape

    patches, out_h, out_w = im2col(inputs.codes, kh, kw, stride, padding, inputs.params.zero_point)
    flat_inputs = QuantizedTensor(patches, inputs.params)
    flat_kernels = QuantizedTensor(kernels.codes.reshape(n_out, -1), kernels.params)
    acc = linear_accumulate(flat_inputs, flat_kernels, bias_q, lut)
    return acc.reshape(n, out_h, out_w, n_out).transpose(0, 3, 1, 2)


def lut_conv2d(
    inputs: QuantizedTensor,
    kernels: QuantizedTensor,
    bias: Optional[np.ndarray],
    lut: Optional[np.ndarray],
    out_params: QuantParams,
    stride: int = 1,
    padding: int = 0,
) -> QuantizedTensor:
    """Quantized convolution with LUT products; (N, C, H, W) -> (N, O, OH, OW) codes"""
    bias_q = quantize_bias(bias, inputs.params.scale, kernels.params.scale, kernels.shape[0])
    acc = conv2d_accumulate(inputs, kernels, bias_q, lut, stride, padding)
    return requantize(acc, inputs.params.scale, kernels.params.scale, out_params)


def maxpool2d_codes(tensor: QuantizedTensor, size: int = 2) -> QuantizedTensor:
    """Max pooling on codes; the quantizer is monotone so this equals pooling real values"""
    n, c, h, w = tensor.shape
    blocks = tensor.codes[:, :, : h - h % size, : w - w % size].reshape(n, c, h // size, size, w // size, size)
    return QuantizedTensor(blocks.max(axis=(3, 5)), tensor.params)


def int_linear_reference(
    inputs: QuantizedTensor,
    weights: QuantizedTensor,
    bias: Optional[np.ndarray],
    out_params: QuantParams,
) -> QuantizedTensor:
    """Standard integer affine-quantized dense layer: sum (a - z_a) * (w - z_w) + bias"""
    a = inputs.codes.astype(np.int64) - inputs.params.zero_point
    w = weights.codes.astype(np.int64) - weights.params.zero_point
    bias_q = quantize_bias(bias, inputs.params.scale, weights.params.scale, w.shape[0])
    acc = _guard(np.einsum("nk,ok->no", a, w) + bias_q[np.newaxis, :])
    return requantize(acc, inputs.params.scale, weights.params.scale, out_params)


def int_conv2d_reference(
    inputs: QuantizedTensor,
    kernels: QuantizedTensor,
    bias: Optional[np.ndarray],
    out_params: QuantParams,
    stride: int = 1,
    padding: int = 0,
) -> QuantizedTensor:
    """Standard integer affine-quantized convolution over zero-point-shifted codes"""
    a = inputs.codes.astype(np.int64) - inputs.params.zero_point
    w = kernels.codes.astype(np.int64) - kernels.params.zero_point
    if padding:
        a = np.pad(a, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    kh, kw = w.shape[2:]
    windows = sliding_window_view(a, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    bias_q = quantize_bias(bias, inputs.params.scale, kernels.params.scale, w.shape[0])
    acc = np.einsum("nchwij,ocij->nohw", windows, w) + bias_q[np.newaxis, :, np.newaxis, np.newaxis]
    return requantize(_guard(acc), inputs.params.scale, kernels.params.scale, out_params)

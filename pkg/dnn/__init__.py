"""
Quantized LeNet on MNIST with multiplier lookup tables
"""

from dnn.inference import EvalResult, QuantizedLeNet, calibrate, infer, weight_code_histogram
from dnn.lenet import LeNet, LeNetModel, load_checkpoint, save_checkpoint
from dnn.lut_ops import exact_lut, load_lut, lut_conv2d, lut_linear
from dnn.quantization import QuantParams, QuantizedTensor, choose_params, dequantize, quantize
from dnn.trainer import retrain, train_lenet

__all__ = [
    "EvalResult",
    "LeNet",
    "LeNetModel",
    "QuantParams",
    "QuantizedLeNet",
    "QuantizedTensor",
    "calibrate",
    "choose_params",
    "dequantize",
    "exact_lut",
    "infer",
    "load_checkpoint",
    "load_lut",
    "lut_conv2d",
    "lut_linear",
    "quantize",
    "retrain",
    "save_checkpoint",
    "train_lenet",
    "weight_code_histogram",
]

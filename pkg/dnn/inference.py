"""
Calibration and integer inference of LeNet with multiplier LUTs
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel

from data.reference_values import ACTIVATION_CODE_RANGE, REFERENCE_MNIST_ACCURACY, WEIGHT_CODE_RANGE
from dnn.lenet import LayerSpec, LeNetModel
from dnn.lut_ops import conv2d_accumulate, linear_accumulate, maxpool2d_codes, quantize_bias, requantize
from dnn.quantization import INPUT_PARAMS, QuantParams, QuantizedTensor, choose_params, quantize
from multipliers.metrics import range_histogram
from utils.data_processor import DataProcessor, MnistDataset
from utils.errors import DomainError

logger = logging.getLogger("inference")

DEFAULT_BATCH = 250


class EvalResult(BaseModel):
    multiplier: str
    top1_accuracy: float
    dal: float
    per_class_accuracy: List[float]
    n_images: int
    correct: int
    published_accuracy: Optional[float] = None
    published_dal: Optional[float] = None


def published_accuracy(multiplier: str, plus: bool = False, regularized: bool = False) -> Optional[float]:
    """
    Published top-1 MNIST accuracy as a fraction

    Args:
        multiplier: "exact" or an aggregated design name
        plus: LeNet+ topology
        regularized: Plain LeNet retrained with L2 weight decay

    Returns:
        The reference accuracy, or None for a multiplier without one
    """
    row = REFERENCE_MNIST_ACCURACY.get(multiplier)
    if row is None:
        return None
    column = "lenet_plus" if plus else "regularization" if regularized else "lenet"
    return row[column] / 100.0


def _regularized(model: LeNetModel) -> bool:
    record = model.training or {}
    return record.get("l2", 0.0) > 0 or record.get("retrain", {}).get("l2", 0.0) > 0


def input_key(layers: Sequence[LayerSpec], index: int) -> str:
    return "input" if index == 0 else f"{layers[index - 1].name}.out"


def calibrate(model: LeNetModel, calib_codes: np.ndarray) -> Dict[str, QuantParams]:
    """
    Per-tensor quantization parameters for every weight and activation

    Args:
        model: Trained float model
        calib_codes: (N, 1, 32, 32) uint8 calibration images

    Returns:
        Map with "input", "<layer>.weight" and "<layer>.out" entries;
        hidden activations are calibrated after their ReLU
    """
    if len(calib_codes) == 0:
        raise DomainError("calibration batch is empty")

    network = model.network
    network.eval()
    activations: Dict[str, torch.Tensor] = {}
    with torch.no_grad():
        network(torch.from_numpy(DataProcessor.to_float(calib_codes)), activations=activations)

    params = {"input": INPUT_PARAMS}
    for spec in network.layers:
        weight = getattr(network, spec.name).weight.detach().double().numpy()
        params[f"{spec.name}.weight"] = choose_params(weight)
        params[f"{spec.name}.out"] = choose_params(activations[spec.name].double().numpy())
    logger.info(f"Calibrated {len(params)} tensors on {len(calib_codes)} images")
    return params


@dataclass
class QuantizedLayer:
    spec: LayerSpec
    weights: QuantizedTensor
    bias: np.ndarray
    input_params: QuantParams
    out_params: QuantParams

    def accumulate(self, inputs: QuantizedTensor, lut: Optional[np.ndarray]) -> np.ndarray:
        bias_q = quantize_bias(self.bias, self.input_params.scale, self.weights.params.scale, self.weights.shape[0])
        if self.spec.kind == "conv":
            return conv2d_accumulate(inputs, self.weights, bias_q, lut, padding=self.spec.padding)
        return linear_accumulate(inputs, self.weights, bias_q, lut)

    def forward(self, inputs: QuantizedTensor, lut: Optional[np.ndarray]) -> QuantizedTensor:
        acc = self.accumulate(inputs, lut)
        return requantize(acc, self.input_params.scale, self.weights.params.scale, self.out_params)


class QuantizedLeNet:
    """Integer LeNet whose code products are served by a LUT"""

    def __init__(self, model: LeNetModel, params: Optional[Dict[str, QuantParams]] = None):
        params = params or model.quant_params
        if params is None:
            raise DomainError("model is not calibrated")
        self.logger = logging.getLogger("QuantizedLeNet")

        layers = model.network.layers
        self.layers: List[QuantizedLayer] = []
        for index, spec in enumerate(layers):
            module = getattr(model.network, spec.name)
            weight_params = params[f"{spec.name}.weight"]
            self.layers.append(QuantizedLayer(
                spec=spec,
                weights=quantize(module.weight.detach().double().numpy(), weight_params),
                bias=module.bias.detach().double().numpy(),
                input_params=params[input_key(layers, index)],
                out_params=params[f"{spec.name}.out"],
            ))

    def forward(self, codes: np.ndarray, lut: Optional[np.ndarray],
                trace: Optional[Dict[str, np.ndarray]] = None) -> np.ndarray:
        """
        Run the integer pipeline on padded image codes

        Args:
            codes: (N, 1, 32, 32) uint8 pixel bytes
            lut: Product table; None runs the reference integer pipeline
            trace: Filled with each layer's output codes and the final accumulators

        Returns:
            (N, 10) int64 accumulators of the last layer
        """
        x = QuantizedTensor(codes, INPUT_PARAMS)
        for layer in self.layers[:-1]:
            if layer.spec.kind == "linear" and x.codes.ndim > 2:
                x = QuantizedTensor(x.codes.reshape(len(x.codes), -1), x.params)
            x = layer.forward(x, lut)
            if trace is not None:
                trace[layer.spec.name] = x.codes
            if layer.spec.pool:
                x = maxpool2d_codes(x)

        last = self.layers[-1]
        logits = last.accumulate(x, lut)
        if trace is not None:
            trace[last.spec.name] = logits
        return logits

    def predict(self, codes: np.ndarray, lut: Optional[np.ndarray]) -> np.ndarray:
        return np.argmax(self.forward(codes, lut), axis=1)

    def layer_inputs(self, codes: np.ndarray) -> Dict[str, np.ndarray]:
        """Activation codes entering each layer (reference pipeline)"""
        trace: Dict[str, np.ndarray] = {}
        self.forward(codes, None, trace)
        inputs = {self.layers[0].spec.name: codes}
        for previous, layer in zip(self.layers, self.layers[1:]):
            produced = trace[previous.spec.name]
            if previous.spec.pool:
                produced = maxpool2d_codes(QuantizedTensor(produced, previous.out_params)).codes
            inputs[layer.spec.name] = produced
        return inputs


def _chunks(total: int, batch_size: int) -> List[Tuple[int, int]]:
    return [(start, min(start + batch_size, total)) for start in range(0, total, batch_size)]


def _predict_chunk(qnet: QuantizedLeNet, codes: np.ndarray, lut: Optional[np.ndarray], bounds: Tuple[int, int]):
    start, stop = bounds
    return qnet.predict(codes[start:stop], lut)


def predict_all(qnet: QuantizedLeNet, codes: np.ndarray, lut: Optional[np.ndarray],
                threads: int = 1, batch_size: int = DEFAULT_BATCH) -> np.ndarray:
    """Predictions for every image; chunks run in parallel and are joined in order"""
    bounds = _chunks(len(codes), batch_size)
    work = partial(_predict_chunk, qnet, codes, lut)
    if threads <= 1:
        return np.concatenate([work(b) for b in bounds]) if bounds else np.empty(0, dtype=np.int64)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.concatenate(list(pool.map(work, bounds)))


def infer(
    model: LeNetModel,
    dataset: MnistDataset,
    lut: Optional[np.ndarray],
    multiplier: str = "exact",
    baseline_accuracy: Optional[float] = None,
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH,
) -> EvalResult:
    """
    Top-1 accuracy of the LUT pipeline over a dataset

    Args:
        model: Calibrated model
        dataset: Test images and labels
        lut: Product table; None or the exact table gives the baseline
        multiplier: Name reported with the result
        baseline_accuracy: Exact-multiplier accuracy; computed when omitted
        threads: Inference workers
        batch_size: Images per chunk

    Returns:
        EvalResult with DAL in percentage points against the exact run, and
        the published accuracy and DAL of the same multiplier and network
        when they exist
    """
    qnet = QuantizedLeNet(model)
    codes = DataProcessor.pad_images(dataset.images)
    labels = dataset.labels.astype(np.int64)

    predictions = predict_all(qnet, codes, lut, threads, batch_size)
    hits = predictions == labels
    accuracy = float(hits.mean()) if len(labels) else 0.0

    if multiplier == "exact":
        baseline_accuracy = accuracy
    elif baseline_accuracy is None:
        baseline = predict_all(qnet, codes, None, threads, batch_size)
        baseline_accuracy = float((baseline == labels).mean())

    per_class = [float(hits[labels == c].mean()) if np.any(labels == c) else 0.0 for c in range(10)]
    regularized = _regularized(model)
    reference = published_accuracy(multiplier, model.plus, regularized)
    reference_exact = published_accuracy("exact", model.plus, regularized)
    result = EvalResult(
        multiplier=multiplier,
        top1_accuracy=accuracy,
        dal=100.0 * (baseline_accuracy - accuracy),
        per_class_accuracy=per_class,
        n_images=len(labels),
        correct=int(hits.sum()),
        published_accuracy=reference,
        published_dal=None if reference is None else round(100.0 * (reference_exact - reference), 6),
    )
    logger.info(f"{multiplier}: top-1 {100 * accuracy:.2f}% DAL {result.dal:+.2f}pp on {len(labels)} images")
    return result


def weight_code_histogram(
    model: LeNetModel,
    params: Dict[str, QuantParams],
    calib_codes: np.ndarray,
    ranges: Sequence[Tuple[int, int]] = (ACTIVATION_CODE_RANGE, WEIGHT_CODE_RANGE),
) -> Dict[str, object]:
    """
    Fractions of weight codes and multiplier-input activation codes in each range

    Args:
        model: Trained model
        params: Calibration parameters
        calib_codes: (N, 1, 32, 32) uint8 images used for the activation codes
        ranges: Inclusive code ranges

    Returns:
        Dict with the ranges and one fraction list for weights and one for activations
    """
    qnet = QuantizedLeNet(model, params)
    weights = np.concatenate([layer.weights.codes.ravel() for layer in qnet.layers])
    activations = np.concatenate([codes.ravel() for codes in qnet.layer_inputs(calib_codes).values()])
    return {
        "ranges": [list(r) for r in ranges],
        "weights": range_histogram(weights, ranges),
        "activations": range_histogram(activations, ranges),
        "weight_codes": int(weights.size),
        "activation_codes": int(activations.size),
    }

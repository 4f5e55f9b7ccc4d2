"""
Float training of LeNet and LUT-aware fine-tuning

Fine-tuning runs every conv/dense layer through the integer LUT pipeline in
the forward pass and lets the gradient of the float layer through unchanged
(straight-through estimator).
"""

import copy
import logging
import math
from typing import Dict, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from dnn.inference import calibrate, infer, input_key
from dnn.lenet import LayerSpec, LeNet, LeNetModel
from dnn.lut_ops import conv2d_accumulate, linear_accumulate, quantize_bias
from dnn.quantization import QuantParams, choose_params, quantize
from utils.data_processor import DataProcessor, MnistDataset
from utils.errors import DivergenceError, DomainError

logger = logging.getLogger("trainer")

DEFAULT_BATCH = 64
DEFAULT_MOMENTUM = 0.9
DEFAULT_CALIB_SIZE = 1000


def _seed_everything(seed: int) -> torch.Generator:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def _tensors(dataset: MnistDataset):
    images = torch.from_numpy(DataProcessor.to_float(DataProcessor.pad_images(dataset.images)))
    labels = torch.from_numpy(dataset.labels.astype(np.int64))
    return images, labels


def float_accuracy(network: LeNet, dataset: MnistDataset, batch_size: int = 1000) -> float:
    if len(dataset) == 0:
        return 0.0
    images, labels = _tensors(dataset)
    network.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(labels), batch_size):
            logits = network(images[start:start + batch_size])
            correct += int((logits.argmax(dim=1) == labels[start:start + batch_size]).sum())
    return correct / len(labels)


def _run_epoch(network, images, labels, optimizer, generator, batch_size, epoch, lr, hook=None) -> float:
    network.train()
    order = torch.randperm(len(labels), generator=generator)
    total = 0.0
    last_finite = None
    batches = 0
    for batch, start in enumerate(range(0, len(labels), batch_size)):
        index = order[start:start + batch_size]
        optimizer.zero_grad()
        loss = F.cross_entropy(network(images[index], hook=hook), labels[index])
        if not torch.isfinite(loss):
            raise DivergenceError(
                "non-finite training loss",
                {"epoch": epoch, "batch": batch, "lr": lr, "last_finite_loss": last_finite},
            )
        loss.backward()
        optimizer.step()
        last_finite = float(loss)
        total += last_finite
        batches += 1
    return total / max(1, batches)


def train_lenet(
    train_set: MnistDataset,
    epochs: int,
    lr: float,
    l2: float = 0.0,
    seed: int = 0,
    plus: bool = False,
    batch_size: int = DEFAULT_BATCH,
    test_set: Optional[MnistDataset] = None,
) -> LeNetModel:
    """
    Train LeNet with SGD and cross-entropy

    Args:
        train_set: Training images and labels
        epochs: Number of passes, at least 1
        lr: Learning rate
        l2: Weight decay
        seed: Seed for initialization and shuffling
        plus: Build LeNet+ instead of LeNet
        batch_size: Mini-batch size
        test_set: Evaluated after training for the training record

    Returns:
        Trained model with its training record
    """
    if epochs < 1:
        raise DomainError(f"epochs must be at least 1, got {epochs}")

    generator = _seed_everything(seed)
    network = LeNet(plus=plus)
    optimizer = torch.optim.SGD(network.parameters(), lr=lr, momentum=DEFAULT_MOMENTUM, weight_decay=l2)
    images, labels = _tensors(train_set)

    for epoch in range(epochs):
        try:
            loss = _run_epoch(network, images, labels, optimizer, generator, batch_size, epoch, lr)
        except DivergenceError as e:
            logger.error(f"Training aborted: {e}")
            raise
        logger.info(f"Epoch {epoch + 1}/{epochs}: mean loss {loss:.4f}")

    record = {
        "seed": seed,
        "epochs": epochs,
        "lr": lr,
        "l2": l2,
        "batch_size": batch_size,
        "train_accuracy": float_accuracy(network, train_set),
    }
    if test_set is not None:
        record["test_accuracy"] = float_accuracy(network, test_set)
        logger.info(f"Float test accuracy {100 * record['test_accuracy']:.2f}%")
    return LeNetModel(network, record)


class LutForwardHook:
    """
    Layer hook that replaces each float layer output by its LUT result

    The returned tensor equals the dequantized LUT accumulator in the forward
    pass and carries the float layer's gradient in the backward pass.
    """

    def __init__(self, lut: np.ndarray, params: Dict[str, QuantParams], layers):
        self.lut = lut
        self.params = params
        self.input_keys = {spec.name: input_key(layers, index) for index, spec in enumerate(layers)}

    def __call__(self, spec: LayerSpec, module: nn.Module, x: torch.Tensor) -> torch.Tensor:
        float_out = module(x)

        input_params = self.params[self.input_keys[spec.name]]
        weight = module.weight.detach().double().numpy()
        weight_params = choose_params(weight)
        inputs = quantize(x.detach().double().numpy(), input_params)
        weights = quantize(weight, weight_params)
        bias_q = quantize_bias(module.bias.detach().double().numpy(), input_params.scale,
                               weight_params.scale, weights.shape[0])
        if spec.kind == "conv":
            acc = conv2d_accumulate(inputs, weights, bias_q, self.lut, padding=spec.padding)
        else:
            acc = linear_accumulate(inputs, weights, bias_q, self.lut)

        lut_out = torch.from_numpy(acc * (input_params.scale * weight_params.scale)).to(float_out.dtype)
        return float_out + (lut_out - float_out).detach()


def retrain(
    model: LeNetModel,
    lut: np.ndarray,
    train_set: MnistDataset,
    epochs: int,
    l2: float,
    lr: float = 0.001,
    seed: int = 0,
    holdout_fraction: float = 0.1,
    calib_size: int = DEFAULT_CALIB_SIZE,
    batch_size: int = DEFAULT_BATCH,
    multiplier: str = "lut",
    threads: int = 1,
    holdout_set: Optional[MnistDataset] = None,
) -> LeNetModel:
    """
    Fine-tune a model through the LUT forward pass

    The model with the best LUT accuracy on the holdout is returned; the
    original model competes too, so accuracy never drops on the holdout.
    Divergence returns the original model. A holdout split of train_set was
    usually seen by the base training, which biases the selection; the
    record names the holdout source.

    Args:
        model: Trained model
        lut: Product table used in the forward pass
        train_set: Training data; a holdout split is taken from it
        epochs: Fine-tuning passes; 0 returns the model unchanged
        l2: Weight decay
        lr: Learning rate
        seed: Seed for the split, shuffling and calibration batch
        holdout_fraction: Share of train_set kept for selection
        calib_size: Images used for calibration
        batch_size: Mini-batch size
        multiplier: Name used in the retraining record
        threads: Inference workers for holdout evaluation
        holdout_set: Images the base model never trained on; when given,
            all of train_set is used for fine-tuning

    Returns:
        Calibrated model with the retraining record
    """
    if epochs == 0:
        return model

    if holdout_set is None:
        fit_set, holdout = DataProcessor.stratified_holdout(train_set, holdout_fraction, seed)
        holdout_source = "training split"
    else:
        fit_set, holdout = train_set, holdout_set
        holdout_source = "separate holdout set"
    calib_codes = DataProcessor.pad_images(fit_set.images[:calib_size])

    def evaluate(candidate: LeNetModel):
        candidate.quant_params = calibrate(candidate, calib_codes)
        return infer(candidate, holdout, lut, multiplier, baseline_accuracy=0.0, threads=threads).top1_accuracy

    original = LeNetModel(copy.deepcopy(model.network), dict(model.training), model.quant_params)
    best_accuracy = evaluate(original)
    best_state = copy.deepcopy(original.network.state_dict())
    best_epoch = 0
    initial_accuracy = best_accuracy
    logger.info(f"LUT holdout accuracy before retraining: {100 * best_accuracy:.2f}%")

    generator = _seed_everything(seed)
    candidate = LeNetModel(copy.deepcopy(model.network), dict(model.training))
    optimizer = torch.optim.SGD(candidate.network.parameters(), lr=lr, momentum=DEFAULT_MOMENTUM, weight_decay=l2)
    images, labels = _tensors(fit_set)

    for epoch in range(epochs):
        params = calibrate(candidate, calib_codes)
        hook = LutForwardHook(lut, params, candidate.network.layers)
        try:
            loss = _run_epoch(candidate.network, images, labels, optimizer, generator, batch_size, epoch, lr, hook)
        except DivergenceError as e:
            logger.warning(f"Retraining diverged, keeping the original model: {e}")
            return model

        accuracy = evaluate(candidate)
        logger.info(f"Retrain epoch {epoch + 1}/{epochs}: loss {loss:.4f}, LUT holdout accuracy {100 * accuracy:.2f}%")
        if accuracy > best_accuracy and not math.isclose(accuracy, best_accuracy):
            best_accuracy = accuracy
            best_state = copy.deepcopy(candidate.network.state_dict())
            best_epoch = epoch + 1

    result = LeNetModel(LeNet(plus=model.plus), dict(model.training))
    result.network.load_state_dict(best_state)
    result.quant_params = calibrate(result, calib_codes)
    result.training["retrain"] = {
        "multiplier": multiplier,
        "epochs": epochs,
        "lr": lr,
        "l2": l2,
        "seed": seed,
        "holdout_fraction": holdout_fraction if holdout_set is None else None,
        "holdout_source": holdout_source,
        "holdout_size": len(holdout.labels),
        "holdout_accuracy_before": initial_accuracy,
        "holdout_accuracy_after": best_accuracy,
        "selected_epoch": best_epoch,
        "interpretation": "straight-through estimator over the LUT forward pass with L2 weight decay",
    }
    if best_epoch == 0:
        logger.warning("No retraining epoch beat the original model on the holdout split; returning it")
    return result

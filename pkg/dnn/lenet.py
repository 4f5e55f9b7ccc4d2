"""
LeNet-5 for 32x32 MNIST and its checkpoint format

Checkpoint layout: 8-byte magic, little-endian uint32 manifest length, JSON
manifest (topology, tensor names/shapes/offsets, quantization parameters,
training record), then every tensor as little-endian float32 in manifest
order.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from dnn.quantization import QuantParams
from utils.errors import DataFormatError

logger = logging.getLogger("lenet")

CHECKPOINT_MAGIC = b"AMCKPT1\n"
CHECKPOINT_VERSION = 1
_LENGTH = struct.Struct("<I")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    padding: int = 0
    relu: bool = True
    pool: bool = False


LENET_LAYERS = (
    LayerSpec("conv1", "conv", pool=True),
    LayerSpec("conv2", "conv", pool=True),
    LayerSpec("fc1", "linear"),
    LayerSpec("fc2", "linear"),
    LayerSpec("fc3", "linear", relu=False),
)

# LeNet+ keeps the 16x5x5 feature map so the dense stack is unchanged.
LENET_PLUS_LAYERS = LENET_LAYERS[:2] + (LayerSpec("conv3", "conv", padding=1),) + LENET_LAYERS[2:]

LayerHook = Callable[[LayerSpec, nn.Module, torch.Tensor], torch.Tensor]


class LeNet(nn.Module):
    """conv(1->6,5x5) pool conv(6->16,5x5) pool [conv(16->16,3x3)] dense 120 84 10"""

    def __init__(self, plus: bool = False):
        super().__init__()
        self.plus = plus
        self.conv1 = nn.Conv2d(1, 6, 5)
        self.conv2 = nn.Conv2d(6, 16, 5)
        if plus:
            self.conv3 = nn.Conv2d(16, 16, 3, padding=1)
        self.fc1 = nn.Linear(16 * 5 * 5, 120)
        self.fc2 = nn.Linear(120, 84)
        self.fc3 = nn.Linear(84, 10)

    @property
    def layers(self):
        return LENET_PLUS_LAYERS if self.plus else LENET_LAYERS

    def forward(self, x: torch.Tensor, hook: Optional[LayerHook] = None,
                activations: Optional[Dict[str, torch.Tensor]] = None) -> torch.Tensor:
        """
        Args:
            x: (N, 1, 32, 32) images scaled to [0, 1]
            hook: Replaces the call of each conv/dense module when given
            activations: Filled with every layer output after its ReLU
        """
        for spec in self.layers:
            module = getattr(self, spec.name)
            if spec.kind == "linear" and x.dim() > 2:
                x = torch.flatten(x, 1)
            x = hook(spec, module, x) if hook is not None else module(x)
            if spec.relu:
                x = F.relu(x)
            if activations is not None:
                activations[spec.name] = x
            if spec.pool:
                x = F.max_pool2d(x, 2)
        return x


@dataclass
class LeNetModel:
    network: LeNet
    training: Dict[str, object] = field(default_factory=dict)
    quant_params: Optional[Dict[str, QuantParams]] = None

    @property
    def plus(self) -> bool:
        return self.network.plus

    @property
    def topology(self) -> str:
        return "lenet_plus" if self.plus else "lenet"

    def weight_l2(self) -> float:
        """Sum of squared conv/dense weights (biases excluded)"""
        return float(sum((module.weight.detach().double() ** 2).sum() for module in self._weighted()))

    def _weighted(self) -> List[nn.Module]:
        return [getattr(self.network, spec.name) for spec in self.network.layers]


def save_checkpoint(model: LeNetModel, path: str) -> None:
    state = model.network.state_dict()
    tensors = []
    blobs = []
    offset = 0
    for name, tensor in state.items():
        data = tensor.detach().cpu().numpy().astype("<f4").tobytes()
        tensors.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)

    manifest = {
        "version": CHECKPOINT_VERSION,
        "topology": {"name": model.topology, "plus": model.plus, "layers": [s.name for s in model.network.layers]},
        "tensors": tensors,
        "quant_params": (
            {key: params.to_dict() for key, params in model.quant_params.items()}
            if model.quant_params is not None
            else None
        ),
        "training": model.training,
    }
    encoded = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(_LENGTH.pack(len(encoded)))
        f.write(encoded)
        for data in blobs:
            f.write(data)
    logger.info(f"Saved {model.topology} checkpoint to {path}")


def load_checkpoint(path: str) -> LeNetModel:
    with open(path, "rb") as f:
        raw = f.read()

    header_size = len(CHECKPOINT_MAGIC) + _LENGTH.size
    if len(raw) < header_size or raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataFormatError("not a checkpoint (bad magic)", path=path, offset=0)
    (manifest_size,) = _LENGTH.unpack_from(raw, len(CHECKPOINT_MAGIC))
    blob_start = header_size + manifest_size
    if len(raw) < blob_start:
        raise DataFormatError("checkpoint manifest truncated", path=path, offset=len(raw))

    try:
        manifest = json.loads(raw[header_size:blob_start].decode("utf-8"))
        network = LeNet(plus=bool(manifest["topology"]["plus"]))
        expected = network.state_dict()
        state = {}
        for entry in manifest["tensors"]:
            name = entry["name"]
            shape = tuple(entry["shape"])
            if name not in expected or tuple(expected[name].shape) != shape:
                raise DataFormatError(f"tensor {name} {shape} does not fit the {manifest['topology']['name']} topology",
                                      path=path)
            count = int(np.prod(shape))
            start = blob_start + entry["offset"]
            if start + 4 * count > len(raw):
                raise DataFormatError(f"tensor {name} truncated", path=path, offset=len(raw))
            values = np.frombuffer(raw, dtype="<f4", count=count, offset=start).astype(np.float32).reshape(shape)
            state[name] = torch.from_numpy(values.copy())
        if set(state) != set(expected):
            raise DataFormatError(f"checkpoint lacks tensors {sorted(set(expected) - set(state))}", path=path)

        network.load_state_dict(state)
        quant = manifest.get("quant_params")
        quant_params = {key: QuantParams.from_dict(value) for key, value in quant.items()} if quant else None
        return LeNetModel(network, dict(manifest.get("training") or {}), quant_params)
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"malformed checkpoint manifest: {e}", path=path, offset=header_size)

import gzip
import logging
import os
import struct
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from utils.errors import DataFormatError

logger = logging.getLogger("DataProcessor")

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MNIST_SIDE = 28
PADDED_SIDE = 32

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class MnistDataset:
    """Images as (N, 28, 28) uint8 and labels as (N,) uint8"""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "MnistDataset":
        return MnistDataset(self.images[indices], self.labels[indices])


class DataProcessor:
    """Utility for loading and preparing MNIST data"""

    @staticmethod
    def read_idx(path: str, expected_magic: int) -> np.ndarray:
        """
        Parse a raw or gzip-compressed IDX file

        Args:
            path: File path
            expected_magic: 0x00000803 for images, 0x00000801 for labels

        Returns:
            uint8 array shaped by the header dimensions
        """
        with open(path, "rb") as f:
            raw = f.read()
        if raw[:2] == b"\x1f\x8b":
            try:
                raw = gzip.decompress(raw)
            except (OSError, EOFError) as e:
                raise DataFormatError(f"corrupt gzip stream: {e}", path=path)

        if len(raw) < 4:
            raise DataFormatError("IDX header truncated", path=path, offset=len(raw))
        (magic,) = struct.unpack_from(">I", raw, 0)
        if magic != expected_magic:
            raise DataFormatError(f"bad IDX magic {magic:#010x}, expected {expected_magic:#010x}", path=path, offset=0)

        ndim = magic & 0xFF
        header_size = 4 + 4 * ndim
        if len(raw) < header_size:
            raise DataFormatError("IDX dimensions truncated", path=path, offset=len(raw))
        dims = struct.unpack_from(f">{ndim}I", raw, 4)

        size = int(np.prod(dims))
        if len(raw) < header_size + size:
            raise DataFormatError(
                f"IDX data truncated: header declares {size} bytes, {len(raw) - header_size} present",
                path=path,
                offset=len(raw),
            )
        return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header_size).reshape(dims)

    @staticmethod
    def load_mnist(images_path: str, labels_path: str) -> MnistDataset:
        """Load one MNIST split and check the image and label counts agree"""
        images = DataProcessor.read_idx(images_path, IMAGE_MAGIC)
        labels = DataProcessor.read_idx(labels_path, LABEL_MAGIC)

        if images.ndim != 3 or images.shape[1:] != (MNIST_SIDE, MNIST_SIDE):
            raise DataFormatError(f"expected 28x28 images, header declares {images.shape[1:]}", path=images_path)
        if labels.ndim != 1:
            raise DataFormatError(f"expected a label vector, header declares {labels.shape}", path=labels_path)
        if len(images) != len(labels):
            raise DataFormatError(f"{len(images)} images but {len(labels)} labels", path=labels_path)
        if labels.size and labels.max() > 9:
            raise DataFormatError(f"label {int(labels.max())} outside 0..9", path=labels_path)

        logger.info(f"Loaded {len(labels)} MNIST items from {images_path}")
        return MnistDataset(images, labels)

    @staticmethod
    def find_split(directory: str, split: str) -> Tuple[str, str]:
        """Paths of a split's image and label files, raw or .gz"""
        paths = []
        for stem in MNIST_FILES[split]:
            for candidate in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
                path = os.path.join(directory, candidate)
                if os.path.exists(path):
                    paths.append(path)
                    break
            else:
                raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")
        return paths[0], paths[1]

    @staticmethod
    def load_mnist_dir(directory: str, split: str) -> MnistDataset:
        return DataProcessor.load_mnist(*DataProcessor.find_split(directory, split))

    @staticmethod
    def pad_images(images: np.ndarray) -> np.ndarray:
        """(N, 28, 28) -> (N, 1, 32, 32) uint8 codes, zero border of two pixels"""
        margin = (PADDED_SIDE - MNIST_SIDE) // 2
        padded = np.pad(images, ((0, 0), (margin, margin), (margin, margin)))
        return padded[:, np.newaxis, :, :]

    @staticmethod
    def to_float(codes: np.ndarray) -> np.ndarray:
        return codes.astype(np.float32) / 255.0

    @staticmethod
    def limit(dataset: MnistDataset, count: Optional[int]) -> MnistDataset:
        if count is None or count >= len(dataset):
            return dataset
        return dataset.subset(np.arange(count))

    @staticmethod
    def stratified_holdout(dataset: MnistDataset, fraction: float, seed: int) -> Tuple[MnistDataset, MnistDataset]:
        """Split off a class-balanced holdout set"""
        indices = np.arange(len(dataset))
        fit, holdout = train_test_split(
            indices, test_size=fraction, random_state=seed % (2 ** 32), stratify=dataset.labels
        )
        return dataset.subset(np.sort(fit)), dataset.subset(np.sort(holdout))

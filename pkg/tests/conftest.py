import gzip
import os
import struct
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.data_processor import DataProcessor, IMAGE_MAGIC, LABEL_MAGIC, MNIST_FILES  # noqa: E402


def write_idx(path, magic, array, compress=False):
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    data = header + array.tobytes()
    if compress:
        data = gzip.compress(data, mtime=0)
    with open(path, "wb") as f:
        f.write(data)
    return path


@pytest.fixture
def synthetic_mnist(tmp_path):
    """A tiny MNIST-format directory: 200 train and 50 test images"""
    rng = np.random.default_rng(7)
    for split, count in (("train", 200), ("test", 50)):
        labels = np.arange(count) % 10
        images = rng.integers(0, 40, size=(count, 28, 28))
        # A bright block whose position encodes the label.
        for index, label in enumerate(labels):
            images[index, 2 * label: 2 * label + 6, 4:24] = 250
        image_name, label_name = MNIST_FILES[split]
        write_idx(tmp_path / image_name, IMAGE_MAGIC, images)
        write_idx(tmp_path / (label_name + ".gz"), LABEL_MAGIC, labels, compress=True)
    return str(tmp_path)


@pytest.fixture(scope="session")
def mnist_dir():
    directory = os.getenv("APPROXMUL_MNIST")
    if not directory:
        pytest.skip("APPROXMUL_MNIST is not set")
    try:
        DataProcessor.find_split(directory, "train")
        DataProcessor.find_split(directory, "test")
    except FileNotFoundError as e:
        pytest.skip(str(e))
    return directory

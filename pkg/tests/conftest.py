import gzip
import struct
from pathlib import Path

import numpy as np
import pytest

from src.models.network_model import dense
from src.services.network_service import fc_architecture, init_network, network_from_weights
from src.utils.config import settings
from src.utils.tensor_ops import make_rng


MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def mnist_available() -> bool:
    base = Path(settings.data_root) / "mnist"
    return all((base / f).exists() or (base / f"{f}.gz").exists() for f in MNIST_FILES)


requires_mnist = pytest.mark.skipif(not mnist_available(), reason="MNIST files not found under DATA_ROOT")


def write_idx_images(path: Path, images: np.ndarray, compress: bool = False) -> Path:
    n, rows, cols = images.shape
    payload = struct.pack(">IIII", 0x803, n, rows, cols) + images.astype(np.uint8).tobytes()
    path.write_bytes(gzip.compress(payload) if compress else payload)
    return path


def write_idx_labels(path: Path, labels: np.ndarray, compress: bool = False) -> Path:
    payload = struct.pack(">II", 0x801, labels.size) + labels.astype(np.uint8).tobytes()
    path.write_bytes(gzip.compress(payload) if compress else payload)
    return path


def one_hot_rows(rng, n, classes):
    idx = rng.integers(0, classes, size=n)
    y = np.zeros((n, classes))
    y[np.arange(n), idx] = 1.0
    return y


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def small_net(rng):
    """4-5-3-2 tanh classifier without dropout (41 parameters)"""
    return init_network(fc_architecture(4, (5, 3), 2, dropout=0.0), rng)


@pytest.fixture
def small_batch(rng):
    x = rng.normal(size=(6, 4))
    return x, one_hot_rows(rng, 6, 2)


@pytest.fixture
def linear_net(rng):
    """Linear 4-3-5-2 network with random weights and G"""
    arch = [dense(4, 3, "linear"), dense(3, 5, "linear"), dense(5, 2, "linear")]
    weights = {"W1": rng.normal(size=(3, 4)), "W2": rng.normal(size=(5, 3)), "W3": rng.normal(size=(2, 5))}
    return network_from_weights(arch, weights, rng.normal(size=(3, 2)))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long reproduction tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)

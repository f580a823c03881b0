import os
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[1]


def _export_mnist(out: Path) -> Path:
    from mlxtend.data import mnist_data

    from qnnextract.datapipe import write_idx

    out.mkdir(parents=True, exist_ok=True)
    X, y = mnist_data()
    write_idx(X.reshape(-1, 28, 28).astype(np.uint8), y, out / "images-idx3-ubyte.gz",
              out / "labels-idx1-ubyte.gz")
    return out


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """Directory with MNIST IDX files: $QNNEXTRACT_MNIST, data/mnist5k, or exported from mlxtend."""
    env = os.environ.get("QNNEXTRACT_MNIST")
    if env and Path(env).is_dir():
        return Path(env)
    local = REPO / "data" / "mnist5k"
    if (local / "images-idx3-ubyte.gz").exists():
        return local
    pytest.importorskip("mlxtend")
    return _export_mnist(tmp_path_factory.mktemp("mnist5k"))


@pytest.fixture(scope="session")
def mnist(mnist_dir):
    from qnnextract.harness.pipeline import load_dataset

    return load_dataset(mnist_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_cfg(mnist_dir, tmp_path_factory):
    """Built-in experiment defaults pointed at the test dataset and a session workspace."""
    from qnnextract.harness import ExperimentConfig

    out = tmp_path_factory.mktemp("default_run")
    return ExperimentConfig().replace(datasets={"m": str(mnist_dir)}, out_dir=str(out))

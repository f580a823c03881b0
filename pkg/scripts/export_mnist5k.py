"""Write the 5000-digit MNIST subset bundled with mlxtend as gzip IDX files.

    python scripts/export_mnist5k.py data/mnist5k
"""

import sys
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data

from qnnextract.datapipe import write_idx


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    X, y = mnist_data()
    images = X.reshape(-1, 28, 28).astype(np.uint8)
    write_idx(images, y, out / "images-idx3-ubyte.gz", out / "labels-idx1-ubyte.gz")
    print(f"wrote {len(y)} images to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/mnist5k")

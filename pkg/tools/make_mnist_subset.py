"""Write the 5,000-image MNIST subset shipped with mlxtend as IDX files.

    python tools/make_mnist_subset.py [path/to/mnist_5k.csv.gz] [out_dir]

Without a CSV path the file is looked up inside an installed ``mlxtend``.
Rows are ``784 pixel values, label``. The source is sorted by class, so rows
are written in a fixed pseudo-random order (seed 0) to make every prefix a
usable mixed-class subset.
"""

import gzip
import os
import sys

import numpy as np

from infocatvae.data import save_idx
from infocatvae.rng import Rng


def main(argv):
    if len(argv) > 1:
        csv_path = argv[1]
    else:
        import mlxtend.data

        csv_path = os.path.join(os.path.dirname(mlxtend.data.__file__), "data", "mnist_5k.csv.gz")
    out_dir = argv[2] if len(argv) > 2 else os.path.join(os.path.dirname(__file__), "..", "data", "mnist5k")
    with gzip.open(csv_path, "rt") as fh:
        table = np.loadtxt(fh, delimiter=",", dtype=np.int64)
    table = table[Rng(0).permutation(len(table))]
    images = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    os.makedirs(out_dir, exist_ok=True)
    save_idx(os.path.join(out_dir, "train-images-idx3-ubyte.gz"), images)
    save_idx(os.path.join(out_dir, "train-labels-idx1-ubyte.gz"), labels)
    print(f"wrote {len(labels)} images to {out_dir}")


if __name__ == "__main__":
    main(sys.argv)

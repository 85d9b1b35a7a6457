"""Build the desk-scale MNIST subset in data/mnist/ as gzipped IDX files.

Source: ``mnist_5k.csv.gz`` bundled in the mlxtend wheel (BSD-3), 5000 MNIST
images as rows of 784 pixel values (0-255) followed by the label, grouped by
class. The rows are shuffled with a fixed seed and split 4000 train / 1000
test so the first N of either file is class-balanced in expectation.

    pip download mlxtend --no-deps -d /tmp/mlx
    unzip -q /tmp/mlx/mlxtend-*.whl 'mlxtend/data/data/mnist_5k.csv.gz' -d /tmp/mlx/ext
    python3 scripts/build_mnist_subset.py /tmp/mlx/ext/mlxtend/data/data/mnist_5k.csv.gz
"""

import argparse
from pathlib import Path

import numpy as np

from minmax.harness.data import write_idx

SEED = 20240607
N_TRAIN = 4000


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", help="path to mnist_5k.csv.gz")
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "mnist"))
    args = ap.parse_args()

    rows = np.loadtxt(args.source, delimiter=",", dtype=np.int64)
    if rows.shape[1] != 785:
        raise SystemExit(f"expected 785 columns, found {rows.shape[1]}")
    images = rows[:, :784].reshape(-1, 28, 28).astype(np.uint8)
    labels = rows[:, 784].astype(np.uint8)
    order = np.random.default_rng(SEED).permutation(len(labels))
    images, labels = images[order], labels[order]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(images[:N_TRAIN], labels[:N_TRAIN],
              out / "train-images-idx3-ubyte.gz", out / "train-labels-idx1-ubyte.gz")
    write_idx(images[N_TRAIN:], labels[N_TRAIN:],
              out / "t10k-images-idx3-ubyte.gz", out / "t10k-labels-idx1-ubyte.gz")
    print(f"wrote {N_TRAIN} train / {len(labels) - N_TRAIN} test images to {out}")


if __name__ == "__main__":
    main()

"""Dataset ingestion: IDX files (MNIST layout) and small synthetic tasks."""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from minmax.errors import BadMagic, CountMismatch, TruncatedFile

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


@dataclass
class LabeledDataset:
    inputs: np.ndarray  # (n, d), entries in [0, 1]
    labels: np.ndarray  # (n,), ints in [0, classes)
    shape: tuple = None  # per-example image shape, if any

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.labels.shape[0]:
            raise CountMismatch("inputs must be (n, d) with one label per row")
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise ValueError("inputs must lie in [0, 1]")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, idx):
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.shape)


def _open(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def _read_idx(path, magic):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise TruncatedFile(f"{path}: header too short")
    found, count = struct.unpack(">ii", raw[:8])
    if found != magic:
        raise BadMagic(f"{path}: magic {found}, expected {magic}")
    dims = []
    if magic == IMAGE_MAGIC:
        if len(raw) < 16:
            raise TruncatedFile(f"{path}: header too short")
        dims = list(struct.unpack(">ii", raw[8:16]))
    offset = 8 + 4 * len(dims)
    size = count * int(np.prod(dims, dtype=np.int64)) if dims else count
    body = raw[offset:]
    if len(body) < size:
        raise TruncatedFile(f"{path}: expected {size} data bytes, found {len(body)}")
    return np.frombuffer(body[:size], dtype=np.uint8).reshape(count, *dims)


def load_idx(images_path, labels_path, limit=None):
    """Read an IDX image/label pair, scale pixels to ``[0, 1]``, keep the first ``limit`` examples."""
    if limit is not None and limit <= 0:
        raise ValueError("limit must be positive (an empty dataset is not usable)")
    images = _read_idx(images_path, IMAGE_MAGIC)
    labels = _read_idx(labels_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    h, w = images.shape[1:]
    return LabeledDataset(images.reshape(len(images), -1) / 255.0, labels, (h, w, 1))


def write_idx(images, labels, images_path, labels_path, compress=None):
    """Write uint8 images ``(n, h, w)`` and labels ``(n,)`` as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, h, w = images.shape
    for path, header, body in (
        (images_path, struct.pack(">iiii", IMAGE_MAGIC, n, h, w), images.tobytes()),
        (labels_path, struct.pack(">ii", LABEL_MAGIC, len(labels)), labels.tobytes()),
    ):
        gz = compress if compress is not None else str(path).endswith(".gz")
        # mtime=0 keeps gzip output byte-stable
        with (gzip.GzipFile(path, "wb", mtime=0) if gz else open(path, "wb")) as fh:
            fh.write(header + body)


def make_synthetic(kind, n, d, classes, rng, spread=0.05):
    """Separable toy data scaled into ``[0, 1]^d``.

    ``blobs`` draws Gaussian clusters around well separated random centers;
    ``moons`` embeds two interleaved half circles (``classes`` must be 2) in
    the first two coordinates and fills the rest with small noise.
    """
    if n < classes or classes < 2 or d < 2:
        raise ValueError(f"invalid sizes n={n}, d={d}, classes={classes}")
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    if kind == "blobs":
        # redraw centers (bounded retries) until every pair is 8 noise widths apart
        centers = rng.uniform(0.2, 0.8, size=(classes, d))
        for _ in range(100):
            gaps = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
            gaps[np.diag_indices(classes)] = np.inf
            if gaps.min() > 8 * spread:
                break
            centers = rng.uniform(0.2, 0.8, size=(classes, d))
        X = centers[labels] + spread * rng.standard_normal((n, d))
    elif kind == "moons":
        if classes != 2:
            raise ValueError("moons has exactly two classes")
        t = rng.uniform(0, np.pi, size=n)
        X = np.zeros((n, d))
        X[:, 0] = np.where(labels == 0, np.cos(t), 1 - np.cos(t))
        X[:, 1] = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
        X[:, :2] += spread * rng.standard_normal((n, 2))
        X[:, 2:] = spread * rng.standard_normal((n, d - 2))
        X = (X - X.min(axis=0)) / np.maximum(X.max(axis=0) - X.min(axis=0), 1e-12)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return LabeledDataset(np.clip(X, 0.0, 1.0), labels)

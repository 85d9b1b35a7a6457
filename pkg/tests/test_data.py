import gzip
import struct

import numpy as np
import pytest

from conftest import mnist_paths
from minmax.errors import BadMagic, CountMismatch, TruncatedFile
from minmax.harness.data import LabeledDataset, load_idx, make_synthetic, write_idx
from minmax.numkit import make_rng


def write_raw(path, payload, gz=False):
    opener = gzip.open if gz else open
    with opener(path, "wb") as fh:
        fh.write(payload)


@pytest.fixture
def tiny(tmp_path):
    img = struct.pack(">iiii", 2051, 2, 2, 2) + bytes([0, 255, 51, 102, 10, 20, 30, 40])
    lab = struct.pack(">ii", 2049, 2) + bytes([3, 7])
    write_raw(tmp_path / "img", img)
    write_raw(tmp_path / "lab", lab)
    return tmp_path / "img", tmp_path / "lab"


class TestIdx:
    def test_hand_built_fixture(self, tiny):
        ds = load_idx(*tiny)
        np.testing.assert_allclose(ds.inputs[0], [0.0, 1.0, 0.2, 0.4])
        np.testing.assert_allclose(ds.inputs[1], np.array([10, 20, 30, 40]) / 255)
        np.testing.assert_array_equal(ds.labels, [3, 7])
        assert ds.shape == (2, 2, 1)

    def test_limit(self, tiny):
        assert len(load_idx(*tiny, limit=1)) == 1
        with pytest.raises(ValueError):
            load_idx(*tiny, limit=0)

    def test_bad_magic(self, tmp_path, tiny):
        write_raw(tmp_path / "bad", struct.pack(">ii", 1234, 0))
        with pytest.raises(BadMagic):
            load_idx(tmp_path / "bad", tiny[1])

    def test_truncated(self, tmp_path, tiny):
        write_raw(tmp_path / "short", struct.pack(">iiii", 2051, 2, 2, 2) + bytes(5))
        with pytest.raises(TruncatedFile):
            load_idx(tmp_path / "short", tiny[1])
        write_raw(tmp_path / "hdr", b"\x00\x00")
        with pytest.raises(TruncatedFile):
            load_idx(tmp_path / "hdr", tiny[1])

    def test_count_mismatch(self, tmp_path, tiny):
        write_raw(tmp_path / "lab3", struct.pack(">ii", 2049, 3) + bytes([1, 2, 3]))
        with pytest.raises(CountMismatch):
            load_idx(tiny[0], tmp_path / "lab3")

    def test_round_trip_gzip(self, tmp_path):
        rng = make_rng(0)
        imgs = rng.integers(0, 256, (5, 3, 4)).astype(np.uint8)
        labs = rng.integers(0, 10, 5).astype(np.uint8)
        write_idx(imgs, labs, tmp_path / "i.gz", tmp_path / "l.gz")
        ds = load_idx(tmp_path / "i.gz", tmp_path / "l.gz")
        np.testing.assert_allclose(ds.inputs, imgs.reshape(5, -1) / 255)
        np.testing.assert_array_equal(ds.labels, labs)
        first = (tmp_path / "i.gz").read_bytes()
        write_idx(imgs, labs, tmp_path / "i.gz", tmp_path / "l.gz")
        assert (tmp_path / "i.gz").read_bytes() == first

    def test_bundled_subset(self):
        p = mnist_paths()
        train = load_idx(p["images"], p["labels"], limit=1000)
        test = load_idx(p["test_images"], p["test_labels"], limit=500)
        assert train.inputs.shape == (1000, 784) and len(test) == 500
        assert set(np.unique(train.labels)) == set(range(10))


class TestDataset:
    def test_range_enforced(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.array([[1.5]]), [0])
        with pytest.raises(CountMismatch):
            LabeledDataset(np.zeros((2, 3)), [0])


class TestSynthetic:
    @pytest.mark.parametrize("kind,classes", [("blobs", 4), ("moons", 2)])
    def test_labels_and_range(self, kind, classes):
        ds = make_synthetic(kind, 100, 5, classes, make_rng(1))
        assert ds.inputs.min() >= 0 and ds.inputs.max() <= 1
        assert set(np.unique(ds.labels)) <= set(range(classes))

    def test_reproducible(self):
        a = make_synthetic("blobs", 50, 3, 3, make_rng(2))
        b = make_synthetic("blobs", 50, 3, 3, make_rng(2))
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_blobs_nearest_neighbour(self):
        ds = make_synthetic("blobs", 300, 4, 3, make_rng(3))
        X = ds.inputs
        dist = ((X[:, None] - X[None]) ** 2).sum(-1)
        np.fill_diagonal(dist, np.inf)
        assert np.mean(ds.labels[dist.argmin(axis=1)] == ds.labels) >= 0.99

    def test_invalid(self):
        with pytest.raises(ValueError):
            make_synthetic("blobs", 2, 3, 3, make_rng(0))
        with pytest.raises(ValueError):
            make_synthetic("moons", 10, 3, 3, make_rng(0))
        with pytest.raises(ValueError):
            make_synthetic("spirals", 10, 3, 2, make_rng(0))

from pathlib import Path

import numpy as np
import pytest

from minmax.models import MlpModel
from minmax.numkit import make_rng

ROOT = Path(__file__).resolve().parent.parent
MNIST = ROOT / "data" / "mnist"


def mnist_paths():
    return {
        "images": MNIST / "train-images-idx3-ubyte.gz",
        "labels": MNIST / "train-labels-idx1-ubyte.gz",
        "test_images": MNIST / "t10k-images-idx3-ubyte.gz",
        "test_labels": MNIST / "t10k-labels-idx1-ubyte.gz",
    }


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def small_model():
    return MlpModel.init([6, 5, 4, 3], make_rng(7))


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (np.asarray(f(x + e)).item() - np.asarray(f(x - e)).item()) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


# one summary line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {line}")

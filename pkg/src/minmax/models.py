"""Dense ReLU classifiers with hand-written forward/backward passes, the
C&W margin and cross-entropy losses, plain SGD, and a text checkpoint format.

Inputs may be a single vector ``(d,)`` or a batch ``(n, d)``; loss
functions return per-example values so batch gradients stay per-example
(no averaging happens here).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from minmax.errors import DimensionMismatch

KAPPA = 50.0
LOSS_KINDS = ("cw", "ce")


def model_a_dims(d, classes, width=1.0):
    """Layer sizes of the 3-hidden-layer MLP (128-128-64) scaled by ``width``."""
    hidden = [max(1, int(round(h * width))) for h in (128, 128, 64)]
    return [int(d), *hidden, int(classes)]


def param_count(layer_dims):
    return sum((a + 1) * b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


@dataclass
class MlpModel:
    """Fully connected ReLU network; parameters live in one flat vector.

    Layer ``l`` stores its weight matrix ``W_l`` (``dims[l+1] x dims[l]``,
    row-major) followed by its bias ``b_l``. ReLU follows every layer except
    the last, which emits logits.
    """

    layer_dims: list
    theta: np.ndarray

    def __post_init__(self):
        self.layer_dims = [int(n) for n in self.layer_dims]
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"bad layer dims {self.layer_dims}")
        self.theta = np.asarray(self.theta, dtype=np.float64).ravel()
        if self.theta.size != param_count(self.layer_dims):
            raise DimensionMismatch(
                f"theta has {self.theta.size} entries, dims {self.layer_dims} need "
                f"{param_count(self.layer_dims)}"
            )

    @classmethod
    def init(cls, layer_dims, rng):
        theta = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            theta.append(rng.uniform(-bound, bound, size=(fan_in + 1) * fan_out))
        return cls(list(layer_dims), np.concatenate(theta))

    @classmethod
    def zeros(cls, layer_dims):
        return cls(list(layer_dims), np.zeros(param_count(layer_dims)))

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def num_classes(self):
        return self.layer_dims[-1]

    def copy(self):
        return MlpModel(list(self.layer_dims), self.theta.copy())

    def layers(self, theta=None):
        """``(W, b)`` views into ``theta`` (defaults to the model's own)."""
        theta = self.theta if theta is None else theta
        out, pos = [], 0
        for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            W = theta[pos : pos + a * b].reshape(b, a)
            pos += a * b
            out.append((W, theta[pos : pos + b]))
            pos += b
        return out

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim or x.ndim not in (1, 2):
            raise DimensionMismatch(f"input of shape {x.shape}, model expects d={self.input_dim}")
        return x

    def forward_cached(self, x):
        """Logits plus the per-layer inputs/pre-activations needed by :meth:`backward`."""
        h = self._check_input(x)
        cache = []
        layers = self.layers()
        for i, (W, b) in enumerate(layers):
            z = h @ W.T + b
            cache.append((h, z))
            h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        return h, cache

    def forward(self, x):
        return self.forward_cached(x)[0]

    def predict(self, x):
        return np.argmax(self.forward(x), axis=-1)

    def backward(self, cache, dlogits, want_params=True):
        """Reverse pass: returns ``(d_input, d_theta)`` for cotangent ``dlogits``.

        ``d_theta`` sums over the batch; ``d_input`` keeps the input's shape.
        """
        layers = self.layers()
        grad_theta = np.zeros_like(self.theta) if want_params else None
        grads = self.layers(grad_theta) if want_params else None
        g = np.asarray(dlogits, dtype=np.float64)
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            h, z = cache[i]
            if i < len(layers) - 1:
                g = g * (z > 0)
            if want_params:
                gW, gb = grads[i]
                if g.ndim == 1:
                    gW += np.outer(g, h)
                    gb += g
                else:
                    gW += g.T @ h
                    gb += g.sum(axis=0)
            g = g @ W
        return g, grad_theta


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(logits, y):
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.shape[0] != z.shape[0]:
        raise DimensionMismatch("one label per row of logits required")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise ValueError("label out of range")
    return z, y


def cw_loss_and_grad(logits, y, kappa=KAPPA):
    """Per-example ``max(Z_y - max_{j != y} Z_j, -kappa)`` and its logit gradient.

    Smaller is a stronger (untargeted) attack. Ties in the runner-up take
    the lowest index.
    """
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    z, y = _as_batch(logits, y)
    n, C = z.shape
    if C < 2:
        raise ValueError("C&W loss needs at least two classes")
    rows = np.arange(n)
    others = z.copy()
    others[rows, y] = -np.inf
    runner_up = np.argmax(others, axis=1)
    margin = z[rows, y] - z[rows, runner_up]
    active = margin > -kappa
    value = np.where(active, margin, -kappa)
    grad = np.zeros_like(z)
    grad[rows, y] = active
    grad[rows, runner_up] -= active
    return value, grad


def ce_loss_and_grad(logits, y):
    """Per-example cross-entropy ``-log softmax(Z)_y`` and its logit gradient."""
    z, y = _as_batch(logits, y)
    rows = np.arange(z.shape[0])
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    value = logsumexp - shifted[rows, y]
    grad = softmax(z)
    grad[rows, y] -= 1.0
    return value, grad


def cw_loss(logits, y0, kappa=KAPPA):
    return float(cw_loss_and_grad(logits, y0, kappa)[0][0])


def ce_loss(logits, y):
    return float(ce_loss_and_grad(logits, y)[0][0])


def loss_and_grad(logits, y, kind, kappa=KAPPA):
    if kind == "cw":
        return cw_loss_and_grad(logits, y, kappa)
    if kind == "ce":
        return ce_loss_and_grad(logits, y)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def mlp_grad_input(model, x, y, loss_kind="cw", kappa=KAPPA):
    """Loss value(s) and gradient with respect to the input.

    For a single vector returns ``(float, (d,) array)``; for a batch, per-example
    values ``(n,)`` and gradients ``(n, d)``.
    """
    x = np.asarray(x, dtype=np.float64)
    logits, cache = model.forward_cached(x)
    value, dlogits = loss_and_grad(logits, y, loss_kind, kappa)
    if x.ndim == 1:
        dlogits = dlogits[0]
    dx, _ = model.backward(cache, dlogits, want_params=False)
    if x.ndim == 1:
        return float(value[0]), dx
    return value, dx


def mlp_grad_params(model, x, y, loss_kind="ce", kappa=KAPPA, weights=None):
    """Summed loss over the batch and its gradient with respect to ``theta``.

    ``weights`` optionally scales each example's contribution.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    logits, cache = model.forward_cached(x)
    value, dlogits = loss_and_grad(logits, y, loss_kind, kappa)
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        value = value * weights
        dlogits = dlogits * weights[:, None]
    _, g = model.backward(cache, dlogits)
    return float(value.sum()), g


def sgd_step(model, grad, lr):
    return MlpModel(list(model.layer_dims), model.theta - lr * grad)


def accuracy(model, inputs, labels):
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(model.predict(inputs) == np.asarray(labels)))


@dataclass
class DomainLossOracle:
    """One domain's loss ``F_i`` as a function of the perturbation.

    ``value_and_grad(delta)`` returns ``(float, gradient array)``.
    """

    value_and_grad: Callable
    name: str = ""

    def value(self, delta):
        return self.value_and_grad(delta)[0]

    def grad(self, delta):
        return self.value_and_grad(delta)[1]


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)


def train_natural(model, data, epochs=50, lr=0.1, batch=32, rng=None, loss_kind="ce"):
    """Minibatch SGD on clean data; returns ``(model, history)``.

    ``data`` is a :class:`~minmax.harness.data.LabeledDataset` (anything with
    ``inputs`` and ``labels``). The input model is not modified.
    """
    if len(data.labels) == 0:
        raise ValueError("empty dataset")
    if rng is None:
        rng = np.random.default_rng(0)
    model = model.copy()
    hist = TrainHistory()
    n = len(data.labels)
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            value, g = mlp_grad_params(model, data.inputs[idx], data.labels[idx], loss_kind)
            model = sgd_step(model, g / len(idx), lr)
            total += value
        hist.loss.append(total / n)
        hist.accuracy.append(accuracy(model, data.inputs, data.labels))
    return model, hist


CHECKPOINT_TAG = "mlpv1"


def save_checkpoint(model, path):
    with open(path, "w") as fh:
        fh.write(" ".join([CHECKPOINT_TAG, *map(str, model.layer_dims)]) + "\n")
        for v in model.theta:
            fh.write(f"{v:.17g}\n")


def load_checkpoint(path):
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != CHECKPOINT_TAG:
            raise ValueError(f"{path}: not an {CHECKPOINT_TAG} checkpoint")
        dims = [int(t) for t in header[1:]]
        theta = np.array([float(line) for line in fh if line.strip()])
    return MlpModel(dims, theta)

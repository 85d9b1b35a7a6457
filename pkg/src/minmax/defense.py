"""Generalized adversarial training over several perturbation types (AMPGD).

For each minibatch the inner problem

    max_{w in simplex, delta_i in X_i}  sum_i w_i f_tr(theta, delta_i) - gamma/2 ||w - 1/K||^2
                                        + lam * h(theta, {delta_i})

is approximately solved with ``R`` simultaneous projected ascent rounds,
then ``theta`` takes one SGD step on the mixed clean/adversarial loss.
``h`` is the log-det diversity term over normalized input gradients.
"""

from dataclasses import dataclass, field

import numpy as np

from minmax.errors import NonFiniteError
from minmax.models import accuracy, mlp_grad_input, mlp_grad_params, sgd_step
from minmax.numkit import GRAM_JITTER, make_rng
from minmax.projections import norm_name, parse_norm, project_rows, project_simplex

FD_STEP = 1e-3
_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class AttackType:
    """One perturbation family ``X_i``: an lp ball intersected with the ``[0, 1]`` input box."""

    p: float
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "p", parse_norm(self.p))
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def label(self):
        return f"l{norm_name(self.p)}:{self.eps:g}"

    def project(self, D, x):
        return project_rows(D, self.p, self.eps, -x, 1.0 - x)


@dataclass
class AtConfig:
    attacks: list
    steps: int = 20
    alpha: float = 1 / 6
    beta: float = 1 / 50
    gamma: float = 4.0
    lr: float = 0.1
    epochs: int = 5
    batch: int = 32
    adv_ratio: float = 0.5
    lam: float = 0.1
    jitter: float = GRAM_JITTER
    fd_step: float = FD_STEP
    learn_weights: bool = True
    seed: int = 0

    def __post_init__(self):
        self.attacks = [a if isinstance(a, AttackType) else AttackType(*a) for a in self.attacks]
        if not self.attacks:
            raise ValueError("need at least one attack type")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0.0 <= self.adv_ratio <= 1.0:
            raise ValueError("adv_ratio must lie in [0, 1]")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.alpha <= 0 or self.beta <= 0 or self.lr < 0:
            raise ValueError("step sizes must be positive")


# ---------------------------------------------------------------------------
# diversity regularizer


def _normalize_rows(G):
    n = np.linalg.norm(G, axis=-1, keepdims=True)
    return G / np.maximum(n, _NORM_FLOOR), n


def diversity_value(grads, jitter=GRAM_JITTER):
    """Per-example ``log det(U^T U + jitter I)``; ``grads`` is ``(K, n, d)``, columns of ``U`` normalized."""
    U, _ = _normalize_rows(np.asarray(grads, dtype=np.float64))
    gram = np.einsum("ind,jnd->nij", U, U) + jitter * np.eye(U.shape[0])
    sign, logdet = np.linalg.slogdet(gram)
    return logdet


def diversity_grad(grad_fn, deltas, fd_step=FD_STEP, jitter=GRAM_JITTER, grads=None):
    """Gradient of the per-example diversity term with respect to each ``delta_i``.

    ``grad_fn(i, D)`` returns input gradients ``(n, d)`` of the training loss
    for perturbation type ``i`` at perturbations ``D``. The Hessian of the
    loss enters only through Hessian-vector products, approximated by
    central differences of ``grad_fn`` along unit directions.
    """
    K = len(deltas)
    if grads is None:
        grads = np.array([grad_fn(i, deltas[i]) for i in range(K)])
    U, norms = _normalize_rows(grads)
    gram = np.einsum("ind,jnd->nij", U, U) + jitter * np.eye(K)
    inv = np.linalg.inv(gram)
    # d logdet / d u_i = 2 (U gram^-1)_i
    dU = 2.0 * np.einsum("jnd,nji->ind", U, inv)
    out = []
    for i in range(K):
        u, m = U[i], dU[i]
        # chain through u = g / ||g||
        v = (m - u * np.sum(u * m, axis=1, keepdims=True)) / np.maximum(norms[i], _NORM_FLOOR)
        vnorm = np.linalg.norm(v, axis=1, keepdims=True)
        vhat = v / np.maximum(vnorm, _NORM_FLOOR)
        hvp = (grad_fn(i, deltas[i] + fd_step * vhat) - grad_fn(i, deltas[i] - fd_step * vhat)) / (2 * fd_step)
        out.append(hvp * vnorm)
    return out


def diversity_grad_wrt_deltas(model, x, y, deltas, fd_step=FD_STEP, jitter=GRAM_JITTER):
    """:func:`diversity_grad` for the cross-entropy loss of ``model`` at ``x + delta_i``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(y)
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")

    def grad_fn(i, D):
        return mlp_grad_input(model, x + D, y, "ce")[1]

    out = diversity_grad(grad_fn, [np.atleast_2d(d) for d in deltas], fd_step, jitter)
    for g in out:
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite diversity gradient")
    return out


# ---------------------------------------------------------------------------
# objective and inner maximization


def at_objective(model, x, y, w, deltas, gamma, lam=0.0, jitter=GRAM_JITTER):
    """Batch-mean ``sum_i w_i f_tr(delta_i) - gamma/2 ||w - 1/K||^2 + lam * h``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(y)
    w = np.asarray(w, dtype=np.float64)
    K = len(w)
    pairs = [mlp_grad_input(model, x + np.atleast_2d(d), y, "ce") for d in deltas]
    phi = np.array([v.mean() for v, _ in pairs])
    psi = float(w @ phi - 0.5 * gamma * np.sum((w - 1.0 / K) ** 2))
    if lam:
        psi += lam * float(diversity_value(np.array([g for _, g in pairs]), jitter).mean())
    return psi


@dataclass
class InnerResult:
    w: np.ndarray
    deltas: list
    losses: np.ndarray
    psi: list = field(default_factory=list)
    weights: list = field(default_factory=list)


def maximize(loss_fn, projectors, n, d, cfg):
    """``R`` rounds of simultaneous projected ascent on ``(w, {delta_i})``.

    ``loss_fn(D)`` gives per-example training losses ``(n,)`` and input
    gradients ``(n, d)`` at perturbations ``D``; ``projectors[i](D)`` maps
    onto ``X_i`` row-wise. Every update of round ``r`` reads the round
    ``r-1`` iterates. ``w`` ascends on batch-mean losses, each example's
    ``delta_i`` on its own weighted loss.
    """
    K = len(projectors)
    w = np.full(K, 1.0 / K)
    deltas = [np.zeros((n, d)) for _ in range(K)]
    res = InnerResult(w, deltas, None)

    def evaluate(deltas):
        pairs = [loss_fn(D) for D in deltas]
        vals = np.array([v for v, _ in pairs])
        grads = np.array([g for _, g in pairs])
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grads))):
            raise NonFiniteError("non-finite training loss during inner maximization", partial=res)
        return vals, grads

    def psi(phi, w, grads):
        val = float(w @ phi - 0.5 * cfg.gamma * np.sum((w - 1.0 / K) ** 2))
        if cfg.lam:
            val += cfg.lam * float(diversity_value(grads, cfg.jitter).mean())
        return val

    vals, grads = evaluate(deltas)
    for _ in range(cfg.steps):
        phi = vals.mean(axis=1)
        res.psi.append(psi(phi, w, grads))
        res.weights.append(w)
        if cfg.lam:
            h_grads = diversity_grad(lambda i, D: loss_fn(D)[1], deltas, cfg.fd_step, cfg.jitter, grads)
        new_deltas = []
        for i in range(K):
            direction = w[i] * grads[i]
            if cfg.lam:
                direction = direction + cfg.lam * h_grads[i]
            new_deltas.append(projectors[i](deltas[i] + cfg.alpha * direction))
        if cfg.learn_weights:
            w = project_simplex(w + cfg.beta * (phi - cfg.gamma * (w - 1.0 / K)))
        deltas = new_deltas
        vals, grads = evaluate(deltas)
    res.w, res.deltas, res.losses = w, deltas, vals
    res.psi.append(psi(vals.mean(axis=1), w, grads))
    res.weights.append(w)
    return res


def inner_maximize(model, x, y, config):
    """Inner maximization for one minibatch; returns an :class:`InnerResult`."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(y)

    def loss_fn(D):
        return mlp_grad_input(model, x + D, y, "ce")

    projectors = [lambda D, a=a: a.project(D, x) for a in config.attacks]
    return maximize(loss_fn, projectors, x.shape[0], x.shape[1], config)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class AtTrace:
    clean_accuracy: list = field(default_factory=list)
    adv_accuracy: list = field(default_factory=list)
    batch_weights: list = field(default_factory=list)
    loss: list = field(default_factory=list)

    def final_weights(self):
        """``(batches, K)`` array of the last epoch's per-batch weights."""
        return np.array(self.batch_weights[-1])


def training_step(model, x, y, inner, config):
    """SGD on ``adv_ratio * sum_i w_i mean f(x + delta_i) + (1 - adv_ratio) * mean f(x)``."""
    n = len(y)
    grad = np.zeros_like(model.theta)
    total = 0.0
    for wi, D in zip(inner.w, inner.deltas):
        v, g = mlp_grad_params(model, x + D, y, "ce", weights=np.full(n, wi * config.adv_ratio / n))
        grad += g
        total += v
    if config.adv_ratio < 1.0:
        v, g = mlp_grad_params(model, x, y, "ce", weights=np.full(n, (1.0 - config.adv_ratio) / n))
        grad += g
        total += v
    return sgd_step(model, grad, config.lr), total


def pgd_attack(model, x, y, attack, steps, alpha):
    """Multi-step projected gradient ascent on the cross-entropy loss for a single attack type."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    D = np.zeros_like(x)
    for _ in range(steps):
        _, g = mlp_grad_input(model, x + D, y, "ce")
        D = attack.project(D + alpha * g, x)
    return D


def adversarial_correctness(model, data, attacks, steps=20, alpha=1 / 6):
    """``(n, K)`` boolean matrix: example still classified correctly under attack type ``k``."""
    cols = []
    for a in attacks:
        D = pgd_attack(model, data.inputs, data.labels, a, steps, alpha)
        cols.append(model.predict(data.inputs + D) == data.labels)
    return np.stack(cols, axis=1)


def ampgd_train(model, data, config, eval_data=None, rng=None):
    """Train ``model`` with AMPGD; returns ``(model, AtTrace)``.

    Per-type adversarial accuracy is recorded only when ``eval_data`` is given.
    """
    if len(data.labels) == 0:
        raise ValueError("empty dataset")
    rng = make_rng(config.seed) if rng is None else rng
    model = model.copy()
    trace = AtTrace()
    n = len(data.labels)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_w, epoch_loss = [], 0.0
        for start in range(0, n, config.batch):
            idx = order[start : start + config.batch]
            x, y = data.inputs[idx], data.labels[idx]
            inner = inner_maximize(model, x, y, config)
            model, loss = training_step(model, x, y, inner, config)
            epoch_w.append(inner.w)
            epoch_loss += loss * len(idx)
        trace.batch_weights.append(epoch_w)
        trace.loss.append(epoch_loss / n)
        trace.clean_accuracy.append(accuracy(model, data.inputs, data.labels))
        if eval_data is not None:
            correct = adversarial_correctness(model, eval_data, config.attacks, config.steps, config.alpha)
            trace.adv_accuracy.append(correct.mean(axis=0))
    return model, trace

"""Alternating one-step projected gradient descent (APGD) for

    min_{delta in X} max_{w in simplex}  sum_i w_i F_i(delta) - gamma/2 ||w - 1/K||^2

and the loss oracles for ensemble, universal and transformation attacks.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from minmax import transforms
from minmax.errors import NonFiniteError
from minmax.models import KAPPA, DomainLossOracle, mlp_grad_input
from minmax.numkit import make_rng
from minmax.projections import ConstraintSet, project, project_simplex


@dataclass
class ApgdConfig:
    """Step sizes, regularization and iteration budget for :func:`apgd_solve`.

    ``learn_weights=False`` pins ``w`` at ``1/K``: the plain averaging
    strategy (ensemble PGD / EOT) used as a baseline.
    """

    constraint: ConstraintSet
    alpha: float = 0.25
    beta: float = 1 / 50
    gamma: float = 3.0
    iters: int = 50
    init_delta: str = "zeros"
    seed: int = 0
    learn_weights: bool = True

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("learning rates must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.init_delta not in ("zeros", "random"):
            raise ValueError(f"init_delta must be 'zeros' or 'random', got {self.init_delta!r}")
        if self.learn_weights and self.gamma > 0 and self.beta * self.gamma >= 1:
            warnings.warn(
                f"beta*gamma = {self.beta * self.gamma:g} >= 1; the weight update may not converge",
                stacklevel=2,
            )


@dataclass
class SolverTrace:
    """Iterates and diagnostics, one entry per iteration (entry 0 is the start point)."""

    deltas: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)

    def __len__(self):
        return len(self.deltas)

    @property
    def delta(self):
        return self.deltas[-1]

    @property
    def w(self):
        return self.weights[-1]

    def _record(self, delta, w, phi, gamma, resid):
        self.deltas.append(delta)
        self.weights.append(w)
        self.losses.append(phi)
        self.objective.append(_psi(phi, w, gamma))
        self.residual.append(resid)


def _psi(phi, w, gamma):
    K = len(w)
    return float(w @ phi - 0.5 * gamma * np.sum((w - 1.0 / K) ** 2))


def objective(oracles, delta, w, gamma):
    phi = np.array([o.value(delta) for o in oracles])
    return _psi(phi, np.asarray(w, dtype=np.float64), gamma)


def _descent_direction(w, grads):
    # grads: (K, d); the K=1 case reduces to 1.0 * g exactly
    return w @ grads


def outer_step(delta, w, oracles, alpha, constraint, grads=None):
    """One projected descent step on ``delta`` with the weights held fixed."""
    if grads is None:
        grads = np.array([o.grad(delta) for o in oracles])
    return project(delta - alpha * _descent_direction(np.asarray(w), grads), constraint)


def weight_gradient(w, phi, gamma):
    K = len(w)
    return phi - gamma * (w - 1.0 / K)


def inner_step(w, phi, beta, gamma):
    """One projected ascent step on the domain weights."""
    w = np.asarray(w, dtype=np.float64)
    return project_simplex(w + beta * weight_gradient(w, np.asarray(phi, dtype=np.float64), gamma))


def _residual(delta, w, phi, grads, cfg):
    """Projected-gradient fixed-point violation of both blocks, scaled by 1/(alpha+beta)."""
    g_delta = _descent_direction(w, grads)
    r_delta = delta - project(delta - cfg.alpha * g_delta, cfg.constraint)
    r_w = w - project_simplex(w + cfg.beta * weight_gradient(w, phi, cfg.gamma))
    return float(np.sqrt(r_delta @ r_delta + r_w @ r_w) / (cfg.alpha + cfg.beta))


def _evaluate(oracles, delta):
    pairs = [o.value_and_grad(delta) for o in oracles]
    phi = np.array([p[0] for p in pairs], dtype=np.float64)
    grads = np.array([p[1] for p in pairs], dtype=np.float64)
    return phi, grads


def stationarity_residual(oracles, delta, w, config):
    phi, grads = _evaluate(oracles, np.asarray(delta, dtype=np.float64))
    return _residual(np.asarray(delta, dtype=np.float64), np.asarray(w, dtype=np.float64), phi, grads, config)


def initial_delta(cfg):
    cs = cfg.constraint
    if cfg.init_delta == "zeros":
        return np.zeros(cs.dim)
    rng = make_rng(cfg.seed)
    # per-coordinate spread that keeps a uniform draw near the ball before projecting
    radius = {np.inf: cs.eps, 2: cs.eps / np.sqrt(cs.dim), 1: cs.eps / cs.dim, 0: 1.0}[cs.p]
    return project(rng.uniform(-radius, radius, size=cs.dim), cs)


def apgd_solve(oracles, config):
    """Run APGD and return the full :class:`SolverTrace` (``iters + 1`` records).

    Each iteration descends on ``delta`` using ``w^(t-1)``, then ascends on
    ``w`` using the losses at the new ``delta^(t)``. The loss/gradient pair at
    ``delta^(t)`` is computed once and reused by the following descent step.
    """
    if not oracles:
        raise ValueError("need at least one domain")
    cfg = config
    K = len(oracles)
    delta = initial_delta(cfg)
    w = np.full(K, 1.0 / K)
    trace = SolverTrace()

    def evaluate(delta):
        phi, grads = _evaluate(oracles, delta)
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(grads))):
            raise NonFiniteError(f"non-finite loss or gradient at iteration {len(trace)}", partial=trace)
        return phi, grads

    phi, grads = evaluate(delta)
    trace._record(delta, w, phi, cfg.gamma, _residual(delta, w, phi, grads, cfg))
    for _ in range(cfg.iters):
        delta = outer_step(delta, w, oracles, cfg.alpha, cfg.constraint, grads=grads)
        phi, grads = evaluate(delta)
        if cfg.learn_weights:
            w = inner_step(w, phi, cfg.beta, cfg.gamma)
        trace._record(delta, w, phi, cfg.gamma, _residual(delta, w, phi, grads, cfg))
    return trace


# ---------------------------------------------------------------------------
# oracle adapters


def _model_oracle(model, x, y, loss_kind, kappa, name=""):
    x = np.asarray(x, dtype=np.float64)

    def value_and_grad(delta):
        return mlp_grad_input(model, x + delta, y, loss_kind, kappa)

    return DomainLossOracle(value_and_grad, name)


def ensemble_oracles(models, x0, y0, loss_kind="cw", kappa=KAPPA):
    """One oracle per model: the attack loss of ``x0 + delta`` against that model."""
    dims = {m.input_dim for m in models}
    if len(dims) != 1:
        raise ValueError(f"models disagree on input dimension: {sorted(dims)}")
    if np.asarray(x0).size != dims.pop():
        raise ValueError("x0 does not match the models' input dimension")
    return [_model_oracle(m, x0, y0, loss_kind, kappa, f"model{i}") for i, m in enumerate(models)]


def universal_constraint(p, eps, inputs):
    """Constraint shared by a group: every ``x_i + delta`` stays inside ``[0, 1]^d``."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    return ConstraintSet(p, eps, (-inputs).max(axis=0), (1.0 - inputs).min(axis=0))


def universal_oracles(model, examples, loss_kind="cw", kappa=KAPPA):
    """One oracle per ``(x_i, y_i)``, all sharing the same perturbation."""
    examples = list(examples)
    if not examples:
        raise ValueError("empty example group")
    return [_model_oracle(model, x, y, loss_kind, kappa, f"example{i}") for i, (x, y) in enumerate(examples)]


class TransformOracle:
    """Loss of the model on ``t(x0 + delta)`` for one transformation family.

    Deterministic specs give the exact composite loss. Stochastic specs
    average ``mc_samples`` fresh draws; draw ``n`` comes from the substream
    ``(seed, domain, n)`` where ``n`` counts calls, so reruns repeat exactly.
    With ``resample=False`` the first draw is reused for every call.
    """

    def __init__(self, model, x0, y0, spec, shape, mc_samples=8, seed=0, domain=0,
                 loss_kind="cw", kappa=KAPPA, resample=True):
        self.model = model
        self.x0 = np.asarray(x0, dtype=np.float64).ravel()
        self.y0 = y0
        self.spec = spec
        self.shape = tuple(shape)
        self.mc_samples = mc_samples
        self.seed = seed
        self.domain = domain
        self.loss_kind = loss_kind
        self.kappa = kappa
        self.resample = resample
        self.calls = 0
        self._frozen = None
        self.name = spec.kind

    def instances(self):
        if not self.spec.stochastic:
            return [self.spec]
        if not self.resample and self._frozen is not None:
            return self._frozen
        rng = make_rng(self.seed, self.domain, self.calls)
        self.calls += 1
        draws = [transforms.sample(self.spec, rng) for _ in range(self.mc_samples)]
        if not self.resample:
            self._frozen = draws
        return draws

    def value_and_grad(self, delta):
        img = (self.x0 + delta).reshape(self.shape)
        specs = self.instances()
        total, grad = 0.0, np.zeros(self.x0.size)
        for spec in specs:
            out = transforms.apply(spec, img)
            v, g = mlp_grad_input(self.model, out.ravel(), self.y0, self.loss_kind, self.kappa)
            total += v
            grad += transforms.vjp(spec, img, g.reshape(self.shape)).ravel()
        n = len(specs)
        return total / n, grad / n

    def value(self, delta):
        return self.value_and_grad(delta)[0]

    def grad(self, delta):
        return self.value_and_grad(delta)[1]


def transform_oracles(model, x0, y0, specs, shape, mc_samples=8, seed=0,
                      loss_kind="cw", kappa=KAPPA, resample=True):
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one transform")
    return [
        TransformOracle(model, x0, y0, s, shape, mc_samples, seed, i, loss_kind, kappa, resample)
        for i, s in enumerate(specs)
    ]

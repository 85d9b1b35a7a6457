"""Euclidean projections onto the probability simplex and onto
``{delta : ||delta||_p <= eps, lower <= delta <= upper}`` for p in {0, 1, 2, inf}.

The l1 and l2 cases reduce to one-dimensional root finding on a Lagrange
multiplier (bisection); l0 is a top-k selection on a box-aware score.
"""

from dataclasses import dataclass

import numpy as np

from minmax.errors import EmptySet
from minmax.numkit import as_vector, bisect

SIMPLEX_TOL = 1e-9
BRACKET_PAD = 1e-12
L1_LOWER = 1e-15

NORMS = (0, 1, 2, np.inf)


def parse_norm(p):
    """Map ``"inf"``, ``"linf"``, ``np.inf``, ``"2"``, ... to a member of :data:`NORMS`."""
    if isinstance(p, str):
        key = p.strip().lower().lstrip("l")
        if key in ("inf", "infty", "infinity"):
            return np.inf
        try:
            p = float(key)
        except ValueError:
            raise ValueError(f"unknown norm {p!r}") from None
    p = float(p)
    if p == np.inf:
        return np.inf
    if p not in (0.0, 1.0, 2.0):
        raise ValueError(f"norm order must be one of 0, 1, 2, inf; got {p}")
    return int(p)


def norm_name(p):
    return "inf" if p == np.inf else str(int(p))


@dataclass(frozen=True)
class ConstraintSet:
    """Feasible perturbations: an lp ball of radius ``eps`` intersected with a box.

    ``lower <= 0 <= upper`` must hold elementwise so the origin is always
    feasible. For ``p=0`` the radius is a sparsity budget and must be an
    integer.
    """

    p: float
    eps: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        p = parse_norm(self.p)
        eps = float(self.eps)
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        if not np.isfinite(eps) or eps <= 0:
            raise ValueError(f"eps must be finite and positive, got {self.eps}")
        if p == 0:
            if abs(eps - round(eps)) > 1e-9 or round(eps) < 1:
                raise ValueError(f"l0 budget must be an integer >= 1, got {self.eps}")
            eps = float(round(eps))
        if lower.shape != upper.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(lower > 0) or np.any(upper < 0):
            raise ValueError("box must contain the origin (lower <= 0 <= upper)")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def around(cls, p, eps, x0):
        """Constraint keeping ``x0 + delta`` inside ``[0, 1]^d``."""
        x0 = np.asarray(x0, dtype=np.float64).ravel()
        return cls(p, eps, -x0, 1.0 - x0)

    @property
    def dim(self):
        return self.lower.size

    def norm(self, delta):
        delta = np.asarray(delta)
        if self.p == 0:
            return float(np.count_nonzero(delta))
        return float(np.linalg.norm(delta, ord=self.p))

    def contains(self, delta, rtol=1e-9):
        delta = np.asarray(delta)
        in_box = np.all(delta >= self.lower) and np.all(delta <= self.upper)
        return bool(in_box and self.norm(delta) <= self.eps * (1 + rtol))

    def project(self, a):
        return project(a, self)


def in_simplex(w, tol=SIMPLEX_TOL):
    w = np.asarray(w)
    return bool(np.all(w >= 0) and abs(w.sum() - 1.0) <= tol)


def project_simplex(b):
    """Euclidean projection of ``b`` onto the probability simplex.

    Returns ``(b - mu)_+`` with ``mu`` the root of ``sum((b - mu)_+) = 1``.
    The root is bracketed by ``[min(b) - 1/K, max(b) - 1/K]``; after
    bisection has located the active set, ``mu`` is recomputed in closed
    form on that set.
    """
    b = as_vector(b, "b")
    K = b.size
    if K == 1:
        return np.ones(1)

    def excess(mu):
        return float(np.maximum(b - mu, 0.0).sum() - 1.0)

    lo = b.min() - 1.0 / K - BRACKET_PAD
    hi = b.max() - 1.0 / K + BRACKET_PAD
    mu = bisect(excess, lo, hi)
    support = b > mu
    if support.any():
        mu = (b[support].sum() - 1.0) / support.sum()
    w = np.maximum(b - mu, 0.0)
    return w / w.sum()


def clip_box(a, lower, upper):
    return np.minimum(np.maximum(np.asarray(a, dtype=np.float64), lower), upper)


def project_linf_box(a, cs):
    lo = np.maximum(-cs.eps, cs.lower)
    hi = np.minimum(cs.eps, cs.upper)
    if np.any(lo > hi):
        raise EmptySet("l-inf ball and box do not intersect")
    return clip_box(a, lo, hi)


def _shrink_to_radius(delta, radius, norm):
    # bisection leaves |f| <= tol on either side of the root; pull back onto the ball
    n = norm(delta)
    if n > radius:
        delta = delta * (radius / n)
    return delta


def project_l1_box(a, cs):
    a = as_vector(a, "a")
    clipped = clip_box(a, cs.lower, cs.upper)
    if np.abs(clipped).sum() <= cs.eps:
        return clipped
    mag = np.abs(a)
    sgn = np.where(a >= 0, 1.0, -1.0)

    def soft(lam):
        return clip_box(sgn * np.maximum(mag - lam, 0.0), cs.lower, cs.upper)

    def excess(lam):
        return float(np.abs(soft(lam)).sum() - cs.eps)

    hi = mag.max() - cs.eps / a.size + BRACKET_PAD
    # an overshoot of order 1e-15 is already absorbed at the lower bracket end
    lam = L1_LOWER if excess(L1_LOWER) <= 0 else bisect(excess, L1_LOWER, hi)
    return _shrink_to_radius(soft(lam), cs.eps, lambda v: np.abs(v).sum())


def project_l2_box(a, cs):
    a = as_vector(a, "a")
    clipped = clip_box(a, cs.lower, cs.upper)
    if clipped @ clipped <= cs.eps**2:
        return clipped

    def scaled(lam):
        return clip_box(a / (lam + 1.0), cs.lower, cs.upper)

    def excess(lam):
        v = scaled(lam)
        return float(v @ v - cs.eps**2)

    hi = np.linalg.norm(a) / cs.eps - 1.0 + BRACKET_PAD
    lam = bisect(excess, 0.0, hi)
    return _shrink_to_radius(scaled(lam), cs.eps, np.linalg.norm)


def l0_scores(a, lower, upper):
    """Distance reduction from keeping coordinate ``i`` (box-clipped) versus zeroing it.

    Equals ``sqrt(a_i^2 - (a_i - c_i)^2)`` where ``c_i`` is the violated bound,
    written here in the expanded form ``sqrt(2 a_i c_i - c_i^2)``.
    """
    a = np.asarray(a, dtype=np.float64)
    eta = np.abs(a)
    below = a < lower
    above = a > upper
    eta[below] = np.sqrt(np.maximum(2 * a[below] * lower[below] - lower[below] ** 2, 0.0))
    eta[above] = np.sqrt(np.maximum(2 * a[above] * upper[above] - upper[above] ** 2, 0.0))
    return eta


def project_l0_box(a, cs):
    a = as_vector(a, "a")
    clipped = clip_box(a, cs.lower, cs.upper)
    k = int(cs.eps)
    if k >= a.size:
        return clipped
    eta = l0_scores(a, cs.lower, cs.upper)
    # stable sort on -eta: among equal scores the lowest indices win
    keep = np.argsort(-eta, kind="stable")[:k]
    out = np.zeros_like(a)
    out[keep] = clipped[keep]
    return out


_PROJECTORS = {
    0: project_l0_box,
    1: project_l1_box,
    2: project_l2_box,
    np.inf: project_linf_box,
}


def project(a, cs):
    """Dispatch to the projection matching ``cs.p``."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != cs.lower.shape:
        raise ValueError(f"vector of shape {a.shape} does not match constraint dim {cs.dim}")
    return _PROJECTORS[cs.p](a, cs)


def _bisect_rows(excess, lo, hi, tol=1e-10, max_iter=200):
    """Row-wise bisection for decreasing functions with ``excess(lo) > 0 >= excess(hi)``."""
    lo, hi = lo.copy(), hi.copy()
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f = excess(mid)
        pos = f > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all((hi - lo < tol) | (np.abs(f) <= tol)):
            break
    return 0.5 * (lo + hi)


def project_rows(A, p, eps, lower, upper):
    """Project every row of ``A`` onto its own ``{||d||_p <= eps, lower_r <= d <= upper_r}``.

    ``lower``/``upper`` are ``(n, d)`` arrays (one box per row). Same
    solutions as :func:`project` applied row by row, vectorized over rows.
    """
    p = parse_norm(p)
    A = np.asarray(A, dtype=np.float64)
    lower = np.broadcast_to(lower, A.shape)
    upper = np.broadcast_to(upper, A.shape)
    clipped = np.minimum(np.maximum(A, lower), upper)
    if p == np.inf:
        return np.minimum(np.maximum(A, np.maximum(lower, -eps)), np.minimum(upper, eps))
    if p == 0:
        return np.array([
            project_l0_box(a, ConstraintSet(0, eps, lo, up)) for a, lo, up in zip(A, lower, upper)
        ]).reshape(A.shape)

    out = clipped.copy()
    if p == 1:
        norms = np.abs(clipped).sum(axis=1)
        rows = np.flatnonzero(norms > eps)
        if rows.size:
            a, lo_b, up_b = A[rows], lower[rows], upper[rows]
            mag, sgn = np.abs(a), np.where(a >= 0, 1.0, -1.0)

            def soft(lam):
                return np.minimum(np.maximum(sgn * np.maximum(mag - lam[:, None], 0.0), lo_b), up_b)

            hi = mag.max(axis=1) - eps / a.shape[1] + BRACKET_PAD
            lam = _bisect_rows(lambda l: np.abs(soft(l)).sum(axis=1) - eps, np.full(rows.size, L1_LOWER), hi)
            d = soft(lam)
            n = np.abs(d).sum(axis=1)
            out[rows] = d * np.minimum(1.0, eps / np.maximum(n, 1e-300))[:, None]
        return out

    norms = np.sqrt((clipped**2).sum(axis=1))
    rows = np.flatnonzero(norms > eps)
    if rows.size:
        a, lo_b, up_b = A[rows], lower[rows], upper[rows]

        def scaled(lam):
            return np.minimum(np.maximum(a / (lam[:, None] + 1.0), lo_b), up_b)

        hi = np.linalg.norm(a, axis=1) / eps - 1.0 + BRACKET_PAD
        lam = _bisect_rows(lambda l: (scaled(l) ** 2).sum(axis=1) - eps**2, np.zeros(rows.size), hi)
        d = scaled(lam)
        n = np.linalg.norm(d, axis=1)
        out[rows] = d * np.minimum(1.0, eps / np.maximum(n, 1e-300))[:, None]
    return out

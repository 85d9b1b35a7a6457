"""Small numerical kernel shared by the other modules.

Vectors and matrices are plain float64 numpy arrays; random streams are
numpy ``Generator`` objects built by :func:`make_rng`.
"""

import math

import numpy as np

from minmax.errors import NonFiniteError, NoSignChange, NotPositiveDefinite

BISECT_TOL = 1e-10
BISECT_MAX_ITER = 200
GRAM_JITTER = 1e-12


def as_vector(x, name="x"):
    """Return ``x`` as a 1-D float64 array, rejecting NaN/Inf entries."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return v


def make_rng(seed, *stream):
    """Seeded generator; ``stream`` selects an independent substream.

    Equal ``(seed, *stream)`` always yields a bit-identical sequence, so
    callers can derive per-iteration or per-worker streams
    (``make_rng(seed, 3, it)``) without sharing state.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def bisect(f, lo, hi, tol=BISECT_TOL, max_iter=BISECT_MAX_ITER):
    """Root of a monotone scalar function on ``[lo, hi]`` by bisection.

    Stops when the bracket is narrower than ``tol`` or ``|f(mid)| <= tol``.
    The result always lies inside the initial bracket.
    """
    if not lo < hi:
        raise ValueError(f"empty bracket [{lo}, {hi}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    flo, fhi = f(lo), f(hi)
    if math.isnan(flo) or math.isnan(fhi):
        raise NonFiniteError("f returned NaN at a bracket endpoint")
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if (flo > 0) == (fhi > 0):
        raise NoSignChange(f"f({lo})={flo} and f({hi})={fhi} share a sign")

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if math.isnan(fmid):
            raise NonFiniteError(f"f returned NaN at {mid}")
        if abs(fmid) <= tol or hi - lo < tol:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _gram_cholesky(G, jitter):
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2:
        raise ValueError("G must be a d x K matrix")
    d, K = G.shape
    if not d >= K >= 1:
        raise ValueError(f"need d >= K >= 1, got d={d}, K={K}")
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    gram = G.T @ G + jitter * np.eye(K)
    try:
        return gram, np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Gram matrix is not positive definite") from exc


def logdet_gram(G, jitter=GRAM_JITTER):
    """``log det(G^T G + jitter I)`` through a Cholesky factor."""
    _, L = _gram_cholesky(G, jitter)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def logdet_gram_grad(G, jitter=GRAM_JITTER):
    """Gradient of :func:`logdet_gram` with respect to ``G``: ``2 G (G^T G + jitter I)^-1``."""
    G = np.asarray(G, dtype=np.float64)
    gram, L = _gram_cholesky(G, jitter)
    K = gram.shape[0]
    # gram^-1 from the triangular factor; gram is symmetric so G gram^-1 = (gram^-1 G^T)^T
    linv = np.linalg.solve(L, np.eye(K))
    inv = linv.T @ linv
    return 2.0 * G @ inv

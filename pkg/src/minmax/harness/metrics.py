"""Attack success rates and robust accuracies, all reported as percentages."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricRecord:
    """One named value plus the context it was measured in."""

    name: str
    value: float
    norm: str = ""
    eps: float = None
    k: int = None
    seed: int = None
    iter: int = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"metric {self.name} is not finite: {self.value}")

    @property
    def key(self):
        return (self.name, self.norm, self.eps, self.k, self.seed, self.iter)


def _bool_matrix(success, name):
    m = np.asarray(success, dtype=bool)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"{name} must be a nonempty 2-D boolean array")
    return m


def asr_all(success):
    """Percentage of rows (runs) in which every column (model) is fooled."""
    m = _bool_matrix(success, "success")
    return 100.0 * float(m.all(axis=1).mean())


def asr_group(success):
    """``(ASR_avg, ASR_gp)`` from a ``(groups, images_per_group)`` boolean array.

    ASR_avg is the per-image success rate; ASR_gp counts a group as fooled
    only when all of its images are.
    """
    m = _bool_matrix(success, "success")
    return 100.0 * float(m.mean()), 100.0 * float(m.all(axis=1).mean())


def acc_adv(correct):
    """``(Acc_max, Acc_avg)`` from an ``(examples, attack_types)`` correctness array.

    An example counts toward Acc_max only if it survives every attack type.
    """
    m = _bool_matrix(correct, "correct")
    return 100.0 * float(m.all(axis=1).mean()), 100.0 * float(m.mean())


def s_eps(curve):
    """Trapezoidal area under ``[(eps, acc), ...]`` with strictly increasing eps."""
    pts = np.asarray(curve, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("curve needs at least two (eps, value) points")
    eps, acc = pts[:, 0], pts[:, 1]
    if np.any(np.diff(eps) <= 0):
        raise ValueError("eps values must be strictly increasing")
    return float(np.sum(0.5 * (acc[1:] + acc[:-1]) * np.diff(eps)))

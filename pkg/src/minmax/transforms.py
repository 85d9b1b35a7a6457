"""Image transformations with exact vector-Jacobian products.

Images are ``(H, W, Ch)`` float arrays. Flips, crop-resize and rotation are
fixed linear maps (resampling is bilinear with zero padding), so their VJP
is the transpose; brightness and gamma are elementwise with zero gradient
wherever the [0, 1] clamp saturates.
"""

import functools
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse

KINDS = ("identity", "flip_h", "flip_v", "brightness", "gamma", "crop_resize", "rotate")

# short names used by experiment configs
SUITE_NAMES = {
    "ori": "identity",
    "flh": "flip_h",
    "flv": "flip_v",
    "bri": "brightness",
    "gam": "gamma",
    "crop": "crop_resize",
    "rot": "rotate",
}


@dataclass(frozen=True)
class TransformSpec:
    """A transformation kind plus its single parameter.

    ``param`` is the brightness offset, gamma exponent, crop fraction or
    rotation angle in degrees (clockwise positive) depending on ``kind``.
    Stochastic specs are turned into deterministic instances by :func:`sample`.
    """

    kind: str
    param: float = 0.0
    stochastic: bool = False
    apply_prob: float = 1.0
    param_range: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ValueError("apply_prob must lie in [0, 1]")
        if self.kind == "gamma" and not self.param > 0:
            raise ValueError("gamma exponent must be positive")
        if self.kind == "crop_resize":
            fractions = [self.param] if self.param_range is None else [self.param, *self.param_range]
            if not all(0.0 < f <= 1.0 for f in fractions):
                raise ValueError("crop fraction must lie in (0, 1]")
        if self.param_range is not None:
            lo, hi = self.param_range
            if lo > hi:
                raise ValueError("param_range must be (low, high)")
            object.__setattr__(self, "param_range", (float(lo), float(hi)))


IDENTITY = TransformSpec("identity")


def deterministic_suite(names=("ori", "flh", "flv", "bri", "gam", "crop", "rot")):
    """Fixed transforms: +0.1 brightness, gamma 1.3, 0.8 center crop, 30 degree rotation."""
    table = {
        "ori": IDENTITY,
        "flh": TransformSpec("flip_h"),
        "flv": TransformSpec("flip_v"),
        "bri": TransformSpec("brightness", 0.1),
        "gam": TransformSpec("gamma", 1.3),
        "crop": TransformSpec("crop_resize", 0.8),
        "rot": TransformSpec("rotate", 30.0),
    }
    return [table[n] for n in names]


def stochastic_suite(names=("ori", "flh", "flv", "bri", "gam", "crop", "rot"), prob=0.8):
    """Random variants: rotation in [-10, 10] degrees, crop fraction in [0.6, 1.0];
    flips, brightness and gamma fire with probability ``prob``."""
    table = {
        "ori": IDENTITY,
        "flh": TransformSpec("flip_h", stochastic=True, apply_prob=prob),
        "flv": TransformSpec("flip_v", stochastic=True, apply_prob=prob),
        "bri": TransformSpec("brightness", 0.1, stochastic=True, apply_prob=prob),
        "gam": TransformSpec("gamma", 1.3, stochastic=True, apply_prob=prob),
        "crop": TransformSpec("crop_resize", 1.0, stochastic=True, param_range=(0.6, 1.0)),
        "rot": TransformSpec("rotate", 0.0, stochastic=True, param_range=(-10.0, 10.0)),
    }
    return [table[n] for n in names]


def sample(spec, rng):
    """Draw a deterministic instance of a stochastic spec."""
    if not spec.stochastic:
        raise ValueError("sample() needs a stochastic spec")
    if rng.random() >= spec.apply_prob:
        return IDENTITY
    param = spec.param
    if spec.param_range is not None:
        param = rng.uniform(*spec.param_range)
    return replace(spec, param=float(param), stochastic=False, param_range=None)


def _bilinear_matrix(H, W, src_rows, src_cols):
    """Sparse ``(H*W, H*W)`` matrix sampling the image at fractional coordinates.

    Output pixel ``k`` reads position ``(src_rows[k], src_cols[k])``;
    neighbours outside the image contribute zero.
    """
    r0 = np.floor(src_rows).astype(np.int64)
    c0 = np.floor(src_cols).astype(np.int64)
    fr = src_rows - r0
    fc = src_cols - c0
    out = np.arange(H * W)
    rows, cols, vals = [], [], []
    for dr, dc, wt in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr, cc = r0 + dr, c0 + dc
        ok = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W) & (wt != 0)
        rows.append(out[ok])
        cols.append(rr[ok] * W + cc[ok])
        vals.append(wt[ok])
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(H * W, H * W)
    )


@functools.lru_cache(maxsize=256)
def _resample_matrix(kind, param, H, W):
    ii, jj = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    if kind == "crop_resize":
        # centered window of fraction*H x fraction*W stretched over the full grid
        src_r = (H - param * H) / 2 + (ii + 0.5) * param - 0.5
        src_c = (W - param * W) / 2 + (jj + 0.5) * param - 0.5
    else:
        # output(p) = input(R^-1 p) about the center; y axis points down so a
        # standard rotation matrix turns the picture clockwise
        t = np.deg2rad(param)
        cy, cx = (H - 1) / 2, (W - 1) / 2
        dy, dx = ii - cy, jj - cx
        src_c = cx + np.cos(t) * dx + np.sin(t) * dy
        src_r = cy - np.sin(t) * dx + np.cos(t) * dy
    return _bilinear_matrix(H, W, src_r, src_c)


def _linear_map(mat, img):
    H, W, C = img.shape
    return (mat @ img.reshape(H * W, C)).reshape(H, W, C)


def _check(spec, img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"image must be (H, W, Ch), got shape {img.shape}")
    if spec.stochastic:
        raise ValueError("stochastic spec: draw an instance with sample() first")
    return img


def apply(spec, img):
    img = _check(spec, img)
    k = spec.kind
    if k == "identity":
        return img.copy()
    if k == "flip_h":
        return img[:, ::-1, :].copy()
    if k == "flip_v":
        return img[::-1, :, :].copy()
    if k == "brightness":
        return np.clip(img + spec.param, 0.0, 1.0)
    if k == "gamma":
        return np.clip(img, 0.0, 1.0) ** spec.param
    if k == "crop_resize" and spec.param == 1.0:
        return img.copy()
    H, W, _ = img.shape
    return _linear_map(_resample_matrix(k, float(spec.param), H, W), img)


def vjp(spec, img, cotangent):
    """``J^T u`` with ``J`` the Jacobian of :func:`apply` at ``img``."""
    img = _check(spec, img)
    u = np.asarray(cotangent, dtype=np.float64)
    if u.shape != img.shape:
        raise ValueError(f"cotangent shape {u.shape} != image shape {img.shape}")
    k = spec.kind
    if k == "identity":
        return u.copy()
    if k == "flip_h":
        return u[:, ::-1, :].copy()
    if k == "flip_v":
        return u[::-1, :, :].copy()
    if k == "brightness":
        shifted = img + spec.param
        return u * ((shifted >= 0.0) & (shifted <= 1.0))
    if k == "gamma":
        g = spec.param
        inside = (img > 0.0) & (img <= 1.0)
        deriv = np.zeros_like(img)
        deriv[inside] = g * img[inside] ** (g - 1.0)
        if g == 1.0:
            deriv[img == 0.0] = 1.0
        return u * deriv
    if k == "crop_resize" and spec.param == 1.0:
        return u.copy()
    H, W, _ = img.shape
    return _linear_map(_resample_matrix(k, float(spec.param), H, W).T.tocsr(), u)

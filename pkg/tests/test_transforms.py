import numpy as np
import pytest

from minmax import transforms as T
from minmax.numkit import make_rng

ALL_DETERMINISTIC = [
    T.IDENTITY,
    T.TransformSpec("flip_h"),
    T.TransformSpec("flip_v"),
    T.TransformSpec("brightness", 0.1),
    T.TransformSpec("gamma", 1.3),
    T.TransformSpec("crop_resize", 0.8),
    T.TransformSpec("crop_resize", 0.6),
    T.TransformSpec("rotate", 30.0),
    T.TransformSpec("rotate", -7.5),
]


def image(rng, h=7, w=6, c=2, lo=0.05, hi=0.85):
    return rng.uniform(lo, hi, (h, w, c))


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            T.TransformSpec("shear")
        with pytest.raises(ValueError):
            T.TransformSpec("gamma", 0.0)
        with pytest.raises(ValueError):
            T.TransformSpec("crop_resize", 1.2)
        with pytest.raises(ValueError):
            T.TransformSpec("flip_h", apply_prob=1.5)

    def test_suites(self):
        assert [s.kind for s in T.deterministic_suite()] == [
            "identity", "flip_h", "flip_v", "brightness", "gamma", "crop_resize", "rotate"
        ]
        rot = T.deterministic_suite(["rot"])[0]
        assert rot.param == 30.0
        crop = T.stochastic_suite(["crop"])[0]
        assert crop.param_range == (0.6, 1.0)


class TestApply:
    def test_flip_involution(self, rng):
        img = image(rng)
        spec = T.TransformSpec("flip_h")
        np.testing.assert_array_equal(T.apply(spec, T.apply(spec, img)), img)
        np.testing.assert_array_equal(T.apply(spec, img), img[:, ::-1])

    def test_gamma_fixed_points(self):
        img = np.array([0.0, 1.0]).reshape(1, 2, 1)
        np.testing.assert_array_equal(T.apply(T.TransformSpec("gamma", 1.3), img), img)

    def test_brightness(self):
        img = np.full((1, 1, 1), 0.5)
        np.testing.assert_allclose(T.apply(T.TransformSpec("brightness", 0.1), img), 0.6)
        np.testing.assert_array_equal(T.apply(T.TransformSpec("brightness", 0.1), img + 0.45), 1.0)

    def test_crop_full_is_identity(self, rng):
        img = image(rng)
        np.testing.assert_allclose(T.apply(T.TransformSpec("crop_resize", 1.0), img), img, atol=1e-12)
        mat = T._resample_matrix("crop_resize", 1.0, 7, 6)
        np.testing.assert_allclose(mat.toarray(), np.eye(42), atol=1e-12)

    def test_rotate_quarter_turn_clockwise(self, rng):
        img = image(rng, 5, 5, 1)
        np.testing.assert_allclose(T.apply(T.TransformSpec("rotate", 90.0), img), np.rot90(img, k=-1), atol=1e-12)

    def test_rotate_zero_padding(self):
        # the corner of an 8x8 grid maps about 1.45 pixels outside the source
        img = np.ones((8, 8, 1))
        out = T.apply(T.TransformSpec("rotate", 45.0), img)
        assert out[0, 0, 0] == 0.0
        assert out[3, 3, 0] == pytest.approx(1.0)

    def test_pure(self, rng):
        img = image(rng)
        for spec in ALL_DETERMINISTIC:
            np.testing.assert_array_equal(T.apply(spec, img), T.apply(spec, img))

    def test_stochastic_needs_sample(self, rng):
        with pytest.raises(ValueError):
            T.apply(T.stochastic_suite(["rot"])[0], image(rng))

    def test_shape_checks(self, rng):
        with pytest.raises(ValueError):
            T.apply(T.IDENTITY, np.zeros((3, 3)))
        with pytest.raises(ValueError):
            T.vjp(T.IDENTITY, np.zeros((3, 3, 1)), np.zeros((3, 2, 1)))


class TestVjp:
    @pytest.mark.parametrize("spec", ALL_DETERMINISTIC, ids=lambda s: f"{s.kind}-{s.param:g}")
    def test_adjoint_identity(self, spec):
        rng = make_rng(31)
        img = image(rng)
        v = rng.normal(size=img.shape)
        u = rng.normal(size=img.shape)
        h = 1e-6
        jv = (T.apply(spec, img + h * v) - T.apply(spec, img - h * v)) / (2 * h)
        lhs = float(np.sum(jv * u))
        rhs = float(np.sum(v * T.vjp(spec, img, u)))
        assert abs(lhs - rhs) <= 1e-8

    def test_identity_and_flip(self, rng):
        img, u = image(rng), rng.normal(size=(7, 6, 2))
        np.testing.assert_array_equal(T.vjp(T.IDENTITY, img, u), u)
        np.testing.assert_array_equal(T.vjp(T.TransformSpec("flip_h"), img, u), u[:, ::-1])

    def test_saturated_pixels_have_zero_grad(self):
        img = np.array([0.95, 0.5, -0.2, 1.3]).reshape(1, 4, 1)
        u = np.ones_like(img)
        np.testing.assert_array_equal(T.vjp(T.TransformSpec("brightness", 0.1), img, u).ravel(), [0, 1, 0, 0])
        g = T.vjp(T.TransformSpec("gamma", 1.3), img, u).ravel()
        assert g[2] == 0.0 and g[3] == 0.0 and g[1] == pytest.approx(1.3 * 0.5**0.3)


class TestSample:
    def test_never_applied(self, rng):
        spec = T.TransformSpec("flip_h", stochastic=True, apply_prob=0.0)
        assert all(T.sample(spec, rng) == T.IDENTITY for _ in range(100))

    def test_degenerate_range(self, rng):
        spec = T.TransformSpec("rotate", stochastic=True, param_range=(30.0, 30.0))
        out = T.sample(spec, rng)
        assert out == T.TransformSpec("rotate", 30.0)

    def test_apply_frequency(self):
        rng = make_rng(77)
        spec = T.stochastic_suite(["flh"])[0]
        hits = sum(T.sample(spec, rng).kind == "flip_h" for _ in range(10_000))
        assert abs(hits / 10_000 - 0.8) <= 0.02

    def test_draws_in_range(self, rng):
        spec = T.stochastic_suite(["crop"])[0]
        params = [T.sample(spec, rng).param for _ in range(500)]
        assert min(params) >= 0.6 and max(params) <= 1.0

    def test_deterministic_rejected(self, rng):
        with pytest.raises(ValueError):
            T.sample(T.IDENTITY, rng)

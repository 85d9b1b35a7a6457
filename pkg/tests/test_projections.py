import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from minmax.errors import EmptySet
from minmax.numkit import make_rng
from minmax.projections import (
    ConstraintSet,
    clip_box,
    in_simplex,
    l0_scores,
    parse_norm,
    project,
    project_l0_box,
    project_l1_box,
    project_l2_box,
    project_linf_box,
    project_rows,
    project_simplex,
)
from oracles import l0_brute_force, qp_projection, simplex_sort


def random_set(rng, p, d, eps=None):
    x0 = rng.uniform(0, 1, d)
    if eps is None:
        eps = float(rng.integers(1, d + 1)) if p == 0 else float(rng.uniform(0.1, 1.5))
    return ConstraintSet(p, eps, -x0, 1 - x0)


vectors = arrays(np.float64, st.integers(1, 8), elements=st.floats(-3, 3, allow_nan=False))


class TestConstraintSet:
    def test_parse_norm(self):
        assert parse_norm("inf") == np.inf
        assert parse_norm("linf") == np.inf
        assert parse_norm("2") == 2
        assert parse_norm(1.0) == 1
        with pytest.raises(ValueError):
            parse_norm(3)

    def test_rejects_bad_sets(self):
        z = np.zeros(2)
        with pytest.raises(ValueError):
            ConstraintSet(2, 0.0, z, z + 1)
        with pytest.raises(ValueError):
            ConstraintSet(2, np.inf, z, z + 1)
        with pytest.raises(ValueError):
            ConstraintSet(0, 1.5, z, z + 1)
        with pytest.raises(ValueError):
            ConstraintSet(2, 1.0, z + 0.1, z + 1)
        with pytest.raises(ValueError):
            ConstraintSet(2, 1.0, z, np.ones(3))

    def test_l0_budget_rounding(self):
        cs = ConstraintSet(0, 2.0 + 1e-12, np.zeros(3), np.ones(3))
        assert cs.eps == 2.0

    def test_around(self):
        cs = ConstraintSet.around(np.inf, 0.2, [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(cs.lower, [0.0, -0.5, -1.0])
        np.testing.assert_array_equal(cs.upper, [1.0, 0.5, 0.0])


class TestSimplex:
    def test_already_on_simplex(self):
        np.testing.assert_allclose(project_simplex([1 / 3, 1 / 3, 1 / 3]), [1 / 3] * 3, atol=1e-15)

    def test_single_point(self):
        np.testing.assert_array_equal(project_simplex([7.2]), [1.0])

    def test_hand_example(self):
        np.testing.assert_allclose(project_simplex([0.9, 0.8, -0.3]), [0.55, 0.45, 0.0], atol=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(arrays(np.float64, st.integers(1, 10), elements=st.floats(-5, 5, allow_nan=False)))
    def test_matches_sort_oracle(self, b):
        w = project_simplex(b)
        assert in_simplex(w)
        np.testing.assert_allclose(w, simplex_sort(b), atol=1e-9)

    def test_nonfinite_rejected(self):
        with pytest.raises(ArithmeticError):
            project_simplex([0.1, np.nan])


class TestClipAndLinf:
    def test_clip(self):
        lo, up = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
        np.testing.assert_array_equal(clip_box([0.5, -0.2], lo, up), [0.5, -0.2])
        np.testing.assert_array_equal(clip_box([2.0, -0.2], lo, up), [1.0, -0.2])
        np.testing.assert_array_equal(clip_box(lo, lo, up), lo)

    def test_linf_examples(self):
        cs = ConstraintSet(np.inf, 0.2, [-0.1, -0.1], [0.9, 0.9])
        np.testing.assert_allclose(project_linf_box([0.5, -0.05], cs), [0.2, -0.05])
        np.testing.assert_array_equal(project_linf_box(np.zeros(2), cs), np.zeros(2))

    def test_empty_set_guard(self):
        # bypass validation to reach the defensive branch
        cs = ConstraintSet(np.inf, 0.2, [0.0], [1.0])
        object.__setattr__(cs, "lower", np.array([0.5]))
        with pytest.raises(EmptySet):
            project_linf_box([0.0], cs)


class TestL1L2:
    def test_zero_fixed(self):
        cs = ConstraintSet(1, 1.0, -np.ones(3), np.ones(3))
        np.testing.assert_array_equal(project_l1_box(np.zeros(3), cs), np.zeros(3))
        cs2 = ConstraintSet(2, 1.0, -np.ones(3), np.ones(3))
        np.testing.assert_array_equal(project_l2_box(np.zeros(3), cs2), np.zeros(3))

    def test_inside_returns_clip(self):
        cs = ConstraintSet(1, 1.0, -np.ones(3) * 0.1, np.ones(3))
        np.testing.assert_array_equal(project_l1_box([-0.5, 0.2, 0.1], cs), [-0.1, 0.2, 0.1])
        cs2 = ConstraintSet(2, 1.0, -np.ones(3) * 0.1, np.ones(3))
        np.testing.assert_array_equal(project_l2_box([-0.5, 0.2, 0.1], cs2), [-0.1, 0.2, 0.1])

    def test_l1_oracle_example(self):
        # frozen from a 1e-6 scan of the threshold plus a 1e-2 lattice search over the set
        cs = ConstraintSet(1, 1.0, -np.ones(3), np.ones(3))
        np.testing.assert_allclose(project_l1_box([2.0, -0.5, 0.2], cs), [1.0, 0.0, 0.0], atol=1e-9)

    def test_l2_oracle_example(self):
        # frozen from SLSQP on 0.5*||d - a||^2 with ||d|| <= 1 and the box
        x0 = np.array([0.3, 0.874, 0.005, 0.821])
        a = np.array([0.5, 1.589, 1.103, -1.099])
        cs = ConstraintSet(2, 1.0, -x0, 1 - x0)
        expected = [0.30330594, 0.126, 0.66909291, -0.66666647]
        np.testing.assert_allclose(project_l2_box(a, cs), expected, atol=1e-6)

    @pytest.mark.parametrize("p", [1, 2])
    def test_against_qp_oracle(self, p):
        rng = make_rng(21, p)
        for _ in range(60):
            d = int(rng.integers(1, 9))
            cs = random_set(rng, p, d)
            a = rng.uniform(-2, 2, d)
            got = project(a, cs)
            ref = qp_projection(a, p, cs.eps, cs.lower, cs.upper)
            assert np.max(np.abs(got - ref)) <= 2e-3
            assert np.linalg.norm(got - a) <= np.linalg.norm(ref - a) + 1e-3


class TestL0:
    def test_inactive_budget(self):
        cs = ConstraintSet(0, 4, -np.ones(3) * 0.5, np.ones(3) * 0.5)
        np.testing.assert_array_equal(project_l0_box([1.0, -2.0, 0.1], cs), [0.5, -0.5, 0.1])

    def test_zero(self):
        cs = ConstraintSet(0, 1, -np.ones(3), np.ones(3))
        np.testing.assert_array_equal(project_l0_box(np.zeros(3), cs), np.zeros(3))

    def test_brute_force_example(self):
        x0 = np.array([0.928, 0.07, 0.13, 0.948, 0.622])
        a = np.array([-1.114, -0.002, 0.304, -1.414, -1.056])
        out = project_l0_box(a, ConstraintSet(0, 2, -x0, 1 - x0))
        np.testing.assert_allclose(out, [-0.928, 0.0, 0.0, -0.948, 0.0], atol=1e-15)
        assert ((out - a) ** 2).sum() == pytest.approx(1.459308, abs=1e-12)

    def test_tie_break_lowest_index(self):
        cs = ConstraintSet(0, 2, -np.ones(4), np.ones(4))
        np.testing.assert_array_equal(project_l0_box([0.5, 0.5, 0.5, 0.5], cs), [0.5, 0.5, 0.0, 0.0])

    def test_score_forms_agree(self):
        rng = make_rng(5)
        a = rng.uniform(-3, 3, 200)
        x0 = rng.uniform(0, 1, 200)
        lo, up = -x0, 1 - x0
        eta = l0_scores(a, lo, up)
        c = np.where(a < lo, lo, np.where(a > up, up, 0.0))
        outside = (a < lo) | (a > up)
        np.testing.assert_allclose(eta[outside], np.sqrt(a**2 - (a - c) ** 2)[outside], atol=1e-12)
        np.testing.assert_array_equal(eta[~outside], np.abs(a[~outside]))

    def test_brute_force_random(self):
        rng = make_rng(6)
        for _ in range(100):
            d = int(rng.integers(1, 7))
            cs = random_set(rng, 0, d)
            a = rng.uniform(-2, 2, d)
            out = project_l0_box(a, cs)
            assert np.count_nonzero(out) <= cs.eps
            assert ((out - a) ** 2).sum() == pytest.approx(l0_brute_force(a, int(cs.eps), cs.lower, cs.upper),
                                                           abs=1e-9)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(vectors, st.sampled_from([0, 1, 2, np.inf]), st.integers(0, 2**31))
    def test_feasible(self, a, p, seed):
        cs = random_set(make_rng(seed), p, a.size)
        out = project(a, cs)
        assert cs.contains(out)
        assert np.all(out >= cs.lower) and np.all(out <= cs.upper)

    @settings(max_examples=200, deadline=None)
    @given(vectors, st.sampled_from([1, 2, np.inf]), st.integers(0, 2**31))
    def test_idempotent(self, a, p, seed):
        cs = random_set(make_rng(seed), p, a.size)
        once = project(a, cs)
        np.testing.assert_allclose(project(once, cs), once, atol=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(vectors, st.sampled_from([1, 2, np.inf]), st.integers(0, 2**31))
    def test_nonexpansive(self, a, p, seed):
        rng = make_rng(seed)
        cs = random_set(rng, p, a.size)
        b = a + rng.normal(0, 0.5, a.size)
        assert np.linalg.norm(project(a, cs) - project(b, cs)) <= np.linalg.norm(a - b) + 1e-8

    @pytest.mark.parametrize("p", [0, 1, 2, np.inf])
    def test_rows_match_single(self, p):
        rng = make_rng(8, 0 if p == np.inf else p + 1)
        X = rng.uniform(0, 1, (20, 6))
        A = rng.uniform(-1.5, 1.5, (20, 6))
        eps = 2.0 if p == 0 else 0.7
        rows = project_rows(A, p, eps, -X, 1 - X)
        single = np.array([project(a, ConstraintSet(p, eps, -x, 1 - x)) for a, x in zip(A, X)])
        np.testing.assert_allclose(rows, single, atol=1e-9)

    def test_dimension_mismatch(self):
        cs = ConstraintSet(2, 1.0, -np.ones(3), np.ones(3))
        with pytest.raises(ValueError):
            project(np.zeros(4), cs)

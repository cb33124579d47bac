import numpy as np
import pytest

from src.utils.errors import DimensionError, NonFiniteError, RankError, UndefinedAngleError
from src.utils.tensor_ops import (
    activate, activation_derivative, check_finite, cosine_angle_deg, he_normal, make_rng, matmul, outer,
)


class TestMatmul:
    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_associativity(self, rng):
        a, b, c = (rng.normal(size=(8, 8)) for _ in range(3))
        np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-9)

    def test_non_finite_result(self):
        with pytest.raises(NonFiniteError):
            matmul(np.array([[np.inf]]), np.array([[1.0]]))


def test_outer_needs_vectors():
    np.testing.assert_array_equal(outer([1.0, 2.0], [3.0]), [[3.0], [6.0]])
    with pytest.raises(RankError):
        outer(np.ones((2, 2)), np.ones(2))


class TestActivations:
    def test_softmax_rows_sum_to_one(self, rng):
        p = activate(rng.normal(size=(5, 7)) * 50, "softmax")
        np.testing.assert_allclose(p.sum(axis=1), 1.0)

    def test_softmax_rank(self):
        with pytest.raises(RankError):
            activate(np.ones((2, 2, 2)), "softmax")

    def test_sigmoid_is_stable(self):
        s = activate(np.array([-1000.0, 0.0, 1000.0]), "sigmoid")
        np.testing.assert_allclose(s, [0.0, 0.5, 1.0])

    def test_linear_returns_copy(self):
        x = np.array([1.0, 2.0])
        y = activate(x, "linear")
        y[0] = 5.0
        assert x[0] == 1.0

    @pytest.mark.parametrize("kind", ["tanh", "sigmoid", "linear"])
    def test_derivative_matches_difference_quotient(self, kind):
        pre = np.linspace(-2, 2, 9)
        h = 1e-6
        numeric = (activate(pre + h, kind) - activate(pre - h, kind)) / (2 * h)
        np.testing.assert_allclose(activation_derivative(pre, kind), numeric, atol=1e-8)


class TestAngle:
    def test_identical_and_opposite(self, rng):
        v = rng.normal(size=10)
        assert cosine_angle_deg(v, v) == 0.0
        assert cosine_angle_deg(v, -v) == pytest.approx(180.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_angle_deg([1.0, 0.0], [0.0, 3.0]) == pytest.approx(90.0)

    def test_scale_invariance(self, rng):
        u, v = rng.normal(size=(2, 20))
        assert cosine_angle_deg(3.5 * u, 0.2 * v) == pytest.approx(cosine_angle_deg(u, v), abs=1e-12)

    def test_zero_vector(self):
        with pytest.raises(UndefinedAngleError):
            cosine_angle_deg(np.zeros(3), np.ones(3))

    def test_matrices_are_flattened(self):
        assert cosine_angle_deg(np.eye(2), np.eye(2).ravel()) == 0.0


def test_equal_seeds_give_equal_draws():
    a = make_rng(42).normal(size=10_000)
    b = make_rng(42).normal(size=10_000)
    np.testing.assert_array_equal(a, b)


def test_he_normal_scale():
    w = he_normal(make_rng(0), (400, 500), fan_in=500)
    assert w.std() == pytest.approx(np.sqrt(2 / 500), rel=0.02)


def test_check_finite():
    with pytest.raises(NonFiniteError):
        check_finite(np.array([1.0, np.nan]))

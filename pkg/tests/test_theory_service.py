import numpy as np
import pytest

from src.services.theory_service import (
    closed_form_deviation, error_collinearity_deg, lemma1_simulate, moore_penrose_residuals, orthonormal_columns,
    random_instance, theorem1_check, theorem2_check, theory_service, verify_theory,
)
from src.utils.errors import DegenerateInputError, DimensionError, PreconditionError
from src.utils.tensor_ops import make_rng

DIMS = (4, 3, 5, 2)


@pytest.fixture
def instance():
    return random_instance(make_rng(5), DIMS)


class TestTrajectory:
    def test_initial_state(self, instance):
        A, G, x, y = instance
        state = lemma1_simulate(DIMS, A, G, x, y, steps=0).states[0]
        assert (state.s1, state.s_w1, state.s_w2, state.s_w3, state.s3) == (0.0, 0.0, 0.0, 0.0, 0.0)
        np.testing.assert_array_equal(state.W1, 0.0)
        np.testing.assert_array_equal(state.W2, A)
        np.testing.assert_array_equal(state.e, y)

    def test_first_step_moves_only_w1(self, instance):
        A, G, x, y = instance
        states = lemma1_simulate(DIMS, A, G, x, y, steps=1).states
        assert len(states) == 2
        one = states[1]
        assert one.s_w1 == pytest.approx(0.01)
        assert one.s1 == pytest.approx(0.01)
        assert one.s_w2 == 0.0 and one.s_w3 == 0.0
        np.testing.assert_allclose(one.W1, 0.01 * np.outer(G @ y, x), atol=1e-15)
        np.testing.assert_array_equal(one.W3, 0.0)

    def test_closed_forms_hold_for_100_steps(self, instance):
        trajectory = lemma1_simulate(DIMS, *instance, steps=100)
        assert max(closed_form_deviation(s) for s in trajectory.states) <= 1e-8
        assert trajectory.final.s3 > 0.0

    def test_error_stays_on_the_label_line(self, instance):
        trajectory = lemma1_simulate(DIMS, *instance, steps=100)
        assert max(error_collinearity_deg(s) for s in trajectory.states) <= 1e-6

    def test_non_orthonormal_a_still_follows_closed_forms(self):
        A, G, x, y = random_instance(make_rng(9), DIMS, orthonormal=False)
        trajectory = lemma1_simulate(DIMS, A, G, x, y, steps=30)
        assert max(closed_form_deviation(s) for s in trajectory.states) <= 1e-8

    def test_shape_checks(self, instance):
        A, G, x, y = instance
        with pytest.raises(DimensionError):
            lemma1_simulate((4, 3, 5), A, G, x, y)
        with pytest.raises(DimensionError):
            lemma1_simulate(DIMS, A.T, G, x, y)
        with pytest.raises(DegenerateInputError):
            lemma1_simulate(DIMS, A, G, np.zeros(4), y)


class TestInnerProducts:
    def test_vacuous_before_w3_moves(self, instance):
        states = lemma1_simulate(DIMS, *instance, steps=1).states
        assert all(theorem1_check(s).vacuous for s in states)

    def test_positive_over_many_seeds(self):
        for seed in range(1000):
            A, G, x, y = random_instance(make_rng(seed), DIMS)
            for state in lemma1_simulate(DIMS, A, G, x, y, steps=5).states[2:]:
                result = theorem1_check(state)
                assert not result.vacuous
                assert result.w1_product > 0.0 and result.w2_product > 0.0, f"seed {seed} step {state.step}"

    def test_positive_at_every_step_of_long_runs(self):
        for seed in range(100):
            A, G, x, y = random_instance(make_rng(seed), DIMS)
            for state in lemma1_simulate(DIMS, A, G, x, y, steps=100).states[2:]:
                result = theorem1_check(state)
                assert not result.vacuous and result.holds, f"seed {seed} step {state.step}"


class TestGaussNewton:
    def test_residual_over_random_instances(self):
        for seed in range(100):
            A, G, x, y = random_instance(make_rng(seed), DIMS)
            result = theorem2_check(lemma1_simulate(DIMS, A, G, x, y, steps=100).final)
            assert result.residual <= 1e-6
            assert result.normalized_residual <= 1e-10
            assert result.penrose_residual <= 1e-8

    def test_weight_product_is_rank_one(self, instance):
        state = lemma1_simulate(DIMS, *instance, steps=30).final
        product = state.W3 @ state.W2
        assert np.linalg.matrix_rank(product) == 1
        assert max(moore_penrose_residuals(product, np.linalg.pinv(product, rcond=1e-10))) <= 1e-8
        assert theorem2_check(state).penrose_residual <= 1e-8

    def test_scalar_network(self):
        dims = (1, 1, 1, 1)
        trajectory = lemma1_simulate(dims, np.array([[1.0]]), np.array([[2.0]]), np.array([1.0]), np.array([1.0]),
                                     steps=10)
        assert theorem2_check(trajectory.final).residual <= 1e-12

    def test_wrong_scaling_is_detected(self, instance):
        state = lemma1_simulate(DIMS, *instance, steps=50).final
        result = theorem2_check(state)
        off = np.linalg.norm(2.0 * result.s * (state.G @ state.e) - np.linalg.pinv(state.W3 @ state.W2) @ state.e)
        assert off > 1e3 * max(result.residual, 1e-15)

    def test_needs_orthonormal_columns(self):
        A, G, x, y = random_instance(make_rng(2), DIMS, orthonormal=False)
        with pytest.raises(PreconditionError):
            theorem2_check(lemma1_simulate(DIMS, A, G, x, y, steps=5).final)

    def test_needs_a_nonzero_product(self, instance):
        with pytest.raises(PreconditionError):
            theorem2_check(lemma1_simulate(DIMS, *instance, steps=0).final)

    def test_degenerate_feedback(self, instance):
        A, _, x, y = instance
        with pytest.raises(DegenerateInputError):
            theorem2_check(lemma1_simulate(DIMS, A, np.zeros((3, 2)), x, y, steps=3).final)

    def test_too_few_rows_for_orthonormal_columns(self):
        with pytest.raises(PreconditionError):
            orthonormal_columns(make_rng(0), 2, 3)


def test_moore_penrose_conditions(rng):
    M = rng.normal(size=(4, 3))
    assert max(moore_penrose_residuals(M, np.linalg.pinv(M))) <= 1e-12


def test_verify_theory_summary():
    summary = verify_theory(seeds=5, steps=40)
    assert summary["lemma_max_deviation"] <= 1e-8
    assert summary["error_collinearity_max_deg"] <= 1e-6
    assert summary["theorem1_positive_rate"] == 1.0
    assert summary["theorem2_max_residual"] <= 1e-6


def test_theory_service_judges_tolerances():
    summary = theory_service.verify(seeds=2, steps=20)
    assert theory_service.passes(summary)
    assert not theory_service.passes({**summary, "theorem2_max_residual": 1e-3})
    assert not theory_service.passes({**summary, "theorem1_positive_rate": 0.99})

import numpy as np
import pytest

from src.services.metrics_service import accuracy, corr, rrse, rrse_corr
from src.utils.errors import ConfigurationError, DimensionError, UndefinedMetricError


class TestAccuracy:
    def test_counts_matching_argmax(self):
        pred = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
        labels = np.array([[1, 0], [0, 1], [0, 1], [0, 1]])
        assert accuracy(pred, labels) == 0.75

    def test_ties_pick_lowest_index(self):
        assert accuracy(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]])) == 1.0

    def test_empty(self):
        with pytest.raises(ConfigurationError):
            accuracy(np.zeros((0, 2)), np.zeros((0, 2)))

    def test_count_mismatch(self):
        with pytest.raises(DimensionError):
            accuracy(np.ones((3, 2)), np.ones((2, 2)))


class TestForecastMetrics:
    def test_perfect_forecast(self, rng):
        y = rng.normal(size=(30, 3))
        r, c = rrse_corr(y, y)
        assert r == 0.0
        assert c == pytest.approx(1.0)

    def test_mean_predictor_has_unit_rrse(self, rng):
        y = rng.normal(size=(50, 2))
        assert rrse(y, np.full_like(y, y.mean())) == pytest.approx(1.0)

    def test_anticorrelated(self):
        y = np.arange(10.0)
        assert corr(y, -y) == pytest.approx(-1.0)

    def test_constant_target(self):
        with pytest.raises(UndefinedMetricError):
            rrse(np.ones(5), np.arange(5.0))

    def test_constant_prediction(self):
        with pytest.raises(UndefinedMetricError):
            corr(np.arange(5.0), np.ones(5))

    def test_constant_column_is_skipped(self):
        y = np.stack([np.arange(6.0), np.ones(6)], axis=1)
        assert corr(y, y) == pytest.approx(1.0)

    def test_single_step(self):
        with pytest.raises(DimensionError):
            rrse(np.ones((1, 2)), np.ones((1, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            corr(np.ones((4, 2)), np.ones((4, 3)))

    def test_hand_computed_rrse(self):
        assert rrse(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 1.0, 2.0, 4.0])) == pytest.approx(1 / np.sqrt(5))

    def test_corr_is_symmetric(self, rng):
        y = rng.normal(size=(40, 3))
        y_hat = y + 0.5 * rng.normal(size=(40, 3))
        assert corr(y, y_hat) == pytest.approx(corr(y_hat, y), abs=1e-15)

    @pytest.mark.parametrize("c", [0.01, 3.0, 250.0])
    def test_scaling_both_series_leaves_metrics_unchanged(self, rng, c):
        y = rng.normal(size=(40, 2))
        y_hat = y + 0.3 * rng.normal(size=(40, 2))
        assert rrse(c * y, c * y_hat) == pytest.approx(rrse(y, y_hat), rel=1e-12)
        assert corr(c * y, c * y_hat) == pytest.approx(corr(y, y_hat), rel=1e-12)

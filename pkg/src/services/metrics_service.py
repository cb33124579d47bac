"""
Evaluation metrics: classification accuracy and the forecasting pair RRSE / CORR
"""
import logging
from typing import Tuple

import numpy as np

from ..utils.errors import ConfigurationError, DimensionError, UndefinedMetricError
from ..utils.tensor_ops import Tensor, as_tensor

logger = logging.getLogger(__name__)


def accuracy(predictions: Tensor, labels: Tensor) -> float:
    """Fraction of rows whose argmax matches; np.argmax picks the lowest index on ties"""
    predictions = as_tensor(predictions)
    labels = as_tensor(labels)
    if predictions.size == 0 or labels.size == 0:
        raise ConfigurationError("accuracy of an empty set is undefined")
    if predictions.ndim == 1:
        predictions = predictions[None, :]
    if labels.ndim == 1:
        labels = labels[None, :]
    if predictions.shape[0] != labels.shape[0]:
        raise DimensionError(f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
    return float(np.mean(np.argmax(predictions, axis=1) == np.argmax(labels, axis=1)))


def _pair(y: Tensor, y_hat: Tensor) -> Tuple[Tensor, Tensor]:
    y = as_tensor(y)
    y_hat = as_tensor(y_hat)
    if y.shape != y_hat.shape:
        raise DimensionError(f"series shapes differ: {y.shape} vs {y_hat.shape}")
    if y.ndim == 1:
        y, y_hat = y[:, None], y_hat[:, None]
    if y.ndim != 2 or y.shape[0] < 2:
        raise DimensionError(f"need at least two time steps, got shape {y.shape}")
    return y, y_hat


def rrse(y: Tensor, y_hat: Tensor) -> float:
    """sqrt(sum (y - y_hat)^2) / sqrt(sum (y - mean y)^2) over all entries"""
    y, y_hat = _pair(y, y_hat)
    spread = np.sum((y - y.mean()) ** 2)
    if spread == 0.0:
        raise UndefinedMetricError("RRSE is undefined for a constant target series")
    return float(np.sqrt(np.sum((y - y_hat) ** 2)) / np.sqrt(spread))


def corr(y: Tensor, y_hat: Tensor) -> float:
    """Pearson correlation per feature, averaged over features where both series vary"""
    y, y_hat = _pair(y, y_hat)
    dy = y - y.mean(axis=0)
    dp = y_hat - y_hat.mean(axis=0)
    denom = np.sqrt(np.sum(dy ** 2, axis=0) * np.sum(dp ** 2, axis=0))
    valid = denom > 0.0
    if not np.any(valid):
        raise UndefinedMetricError("CORR is undefined when the target or the prediction is constant")
    if not np.all(valid):
        logger.debug(f"CORR skips {int(np.sum(~valid))} constant feature(s)")
    per_feature = np.sum(dy * dp, axis=0)[valid] / denom[valid]
    return float(np.clip(np.mean(per_feature), -1.0, 1.0))


def rrse_corr(y: Tensor, y_hat: Tensor) -> Tuple[float, float]:
    return rrse(y, y_hat), corr(y, y_hat)

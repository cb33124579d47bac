"""
Central-difference oracle for hand-derived gradients
"""
from typing import Callable

import numpy as np

from .tensor_ops import Tensor


def central_difference(loss: Callable[[Tensor], float], w: Tensor, h: float = 1e-5) -> Tensor:
    """
    Numerical gradient of ``loss`` at ``w``.

    Each coordinate is perturbed by +/- h and the symmetric quotient
    (f(w + h e_i) - f(w - h e_i)) / 2h is stored. ``w`` itself is not modified.
    """
    w = np.array(w, dtype=np.float64, copy=True)
    grad = np.zeros_like(w)
    for i in range(w.size):
        orig = w.flat[i]
        w.flat[i] = orig + h
        f_plus = loss(w)
        w.flat[i] = orig - h
        f_minus = loss(w)
        w.flat[i] = orig
        grad.flat[i] = 0.5 * (f_plus - f_minus) / h
    return grad


def relative_error(analytic: Tensor, numeric: Tensor, floor: float = 1e-8) -> float:
    """max |a - n| / max(|a| + |n|, floor), the usual gradient-check ratio"""
    num = np.max(np.abs(analytic - numeric))
    den = max(float(np.max(np.abs(analytic) + np.abs(numeric))), floor)
    return float(num / den)

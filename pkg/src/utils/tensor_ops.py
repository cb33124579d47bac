"""
Dense float64 numerics shared by every service.

Tensors are plain ``numpy.ndarray`` values of dtype float64; operations never
mutate their inputs. Random draws come from a PCG64 generator so a seed fixes
the whole sequence on every platform.
"""
from typing import Sequence, Tuple

import numpy as np
import numpy.typing as npt

from .errors import DimensionError, NonFiniteError, RankError, UndefinedAngleError

Tensor = npt.NDArray[np.float64]
Rng = np.random.Generator

ACTIVATIONS = ("tanh", "sigmoid", "softmax", "linear")


def make_rng(seed: int) -> Rng:
    """Deterministic generator for a 64-bit unsigned seed"""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def as_tensor(x) -> Tensor:
    return np.asarray(x, dtype=np.float64)


def check_finite(x: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf values")
    return x


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m x k) and b (k x n)"""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return check_finite(a @ b, "matmul result")


def outer(u: Tensor, v: Tensor) -> Tensor:
    u = as_tensor(u)
    v = as_tensor(v)
    if u.ndim != 1 or v.ndim != 1:
        raise RankError(f"outer product needs vectors, got shapes {u.shape} and {v.shape}")
    return np.outer(u, v)


def activate(x: Tensor, kind: str) -> Tensor:
    """Apply an activation; softmax works per row of a rank-2 input"""
    x = as_tensor(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        # Stable in both tails
        e = np.exp(-np.abs(x))
        return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    if kind == "softmax":
        if x.ndim not in (1, 2):
            raise RankError(f"softmax needs rank 1 or 2 input, got shape {x.shape}")
        shifted = x - np.max(x, axis=-1, keepdims=True)
        exps = np.exp(shifted)
        return exps / np.sum(exps, axis=-1, keepdims=True)
    if kind == "linear":
        return x.copy()
    raise ValueError(f"Unknown activation kind: {kind}")


def activation_derivative(pre: Tensor, kind: str) -> Tensor:
    """Elementwise derivative of an activation evaluated at the pre-activation"""
    if kind == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    if kind == "sigmoid":
        s = activate(pre, "sigmoid")
        return s * (1.0 - s)
    if kind == "linear":
        return np.ones_like(pre)
    # softmax is only used at the output, combined with cross-entropy
    raise ValueError(f"No elementwise derivative for activation: {kind}")


def cosine_angle_deg(u: Tensor, v: Tensor) -> float:
    """Angle in degrees between the flattened vectors u and v"""
    u = as_tensor(u).ravel()
    v = as_tensor(v).ravel()
    if u.shape != v.shape:
        raise DimensionError(f"angle needs equal sizes, got {u.size} and {v.size}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise UndefinedAngleError("angle is undefined for a zero vector")
    uh = u / nu
    vh = v / nv
    # Half-angle form: exact at 0 and 180 degrees
    angle = 2.0 * np.arctan2(np.linalg.norm(uh - vh), np.linalg.norm(uh + vh))
    return float(np.degrees(angle))


def he_normal(rng: Rng, shape: Tuple[int, ...], fan_in: int) -> Tensor:
    """He initialisation, N(0, 2 / fan_in)"""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def gaussian(rng: Rng, shape: Sequence[int], std: float = 1.0) -> Tensor:
    return rng.normal(0.0, std, size=tuple(shape))

"""
Theory Verification Service for the FTP lab

Numerical checks of the two-hidden-layer linear analysis: the scalar
recursions that describe FTP's trajectory from W1 = W3 = 0, W2 = A, the
positivity of the FTP/BP inner products and the Gauss-Newton alignment when
A has orthonormal columns.
"""
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..models.network_model import dense
from ..models.report_model import LemmaOneState, LemmaOneTrajectory, Theorem1Result, Theorem2Result
from ..models.schemas import LossKind
from ..utils.errors import DegenerateInputError, DimensionError, PreconditionError
from ..utils.tensor_ops import Rng, Tensor, as_tensor, cosine_angle_deg, make_rng
from .learning_service import estimate_first_target, ftp_gradients, propagate_targets
from .network_service import forward, network_from_weights

logger = logging.getLogger(__name__)

PINV_RCOND = 1e-10
ORTHONORMAL_TOL = 1e-10


def orthonormal_columns(rng: Rng, rows: int, cols: int) -> Tensor:
    """rows x cols matrix with orthonormal columns (reduced QR of a Gaussian draw)"""
    if rows < cols:
        raise PreconditionError(f"cannot build {cols} orthonormal columns in dimension {rows}")
    q, r = np.linalg.qr(rng.normal(size=(rows, cols)))
    # fix column signs so the draw is a deterministic function of the rng
    return q * np.sign(np.diag(r))


def moore_penrose_residuals(M: Tensor, M_pinv: Tensor) -> Tuple[float, float, float, float]:
    """Max-abs violations of the four Penrose conditions"""
    MP = M @ M_pinv
    PM = M_pinv @ M
    return (
        float(np.max(np.abs(MP @ M - M))),
        float(np.max(np.abs(PM @ M_pinv - M_pinv))),
        float(np.max(np.abs(MP.T - MP))),
        float(np.max(np.abs(PM.T - PM))),
    )


#############################################
# Lemma: closed-form trajectory

def _linear_arch(dims: Sequence[int]):
    d0, d1, d2, dy = dims
    return [dense(d0, d1, "linear"), dense(d1, d2, "linear"), dense(d2, dy, "linear")]


def lemma1_simulate(dims: Sequence[int], A: Tensor, G: Tensor, x: Tensor, y: Tensor, steps: int = 100,
                    etas: Tuple[float, float, float] = (0.01, 0.01, 0.01)) -> LemmaOneTrajectory:
    """
    Run FTP (library gradients, plain SGD with per-layer rates) on a linear
    d0-d1-d2-dy net started at W1 = 0, W2 = A, W3 = 0, and the scalar
    recursions alongside. State 0 is the initial point.
    """
    if len(dims) != 4:
        raise DimensionError(f"dims must be (d0, d1, d2, dy), got {dims}")
    d0, d1, d2, dy = dims
    A, G, x, y = as_tensor(A), as_tensor(G), as_tensor(x).ravel(), as_tensor(y).ravel()
    if A.shape != (d2, d1) or G.shape != (d1, dy) or x.size != d0 or y.size != dy:
        raise DimensionError(f"shapes A{A.shape} G{G.shape} x{x.shape} y{y.shape} do not fit dims {tuple(dims)}")
    if not np.any(x) or not np.any(y):
        raise DegenerateInputError("x and y must be non-zero")

    eta1, eta2, eta3 = etas
    net = network_from_weights(_linear_arch(dims), {"W1": np.zeros((d1, d0)), "W2": A.copy(),
                                                    "W3": np.zeros((dy, d2))}, G)
    gy = G @ y
    agy = A @ gy
    gy2, agy2, x2 = float(gy @ gy), float(agy @ agy), float(x @ x)
    s1 = s_w1 = s_w2 = s_w3 = 0.0

    states: List[LemmaOneState] = []
    for t in range(steps + 1):
        s3 = s1 * s_w3 * (agy2 + s_w2 * agy2 * gy2)
        trace = forward(net, x[None, :])
        states.append(LemmaOneState(
            step=t, s1=s1, s_w1=s_w1, s_w2=s_w2, s_w3=s_w3, s3=s3, A=A, G=G, x=x, y=y,
            W1=net.weights["W1"].copy(), W2=net.weights["W2"].copy(), W3=net.weights["W3"].copy(),
            h1=trace.h[1][0].copy(), e=y - trace.output[0], etas=tuple(etas),
        ))
        if t == steps:
            break

        tau1 = estimate_first_target(trace, y, net.feedback, 1.0, "linear")
        targets = propagate_targets(net, trace, tau1, y)
        grads = ftp_gradients(net, trace, targets, LossKind.MSE)
        for key, eta in zip(("W1", "W2", "W3"), etas):
            net.weights[key] = net.weights[key] - eta * grads[key]

        err = 1.0 - s3
        s_w1, s_w2, s_w3, s1 = (
            s_w1 + eta1 * err,
            s_w2 + eta2 * s1 * err + eta2 * s1 * s_w2 * err * gy2,
            s_w3 + eta3 * s1 * err * (1.0 + s_w2 * gy2),
            s1 + eta1 * err * x2,
        )
    return LemmaOneTrajectory(states=states)


def closed_forms(state: LemmaOneState) -> Dict[str, Tensor]:
    """W1 = s_W1 Gy x^T, W2 = A (I + s_W2 Gy Gy^T), W3 = s_W3 y (A Gy)^T, h1 = s1 Gy"""
    gy = state.Gy
    return {
        "W1": state.s_w1 * np.outer(gy, state.x),
        "W2": state.A @ (np.eye(gy.size) + state.s_w2 * np.outer(gy, gy)),
        "W3": state.s_w3 * np.outer(state.y, state.A @ gy),
        "h1": state.s1 * gy,
        "e": (1.0 - state.s3) * state.y,
    }


def closed_form_deviation(state: LemmaOneState) -> float:
    forms = closed_forms(state)
    simulated = {"W1": state.W1, "W2": state.W2, "W3": state.W3, "h1": state.h1, "e": state.e}
    return max(float(np.max(np.abs(forms[k] - simulated[k]))) for k in forms)


def error_collinearity_deg(state: LemmaOneState) -> float:
    """Angle between the lines spanned by e and y; 0 when e vanishes"""
    if not np.any(state.e):
        return 0.0
    angle = cosine_angle_deg(state.e, state.y)
    return min(angle, 180.0 - angle)


#############################################
# Theorems

def theorem1_check(state: LemmaOneState) -> Theorem1Result:
    """<G e, W2^T W3^T e> and <W2 G e, W3^T e>; vacuous while W3 = 0 or e = 0"""
    e = state.e
    ge = state.G @ e
    w3te = state.W3.T @ e
    w1_product = float(ge @ (state.W2.T @ w3te))
    w2_product = float((state.W2 @ ge) @ w3te)
    vacuous = not np.any(state.W3) or not np.any(e)
    return Theorem1Result(w1_product=w1_product, w2_product=w2_product, vacuous=vacuous)


def theorem2_check(state: LemmaOneState) -> Theorem2Result:
    """Residual between s G e, s = 1 / (s'_{3,2} ||Gy||^2), and (W3 W2)^+ e"""
    A = state.A
    d2, d1 = A.shape
    if d2 < d1:
        raise PreconditionError(f"orthonormal columns need d2 >= d1, got d2={d2}, d1={d1}")
    if np.max(np.abs(A.T @ A - np.eye(d1))) > ORTHONORMAL_TOL:
        raise PreconditionError("A does not have orthonormal columns")
    gy = state.Gy
    gy2 = float(gy @ gy)
    if gy2 == 0.0:
        raise DegenerateInputError("G y is zero")
    if state.s32_prime == 0.0:
        raise PreconditionError("W3 W2 is still zero at this step")

    product = state.W3 @ state.W2
    product_pinv = np.linalg.pinv(product, rcond=PINV_RCOND)
    s = 1.0 / (state.s32_prime * gy2)
    gauss_newton = product_pinv @ state.e
    residual = float(np.linalg.norm(s * (state.G @ state.e) - gauss_newton))
    scale = float(np.linalg.norm(gauss_newton))

    y = state.y
    normalized = np.linalg.norm(gy / gy2 - np.linalg.pinv(np.outer(y, gy), rcond=PINV_RCOND) @ y)
    return Theorem2Result(s=s, residual=residual, relative_residual=residual / scale if scale > 0 else 0.0,
                          normalized_residual=float(normalized),
                          penrose_residual=max(moore_penrose_residuals(product, product_pinv)))


def random_instance(rng: Rng, dims: Sequence[int], orthonormal: bool = True):
    """(A, G, x, y) with G ~ N(0, 1) and unit-norm x, y"""
    d0, d1, d2, dy = dims
    A = orthonormal_columns(rng, d2, d1) if orthonormal else rng.normal(size=(d2, d1))
    G = rng.normal(size=(d1, dy))
    x = rng.normal(size=d0)
    y = rng.normal(size=dy)
    return A, G, x / np.linalg.norm(x), y / np.linalg.norm(y)


def verify_theory(seeds: int = 100, steps: int = 100, dims: Sequence[int] = (4, 3, 5, 2),
                  etas: Tuple[float, float, float] = (0.01, 0.01, 0.01)) -> Dict[str, float]:
    """Monte Carlo summary over random instances with orthonormal A"""
    max_dev = max_angle = max_residual = 0.0
    positive = checked = 0
    for seed in range(seeds):
        A, G, x, y = random_instance(make_rng(seed), dims)
        trajectory = lemma1_simulate(dims, A, G, x, y, steps, etas)
        for state in trajectory.states:
            max_dev = max(max_dev, closed_form_deviation(state))
            max_angle = max(max_angle, error_collinearity_deg(state))
            result = theorem1_check(state)
            if not result.vacuous:
                checked += 1
                positive += int(result.holds)
        if trajectory.final.s32_prime > 0:
            max_residual = max(max_residual, theorem2_check(trajectory.final).residual)
    summary = {
        "lemma_max_deviation": max_dev,
        "error_collinearity_max_deg": max_angle,
        "theorem1_positive_rate": positive / checked if checked else 1.0,
        "theorem2_max_residual": max_residual,
        "seeds": seeds,
        "steps": steps,
    }
    logger.info(f"Theory verification over {seeds} seeds x {steps} steps: {summary}")
    return summary


class TheoryService:
    """Runs the Monte Carlo check and judges it against fixed tolerances"""

    lemma_tol = 1e-8
    theorem2_tol = 1e-6

    def verify(self, seeds: int = 100, steps: int = 100, dims: Sequence[int] = (4, 3, 5, 2)) -> Dict[str, float]:
        return verify_theory(seeds, steps, tuple(dims))

    def passes(self, summary: Dict[str, float]) -> bool:
        return (summary["lemma_max_deviation"] <= self.lemma_tol
                and summary["theorem1_positive_rate"] == 1.0
                and summary["theorem2_max_residual"] <= self.theorem2_tol)


# Global theory service instance
theory_service = TheoryService()

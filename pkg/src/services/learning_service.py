"""
Learning Rules Service for the FTP lab
Hand-derived gradients for BP, FTP and PEPITA plus the momentum optimizer.

Every ``*_gradients`` function returns the gradient of the layer's loss with
respect to its weights, averaged over the batch. The optimizer subtracts it.
"""
import logging
from typing import Dict, Mapping, Optional, Union

import numpy as np

from ..models.network_model import ActivationTrace, FeedbackMatrix, LayerKind, Network, RecurrentTrace
from ..models.schemas import LossKind
from ..models.training_model import GradientSet, TargetSet, TrainConfig
from ..utils.errors import ConfigurationError, DimensionError, InternalConsistencyError
from ..utils.tensor_ops import Rng, Tensor, activate, activation_derivative, as_tensor, matmul
from .network_service import conv_block_forward, conv_block_weight_grad, dropout_mask, forward_rnn

logger = logging.getLogger(__name__)

FeedbackLike = Union[FeedbackMatrix, Tensor]


def _matrix(G: FeedbackLike) -> Tensor:
    return G.G if isinstance(G, FeedbackMatrix) else as_tensor(G)


def _labels(y: Tensor, like: Tensor) -> Tensor:
    y = as_tensor(y)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape != like.shape:
        raise DimensionError(f"target shape {y.shape} does not match output shape {like.shape}")
    return y


#############################################
# Global loss and the shared output layer

def global_loss(output: Tensor, y: Tensor, loss_kind: LossKind = LossKind.CROSS_ENTROPY) -> float:
    """Batch mean of cross-entropy or 1/2 squared error"""
    y = _labels(y, output)
    if LossKind(loss_kind) == LossKind.CROSS_ENTROPY:
        return float(-np.mean(np.sum(y * np.log(np.maximum(output, 1e-300)), axis=1)))
    return float(0.5 * np.mean(np.sum((output - y) ** 2, axis=1)))


def output_delta(activation: str, pre: Tensor, output: Tensor, y: Tensor, loss_kind: LossKind) -> Tensor:
    """Per-example derivative of the global loss w.r.t. the output pre-activation"""
    if LossKind(loss_kind) == LossKind.CROSS_ENTROPY:
        if activation != "softmax":
            raise ConfigurationError("cross-entropy loss needs a softmax output layer")
        # softmax and cross-entropy combined
        return output - y
    if activation == "softmax":
        raise ConfigurationError("softmax output layer needs cross-entropy loss")
    return (output - y) * activation_derivative(pre, activation)


def _output_layer_gradient(net: Network, trace: ActivationTrace, y: Tensor, loss_kind: LossKind):
    """Gradient of the global loss for W_L; BP and FTP both call this"""
    L = net.depth
    y = _labels(y, trace.output)
    delta = output_delta(net.output_activation, trace.pre[L], trace.output, y, loss_kind)
    grad = matmul(delta.T, trace.h[L - 1]) / trace.batch_size
    return grad, delta, global_loss(trace.output, y, loss_kind)


def _check_trace(net: Network, trace: ActivationTrace) -> None:
    if len(trace.h) != net.depth + 1:
        raise InternalConsistencyError(f"trace has {len(trace.h) - 1} layers, network has {net.depth}")


def _dense_local_grad(net: Network, trace: ActivationTrace, i: int, d_out: Tensor) -> Tensor:
    """Weight gradient of stage i given dLoss/dh_i (B x d_i)"""
    st = net.stages[i - 1]
    if st.kind == LayerKind.CONV2D:
        return conv_block_weight_grad(st, trace.conv[i], d_out)
    if trace.masks[i] is not None:
        d_out = d_out * trace.masks[i]
    delta = d_out * activation_derivative(trace.pre[i], st.activation)
    return matmul(delta.T, trace.h[i - 1]) / trace.batch_size


#############################################
# Backpropagation

def bp_gradients(net: Network, trace: ActivationTrace, y: Tensor,
                 loss_kind: LossKind = LossKind.CROSS_ENTROPY,
                 backward: Optional[Mapping[str, Tensor]] = None) -> GradientSet:
    """
    Chain-rule gradients of the global loss.

    ``backward`` optionally replaces W_i^T (fan_in x fan_out) in the error
    transport, which is how asymmetric or noisy backward arrays are modelled.
    """
    _check_trace(net, trace)
    grad_L, delta, loss = _output_layer_gradient(net, trace, y, loss_kind)
    L = net.depth
    grads: Dict[str, Tensor] = {net.stages[L - 1].key: grad_L}

    for i in range(L - 1, 0, -1):
        nxt = net.stages[i]
        back = backward[nxt.key] if backward is not None and nxt.key in backward else net.weights[nxt.key].T
        d_h = matmul(delta, back.T)
        st = net.stages[i - 1]
        if st.kind == LayerKind.CONV2D:
            grads[st.key] = conv_block_weight_grad(st, trace.conv[i], d_h)
            break
        if trace.masks[i] is not None:
            d_h = d_h * trace.masks[i]
        delta = d_h * activation_derivative(trace.pre[i], st.activation)
        grads[st.key] = matmul(delta.T, trace.h[i - 1]) / trace.batch_size

    return GradientSet(grads=dict(sorted(grads.items())), losses={"global": loss})


#############################################
# Forward Target Propagation

def estimate_first_target(trace: ActivationTrace, y: Tensor, G: FeedbackLike, gamma: float = 1.0,
                          activation: str = "tanh") -> Tensor:
    """tau_1 = gamma (sigma(G y) - sigma(G h_L)) + h_1"""
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    Gm = _matrix(G)
    y = _labels(y, trace.output)
    if Gm.shape != (trace.h[1].shape[1], y.shape[1]):
        raise DimensionError(f"G has shape {Gm.shape}, expected {(trace.h[1].shape[1], y.shape[1])}")
    correction = activate(matmul(y, Gm.T), activation) - activate(matmul(trace.output, Gm.T), activation)
    return gamma * correction + trace.h[1]


def propagate_targets(net: Network, trace: ActivationTrace, tau1: Tensor, y: Tensor,
                      reuse_masks: bool = True, rng: Optional[Rng] = None) -> TargetSet:
    """Second forward pass: tau_i = sigma(W_i tau_{i-1}) for 1 < i < L, tau_L = y"""
    if net.depth < 2:
        raise ConfigurationError("FTP needs at least one hidden layer")
    tau1 = as_tensor(tau1)
    if tau1.shape != trace.h[1].shape:
        raise DimensionError(f"tau_1 shape {tau1.shape} does not match h_1 shape {trace.h[1].shape}")
    taus = [tau1]
    for i in range(2, net.depth):
        st = net.stages[i - 1]
        tau = activate(matmul(taus[-1], net.weights[st.key].T), st.activation)
        mask = trace.masks[i]
        if mask is not None and not reuse_masks:
            if rng is None:
                raise ConfigurationError("fresh dropout masks need an rng")
            mask = dropout_mask(rng, tau.shape, st.dropout)
        if mask is not None:
            tau = tau * mask
        taus.append(tau)
    taus.append(_labels(y, trace.output))
    return TargetSet(tau=taus)


def ftp_gradients(net: Network, trace: ActivationTrace, targets: TargetSet,
                  loss_kind: LossKind = LossKind.CROSS_ENTROPY) -> GradientSet:
    """Local losses 1/2 ||h_i - tau_i||^2 for hidden layers, global loss at the output"""
    _check_trace(net, trace)
    L = net.depth
    if len(targets) != L:
        raise InternalConsistencyError(f"{len(targets)} targets for {L} layers")

    grads: Dict[str, Tensor] = {}
    losses: Dict[str, float] = {}
    for i in range(1, L):
        tau = targets[i]
        if tau.shape != trace.h[i].shape:
            raise InternalConsistencyError(f"target {i} has shape {tau.shape}, activation has {trace.h[i].shape}")
        # tau is a constant here
        diff = trace.h[i] - tau
        key = net.stages[i - 1].key
        losses[key] = float(0.5 * np.mean(np.sum(diff * diff, axis=1)))
        grads[key] = _dense_local_grad(net, trace, i, diff)

    grad_L, _, loss = _output_layer_gradient(net, trace, targets[L], loss_kind)
    key_L = net.stages[L - 1].key
    grads[key_L] = grad_L
    losses[key_L] = loss
    return GradientSet(grads=grads, losses=losses)


def ftp_step_gradients(net: Network, trace: ActivationTrace, y: Tensor, cfg: TrainConfig,
                       rng: Optional[Rng] = None, G: Optional[FeedbackLike] = None) -> GradientSet:
    """One FTP step after the first forward pass: estimate, propagate, differentiate"""
    feedback = G if G is not None else net.feedback
    if feedback is None:
        raise ConfigurationError("FTP needs a feedback matrix G")
    tau1 = estimate_first_target(trace, y, feedback, cfg.gamma, net.hidden_activation)
    targets = propagate_targets(net, trace, tau1, y, cfg.reuse_dropout_masks, rng)
    return ftp_gradients(net, trace, targets, cfg.loss)


#############################################
# PEPITA

def make_pepita_feedback(rng: Rng, net: Network, scale: float = 0.05) -> FeedbackMatrix:
    """F (input_dim x output_dim) with entries N(0, scale^2 / output_dim)"""
    return FeedbackMatrix(rng.normal(0.0, scale / np.sqrt(net.output_dim), size=(net.input_dim, net.output_dim)))


def pepita_gradients(net: Network, trace: ActivationTrace, y: Tensor, F: FeedbackLike,
                     loss_kind: LossKind = LossKind.CROSS_ENTROPY) -> GradientSet:
    """
    Second pass on the error-modulated input x + F e with e = h_L - y.
    Hidden layers move by (h_i - h_i_mod) h_{i-1,mod}^T; the output layer uses the BP gradient.
    """
    _check_trace(net, trace)
    Fm = _matrix(F)
    y = _labels(y, trace.output)
    if Fm.shape != (net.input_dim, net.output_dim):
        raise DimensionError(f"F has shape {Fm.shape}, expected {(net.input_dim, net.output_dim)}")
    B = trace.batch_size
    e = trace.output - y
    h_mod = trace.h[0] + matmul(e, Fm.T)

    grads: Dict[str, Tensor] = {}
    for i in range(1, net.depth):
        st = net.stages[i - 1]
        W = net.weights[st.key]
        if st.kind == LayerKind.CONV2D:
            images = h_mod.reshape(trace.input_image.shape)
            out_mod, cache_mod = conv_block_forward(st, W, images)
            diff = trace.conv[i].activated - cache_mod.activated
            rows = diff.transpose(0, 2, 3, 1).reshape(-1, st.out_channels)
            grads[st.key] = matmul(rows.T, cache_mod.patches) / B
            h_mod = out_mod
            continue
        out_mod = activate(matmul(h_mod, W.T), st.activation)
        if trace.masks[i] is not None:
            out_mod = out_mod * trace.masks[i]
        grads[st.key] = matmul((trace.h[i] - out_mod).T, h_mod) / B
        h_mod = out_mod

    grad_L, _, loss = _output_layer_gradient(net, trace, y, loss_kind)
    grads[net.stages[-1].key] = grad_L
    return GradientSet(grads=grads, losses={"global": loss})


#############################################
# Recurrent networks

def _rnn_head_gradient(net: Network, rtrace: RecurrentTrace, y: Tensor, loss_kind: LossKind):
    y = _labels(y, rtrace.y_hat)
    head = net.stages[-1]
    delta = output_delta(head.activation, rtrace.y_hat, rtrace.y_hat, y, loss_kind)
    B = rtrace.x.shape[0]
    return matmul(delta.T, rtrace.final_state) / B, delta, global_loss(rtrace.y_hat, y, loss_kind)


def ftp_rnn_gradients(net: Network, rtrace: RecurrentTrace, y: Tensor, G: Optional[FeedbackLike] = None,
                      gamma: float = 1.0, loss_kind: LossKind = LossKind.MSE) -> GradientSet:
    """
    Final-step target tau_h = gamma (tanh(G y) - tanh(G y_hat)) + h(T).
    W_in and W_rec follow 1/2 ||h(T) - tau_h||^2 with h(T-1) held fixed.
    """
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    feedback = G if G is not None else net.feedback
    if feedback is None:
        raise ConfigurationError("FTP needs a feedback matrix G")
    Gm = _matrix(feedback)
    y = _labels(y, rtrace.y_hat)
    B = rtrace.x.shape[0]
    h_T = rtrace.final_state
    tau = gamma * (np.tanh(matmul(y, Gm.T)) - np.tanh(matmul(rtrace.y_hat, Gm.T))) + h_T
    diff = h_T - tau
    delta = diff * activation_derivative(rtrace.pre[-1], "tanh")

    grad_out, _, loss = _rnn_head_gradient(net, rtrace, y, loss_kind)
    grads = {
        "W_in": matmul(delta.T, rtrace.x[:, -1, :]) / B,
        "W_rec": matmul(delta.T, rtrace.h[-2]) / B,
        "W_out": grad_out,
    }
    local = float(0.5 * np.mean(np.sum(diff * diff, axis=1)))
    return GradientSet(grads=grads, losses={"W_in": local, "W_rec": local, "W_out": loss})


def pepita_rnn_gradients(net: Network, rtrace: RecurrentTrace, y: Tensor, F: FeedbackLike,
                         loss_kind: LossKind = LossKind.MSE) -> GradientSet:
    """
    Second pass over the window with every input step shifted by F e, e = y_hat - y.
    W_in and W_rec move by the summed state differences (h(t) - h_mod(t)) against
    the modulated inputs and h_mod(t-1); the head uses the BP gradient.
    """
    Fm = _matrix(F)
    y = _labels(y, rtrace.y_hat)
    if Fm.shape != (net.input_dim, net.output_dim):
        raise DimensionError(f"F has shape {Fm.shape}, expected {(net.input_dim, net.output_dim)}")
    B = rtrace.x.shape[0]
    e = rtrace.y_hat - y
    x_mod = rtrace.x + matmul(e, Fm.T)[:, None, :]
    mod = forward_rnn(net, x_mod)

    g_in = np.zeros_like(net.weights["W_in"])
    g_rec = np.zeros_like(net.weights["W_rec"])
    for t in range(1, rtrace.steps + 1):
        diff = rtrace.h[t] - mod.h[t]
        g_in += matmul(diff.T, x_mod[:, t - 1, :])
        g_rec += matmul(diff.T, mod.h[t - 1])

    grad_out, _, loss = _rnn_head_gradient(net, rtrace, y, loss_kind)
    return GradientSet(grads={"W_in": g_in / B, "W_rec": g_rec / B, "W_out": grad_out},
                       losses={"global": loss})


def bptt_gradients(net: Network, rtrace: RecurrentTrace, y: Tensor,
                   loss_kind: LossKind = LossKind.MSE) -> GradientSet:
    """Backpropagation through time over the whole window"""
    grad_out, delta, loss = _rnn_head_gradient(net, rtrace, y, loss_kind)
    B = rtrace.x.shape[0]
    W_rec = net.weights["W_rec"]
    g_in = np.zeros_like(net.weights["W_in"])
    g_rec = np.zeros_like(W_rec)
    d_h = matmul(delta, net.weights["W_out"])
    for t in range(rtrace.steps, 0, -1):
        d_pre = d_h * activation_derivative(rtrace.pre[t], "tanh")
        g_in += matmul(d_pre.T, rtrace.x[:, t - 1, :])
        g_rec += matmul(d_pre.T, rtrace.h[t - 1])
        d_h = matmul(d_pre, W_rec)
    return GradientSet(grads={"W_in": g_in / B, "W_rec": g_rec / B, "W_out": grad_out},
                       losses={"global": loss})


#############################################
# Optimizer

def learning_rate_at(cfg: TrainConfig, epoch: int) -> float:
    """Step decay: multiply by decay_factor at each decay epoch reached (0-based epochs)"""
    passed = sum(1 for d in cfg.decay_epochs if epoch >= d)
    return cfg.lr * cfg.decay_factor ** passed


def init_velocity(net: Network) -> Dict[str, Tensor]:
    return {k: np.zeros_like(w) for k, w in net.weights.items()}


def sgd_step(net: Network, grads: GradientSet, velocity: Dict[str, Tensor], cfg: TrainConfig,
             epoch: int = 0) -> Network:
    """v = momentum v + dW; W = W - lr v (lr from the decay schedule)"""
    lr = learning_rate_at(cfg, epoch)
    for key, g in grads.grads.items():
        if key not in net.weights:
            raise InternalConsistencyError(f"gradient for unknown parameter {key}")
        v = velocity.get(key)
        if v is None or v.shape != g.shape:
            raise InternalConsistencyError(f"velocity for {key} does not match gradient shape {g.shape}")
        velocity[key] = cfg.momentum * v + g
        net.weights[key] = net.weights[key] - lr * velocity[key]
    return net

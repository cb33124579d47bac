"""
Network Service for the FTP lab
Builds architectures, initialises parameters and runs the cached first forward pass
"""
import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..models.network_model import (
    ActivationTrace, ConvCache, FeedbackMatrix, LayerKind, LayerSpec, Network, RecurrentTrace, Stage,
    conv2d, dense, flatten, maxpool2x2, recurrent,
)
from ..models.schemas import Mode
from ..utils.config import get_arch_config
from ..utils.errors import ConfigurationError, DataFormatError, DimensionError
from ..utils.tensor_ops import Rng, Tensor, activate, activation_derivative, as_tensor, he_normal, matmul

logger = logging.getLogger(__name__)


#############################################
# Architecture presets

def fc_architecture(input_dim: int = 784, hidden: Sequence[int] = (1024, 128), classes: int = 10,
                    dropout: float = 0.1, activation: str = "tanh",
                    output_activation: str = "softmax") -> List[LayerSpec]:
    dims = [input_dim, *hidden]
    arch = [dense(dims[i], dims[i + 1], activation, dropout) for i in range(len(hidden))]
    arch.append(dense(dims[-1], classes, output_activation))
    return arch


def cnn_architecture(input_shape: Tuple[int, int, int] = (1, 28, 28), channels: int = 32, kernel: int = 5,
                     classes: int = 10) -> List[LayerSpec]:
    c, h, w = input_shape
    pooled = channels * ((h - kernel + 1) // 2) * ((w - kernel + 1) // 2)
    return [
        conv2d(input_shape, channels, kernel),
        maxpool2x2(),
        flatten(),
        dense(pooled, classes, "softmax"),
    ]


def rnn_architecture(features: int, hidden: int = 512, outputs: Optional[int] = None) -> List[LayerSpec]:
    return [recurrent(features, hidden), dense(hidden, outputs or features, "linear")]


def architecture_for(family: str, dataset: str, features: Optional[int] = None,
                     hidden: Optional[int] = None, dropout: Optional[float] = None) -> List[LayerSpec]:
    """Preset architecture for a family/dataset pair"""
    preset = get_arch_config(family, dataset)
    if family == "fc":
        return fc_architecture(preset["input_dim"], preset["hidden"], preset["classes"],
                               preset["dropout"] if dropout is None else dropout)
    if family == "cnn":
        return cnn_architecture(preset["input_shape"], preset["channels"], preset["kernel"], preset["classes"])
    if family == "rnn":
        if features is None:
            raise ConfigurationError("RNN architecture needs the number of series features")
        return rnn_architecture(features, hidden or preset["hidden"])
    raise ConfigurationError(f"Unknown architecture family: {family}")


#############################################
# Validation

def build_stages(arch: Sequence[LayerSpec]) -> Tuple[List[Stage], str]:
    """Fold the layer list into parametric stages, checking that dimensions compose"""
    if not arch:
        raise ConfigurationError("architecture is empty")

    stages: List[Stage] = []
    shape: Union[None, int, Tuple[int, int, int]] = None
    kinds = {spec.kind for spec in arch}
    family = "rnn" if LayerKind.RECURRENT in kinds else "cnn" if LayerKind.CONV2D in kinds else "fc"

    for pos, spec in enumerate(arch):
        if spec.kind == LayerKind.DENSE:
            if spec.fan_in is None or spec.fan_out is None:
                raise ConfigurationError(f"layer {pos}: dense layer needs fan_in and fan_out")
            if isinstance(shape, tuple):
                raise ConfigurationError(f"layer {pos}: dense layer after an unflattened feature map {shape}")
            if shape is not None and shape != spec.fan_in:
                raise ConfigurationError(f"layer {pos}: fan_in {spec.fan_in} does not match previous output {shape}")
            stages.append(Stage(index=len(stages) + 1, kind=LayerKind.DENSE, activation=spec.activation,
                                in_dim=spec.fan_in, out_dim=spec.fan_out, dropout=spec.dropout))
            shape = spec.fan_out

        elif spec.kind == LayerKind.CONV2D:
            if stages:
                raise ConfigurationError(f"layer {pos}: conv2d is supported only as the first layer")
            if spec.in_shape is None or spec.out_channels is None:
                raise ConfigurationError(f"layer {pos}: conv2d needs in_shape and out_channels")
            c, h, w = spec.in_shape
            if spec.kernel > h or spec.kernel > w:
                raise ConfigurationError(f"layer {pos}: kernel {spec.kernel} larger than input {spec.in_shape}")
            oh, ow = h - spec.kernel + 1, w - spec.kernel + 1
            stages.append(Stage(index=1, kind=LayerKind.CONV2D, activation=spec.activation,
                                in_dim=c * h * w, out_dim=spec.out_channels * oh * ow,
                                in_shape=spec.in_shape, out_channels=spec.out_channels, kernel=spec.kernel))
            shape = (spec.out_channels, oh, ow)

        elif spec.kind == LayerKind.MAXPOOL2X2:
            if not isinstance(shape, tuple) or stages[-1].kind != LayerKind.CONV2D or stages[-1].pooled:
                raise ConfigurationError(f"layer {pos}: maxpool2x2 must follow a conv2d layer")
            c, h, w = shape
            if h < 2 or w < 2:
                raise ConfigurationError(f"layer {pos}: feature map {shape} too small to pool")
            shape = (c, h // 2, w // 2)
            stages[-1] = replace(stages[-1], pooled=True, out_dim=c * (h // 2) * (w // 2))

        elif spec.kind == LayerKind.FLATTEN:
            if not isinstance(shape, tuple):
                raise ConfigurationError(f"layer {pos}: flatten needs a feature map input")
            shape = int(np.prod(shape))

        elif spec.kind == LayerKind.RECURRENT:
            if pos != 0:
                raise ConfigurationError(f"layer {pos}: recurrent layer must come first")
            if spec.fan_in is None or spec.fan_out is None:
                raise ConfigurationError(f"layer {pos}: recurrent layer needs fan_in and fan_out")
            stages.append(Stage(index=1, kind=LayerKind.RECURRENT, activation="tanh",
                                in_dim=spec.fan_in, out_dim=spec.fan_out))
            shape = spec.fan_out

    if not isinstance(shape, int):
        raise ConfigurationError(f"architecture output must be flat, got {shape}")
    if stages[-1].kind != LayerKind.DENSE:
        raise ConfigurationError("architecture must end with a dense output layer")
    if family == "rnn" and (len(stages) != 2 or stages[1].kind != LayerKind.DENSE):
        raise ConfigurationError("recurrent architecture needs exactly one dense output head")
    return stages, family


#############################################
# Construction

def _weight_shapes(stages: Sequence[Stage], family: str) -> Dict[str, Tuple[Tuple[int, int], int]]:
    """Parameter name -> (shape, fan_in)"""
    if family == "rnn":
        rec, head = stages
        return {
            "W_in": ((rec.out_dim, rec.in_dim), rec.in_dim),
            "W_rec": ((rec.out_dim, rec.out_dim), rec.out_dim),
            "W_out": ((head.out_dim, head.in_dim), head.in_dim),
        }
    shapes = {}
    for st in stages:
        if st.kind == LayerKind.CONV2D:
            shapes[st.key] = ((st.out_channels, st.patch_dim), st.patch_dim)
        else:
            shapes[st.key] = ((st.out_dim, st.in_dim), st.in_dim)
    return shapes


def feedback_shape(stages: Sequence[Stage]) -> Tuple[int, int]:
    """G maps the output space into the first hidden representation"""
    return stages[0].out_dim, stages[-1].out_dim


def init_network(arch: Sequence[LayerSpec], rng: Rng, feedback: bool = True) -> Network:
    """He-initialise every weight matrix and, when requested, the feedback matrix G"""
    stages, family = build_stages(arch)
    weights = {name: he_normal(rng, shape, fan_in) for name, (shape, fan_in) in _weight_shapes(stages, family).items()}
    G = None
    if feedback:
        d1, dy = feedback_shape(stages)
        G = FeedbackMatrix(he_normal(rng, (d1, dy), dy))
    net = Network(arch=list(arch), weights=weights, stages=stages, family=family, feedback=G)
    logger.debug(f"Initialised {family} network with parameters {[w.shape for w in weights.values()]}")
    return net


def network_from_weights(arch: Sequence[LayerSpec], weights: Dict[str, Tensor],
                         G: Optional[Tensor] = None) -> Network:
    """Build a network around given parameters (hand-made nets, loaded checkpoints)"""
    stages, family = build_stages(arch)
    expected = _weight_shapes(stages, family)
    if set(weights) != set(expected):
        raise ConfigurationError(f"expected parameters {sorted(expected)}, got {sorted(weights)}")
    for name, (shape, _) in expected.items():
        if tuple(np.shape(weights[name])) != shape:
            raise ConfigurationError(f"{name} has shape {np.shape(weights[name])}, expected {shape}")
    feedback = None
    if G is not None:
        G = as_tensor(G)
        if G.shape != feedback_shape(stages):
            raise ConfigurationError(f"G has shape {G.shape}, expected {feedback_shape(stages)}")
        feedback = FeedbackMatrix(G)
    return Network(arch=list(arch), weights={k: as_tensor(v).copy() for k, v in weights.items()},
                   stages=stages, family=family, feedback=feedback)


def save_network(net: Network, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = dict(net.weights)
    if net.feedback is not None:
        arrays["__G__"] = net.feedback.G
    arch_json = json.dumps([spec.model_dump(mode="json") for spec in net.arch])
    np.savez(path, __arch__=np.array(arch_json), **arrays)
    return path


def load_network(path: Union[str, Path]) -> Network:
    try:
        with np.load(path, allow_pickle=False) as data:
            arch = [LayerSpec(**spec) for spec in json.loads(str(data["__arch__"]))]
            G = data["__G__"] if "__G__" in data.files else None
            weights = {k: data[k] for k in data.files if not k.startswith("__")}
    except OSError as e:
        raise ConfigurationError(f"cannot read checkpoint {path}: {e}")
    except (KeyError, ValueError) as e:
        raise DataFormatError(f"{path} is not a network checkpoint: {e}")
    return network_from_weights(arch, weights, G)


#############################################
# Convolution by patch lowering

def lower_patches(images: Tensor, kernel: int) -> Tensor:
    """(B, C, H, W) -> (B * OH * OW, C * k * k), rows ordered by (b, oh, ow)"""
    b, c, h, w = images.shape
    windows = sliding_window_view(images, (kernel, kernel), axis=(2, 3))   # (B, C, OH, OW, k, k)
    oh, ow = h - kernel + 1, w - kernel + 1
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * kernel * kernel)


def _max_pool(activated: Tensor) -> Tuple[Tensor, Tensor]:
    b, c, h, w = activated.shape
    h2, w2 = h // 2, w // 2
    blocks = activated[:, :, :h2 * 2, :w2 * 2].reshape(b, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(b, c, h2, w2, 4)
    winner = np.argmax(flat, axis=-1)
    pooled = np.take_along_axis(flat, winner[..., None], axis=-1)[..., 0]
    onehot = np.eye(4, dtype=bool)[winner].reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    mask = np.zeros((b, c, h, w), dtype=bool)
    mask[:, :, :h2 * 2, :w2 * 2] = onehot.reshape(b, c, h2 * 2, w2 * 2)
    return pooled, mask


def conv_block_forward(stage: Stage, W: Tensor, images: Tensor) -> Tuple[Tensor, ConvCache]:
    """Conv (valid, stride 1) + activation + optional 2x2 max pool, flattened per example"""
    b = images.shape[0]
    oh, ow = stage.conv_hw
    patches = lower_patches(images, stage.kernel)
    pre = matmul(patches, W.T).reshape(b, oh, ow, stage.out_channels).transpose(0, 3, 1, 2)
    activated = activate(pre, stage.activation)
    pool_mask = None
    out = activated
    if stage.pooled:
        out, pool_mask = _max_pool(activated)
    cache = ConvCache(patches=patches, pre=pre, activated=activated, pool_mask=pool_mask)
    return out.reshape(b, -1), cache


def conv_block_weight_grad(stage: Stage, cache: ConvCache, delta: Tensor) -> Tensor:
    """
    Gradient w.r.t. the conv kernel of a loss whose derivative w.r.t. the
    flattened block output is ``delta`` (B x out_dim), averaged over the batch.
    Only the block's own pool/flatten is traversed.
    """
    b = delta.shape[0]
    oh, ow = stage.conv_hw
    oc = stage.out_channels
    if stage.pooled:
        h2, w2 = oh // 2, ow // 2
        d = delta.reshape(b, oc, h2, w2)
        spread = np.zeros((b, oc, oh, ow))
        spread[:, :, :h2 * 2, :w2 * 2] = np.repeat(np.repeat(d, 2, axis=2), 2, axis=3)
        d_act = spread * cache.pool_mask
    else:
        d_act = delta.reshape(b, oc, oh, ow)
    d_pre = d_act * activation_derivative(cache.pre, stage.activation)
    rows = d_pre.transpose(0, 2, 3, 1).reshape(b * oh * ow, oc)
    return matmul(rows.T, cache.patches) / b


#############################################
# Forward passes

def _as_input(net: Network, x: Tensor) -> Tuple[Tensor, Optional[Tensor]]:
    """Return (flat batch, image batch or None) after shape checks"""
    x = as_tensor(x)
    first = net.stages[0]
    if first.kind == LayerKind.CONV2D:
        if x.ndim == 3:
            x = x[None]
        if x.ndim == 2:
            if x.shape[1] != first.in_dim:
                raise DimensionError(f"input has {x.shape[1]} features, network expects {first.in_dim}")
            images = x.reshape((x.shape[0],) + tuple(first.in_shape))
        elif x.ndim == 4 and x.shape[1:] == tuple(first.in_shape):
            images = x
        else:
            raise DimensionError(f"input shape {x.shape} does not match conv input {first.in_shape}")
        return images.reshape(images.shape[0], -1), images
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != first.in_dim:
        raise DimensionError(f"input shape {x.shape} does not match network input dim {first.in_dim}")
    return x, None


def dropout_mask(rng: Rng, shape: Tuple[int, ...], rate: float) -> Tensor:
    """Inverted-dropout mask: kept units are scaled by 1 / (1 - rate)"""
    return (rng.random(shape) >= rate) / (1.0 - rate)


def forward(net: Network, x: Tensor, mode: Mode = Mode.EVAL, rng: Optional[Rng] = None) -> ActivationTrace:
    """First forward pass with every activation, pre-activation and dropout mask cached"""
    if net.family == "rnn":
        raise ConfigurationError("use forward_rnn for recurrent networks")
    flat, images = _as_input(net, x)
    train = Mode(mode) == Mode.TRAIN
    trace = ActivationTrace(h=[flat], pre=[None], masks=[None], input_image=images)

    for st in net.stages:
        W = net.weights[st.key]
        if st.kind == LayerKind.CONV2D:
            out, cache = conv_block_forward(st, W, images)
            trace.conv[st.index] = cache
            trace.h.append(out)
            trace.pre.append(None)
            trace.masks.append(None)
            continue
        pre = matmul(trace.h[-1], W.T)
        out = activate(pre, st.activation)
        mask = None
        if train and st.dropout > 0.0 and st.index < net.depth:
            if rng is None:
                raise ConfigurationError("training-mode forward with dropout needs an rng")
            mask = dropout_mask(rng, out.shape, st.dropout)
            out = out * mask
        trace.h.append(out)
        trace.pre.append(pre)
        trace.masks.append(mask)
    return trace


def predict(net: Network, x: Tensor) -> Tensor:
    if net.family == "rnn":
        return forward_rnn(net, x).y_hat
    return forward(net, x, Mode.EVAL).output


def forward_rnn(net: Network, window: Tensor) -> RecurrentTrace:
    """h(t) = tanh(W_in x_t + W_rec h(t-1)), h(0) = 0; linear head on h(T)"""
    if net.family != "rnn":
        raise ConfigurationError("forward_rnn needs a recurrent network")
    x = as_tensor(window)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1] == 0:
        raise DimensionError(f"window must be (T x features) with T >= 1, got shape {np.shape(window)}")
    rec = net.stages[0]
    if x.shape[2] != rec.in_dim:
        raise DimensionError(f"window has {x.shape[2]} features, network expects {rec.in_dim}")

    W_in, W_rec, W_out = net.weights["W_in"], net.weights["W_rec"], net.weights["W_out"]
    h = np.zeros((x.shape[0], rec.out_dim))
    states, pres = [h], [None]
    for t in range(x.shape[1]):
        pre = matmul(x[:, t, :], W_in.T) + matmul(h, W_rec.T)
        h = np.tanh(pre)
        states.append(h)
        pres.append(pre)
    y_hat = matmul(h, W_out.T)
    return RecurrentTrace(x=x, h=states, pre=pres, y_hat=y_hat)

"""
Architecture and activation-cache models
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..utils.tensor_ops import Tensor


class LayerKind(str, Enum):
    DENSE = "dense"
    CONV2D = "conv2d"
    MAXPOOL2X2 = "maxpool2x2"
    FLATTEN = "flatten"
    RECURRENT = "recurrent"


class LayerSpec(BaseModel):
    """One layer of an architecture description"""
    model_config = ConfigDict(frozen=True)

    kind: LayerKind
    fan_in: Optional[int] = Field(None, ge=1)
    fan_out: Optional[int] = Field(None, ge=1)
    in_shape: Optional[Tuple[int, int, int]] = Field(None, description="(channels, height, width)")
    out_channels: Optional[int] = Field(None, ge=1)
    kernel: int = Field(5, ge=1)
    activation: str = Field("tanh")
    dropout: float = Field(0.0, ge=0.0, lt=1.0)


def dense(fan_in: int, fan_out: int, activation: str = "tanh", dropout: float = 0.0) -> LayerSpec:
    return LayerSpec(kind=LayerKind.DENSE, fan_in=fan_in, fan_out=fan_out,
                     activation=activation, dropout=dropout)


def conv2d(in_shape: Tuple[int, int, int], out_channels: int, kernel: int = 5,
           activation: str = "tanh") -> LayerSpec:
    return LayerSpec(kind=LayerKind.CONV2D, in_shape=in_shape, out_channels=out_channels,
                     kernel=kernel, activation=activation)


def maxpool2x2() -> LayerSpec:
    return LayerSpec(kind=LayerKind.MAXPOOL2X2, activation="linear")


def flatten() -> LayerSpec:
    return LayerSpec(kind=LayerKind.FLATTEN, activation="linear")


def recurrent(fan_in: int, fan_out: int) -> LayerSpec:
    return LayerSpec(kind=LayerKind.RECURRENT, fan_in=fan_in, fan_out=fan_out, activation="tanh")


@dataclass(frozen=True)
class Stage:
    """A parametric layer plus the pool/flatten layers folded into it"""
    index: int                      # 1-based, W_index
    kind: LayerKind
    activation: str
    in_dim: int
    out_dim: int                    # flattened output dimension
    dropout: float = 0.0
    in_shape: Optional[Tuple[int, int, int]] = None
    out_channels: Optional[int] = None
    kernel: int = 5
    pooled: bool = False

    @property
    def key(self) -> str:
        return f"W{self.index}"

    @property
    def conv_hw(self) -> Tuple[int, int]:
        _, height, width = self.in_shape
        return height - self.kernel + 1, width - self.kernel + 1

    @property
    def patch_dim(self) -> int:
        return self.in_shape[0] * self.kernel * self.kernel


@dataclass(frozen=True)
class FeedbackMatrix:
    """Fixed random projection from output space to the first hidden space"""
    G: Tensor
    frozen: bool = True

    def __post_init__(self):
        g = np.array(self.G, dtype=np.float64, copy=True)
        g.flags.writeable = False
        object.__setattr__(self, "G", g)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.G.shape


@dataclass
class Network:
    arch: List[LayerSpec]
    weights: Dict[str, Tensor]
    stages: List[Stage]
    family: str
    feedback: Optional[FeedbackMatrix] = None

    @property
    def depth(self) -> int:
        """Number of parametric stages L"""
        return len(self.stages)

    @property
    def output_activation(self) -> str:
        return self.stages[-1].activation

    @property
    def output_dim(self) -> int:
        return self.stages[-1].out_dim

    @property
    def input_dim(self) -> int:
        return self.stages[0].in_dim

    @property
    def first_hidden_dim(self) -> int:
        return self.stages[0].out_dim

    @property
    def hidden_activation(self) -> str:
        return self.stages[0].activation

    def copy(self) -> "Network":
        return Network(
            arch=list(self.arch),
            weights={k: w.copy() for k, w in self.weights.items()},
            stages=list(self.stages),
            family=self.family,
            feedback=self.feedback,
        )


@dataclass
class ConvCache:
    patches: Tensor                 # (B * OH * OW, C * k * k)
    pre: Tensor                     # (B, OC, OH, OW)
    activated: Tensor               # (B, OC, OH, OW)
    pool_mask: Optional[Tensor]     # (B, OC, OH, OW) boolean argmax positions


@dataclass
class ActivationTrace:
    """Cached first forward pass: h_0..h_L, pre-activations and dropout masks"""
    h: List[Tensor]
    pre: List[Optional[Tensor]]
    masks: List[Optional[Tensor]]
    conv: Dict[int, ConvCache] = field(default_factory=dict)
    input_image: Optional[Tensor] = None

    @property
    def output(self) -> Tensor:
        return self.h[-1]

    @property
    def batch_size(self) -> int:
        return self.h[0].shape[0]


@dataclass
class RecurrentTrace:
    x: Tensor                       # (B, T, F)
    h: List[Tensor]                 # h[0] = zeros, h[t] for t = 1..T, each (B, H)
    pre: List[Optional[Tensor]]
    y_hat: Tensor                   # (B, F_out)

    @property
    def final_state(self) -> Tensor:
        return self.h[-1]

    @property
    def steps(self) -> int:
        return len(self.h) - 1

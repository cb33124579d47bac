"""
Targets, gradients and training configuration
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator

from ..utils.tensor_ops import Tensor
from .schemas import LossKind

logger = logging.getLogger(__name__)

GAMMA_RANGE = (0.1, 1.5)


@dataclass
class TargetSet:
    """Layer-wise targets tau_1..tau_L; tau[0] is tau_1 and tau[-1] is the label"""
    tau: List[Tensor]

    def __getitem__(self, i: int) -> Tensor:
        """1-based access matching layer numbering"""
        return self.tau[i - 1]

    def __len__(self) -> int:
        return len(self.tau)


@dataclass
class GradientSet:
    """Gradient of each parameter's (local or global) loss, keyed like Network.weights"""
    grads: Dict[str, Tensor]
    losses: Dict[str, float] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Tensor:
        return self.grads[key]

    def keys(self):
        return self.grads.keys()


class TrainConfig(BaseModel):
    lr: float = Field(0.01, ge=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(64, ge=1)
    epochs: int = Field(100, ge=1)
    decay_epochs: Tuple[int, ...] = (60, 90)
    decay_factor: float = Field(0.1, gt=0.0)
    gamma: float = 1.0
    seed: int = 0
    loss: LossKind = LossKind.CROSS_ENTROPY
    reuse_dropout_masks: bool = True
    pepita_feedback_scale: float = Field(0.05, gt=0.0)
    show_progress: bool = False

    @field_validator("gamma")
    @classmethod
    def _warn_gamma(cls, value: float) -> float:
        low, high = GAMMA_RANGE
        if not low <= value <= high:
            logger.warning(f"gamma={value} is outside the evaluated range [{low}, {high}]")
        return value


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    accuracy: Optional[float] = None
    rrse: Optional[float] = None
    corr: Optional[float] = None
    lr: float = 0.0
    seconds: float = 0.0

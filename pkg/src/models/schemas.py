"""
Pydantic models and enums for the FTP lab
"""
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..utils.config import DEFAULT_EPOCHS, settings


class Algorithm(str, Enum):
    BP = "bp"
    FTP = "ftp"
    PEPITA = "pepita"


class ArchFamily(str, Enum):
    FC = "fc"
    CNN = "cnn"
    RNN = "rnn"


class LossKind(str, Enum):
    CROSS_ENTROPY = "cross_entropy"
    MSE = "mse"


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


class WritePolicy(str, Enum):
    PER_UPDATE = "per_update"
    ONCE = "once"


class Normalization(str, Enum):
    MAXABS = "maxabs"
    ZSCORE = "zscore"
    NONE = "none"


#############################################
# Experiment configuration

class RunConfig(BaseModel):
    """Every knob of an experiment run; defaults follow the standard training protocol"""
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    algorithm: Algorithm = Field(Algorithm.FTP, description="Training rule")
    arch: ArchFamily = Field(ArchFamily.FC, description="Model family")
    dataset: str = Field("mnist", description="mnist | fmnist | cifar10 | cifar100 | csv path")
    data_root: Optional[str] = Field(None, description="Overrides settings.data_root")
    limit: Optional[int] = Field(None, ge=1, description="Use only the first N training examples")

    # TrainConfig fields
    lr: float = Field(0.01, ge=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(64, ge=1)
    epochs: Optional[int] = Field(None, ge=1, description="Defaults per family")
    decay_epochs: Optional[List[int]] = Field(None, description="Defaults per family")
    decay_factor: float = Field(0.1, gt=0.0)
    gamma: float = Field(1.0, gt=0.0)
    reuse_dropout_masks: bool = True
    pepita_feedback_scale: float = Field(0.05, gt=0.0)
    dropout: Optional[float] = Field(None, ge=0.0, lt=1.0)
    hidden: Optional[int] = Field(None, ge=1, description="RNN hidden units")
    window: int = Field(24, ge=1)
    csv_header: bool = False

    # Noise model fields
    bits: int = Field(32, ge=2)
    alpha: float = Field(0.0, ge=0.0)
    corrupted_fraction: float = Field(0.0, ge=0.0, le=1.0)
    quantize_forward: bool = True

    # Outputs
    out: Optional[str] = None
    seeds: List[int] = Field(default_factory=lambda: [settings.default_seed + i for i in range(3)])
    record_alignment: bool = False
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)

    @field_validator("seeds", "decay_epochs", mode="before")
    @classmethod
    def _split_lists(cls, value):
        if isinstance(value, str):
            return [int(v) for v in value.replace(",", " ").split()]
        return value

    @field_validator("seeds")
    @classmethod
    def _non_empty_seeds(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("seed list must not be empty")
        return value

    @model_validator(mode="after")
    def _family_epochs(self) -> "RunConfig":
        if self.epochs is None:
            self.epochs = DEFAULT_EPOCHS[self.arch.value]
        return self


#############################################
# API request/response models

class MacRequest(BaseModel):
    dataset: str = Field("mnist")
    rule: Algorithm = Field(Algorithm.FTP)
    arch: ArchFamily = Field(ArchFamily.FC)


class MacResponse(BaseModel):
    rule: str
    dataset: str
    phases: Dict[str, int]
    total: int
    millions: float
    percent_vs_bp: float


class TheoryRequest(BaseModel):
    seeds: int = Field(100, ge=1, le=5000)
    steps: int = Field(100, ge=1, le=2000)
    dims: List[int] = Field(default_factory=lambda: [4, 3, 5, 2])


class TheoryResponse(BaseModel):
    lemma_max_deviation: float
    error_collinearity_max_deg: float
    theorem1_positive_rate: float
    theorem2_max_residual: float
    seeds: int
    steps: int


class RunStatus(BaseModel):
    run_id: str
    status: str
    summary_path: Optional[str] = None
    error_message: Optional[str] = None

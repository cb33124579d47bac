"""
Records emitted by the alignment lab, the theory verifier, the cost model and
the experiment runner
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ..utils.tensor_ops import Tensor


@dataclass
class AlignmentRecord:
    epoch: int
    layer_angles: Dict[str, float]   # W1..WL, output layer is always 0
    structural_angle: float          # flatten(W2^T ... WL^T) vs flatten(G)
    gamma: float
    seed: int

    def rows(self) -> List[dict]:
        rows = [
            {"epoch": self.epoch, "layer": layer, "angle_deg": angle, "gamma": self.gamma, "seed": self.seed}
            for layer, angle in self.layer_angles.items()
        ]
        rows.append({"epoch": self.epoch, "layer": "structural", "angle_deg": self.structural_angle,
                     "gamma": self.gamma, "seed": self.seed})
        return rows


@dataclass
class LemmaOneState:
    """Scalars of the closed-form recursion and the simulated matrices at one step"""
    step: int
    s1: float
    s_w1: float
    s_w2: float
    s_w3: float
    s3: float
    A: Tensor
    G: Tensor
    x: Tensor
    y: Tensor
    W1: Tensor
    W2: Tensor
    W3: Tensor
    h1: Tensor
    e: Tensor
    etas: tuple = (0.01, 0.01, 0.01)

    @property
    def Gy(self) -> Tensor:
        return self.G @ self.y

    @property
    def s32_prime(self) -> float:
        """s'_{3,2} = s_W3 + s_W3 s_W2 ||G y||^2 (orthonormal A)"""
        gy = self.Gy
        return self.s_w3 + self.s_w3 * self.s_w2 * float(gy @ gy)


@dataclass
class LemmaOneTrajectory:
    states: List[LemmaOneState]

    @property
    def final(self) -> LemmaOneState:
        return self.states[-1]


@dataclass
class Theorem1Result:
    w1_product: float      # <G e, W2^T W3^T e>
    w2_product: float      # <W2 G e, W3^T e>
    vacuous: bool

    @property
    def holds(self) -> bool:
        return self.vacuous or (self.w1_product > 0.0 and self.w2_product > 0.0)


@dataclass
class Theorem2Result:
    s: float
    residual: float             # || s G e - (W3 W2)^+ e ||
    relative_residual: float
    normalized_residual: float  # || ||Gy||^-2 G y - (y (Gy)^T)^+ y ||
    penrose_residual: float     # worst Penrose condition on (W3 W2, (W3 W2)^+)


@dataclass
class MacReport:
    rule: str
    first_forward: int
    transport: int
    second_forward: int
    weight_update: int

    @property
    def phases(self) -> Dict[str, int]:
        return {
            "first_forward": self.first_forward,
            "transport": self.transport,
            "second_forward": self.second_forward,
            "weight_update": self.weight_update,
        }

    @property
    def total(self) -> int:
        return self.first_forward + self.transport + self.second_forward + self.weight_update

    @property
    def millions(self) -> float:
        return round(self.total / 1e6, 2)


@dataclass
class MetricsRow:
    run_id: str
    seed: int
    epoch: int
    split: str
    loss: float
    accuracy: Optional[float] = None
    rrse: Optional[float] = None
    corr: Optional[float] = None
    seconds: float = 0.0

    COLUMNS = ("run_id", "seed", "epoch", "split", "loss", "accuracy", "rrse", "corr", "seconds")

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in self.COLUMNS}


@dataclass
class HwSweepRow:
    rule: str
    bits: int
    alpha: float
    seed: int
    test_accuracy: float
    corrupted_fraction: float = 0.0

    COLUMNS = ("rule", "bits", "alpha", "seed", "test_accuracy", "corrupted_fraction")

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in self.COLUMNS}


@dataclass
class ExperimentResult:
    run_id: str
    metrics_path: str
    summary_path: str
    alignment_path: Optional[str] = None
    model_paths: List[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

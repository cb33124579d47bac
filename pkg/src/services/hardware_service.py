"""
Hardware Simulation Service for the FTP lab
Analog weight arrays with limited precision and per-write programming error
"""
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..models.data_model import DatasetSplit
from ..models.hardware_model import NoiseModel
from ..models.network_model import FeedbackMatrix, LayerSpec, Network
from ..models.report_model import HwSweepRow
from ..models.schemas import Algorithm, WritePolicy
from ..models.training_model import TrainConfig
from ..utils.errors import ConfigurationError
from ..utils.tensor_ops import Rng, Tensor, as_tensor, make_rng
from .network_service import init_network
from .trainer_service import Trainer, evaluate

logger = logging.getLogger(__name__)

ALPHA_GRID = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2)
ASYMMETRY_FRACTIONS = (0.0, 0.05, 0.1, 0.2, 0.5, 1.0)


def quantize(w: Tensor, bits: int, r: float) -> Tensor:
    """
    Uniform mid-rise quantizer: 2^bits evenly spaced levels from -r to r.
    Values outside the range saturate; bits >= 32 is full precision.
    """
    if r <= 0:
        raise ConfigurationError(f"quantization range must be positive, got {r}")
    w = as_tensor(w)
    if bits >= 32:
        return w.copy()
    top = 2 ** bits - 1
    step = 2.0 * r / top
    k = np.round((np.clip(w, -r, r) + r) / step)
    return np.clip(k, 0, top) * step - r


def weight_range(w: Tensor, scale: float = 1.25) -> float:
    """Per-matrix range: scale * max|w|, 1.0 for an all-zero matrix"""
    peak = float(np.max(np.abs(w))) if np.size(w) else 0.0
    return scale * peak if peak > 0 else 1.0


def program_write(w: Tensor, model: NoiseModel, rng: Rng, r: Optional[float] = None,
                  quantized: bool = True) -> Tensor:
    """Write w to a device: w + N(0, (alpha |w|)^2), then quantize"""
    w = as_tensor(w)
    written = w + rng.normal(0.0, 1.0, size=w.shape) * (model.alpha * np.abs(w)) if model.alpha > 0 else w.copy()
    if not quantized or model.full_precision:
        return written
    return quantize(written, model.bits, r if r is not None else weight_range(w, model.range_scale))


def asymmetric_backward(W: Tensor, fraction: float, rng: Rng, margin: float = 0.10) -> Tensor:
    """Copy of W^T with round(fraction * size) random entries scaled by (1 +/- margin)"""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigurationError(f"corrupted fraction must be in [0, 1], got {fraction}")
    back = np.array(as_tensor(W).T, order="C", copy=True)
    count = int(round(fraction * back.size))
    if count:
        flat = back.reshape(-1)
        idx = rng.choice(back.size, size=count, replace=False)
        signs = rng.choice(np.array([-1.0, 1.0]), size=count)
        flat[idx] *= 1.0 + signs * margin
    return back


class HardwareSimulator:
    """
    Keeps a network's weights on simulated devices.

    Forward weights are programmed at attach time and, with the per_update
    policy, after every optimizer step. G is programmed once. Backward arrays
    for BP are freshly programmed from the current weights at every request.
    """

    def __init__(self, model: NoiseModel, rng: Rng):
        self.model = model
        self.rng = rng
        self.ranges: Dict[str, float] = {}
        self.backward_requests = 0

    def attach(self, net: Network) -> Network:
        self.ranges = {k: weight_range(w, self.model.range_scale) for k, w in net.weights.items()}
        if net.feedback is not None:
            G = net.feedback.G
            net.feedback = FeedbackMatrix(program_write(G, self.model, self.rng, weight_range(G, self.model.range_scale)))
        self._program_forward(net)
        logger.debug(f"Attached hardware model {self.model.model_dump()} to {len(self.ranges)} arrays")
        return net

    def _program_forward(self, net: Network) -> None:
        for key, w in net.weights.items():
            net.weights[key] = program_write(w, self.model, self.rng, self.ranges[key],
                                             quantized=self.model.quantize_forward)

    def after_update(self, net: Network) -> None:
        if self.model.write_policy == WritePolicy.PER_UPDATE:
            self._program_forward(net)

    def backward_matrices(self, net: Network) -> Dict[str, Tensor]:
        """Programmed (and optionally corrupted) W_i^T for i = 2..L"""
        self.backward_requests += 1
        backward = {}
        for st in net.stages[1:]:
            back = program_write(net.weights[st.key].T, self.model, self.rng, self.ranges[st.key])
            if self.model.corrupted_fraction > 0:
                back = asymmetric_backward(back.T, self.model.corrupted_fraction, self.rng, self.model.margin)
            backward[st.key] = back
        return backward


#############################################
# Sweeps

def _train_and_test(rule: Algorithm, arch: Sequence[LayerSpec], model: NoiseModel, train: DatasetSplit,
                    test: DatasetSplit, cfg: TrainConfig, seed: int) -> float:
    run_cfg = cfg.model_copy(update={"seed": seed})
    net = init_network(arch, make_rng(seed), feedback=Algorithm(rule) == Algorithm.FTP)
    trainer = Trainer(net, rule, run_cfg, hardware=HardwareSimulator(model, make_rng(seed + 10_000)))
    trainer.fit(train)
    return evaluate(trainer.net, test).accuracy


def summarize_rows(rows: Iterable[HwSweepRow], key: str = "alpha") -> Dict[Tuple[str, float], Tuple[float, float]]:
    """(rule, key value) -> (mean, sample std) of test accuracy"""
    cells: Dict[Tuple[str, float], List[float]] = {}
    for row in rows:
        cells.setdefault((row.rule, getattr(row, key)), []).append(row.test_accuracy)
    return {
        cell: (float(np.mean(v)), float(np.std(v, ddof=1)) if len(v) > 1 else 0.0)
        for cell, v in cells.items()
    }


def run_hw_experiment(rule: Algorithm, model: NoiseModel, train: DatasetSplit, test: DatasetSplit,
                      cfg: TrainConfig, arch: Sequence[LayerSpec], alphas: Sequence[float] = ALPHA_GRID,
                      seeds: Sequence[int] = (0, 1, 2)) -> List[HwSweepRow]:
    """Test accuracy against programming-error scale alpha, one row per (alpha, seed)"""
    rule = Algorithm(rule)
    rows = []
    for alpha in alphas:
        cell_model = model.model_copy(update={"alpha": alpha})
        for seed in seeds:
            acc = _train_and_test(rule, arch, cell_model, train, test, cfg, seed)
            logger.info(f"{rule.value} bits={model.bits} alpha={alpha} seed={seed}: accuracy={acc:.4f}")
            rows.append(HwSweepRow(rule=rule.value, bits=model.bits, alpha=alpha, seed=seed, test_accuracy=acc))
    return rows


def run_asymmetry_sweep(train: DatasetSplit, test: DatasetSplit, cfg: TrainConfig, arch: Sequence[LayerSpec],
                        bits: Sequence[int] = (3, 4), fractions: Sequence[float] = ASYMMETRY_FRACTIONS,
                        seeds: Sequence[int] = (0, 1, 2), margin: float = 0.10) -> List[HwSweepRow]:
    """BP accuracy as a growing share of backward-array entries is corrupted"""
    rows = []
    for b in bits:
        for fraction in fractions:
            model = NoiseModel(bits=b, corrupted_fraction=fraction, margin=margin, quantize_forward=False)
            for seed in seeds:
                acc = _train_and_test(Algorithm.BP, arch, model, train, test, cfg, seed)
                logger.info(f"bp bits={b} corrupted={fraction} seed={seed}: accuracy={acc:.4f}")
                rows.append(HwSweepRow(rule="bp", bits=b, alpha=0.0, seed=seed, test_accuracy=acc,
                                       corrupted_fraction=fraction))
    return rows

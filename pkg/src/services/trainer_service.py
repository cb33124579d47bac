"""
Trainer Service for the FTP lab
Runs shuffled mini-batch epochs with any of the three learning rules
"""
import logging
import time
from typing import TYPE_CHECKING, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from ..models.data_model import DatasetSplit, WindowedSeries
from ..models.network_model import FeedbackMatrix, Network
from ..models.schemas import Algorithm, LossKind, Mode
from ..models.training_model import EpochMetrics, GradientSet, TrainConfig
from ..utils.config import settings
from ..utils.errors import ConfigurationError, UndefinedMetricError
from ..utils.tensor_ops import Tensor
from .learning_service import (
    bp_gradients, bptt_gradients, ftp_rnn_gradients, ftp_step_gradients, global_loss, init_velocity,
    learning_rate_at, make_pepita_feedback, pepita_gradients, pepita_rnn_gradients, sgd_step,
)
from .metrics_service import accuracy, rrse_corr
from .network_service import forward, forward_rnn

if TYPE_CHECKING:
    from .hardware_service import HardwareSimulator

logger = logging.getLogger(__name__)

Data = Union[DatasetSplit, WindowedSeries]


def loss_kind_for(net: Network) -> LossKind:
    """Softmax heads train on cross-entropy, everything else on squared error"""
    return LossKind.CROSS_ENTROPY if net.output_activation == "softmax" else LossKind.MSE


def _score(net: Network, outputs: Tensor, labels: Tensor, metrics: EpochMetrics) -> EpochMetrics:
    if net.output_activation == "softmax":
        metrics.accuracy = accuracy(outputs, labels)
        return metrics
    try:
        metrics.rrse, metrics.corr = rrse_corr(labels, outputs)
    except UndefinedMetricError as e:
        logger.warning(f"Forecast metrics undefined for epoch {metrics.epoch}: {e}")
    return metrics


class Trainer:
    """
    Holds everything that persists across epochs of one run: the network,
    momentum buffers, the random streams and the optional hardware simulator.
    """

    def __init__(self, net: Network, rule: Algorithm, cfg: TrainConfig,
                 hardware: Optional["HardwareSimulator"] = None,
                 pepita_feedback: Optional[FeedbackMatrix] = None):
        self.net = net
        self.rule = Algorithm(rule)
        self.cfg = cfg
        self.hardware = hardware
        self.loss_kind = LossKind(cfg.loss)

        shuffle_seq, dropout_seq, feedback_seq = np.random.SeedSequence(cfg.seed).spawn(3)
        self.shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_seq))
        self.dropout_rng = np.random.Generator(np.random.PCG64(dropout_seq))

        if net.family == "rnn" and self.loss_kind != LossKind.MSE:
            raise ConfigurationError("recurrent forecasting trains on the mse loss")
        if self.rule == Algorithm.FTP and net.feedback is None:
            raise ConfigurationError("FTP needs a network initialised with a feedback matrix")

        self.pepita_feedback = None
        if self.rule == Algorithm.PEPITA:
            self.pepita_feedback = pepita_feedback or make_pepita_feedback(
                np.random.Generator(np.random.PCG64(feedback_seq)), net, cfg.pepita_feedback_scale)

        if hardware is not None:
            hardware.attach(net)
        self.velocity = init_velocity(net)

    ########################################################
    def gradients(self, x: Tensor, y: Tensor) -> Tuple[GradientSet, Tensor]:
        """Training-mode gradients for one batch, with the batch outputs"""
        net = self.net
        if net.family == "rnn":
            rtrace = forward_rnn(net, x)
            if self.rule == Algorithm.FTP:
                grads = ftp_rnn_gradients(net, rtrace, y, gamma=self.cfg.gamma, loss_kind=self.loss_kind)
            elif self.rule == Algorithm.PEPITA:
                grads = pepita_rnn_gradients(net, rtrace, y, self.pepita_feedback, self.loss_kind)
            else:
                grads = bptt_gradients(net, rtrace, y, self.loss_kind)
            return grads, rtrace.y_hat

        trace = forward(net, x, Mode.TRAIN, self.dropout_rng)
        if self.rule == Algorithm.FTP:
            grads = ftp_step_gradients(net, trace, y, self.cfg, self.dropout_rng)
        elif self.rule == Algorithm.PEPITA:
            grads = pepita_gradients(net, trace, y, self.pepita_feedback, self.loss_kind)
        else:
            backward = self.hardware.backward_matrices(net) if self.hardware is not None else None
            grads = bp_gradients(net, trace, y, self.loss_kind, backward)
        return grads, trace.output

    def step(self, x: Tensor, y: Tensor, epoch: int) -> Tuple[GradientSet, Tensor]:
        grads, outputs = self.gradients(x, y)
        sgd_step(self.net, grads, self.velocity, self.cfg, epoch)
        if self.hardware is not None:
            self.hardware.after_update(self.net)
        return grads, outputs

    def train_epoch(self, data: Data, epoch: int = 0) -> EpochMetrics:
        """One pass over a fresh permutation of ``data`` in batches of cfg.batch_size"""
        n = len(data)
        if n == 0:
            raise ConfigurationError("cannot train on an empty dataset")
        start = time.time()
        order = self.shuffle_rng.permutation(n)
        batch = self.cfg.batch_size
        starts = range(0, n, batch)
        if self.cfg.show_progress or settings.progress_bar:
            starts = tqdm(starts, desc=f"{self.rule.value} epoch {epoch}", total=len(starts), leave=False)

        outputs = np.empty_like(data.labels, dtype=np.float64)
        total_loss = 0.0
        for s in starts:
            idx = order[s:s + batch]
            x, y = data.examples[idx], data.labels[idx]
            _, out = self.step(x, y, epoch)
            total_loss += global_loss(out, y, self.loss_kind) * len(idx)
            outputs[idx] = out

        metrics = EpochMetrics(epoch=epoch, loss=total_loss / n, lr=learning_rate_at(self.cfg, epoch),
                               seconds=time.time() - start)
        metrics = _score(self.net, outputs, data.labels, metrics)
        logger.info(f"{self.rule.value} epoch {epoch}: loss={metrics.loss:.4f} "
                    f"accuracy={metrics.accuracy} rrse={metrics.rrse} corr={metrics.corr} "
                    f"in {metrics.seconds:.2f}s")
        return metrics

    def fit(self, data: Data, epochs: Optional[int] = None):
        return [self.train_epoch(data, epoch) for epoch in range(epochs or self.cfg.epochs)]


def train_epoch(net: Network, data: Data, rule: Algorithm, cfg: TrainConfig, epoch: int = 0,
                trainer: Optional[Trainer] = None) -> Tuple[Network, EpochMetrics]:
    """Single-epoch convenience wrapper; pass ``trainer`` to keep momentum across epochs"""
    trainer = trainer or Trainer(net, rule, cfg)
    metrics = trainer.train_epoch(data, epoch)
    return trainer.net, metrics


def evaluate(net: Network, data: Data, batch_size: int = 1000) -> EpochMetrics:
    """Eval-mode loss and accuracy (classification) or RRSE / CORR (forecasting)"""
    n = len(data)
    if n == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    start = time.time()
    kind = loss_kind_for(net)
    outputs = []
    for s in range(0, n, batch_size):
        x = data.examples[s:s + batch_size]
        outputs.append(forward_rnn(net, x).y_hat if net.family == "rnn" else forward(net, x, Mode.EVAL).output)
    out = np.concatenate(outputs, axis=0)
    metrics = EpochMetrics(epoch=-1, loss=global_loss(out, data.labels, kind), seconds=time.time() - start)
    return _score(net, out, data.labels, metrics)

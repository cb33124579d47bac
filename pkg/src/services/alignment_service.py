"""
Alignment Lab Service for the FTP lab
Angles between FTP updates and BP gradients, and between the forward-weight
product and the feedback matrix G, tracked over training
"""
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..models.data_model import DatasetSplit
from ..models.network_model import LayerKind, LayerSpec, Network
from ..models.report_model import AlignmentRecord
from ..models.schemas import Algorithm, Mode
from ..models.training_model import TrainConfig
from ..utils.errors import ConfigurationError, UndefinedAngleError
from ..utils.tensor_ops import Tensor, cosine_angle_deg, make_rng
from .learning_service import bp_gradients, estimate_first_target, ftp_gradients, propagate_targets
from .network_service import forward, init_network
from .trainer_service import Trainer, loss_kind_for

logger = logging.getLogger(__name__)

ALIGNMENT_BATCH = 64
ALIGNMENT_COLUMNS = ["epoch", "layer", "angle_deg", "gamma", "seed"]


def weight_product(net: Network) -> Tensor:
    """W2^T W3^T ... WL^T, shape (first hidden dim x output dim), comparable with G"""
    product = np.eye(net.stages[0].out_dim)
    for st in net.stages[1:]:
        product = product @ net.weights[st.key].T
    return product


def record_alignment(net: Network, x: Tensor, y: Tensor, gamma: float = 1.0, epoch: int = 0,
                     seed: int = 0) -> Optional[AlignmentRecord]:
    """
    FTP and BP gradients on the same eval-mode batch, without updating the net.
    Returns None (and logs) when a gradient vanishes and an angle is undefined.
    """
    if net.family != "fc" or any(st.kind != LayerKind.DENSE for st in net.stages):
        raise ConfigurationError("alignment recording needs a fully connected network")
    if net.feedback is None:
        raise ConfigurationError("alignment recording needs the feedback matrix G")
    kind = loss_kind_for(net)
    trace = forward(net, x, Mode.EVAL)
    tau1 = estimate_first_target(trace, y, net.feedback, gamma, net.hidden_activation)
    ftp = ftp_gradients(net, trace, propagate_targets(net, trace, tau1, y), kind)
    bp = bp_gradients(net, trace, y, kind)

    try:
        angles = {st.key: cosine_angle_deg(ftp[st.key], bp[st.key]) for st in net.stages}
        structural = cosine_angle_deg(weight_product(net), net.feedback.G)
    except UndefinedAngleError as e:
        logger.warning(f"Skipping alignment record at epoch {epoch} (seed {seed}): {e}")
        return None
    return AlignmentRecord(epoch=epoch, layer_angles=angles, structural_angle=structural, gamma=gamma, seed=seed)


def run_alignment_study(arch: Sequence[LayerSpec], train: DatasetSplit, sample: DatasetSplit, cfg: TrainConfig,
                        gammas: Sequence[float] = (1.0,), seeds: Sequence[int] = (0,),
                        epochs: Optional[int] = None) -> List[AlignmentRecord]:
    """Train FTP per (gamma, seed), recording before training and after every epoch"""
    sample = sample.take(np.arange(min(ALIGNMENT_BATCH, len(sample))))
    records: List[AlignmentRecord] = []
    for gamma in gammas:
        for seed in seeds:
            run_cfg = cfg.model_copy(update={"gamma": gamma, "seed": seed})
            trainer = Trainer(init_network(arch, make_rng(seed)), Algorithm.FTP, run_cfg)
            record = record_alignment(trainer.net, sample.examples, sample.labels, gamma, 0, seed)
            if record is not None:
                records.append(record)
            for epoch in range(epochs or run_cfg.epochs):
                trainer.train_epoch(train, epoch)
                record = record_alignment(trainer.net, sample.examples, sample.labels, gamma, epoch + 1, seed)
                if record is not None:
                    records.append(record)
            logger.info(f"Alignment study gamma={gamma} seed={seed}: {len(records)} records so far")
    return records


def alignment_frame(records: Sequence[AlignmentRecord]) -> pd.DataFrame:
    rows = [row for record in records for row in record.rows()]
    return pd.DataFrame(rows, columns=ALIGNMENT_COLUMNS)


def mean_curves(records: Sequence[AlignmentRecord]) -> pd.DataFrame:
    """Angle per (gamma, layer, epoch) averaged across seeds"""
    frame = alignment_frame(records)
    if frame.empty:
        return pd.DataFrame(columns=["gamma", "layer", "epoch", "angle_deg", "seeds"])
    grouped = frame.groupby(["gamma", "layer", "epoch"], sort=True)["angle_deg"]
    return grouped.agg(angle_deg="mean", seeds="count").reset_index()


def mean_hidden_angle(records: Sequence[AlignmentRecord], epoch: int) -> Dict[float, float]:
    """gamma -> mean hidden-layer angle at ``epoch`` over seeds"""
    frame = alignment_frame(records)
    hidden = frame[(frame.epoch == epoch) & (frame.layer != "structural")]
    if records:
        hidden = hidden[hidden.layer != f"W{len(records[0].layer_angles)}"]
    return hidden.groupby("gamma")["angle_deg"].mean().to_dict()

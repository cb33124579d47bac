"""
Experiment Service for the FTP lab
Resolves a RunConfig into data, architecture and trainers, runs every seed and
writes the metrics CSV, the summary JSON, checkpoints and alignment records
"""
import configparser
import json
import logging
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..models.data_model import DatasetSplit, WindowedSeries
from ..models.hardware_model import NoiseModel
from ..models.network_model import LayerSpec
from ..models.report_model import ExperimentResult, MetricsRow
from ..models.schemas import Algorithm, ArchFamily, LossKind, RunConfig, RunStatus
from ..models.training_model import EpochMetrics, TrainConfig
from ..utils.config import ARCH_CONFIGS, DECAY_EPOCHS, settings
from ..utils.errors import ConfigurationError, FTPLabError
from ..utils.tensor_ops import make_rng
from .alignment_service import ALIGNMENT_COLUMNS, ALIGNMENT_BATCH, record_alignment
from .data_service import load_dataset, subset, synthetic_blobs, synthetic_sine_series, window_series
from .hardware_service import HardwareSimulator
from .network_service import architecture_for, fc_architecture, init_network, load_network, save_network
from .trainer_service import Trainer, evaluate

logger = logging.getLogger(__name__)

Data = Union[DatasetSplit, WindowedSeries]


class CsvWriter:
    """Appends rows to CSV files; one lock per path serialises concurrent seeds"""

    _locks: Dict[str, threading.Lock] = {}
    _guard = threading.Lock()

    def __init__(self, path: Union[str, Path], columns: Sequence[str]):
        self.path = Path(path)
        self.columns = list(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self._guard:
            self.lock = self._locks.setdefault(str(self.path.resolve()), threading.Lock())

    def write(self, rows: List[dict]) -> None:
        if not rows:
            return
        with self.lock:
            frame = pd.DataFrame(rows, columns=self.columns)
            frame.to_csv(self.path, mode="a", header=not self.path.exists(), index=False)


#############################################
# Configuration

def load_run_config(path: Optional[Union[str, Path]] = None, **overrides) -> RunConfig:
    """INI file (any sections, flattened) with keyword overrides on top"""
    values: Dict[str, object] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            if not parser.read(path):
                raise ConfigurationError(f"config file not found: {path}")
        except configparser.Error as e:
            raise ConfigurationError(f"{path}: {e}")
        for section in parser.sections():
            values.update(parser.items(section))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigurationError(f"invalid run configuration: {e}")


def train_config(cfg: RunConfig, seed: int) -> TrainConfig:
    decay = cfg.decay_epochs if cfg.decay_epochs is not None else DECAY_EPOCHS[cfg.arch.value]
    return TrainConfig(
        lr=cfg.lr, momentum=cfg.momentum, batch_size=cfg.batch_size, epochs=cfg.epochs,
        decay_epochs=tuple(decay), decay_factor=cfg.decay_factor, gamma=cfg.gamma, seed=seed,
        loss=LossKind.MSE if cfg.arch == ArchFamily.RNN else LossKind.CROSS_ENTROPY,
        reuse_dropout_masks=cfg.reuse_dropout_masks, pepita_feedback_scale=cfg.pepita_feedback_scale,
        show_progress=settings.progress_bar,
    )


def noise_model(cfg: RunConfig) -> Optional[NoiseModel]:
    if cfg.bits >= 32 and cfg.alpha == 0 and cfg.corrupted_fraction == 0:
        return None
    return NoiseModel(alpha=cfg.alpha, bits=cfg.bits, corrupted_fraction=cfg.corrupted_fraction,
                      quantize_forward=cfg.quantize_forward)


def validate_run_config(cfg: RunConfig) -> None:
    """Reject combinations that cannot run, before any data is loaded"""
    if cfg.record_alignment and cfg.arch != ArchFamily.FC:
        raise ConfigurationError("alignment recording needs the fc family")


def load_data(cfg: RunConfig) -> Tuple[Data, Data]:
    """(train, test) for the configured dataset"""
    root = cfg.data_root or settings.data_root
    if cfg.arch == ArchFamily.RNN:
        source = synthetic_sine_series(seed=0) if cfg.dataset == "sine" else cfg.dataset
        series = window_series(source, window=cfg.window, has_header=cfg.csv_header, name=str(cfg.dataset))
        train, test = series.train_part(), series.test_part()
    elif cfg.dataset == "blobs":
        data = synthetic_blobs(n=1000, seed=0)
        train, test = data.take(np.arange(800)), data.take(np.arange(800, 1000))
    else:
        train = load_dataset(cfg.dataset, root, "train")
        test = load_dataset(cfg.dataset, root, "test")
    if cfg.limit is not None:
        train = subset(train, cfg.limit) if isinstance(train, DatasetSplit) else train.take(np.arange(min(cfg.limit, len(train))))
    return train, test


def build_architecture(cfg: RunConfig, train: Data) -> List[LayerSpec]:
    family = cfg.arch.value
    if family == "rnn":
        return architecture_for("rnn", "series", features=train.labels.shape[1], hidden=cfg.hidden)
    if f"{family}/{cfg.dataset}" in ARCH_CONFIGS:
        return architecture_for(family, cfg.dataset, dropout=cfg.dropout)
    if family == "fc":
        preset = ARCH_CONFIGS["fc/mnist"]
        return fc_architecture(train.examples.shape[1], preset["hidden"], train.num_classes,
                               preset["dropout"] if cfg.dropout is None else cfg.dropout)
    raise ConfigurationError(f"no {family} architecture preset for dataset {cfg.dataset}")


#############################################
# Runs

def _metrics_row(run_id: str, seed: int, split: str, m: EpochMetrics, epoch: int) -> dict:
    return MetricsRow(run_id=run_id, seed=seed, epoch=epoch, split=split, loss=m.loss, accuracy=m.accuracy,
                      rrse=m.rrse, corr=m.corr, seconds=m.seconds).as_dict()


def _run_seed(cfg: RunConfig, seed: int, run_id: str, out_dir: Path, arch: List[LayerSpec], train: Data,
              test: Data, metrics_writer: CsvWriter, alignment_writer: Optional[CsvWriter]) -> EpochMetrics:
    tcfg = train_config(cfg, seed)
    needs_g = cfg.algorithm == Algorithm.FTP or cfg.record_alignment
    net = init_network(arch, make_rng(seed), feedback=needs_g)
    model = noise_model(cfg)
    hardware = HardwareSimulator(model, make_rng(seed + 10_000)) if model is not None else None
    trainer = Trainer(net, cfg.algorithm, tcfg, hardware=hardware)

    sample = None
    if alignment_writer is not None:
        sample = test.take(np.arange(min(ALIGNMENT_BATCH, len(test))))
        record = record_alignment(trainer.net, sample.examples, sample.labels, cfg.gamma, 0, seed)
        if record is not None:
            alignment_writer.write(record.rows())

    final = None
    for epoch in range(cfg.epochs):
        train_metrics = trainer.train_epoch(train, epoch)
        final = evaluate(trainer.net, test) if len(test) else train_metrics
        metrics_writer.write([_metrics_row(run_id, seed, "train", train_metrics, epoch),
                              _metrics_row(run_id, seed, "test", final, epoch)])
        if sample is not None:
            record = record_alignment(trainer.net, sample.examples, sample.labels, cfg.gamma, epoch + 1, seed)
            if record is not None:
                alignment_writer.write(record.rows())

    save_network(trainer.net, out_dir / f"model_seed{seed}.npz")
    logger.info(f"Run {run_id} seed {seed} finished: accuracy={final.accuracy} corr={final.corr}")
    return final


def summarize(finals: Dict[int, EpochMetrics]) -> Dict[str, dict]:
    """mean, sample std and per-seed values of each final test metric"""
    summary = {}
    for name in ("accuracy", "loss", "rrse", "corr"):
        values = [getattr(m, name) for m in finals.values()]
        if any(v is None for v in values):
            continue
        arr = np.asarray(values, dtype=np.float64)
        summary[name] = {
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
            "values": [float(v) for v in arr],
        }
    return summary


def run_experiment(cfg: RunConfig) -> ExperimentResult:
    validate_run_config(cfg)
    run_id = f"{cfg.algorithm.value}-{cfg.arch.value}-{Path(str(cfg.dataset)).stem}-{uuid.uuid4().hex[:8]}"
    out_dir = Path(cfg.out or Path(settings.output_dir) / run_id)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Starting run {run_id} with seeds {cfg.seeds}, writing to {out_dir}")

    train, test = load_data(cfg)
    arch = build_architecture(cfg, train)
    metrics_writer = CsvWriter(out_dir / "metrics.csv", MetricsRow.COLUMNS)
    alignment_writer = CsvWriter(out_dir / "alignment.csv", ALIGNMENT_COLUMNS) if cfg.record_alignment else None

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = {
            seed: pool.submit(_run_seed, cfg, seed, run_id, out_dir, arch, train, test, metrics_writer,
                              alignment_writer)
            for seed in cfg.seeds
        }
        finals = {seed: f.result() for seed, f in futures.items()}

    summary = {
        "run_id": run_id,
        "algorithm": cfg.algorithm.value,
        "arch": cfg.arch.value,
        "dataset": str(cfg.dataset),
        "epochs": cfg.epochs,
        "seeds": list(cfg.seeds),
        "final_test": summarize(finals),
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2))
    return ExperimentResult(
        run_id=run_id,
        metrics_path=str(out_dir / "metrics.csv"),
        summary_path=str(summary_path),
        alignment_path=str(out_dir / "alignment.csv") if cfg.record_alignment else None,
        model_paths=[str(out_dir / f"model_seed{s}.npz") for s in cfg.seeds],
        summary=summary,
    )


def evaluate_checkpoint(model_path: Union[str, Path], cfg: RunConfig) -> EpochMetrics:
    """Eval-mode metrics of a saved network on the configured test data"""
    net = load_network(model_path)
    _, test = load_data(cfg)
    return evaluate(net, test)


class ExperimentService:
    """Runs experiments and keeps the status of runs submitted through the API"""

    def __init__(self):
        self._jobs: Dict[str, RunStatus] = {}
        self._lock = threading.Lock()

    def validate(self, cfg: RunConfig) -> None:
        validate_run_config(cfg)

    def run(self, cfg: RunConfig) -> ExperimentResult:
        return run_experiment(cfg)

    def _set(self, status: RunStatus) -> RunStatus:
        with self._lock:
            self._jobs[status.run_id] = status
        return status

    def submit(self, cfg: RunConfig) -> RunStatus:
        """Validate and register a queued run; execute() does the work"""
        self.validate(cfg)
        return self._set(RunStatus(run_id=uuid.uuid4().hex, status="queued"))

    def execute(self, job_id: str, cfg: RunConfig) -> RunStatus:
        self._set(RunStatus(run_id=job_id, status="running"))
        try:
            result = self.run(cfg)
            return self._set(RunStatus(run_id=job_id, status="completed", summary_path=result.summary_path))
        except FTPLabError as e:
            logger.error(f"Experiment {job_id} failed: {e}")
            return self._set(RunStatus(run_id=job_id, status="failed", error_message=f"{e.category}: {e}"))
        except Exception as e:
            logger.exception(f"Experiment {job_id} crashed")
            return self._set(RunStatus(run_id=job_id, status="failed", error_message=f"{type(e).__name__}: {e}"))

    def status(self, job_id: str) -> Optional[RunStatus]:
        return self._jobs.get(job_id)

    def jobs(self) -> List[RunStatus]:
        return list(self._jobs.values())


# Global experiment service instance
experiment_service = ExperimentService()

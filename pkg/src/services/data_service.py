"""
Data Service for the FTP lab
Parsers for the IDX and CIFAR binary formats, windowed CSV series and small
synthetic sets for smoke runs
"""
import gzip
import logging
import struct
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from ..models.data_model import DatasetSplit, WindowedSeries
from ..models.schemas import Normalization
from ..utils.config import settings
from ..utils.errors import (
    BadMagicError, ConfigurationError, CountMismatchError, DataFormatError, RecordSizeError, SeriesFormatError,
    TruncatedFileError,
)
from ..utils.tensor_ops import make_rng

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_PIXELS = 3 * 32 * 32
CIFAR_SHAPE = (3, 32, 32)

IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "cifar10": {"train": [f"data_batch_{i}.bin" for i in range(1, 6)], "test": ["test_batch.bin"]},
    "cifar100": {"train": ["train.bin"], "test": ["test.bin"]},
}
CIFAR_SUBDIRS = {"cifar10": "cifar-10-batches-bin", "cifar100": "cifar-100-binary"}


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigurationError(f"cannot read dataset file {path}: {e.strerror or e}")
    if path.suffix == ".gz" or raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def one_hot(indices: np.ndarray, num_classes: int) -> np.ndarray:
    if indices.size and int(indices.max()) >= num_classes:
        raise DataFormatError(f"label {int(indices.max())} out of range for {num_classes} classes")
    out = np.zeros((indices.size, num_classes))
    out[np.arange(indices.size), indices] = 1.0
    return out


#############################################
# IDX (MNIST, Fashion-MNIST)

def _parse_idx_images(raw: bytes, path: PathLike) -> Tuple[np.ndarray, Tuple[int, int]]:
    if len(raw) < 16:
        raise TruncatedFileError(f"{path}: IDX image header needs 16 bytes, file has {len(raw)}")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagicError(f"{path}: expected image magic 0x{IDX_IMAGES_MAGIC:08x}, got 0x{magic:08x}")
    expected = 16 + n * rows * cols
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes for {n} images, file has {len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    return pixels.reshape(n, rows * cols).astype(np.float64) / 255.0, (rows, cols)


def _parse_idx_labels(raw: bytes, path: PathLike) -> np.ndarray:
    if len(raw) < 8:
        raise TruncatedFileError(f"{path}: IDX label header needs 8 bytes, file has {len(raw)}")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise BadMagicError(f"{path}: expected label magic 0x{IDX_LABELS_MAGIC:08x}, got 0x{magic:08x}")
    if len(raw) < 8 + n:
        raise TruncatedFileError(f"{path}: expected {8 + n} bytes for {n} labels, file has {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_idx(images_path: PathLike, labels_path: PathLike, num_classes: int = 10,
             name: str = "idx") -> DatasetSplit:
    """Pixels scaled to [0, 1], labels one-hot"""
    examples, (rows, cols) = _parse_idx_images(_read_bytes(images_path), images_path)
    labels = _parse_idx_labels(_read_bytes(labels_path), labels_path)
    if labels.size != examples.shape[0]:
        raise CountMismatchError(f"{examples.shape[0]} images but {labels.size} labels")
    logger.info(f"Loaded {examples.shape[0]} IDX examples of {rows}x{cols} from {images_path}")
    return DatasetSplit(examples=examples, labels=one_hot(labels, num_classes), name=name,
                        image_shape=(1, rows, cols), normalization={"pixels": "divide by 255"})


#############################################
# CIFAR binary batches

def load_cifar(files: Sequence[PathLike], classes: int = 10, name: str = "cifar") -> DatasetSplit:
    """
    Records of 1 label byte (CIFAR-10) or coarse + fine label bytes (CIFAR-100,
    fine label used) followed by 3072 pixel bytes in R, G, B plane order.
    """
    if classes not in (10, 100):
        raise ConfigurationError(f"CIFAR has 10 or 100 classes, got {classes}")
    label_bytes = 1 if classes == 10 else 2
    record = label_bytes + CIFAR_PIXELS
    examples, labels = [], []
    for path in files:
        raw = _read_bytes(path)
        if not raw:
            raise TruncatedFileError(f"{path}: empty CIFAR batch file")
        if len(raw) % record:
            raise RecordSizeError(f"{path}: size {len(raw)} is not a multiple of the {record}-byte record")
        data = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
        labels.append(data[:, label_bytes - 1].astype(np.int64))
        examples.append(data[:, label_bytes:].astype(np.float64) / 255.0)
    if not examples:
        raise ConfigurationError("no CIFAR batch files given")
    x = np.concatenate(examples)
    logger.info(f"Loaded {x.shape[0]} CIFAR-{classes} examples from {len(files)} file(s)")
    return DatasetSplit(examples=x, labels=one_hot(np.concatenate(labels), classes), name=name,
                        image_shape=CIFAR_SHAPE, normalization={"pixels": "divide by 255"})


#############################################
# Windowed series

def _read_series(source: Union[PathLike, np.ndarray, pd.DataFrame], has_header: bool) -> np.ndarray:
    if isinstance(source, np.ndarray):
        frame = pd.DataFrame(source.reshape(source.shape[0], -1))
    elif isinstance(source, pd.DataFrame):
        frame = source
    else:
        try:
            frame = pd.read_csv(source, header=0 if has_header else None)
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise SeriesFormatError(f"{source}: cannot parse CSV ({e})")
        except OSError as e:
            raise ConfigurationError(f"cannot read series file {source}: {e.strerror or e}")
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() & frame.notna()
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise SeriesFormatError(f"non-numeric cell at row {row}, column {col}: {frame.iat[row, col]!r}")
    if numeric.isna().to_numpy().any():
        raise SeriesFormatError("series contains missing values")
    return numeric.to_numpy(dtype=np.float64)


def window_series(source: Union[PathLike, np.ndarray, pd.DataFrame], window: int = 24,
                  normalization: Normalization = Normalization.MAXABS, train_fraction: float = 0.8,
                  has_header: bool = False, name: str = "series") -> WindowedSeries:
    """
    Window i holds rows [i, i + window) and predicts row i + window.
    Normalisation statistics come from the rows the training windows touch.
    """
    if window < 1:
        raise ConfigurationError(f"window must be positive, got {window}")
    if not 0.0 < train_fraction <= 1.0:
        raise ConfigurationError(f"train_fraction must be in (0, 1], got {train_fraction}")
    values = _read_series(source, has_header)
    T = values.shape[0]
    if T <= window:
        raise SeriesFormatError(f"series of {T} steps is too short for a window of {window}")
    M = T - window
    split_index = max(1, int(np.floor(M * train_fraction)))
    train_rows = values[:split_index + window]

    mode = Normalization(normalization)
    offset = np.zeros(values.shape[1])
    scale = np.ones(values.shape[1])
    if mode == Normalization.MAXABS:
        peak = np.max(np.abs(train_rows), axis=0)
        scale = np.where(peak > 0, peak, 1.0)
    elif mode == Normalization.ZSCORE:
        offset = train_rows.mean(axis=0)
        std = train_rows.std(axis=0)
        scale = np.where(std > 0, std, 1.0)
    if mode != Normalization.NONE:
        # zero-variance features map to 0
        flat = np.ptp(train_rows, axis=0) == 0
        offset = np.where(flat, train_rows[0], offset)
        scale = np.where(flat, 1.0, scale)
    normalized = (values - offset) / scale

    windows = sliding_window_view(normalized, window, axis=0)[:M].transpose(0, 2, 1).copy()
    logger.info(f"Windowed {T} steps x {values.shape[1]} features into {M} windows ({split_index} train)")
    return WindowedSeries(windows=windows, targets=normalized[window:].copy(), scale=scale, offset=offset,
                          window=window, split_index=split_index, name=name)


#############################################
# Dataset resolution under DATA_ROOT

def _existing(path: Path) -> Path:
    if path.exists():
        return path
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        return gz
    raise ConfigurationError(f"dataset file not found: {path} (set DATA_ROOT or --data-root)")


def load_dataset(name: str, root: Optional[PathLike] = None, split: str = "train") -> DatasetSplit:
    """Resolve the standard file names of mnist, fmnist, cifar10 or cifar100 under ``root``"""
    root = Path(root or settings.data_root)
    name = name.lower()
    if split not in ("train", "test"):
        raise ConfigurationError(f"split must be train or test, got {split}")
    if name in ("mnist", "fmnist"):
        images, labels = IDX_FILES[split]
        base = root / name
        return load_idx(_existing(base / images), _existing(base / labels), 10, name=f"{name}/{split}")
    if name in CIFAR_FILES:
        base = root / name / CIFAR_SUBDIRS[name]
        if not base.exists():
            base = root / name
        files = [_existing(base / f) for f in CIFAR_FILES[name][split]]
        return load_cifar(files, 10 if name == "cifar10" else 100, name=f"{name}/{split}")
    raise ConfigurationError(f"Unknown dataset: {name}")


def subset(split: DatasetSplit, n: int) -> DatasetSplit:
    """First n examples"""
    if n < 1:
        raise ConfigurationError(f"subset size must be positive, got {n}")
    return split.take(np.arange(min(n, len(split))))


#############################################
# Synthetic sets

def synthetic_sine_series(length: int = 600, features: int = 2, noise: float = 0.05, seed: int = 0) -> np.ndarray:
    """Noisy sines with per-feature period and phase, shape (length, features)"""
    rng = make_rng(seed)
    t = np.arange(length)[:, None]
    periods = 20.0 + 10.0 * np.arange(features)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=features)
    return np.sin(2.0 * np.pi * t / periods + phases) + noise * rng.normal(size=(length, features))


def synthetic_blobs(n: int = 512, features: int = 2, classes: int = 2, spread: float = 0.3,
                    seed: int = 0) -> DatasetSplit:
    """Gaussian clusters, one per class; two classes sit at +2 and -2 on every axis"""
    rng = make_rng(seed)
    if classes == 2:
        centers = np.stack([np.full(features, 2.0), np.full(features, -2.0)])
    else:
        centers = rng.normal(0.0, 3.0, size=(classes, features))
    idx = np.arange(n) % classes
    x = centers[idx] + spread * rng.normal(size=(n, features))
    return DatasetSplit(examples=x, labels=one_hot(idx, classes), name="blobs")

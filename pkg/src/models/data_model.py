from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..utils.tensor_ops import Tensor


@dataclass
class DatasetSplit:
    """Examples (N x features) with one-hot labels or regression targets"""
    examples: Tensor
    labels: Tensor
    name: str
    image_shape: Optional[Tuple[int, int, int]] = None
    normalization: Dict[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.examples.shape[0]

    @property
    def num_classes(self) -> int:
        return self.labels.shape[1]

    def take(self, index) -> "DatasetSplit":
        return DatasetSplit(
            examples=self.examples[index],
            labels=self.labels[index],
            name=self.name,
            image_shape=self.image_shape,
            normalization=self.normalization,
        )

    def as_images(self, examples: Optional[Tensor] = None) -> Tensor:
        """Reshape flattened rows to (N, C, H, W)"""
        x = self.examples if examples is None else examples
        if self.image_shape is None:
            return x
        return x.reshape((x.shape[0],) + tuple(self.image_shape))


@dataclass
class WindowedSeries:
    """Sliding windows of a multivariate series; window t predicts row t + window"""
    windows: Tensor          # (M, window, features)
    targets: Tensor          # (M, features)
    scale: Tensor            # per-feature divisor used for normalisation
    offset: Tensor           # per-feature shift used for normalisation
    window: int = 24
    split_index: int = 0     # windows [0, split_index) are the training part
    name: str = "series"

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def examples(self) -> Tensor:
        return self.windows

    @property
    def labels(self) -> Tensor:
        return self.targets

    def take(self, index) -> "WindowedSeries":
        return WindowedSeries(
            windows=self.windows[index],
            targets=self.targets[index],
            scale=self.scale,
            offset=self.offset,
            window=self.window,
            split_index=0,
            name=self.name,
        )

    def train_part(self) -> "WindowedSeries":
        return self.take(np.arange(0, self.split_index))

    def test_part(self) -> "WindowedSeries":
        return self.take(np.arange(self.split_index, len(self)))

    def denormalize(self, values: Tensor) -> Tensor:
        return values * self.scale + self.offset

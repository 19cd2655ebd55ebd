"""
格子の幾何と画像・ラベル・責務・マスクのコンテナ
各コンテナは ``(H, W, ...)`` の読み取り専用numpy配列（行優先）を持ち、ボクセル ``i`` は ``(i // W, i % W)`` にある
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Union

import numpy as np

from .errors import ArgumentError

# up, down, left, right
_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    if array.flags.writeable:
        array = array.copy()
        array.flags.writeable = False
    return array


@dataclass(frozen=True)
class ImageGrid:
    """H×W grid of D-dimensional real voxels."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3 or min(data.shape) < 1:
            raise ArgumentError(f"image must have shape (H, W, D) with H, W, D >= 1, got {data.shape}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape[:2]

    @property
    def n_voxels(self) -> int:
        return self.height * self.width

    def flat(self) -> np.ndarray:
        """(N, D) view of the voxel vectors."""
        return self.data.reshape(self.n_voxels, self.channels)


@dataclass(frozen=True)
class LabelField:
    """Dense class-index encoding of a one-hot segmentation."""

    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or min(labels.shape) < 1:
            raise ArgumentError(f"labels must have shape (H, W), got {labels.shape}")
        if self.n_classes < 1:
            raise ArgumentError(f"n_classes must be >= 1, got {self.n_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ArgumentError(
                f"label values must lie in [0, {self.n_classes - 1}], "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int64)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple:
        return self.labels.shape


@dataclass(frozen=True)
class ResponsibilityField:
    """Per-voxel probability vectors over K classes."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ArgumentError(f"responsibilities must have shape (H, W, K), got {values.shape}")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple:
        return self.values.shape[:2]

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1, self.n_classes)

    def max_normalization_error(self) -> float:
        return float(np.max(np.abs(self.values.sum(axis=2) - 1.0)))


@dataclass(frozen=True)
class Mask:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ArgumentError(f"mask must have shape (H, W), got {values.shape}")
        object.__setattr__(self, "values", _frozen(values.astype(bool)))

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @classmethod
    def full(cls, height: int, width: int) -> "Mask":
        return cls(np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class NeighborCountField:
    """ȳ_ik: sum over the in-grid 4-neighbors of the class-k weight."""

    values: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.values.shape[2]


def neighbors(i: int, height: int, width: int) -> List[int]:
    """4-connected in-grid neighbors of voxel ``i`` in (up, down, left, right) order."""
    if height < 1 or width < 1:
        raise ArgumentError(f"invalid grid size {height}x{width}")
    if not 0 <= i < height * width:
        raise ArgumentError(f"voxel index {i} out of range for a {height}x{width} grid")
    row, col = divmod(i, width)
    result = []
    for dr, dc in _OFFSETS:
        r, c = row + dr, col + dc
        if 0 <= r < height and 0 <= c < width:
            result.append(r * width + c)
    return result


def neighbor_count_map(height: int, width: int) -> np.ndarray:
    """|δ_i| per voxel: 4 interior, 3 edge, 2 corner (fewer on 1-wide grids)."""
    ones = np.ones((height, width, 1))
    return _shift_sum(ones)[:, :, 0]


def _shift_sum(weights: np.ndarray) -> np.ndarray:
    # Zero padding means out-of-grid neighbors contribute nothing.
    total = np.zeros_like(weights, dtype=np.float64)
    total[1:] += weights[:-1]  # up
    total[:-1] += weights[1:]  # down
    total[:, 1:] += weights[:, :-1]  # left
    total[:, :-1] += weights[:, 1:]  # right
    return total


def one_hot(labels: LabelField) -> np.ndarray:
    """Dense (N, K) float array with exactly one 1 per row."""
    flat = labels.labels.reshape(-1)
    encoded = np.zeros((flat.size, labels.n_classes), dtype=np.float64)
    encoded[np.arange(flat.size), flat] = 1.0
    return encoded


def argmax_labels(rho: ResponsibilityField) -> LabelField:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return LabelField(np.argmax(rho.values, axis=2), rho.n_classes)


def neighbor_class_counts(
    weights: Union[LabelField, ResponsibilityField],
) -> NeighborCountField:
    if isinstance(weights, LabelField):
        per_voxel = one_hot(weights).reshape(weights.height, weights.width, weights.n_classes)
    elif isinstance(weights, ResponsibilityField):
        per_voxel = weights.values
    else:
        raise ArgumentError(f"expected LabelField or ResponsibilityField, got {type(weights).__name__}")
    return NeighborCountField(_shift_sum(per_voxel))


def check_same_shape(*fields) -> None:
    shapes = {tuple(f.shape) for f in fields}
    if len(shapes) > 1:
        raise ArgumentError(f"grid dimensions do not match: {sorted(shapes)}")

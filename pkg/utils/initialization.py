"""責務の初期化（教師なしはk-means、半教師ありは最近傍ラベル付きボクセル）"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from .errors import ArgumentError, NumericError
from .grid import ImageGrid, LabelField, ResponsibilityField
from .vb import ClampSet

logger = logging.getLogger(__name__)

# Lloyd更新で許す二乗誤差の数値的な増加幅（相対）
_WCSS_SLACK = 1e-9

# 距離カーネル exp(−d/τ) の既定幅。強度が[0, 1]なら責務はほぼone-hotになる
DEFAULT_KERNEL_WIDTH = 0.01


@dataclass(frozen=True)
class LabeledVoxel:
    index: int
    label: int


@dataclass(frozen=True)
class LabeledVoxelSet:
    entries: Tuple[LabeledVoxel, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def indices(self) -> np.ndarray:
        return np.array([e.index for e in self.entries], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]], image: Optional[ImageGrid] = None) -> "LabeledVoxelSet":
        entries = []
        for index, label in pairs:
            if image is not None and not 0 <= int(index) < image.n_voxels:
                raise ArgumentError(f"labeled voxel {index} is outside the image")
            entries.append(LabeledVoxel(int(index), int(label)))
        return cls(tuple(entries))

    def to_clamps(self) -> ClampSet:
        # 同じボクセルの重複ラベルは一つにまとめる
        unique: Dict[int, int] = {}
        for entry in self.entries:
            previous = unique.setdefault(entry.index, entry.label)
            if previous != entry.label:
                raise ArgumentError(f"voxel {entry.index} is labeled as both {previous} and {entry.label}")
        return ClampSet(tuple(unique.items()))

    def to_records(self) -> List[Dict[str, Any]]:
        return [{"index": e.index, "class": e.label} for e in self.entries]


@dataclass(frozen=True)
class KMeansInit:
    centers: np.ndarray
    responsibilities: ResponsibilityField
    iterations: int


def distance_kernel(distances: np.ndarray, width: float = DEFAULT_KERNEL_WIDTH) -> np.ndarray:
    """ρ_ik ∝ exp(−d_ik / width), rows normalized; width = 1 is the plain negative exponential."""
    if not width > 0:
        raise ArgumentError(f"kernel width must be > 0, got {width}")
    return softmax(-distances / width, axis=1)


def _distances(data: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return np.linalg.norm(data[:, np.newaxis, :] - centers[np.newaxis, :, :], axis=2)


def _wcss(data: np.ndarray, centers: np.ndarray, assignment: np.ndarray) -> float:
    return float(np.sum((data - centers[assignment]) ** 2))


def _kmeans_plus_plus(data: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    n_samples = data.shape[0]
    centers = np.empty((n_clusters, data.shape[1]))
    centers[0] = data[rng.integers(n_samples)]
    for k in range(1, n_clusters):
        dist_sq = np.min(_distances(data, centers[:k]) ** 2, axis=1)
        total = dist_sq.sum()
        if total > 0:
            next_idx = rng.choice(n_samples, p=dist_sq / total)
        else:
            # 全点が既存の中心と重なっている
            next_idx = rng.integers(n_samples)
        centers[k] = data[next_idx]
    return centers


def kmeans_init(
    image: ImageGrid,
    n_classes: int,
    seed: int,
    max_iterations: int = 100,
    tolerance: float = 1e-8,
    kernel_width: float = DEFAULT_KERNEL_WIDTH,
) -> KMeansInit:
    """Lloyd's k-means from k-means++ seeds, then ρ_ik ∝ exp(−‖x_i − c_k‖ / kernel_width)."""
    data = image.flat()
    if n_classes < 1:
        raise ArgumentError(f"K must be >= 1, got {n_classes}")
    if n_classes > image.n_voxels:
        raise ArgumentError(f"K={n_classes} exceeds the number of voxels ({image.n_voxels})")

    rng = np.random.default_rng(seed)
    centers = _kmeans_plus_plus(data, n_classes, rng)

    iterations = 0
    for iterations in range(1, max_iterations + 1):
        assignment = np.argmin(_distances(data, centers), axis=1)
        before = _wcss(data, centers, assignment)

        updated = centers.copy()
        for k in range(n_classes):
            members = assignment == k
            if np.any(members):
                updated[k] = data[members].mean(axis=0)

        after = _wcss(data, updated, assignment)
        if after > before * (1.0 + _WCSS_SLACK) + _WCSS_SLACK:
            raise NumericError(
                f"k-means center update increased the within-cluster sum of squares ({before} -> {after})",
                stage="init",
            )

        shift = float(np.linalg.norm(updated - centers))
        centers = updated
        if shift < tolerance:
            break

    logger.debug(f"k-means converged after {iterations} iterations, centers={centers.ravel().round(4).tolist()}")
    rho = distance_kernel(_distances(data, centers), kernel_width)
    return KMeansInit(
        centers=centers,
        responsibilities=ResponsibilityField(rho.reshape(image.height, image.width, n_classes)),
        iterations=iterations,
    )


def _class_distances(image: ImageGrid, labeled: LabeledVoxelSet, n_classes: int) -> np.ndarray:
    """d_k per voxel: distance to the nearest labeled voxel of class k in intensity space."""
    if len(labeled) == 0:
        raise ArgumentError("at least one labeled voxel is required")
    data = image.flat()
    indices, labels = labeled.indices, labeled.labels
    if np.any(indices < 0) or np.any(indices >= image.n_voxels):
        raise ArgumentError("labeled voxel index outside the image")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ArgumentError(f"labeled class outside [0, {n_classes - 1}]")

    distances = np.empty((image.n_voxels, n_classes))
    for k in range(n_classes):
        prototypes = data[indices[labels == k]]
        if prototypes.shape[0] == 0:
            raise ArgumentError(f"class {k} has no labeled voxel")
        distances[:, k] = _distances(data, prototypes).min(axis=1)
    return distances


def knn_init(
    image: ImageGrid,
    labeled: LabeledVoxelSet,
    n_classes: int,
    kernel_width: float = DEFAULT_KERNEL_WIDTH,
) -> ResponsibilityField:
    """ρ_ik ∝ exp(−d_k / kernel_width) with labeled voxels set to their exact one-hot rows."""
    rho = distance_kernel(_class_distances(image, labeled, n_classes), kernel_width)
    labeled.to_clamps().apply(rho)
    return ResponsibilityField(rho.reshape(image.height, image.width, n_classes))


def nearest_prototype_labels(image: ImageGrid, labeled: LabeledVoxelSet, n_classes: int) -> LabelField:
    """1-NN decision in intensity space, ties to the lowest class index."""
    distances = _class_distances(image, labeled, n_classes)
    return LabelField(np.argmin(distances, axis=1).reshape(image.height, image.width), n_classes)


def sample_labels(
    truth: LabelField,
    per_class: int,
    seed: int,
    image: Optional[ImageGrid] = None,
    classes: Optional[Sequence[int]] = None,
) -> LabeledVoxelSet:
    """Draw ``per_class`` voxels of every class uniformly without replacement."""
    if per_class < 0:
        raise ArgumentError(f"per_class must be >= 0, got {per_class}")
    if per_class == 0:
        return LabeledVoxelSet()

    rng = np.random.default_rng(seed)
    flat = truth.labels.reshape(-1)
    pairs = []
    for k in classes if classes is not None else range(truth.n_classes):
        candidates = np.flatnonzero(flat == k)
        if candidates.size < per_class:
            raise ArgumentError(
                f"class {k} has {candidates.size} voxels, cannot sample {per_class}"
            )
        chosen = np.sort(rng.choice(candidates, size=per_class, replace=False))
        pairs.extend((int(i), int(k)) for i in chosen)
    return LabeledVoxelSet.from_pairs(pairs, image)

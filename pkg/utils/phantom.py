"""
合成ファントム生成
楕円の「頭部」の中に同心の不規則な帯（液体・灰白質・白質）を置き、クラスごとのガウス雑音で画像を作る
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .errors import ArgumentError, PhantomGenerationError
from .grid import ImageGrid, LabelField, Mask

logger = logging.getLogger(__name__)

DEFAULT_MEANS = (0.05, 0.35, 0.65, 0.9)
DEFAULT_STDDEV = 0.05
DEFAULT_PERTURBATION = 0.08
# 各クラスが占めるべき最小の割合
MIN_CLASS_FRACTION = 0.01
MAX_REGENERATIONS = 10

# 頭部楕円の半径（画像の半分に対する比）
_HEAD_RADIUS_ROWS = 0.9
_HEAD_RADIUS_COLS = 0.8
# 帯が占める正規化半径の範囲
_BAND_SPAN = 0.8


def _default_means(n_classes: int) -> Tuple[float, ...]:
    if n_classes == len(DEFAULT_MEANS):
        return DEFAULT_MEANS
    return tuple(float(v) for v in np.linspace(0.05, 0.9, n_classes))


@dataclass(frozen=True)
class PhantomSpec:
    """Shape and intensity model of a synthetic head phantom; class 0 is background."""

    height: int = 64
    width: int = 64
    n_classes: int = 4
    means: Optional[Tuple[float, ...]] = None
    stddevs: Optional[Tuple[float, ...]] = None
    perturbation: float = DEFAULT_PERTURBATION

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ArgumentError(f"phantom size must be positive, got {self.height}x{self.width}")
        if self.n_classes < 1:
            raise ArgumentError(f"phantom needs at least one class, got {self.n_classes}")
        means = tuple(float(m) for m in (self.means if self.means is not None else _default_means(self.n_classes)))
        stddevs = tuple(
            float(s) for s in (self.stddevs if self.stddevs is not None else (DEFAULT_STDDEV,) * self.n_classes)
        )
        if len(means) != self.n_classes or len(stddevs) != self.n_classes:
            raise ArgumentError(
                f"phantom with {self.n_classes} classes needs as many means and stddevs, "
                f"got {len(means)} and {len(stddevs)}"
            )
        if any(not 0.0 <= m <= 1.0 for m in means):
            raise ArgumentError(f"class means must lie in [0, 1], got {means}")
        if any(not s > 0 for s in stddevs):
            raise ArgumentError(f"class stddevs must be positive, got {stddevs}")
        if self.perturbation < 0:
            raise ArgumentError(f"perturbation must be non-negative, got {self.perturbation}")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stddevs", stddevs)

    def with_noise(self, stddev: float) -> "PhantomSpec":
        return PhantomSpec(
            self.height, self.width, self.n_classes, self.means, (float(stddev),) * self.n_classes, self.perturbation
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "height": self.height,
            "width": self.width,
            "classes": self.n_classes,
            "means": list(self.means),
            "stddevs": list(self.stddevs),
            "perturbation": self.perturbation,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PhantomSpec":
        n_classes = int(data.get("classes", 4))
        stddevs = data.get("stddevs")
        if isinstance(stddevs, (int, float)):
            stddevs = (float(stddevs),) * n_classes
        return cls(
            height=int(data.get("height", 64)),
            width=int(data.get("width", 64)),
            n_classes=n_classes,
            means=tuple(data["means"]) if data.get("means") is not None else None,
            stddevs=tuple(stddevs) if stddevs is not None else None,
            perturbation=float(data.get("perturbation", DEFAULT_PERTURBATION)),
        )

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "PhantomSpec":
        return cls.from_dict(config.get("phantom", {}) or {})


@dataclass(frozen=True)
class Phantom:
    image: ImageGrid
    truth: LabelField
    mask: Mask
    spec: PhantomSpec = field(repr=False)


def _head_coordinates(spec: PhantomSpec):
    rows = np.arange(spec.height) + 0.5 - spec.height / 2.0
    cols = np.arange(spec.width) + 0.5 - spec.width / 2.0
    v, u = np.meshgrid(rows / (spec.height / 2.0), cols / (spec.width / 2.0), indexing="ij")
    y = v / _HEAD_RADIUS_ROWS
    x = u / _HEAD_RADIUS_COLS
    radius = np.hypot(x, y)
    angle = np.arctan2(y, x)
    return radius, angle, (u + 1.0) / 2.0, (v + 1.0) / 2.0


def _band_labels(spec: PhantomSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    radius, angle, u, v = _head_coordinates(spec)
    inside = radius <= 1.0

    amplitude = spec.perturbation
    displacement = np.zeros_like(radius)
    for order in (2, 3, 4):
        a = rng.uniform(-amplitude, amplitude)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        displacement += a * np.sin(order * angle + phase)
    b = rng.uniform(-amplitude, amplitude)
    psi_u, psi_v = rng.uniform(0.0, 2.0 * np.pi, size=2)
    displacement += b * np.sin(2.0 * np.pi * u + psi_u) * np.sin(2.0 * np.pi * v + psi_v)

    effective = radius * (1.0 + displacement)
    width = _BAND_SPAN / (spec.n_classes - 1)
    band = np.clip(np.floor((1.0 - effective) / width), 0, spec.n_classes - 2).astype(np.int64)
    labels = np.where(inside, 1 + band, 0)
    return labels, inside


def _class_fractions(labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.bincount(labels.reshape(-1), minlength=n_classes) / labels.size


def generate_phantom(spec: PhantomSpec, seed: int) -> Phantom:
    """Seeded phantom: truth labels from the geometry, intensities x = μ_y + ε clipped to [0, 1]."""
    rng = np.random.default_rng(seed)

    if spec.n_classes == 1:
        labels = np.zeros((spec.height, spec.width), dtype=np.int64)
        inside = np.ones((spec.height, spec.width), dtype=bool)
    else:
        for attempt in range(1, MAX_REGENERATIONS + 1):
            labels, inside = _band_labels(spec, rng)
            fractions = _class_fractions(labels, spec.n_classes)
            if np.all(fractions >= MIN_CLASS_FRACTION):
                break
            logger.debug(
                f"phantom attempt {attempt}: class fractions {np.round(fractions, 4).tolist()} below "
                f"{MIN_CLASS_FRACTION}, regenerating"
            )
        else:
            raise PhantomGenerationError(
                f"a class covers less than {MIN_CLASS_FRACTION:.0%} of the voxels after "
                f"{MAX_REGENERATIONS} attempts ({spec.height}x{spec.width}, K={spec.n_classes})"
            )
        # 背景はマスク外、それ以外はマスク内
        assert np.array_equal(labels == 0, ~inside)

    means = np.asarray(spec.means)[labels]
    stddevs = np.asarray(spec.stddevs)[labels]
    intensities = np.clip(rng.normal(means, stddevs), 0.0, 1.0)

    return Phantom(
        image=ImageGrid(intensities),
        truth=LabelField(labels, spec.n_classes),
        mask=Mask(inside),
        spec=spec,
    )

"""
局所Hidden Potts MRF
ボクセルごとの対数確率、βに関する勾配、ソース側セグメンテーションからのβ最尤推定
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import ArgumentError, NumericError
from .grid import LabelField, neighbor_class_counts, one_hot

logger = logging.getLogger(__name__)

DEFAULT_BETA_MAX = 10.0
# 単一センター実験で使う固定値
DEFAULT_FIXED_BETA = 0.1
MAX_STEP_HALVINGS = 30


@dataclass(frozen=True)
class SmoothnessParams:
    """Per-class Potts interaction strengths, 0 <= β_k <= β_max."""

    beta: np.ndarray
    beta_max: float = DEFAULT_BETA_MAX

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64).reshape(-1)
        if beta.size < 1:
            raise ArgumentError("beta must have at least one class")
        if not self.beta_max > 0:
            raise ArgumentError(f"beta_max must be positive, got {self.beta_max}")
        if not np.all(np.isfinite(beta)) or np.any(beta < 0) or np.any(beta > self.beta_max):
            raise ArgumentError(f"beta values must lie in [0, {self.beta_max}], got {beta}")
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)

    @property
    def n_classes(self) -> int:
        return self.beta.size

    @classmethod
    def uniform(cls, n_classes: int, value: float, beta_max: float = DEFAULT_BETA_MAX):
        return cls(np.full(n_classes, float(value)), beta_max)

    @classmethod
    def zeros(cls, n_classes: int, beta_max: float = DEFAULT_BETA_MAX):
        return cls.uniform(n_classes, 0.0, beta_max)


@dataclass(frozen=True)
class BetaFitConfig:
    step_size: float = 1e-3
    max_iterations: int = 1000
    tolerance: float = 1e-6
    beta_max: float = DEFAULT_BETA_MAX
    # 全クラスで一つのβを共有する（組織非依存モデル）
    shared: bool = False

    def __post_init__(self):
        for name in ("step_size", "max_iterations", "tolerance", "beta_max"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"BetaFitConfig.{name} must be positive")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "BetaFitConfig":
        potts_config = config.get("potts", {}) or {}
        return cls(
            step_size=float(potts_config.get("step_size", 1e-3)),
            max_iterations=int(potts_config.get("max_iterations", 1000)),
            tolerance=float(potts_config.get("tolerance", 1e-6)),
            beta_max=float(potts_config.get("beta_max", DEFAULT_BETA_MAX)),
            shared=bool(potts_config.get("shared", False)),
        )


@dataclass(frozen=True)
class BetaFitResult:
    params: SmoothnessParams
    iterations: int
    objective: float
    converged: bool
    shared: bool = False
    history: Tuple[float, ...] = field(default=(), repr=False)


def _check_classes(labels: LabelField, beta: SmoothnessParams) -> None:
    if labels.n_classes != beta.n_classes:
        raise ArgumentError(
            f"label field has {labels.n_classes} classes but beta has {beta.n_classes}"
        )


def _potts_terms(labels: LabelField, beta: np.ndarray):
    counts = neighbor_class_counts(labels).values.reshape(-1, labels.n_classes)
    encoded = one_hot(labels)
    energies = beta * counts
    log_norm = logsumexp(energies, axis=1)
    return counts, encoded, energies, log_norm


def potts_log_prob(labels: LabelField, beta: SmoothnessParams) -> Tuple[np.ndarray, float]:
    """log p(y_i | y_δi, β) per voxel (H, W) and summed over the field."""
    _check_classes(labels, beta)
    counts, encoded, energies, log_norm = _potts_terms(labels, beta.beta)
    per_voxel = np.sum(encoded * energies, axis=1) - log_norm
    per_voxel = per_voxel.reshape(labels.shape)
    return per_voxel, float(per_voxel.sum())


def potts_gradient(labels: LabelField, beta: SmoothnessParams) -> np.ndarray:
    """∂/∂β_k of the summed log-likelihood, a K-vector."""
    _check_classes(labels, beta)
    counts, encoded, energies, log_norm = _potts_terms(labels, beta.beta)
    softmax = np.exp(energies - log_norm[:, np.newaxis])
    return np.sum(encoded * counts - counts * softmax, axis=0)


def _objective(segmentations: Sequence[LabelField], beta: np.ndarray, beta_max: float) -> float:
    params = SmoothnessParams(beta, beta_max)
    total = sum(potts_log_prob(labels, params)[1] for labels in segmentations)
    if not np.isfinite(total):
        raise NumericError(f"Potts log-likelihood is not finite at beta={beta}", stage="fit-beta")
    return float(total)


def _gradient(segmentations: Sequence[LabelField], beta: np.ndarray, beta_max: float, shared: bool) -> np.ndarray:
    params = SmoothnessParams(beta, beta_max)
    grad = np.sum([potts_gradient(labels, params) for labels in segmentations], axis=0)
    if shared:
        # 共有βでは全成分が同じ方向に動く
        grad = np.full_like(grad, grad.sum())
    return grad


def fit_beta(segmentations: Sequence[LabelField], config: BetaFitConfig = BetaFitConfig()) -> BetaFitResult:
    """Maximum-likelihood β by projected gradient ascent onto [0, β_max].

    Backtracking halves the step until the objective does not decrease, so the
    accepted objective sequence is monotone.
    """
    segmentations = list(segmentations)
    if not segmentations:
        raise ArgumentError("fit_beta needs at least one segmentation")
    n_classes = {labels.n_classes for labels in segmentations}
    if len(n_classes) != 1:
        raise ArgumentError(f"segmentations disagree on the class count: {sorted(n_classes)}")
    n_classes = n_classes.pop()

    beta = np.zeros(n_classes)
    objective = _objective(segmentations, beta, config.beta_max)
    history = [objective]
    step = config.step_size
    converged = False

    for _ in range(config.max_iterations):
        grad = _gradient(segmentations, beta, config.beta_max, config.shared)
        projected = np.clip(beta + grad, 0.0, config.beta_max) - beta
        if np.linalg.norm(projected) < config.tolerance:
            converged = True
            break

        accepted = False
        for _halving in range(MAX_STEP_HALVINGS + 1):
            candidate = np.clip(beta + step * grad, 0.0, config.beta_max)
            candidate_objective = _objective(segmentations, candidate, config.beta_max)
            if candidate_objective >= objective:
                accepted = True
                break
            step /= 2.0

        if not accepted or np.array_equal(candidate, beta):
            # 上昇方向が数値的に尽きた
            converged = True
            break

        beta, objective = candidate, candidate_objective
        history.append(objective)
        logger.debug(f"fit_beta step {len(history) - 1}: objective={objective:.6f} step={step:.3g}")
        step *= 2.0

    iterations = len(history) - 1
    logger.info(
        f"fit_beta finished after {iterations} iterations "
        f"(converged={converged}, objective={objective:.6f}, beta={np.round(beta, 4).tolist()})"
    )
    return BetaFitResult(
        params=SmoothnessParams(beta, config.beta_max),
        iterations=iterations,
        objective=objective,
        converged=converged,
        shared=config.shared,
        history=tuple(history),
    )

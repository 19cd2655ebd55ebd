"""
変分ベイズ推論エンジン
Pottsの近傍項付きE-step、Normal-Wishart共役事後分布のM-step、半教師ありのクランプ、反復ループ
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.special import softmax

from .errors import ArgumentError, NumericError
from .grid import (
    ImageGrid,
    LabelField,
    ResponsibilityField,
    argmax_labels,
    check_same_shape,
    neighbor_class_counts,
)
from .potts import SmoothnessParams
from .special import expect_log_gaussian, expect_log_mixture_weights

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-12
# これ未満の有効カウントは空クラスとして事前分布に戻す
EMPTY_CLASS_COUNT = 1e-10


def _is_spd(matrix: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True)
class NormalWishartParams:
    """Per-class Dirichlet / Normal-Wishart hyperparameters (α, υ, γ, ν, Δ)."""

    alpha: np.ndarray
    upsilon: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64).reshape(-1)
        n_classes = alpha.size
        upsilon = np.array(self.upsilon, dtype=np.float64).reshape(n_classes, -1)
        dim = upsilon.shape[1]
        gamma = np.array(self.gamma, dtype=np.float64).reshape(-1)
        nu = np.array(self.nu, dtype=np.float64).reshape(-1)
        delta = np.array(self.delta, dtype=np.float64).reshape(n_classes, dim, dim)

        if gamma.size != n_classes or nu.size != n_classes:
            raise ArgumentError("alpha, gamma and nu must all have one entry per class")
        if not np.all(alpha > 0) or not np.all(gamma > 0):
            raise ArgumentError("alpha and gamma must be positive")
        if not np.all(nu > dim - 1):
            raise ArgumentError(f"Wishart degrees of freedom must exceed {dim - 1}, got {nu}")
        for k in range(n_classes):
            if not _is_spd(delta[k]):
                raise ArgumentError(f"delta for class {k} is not symmetric positive-definite")

        for name, value in (("alpha", alpha), ("upsilon", upsilon), ("gamma", gamma), ("nu", nu), ("delta", delta)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def n_classes(self) -> int:
        return self.alpha.size

    @property
    def dim(self) -> int:
        return self.upsilon.shape[1]

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name).tolist() for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        return cls(**{f.name: data[f.name] for f in fields(cls)})


class PriorHyperparams(NormalWishartParams):
    """α₀, υ₀, γ₀, ν₀, Δ₀."""

    @classmethod
    def weak(cls, image: ImageGrid, n_classes: int) -> "PriorHyperparams":
        """Weakly informative defaults anchored on intensity quantiles.

        α₀ = γ₀ = 1, ν₀ = D + 1, υ₀ at K evenly spaced quantiles, Δ₀ = I / var.
        """
        data = image.flat()
        dim = image.channels
        quantiles = (np.arange(n_classes) + 0.5) / n_classes
        upsilon = np.quantile(data, quantiles, axis=0).reshape(n_classes, dim)
        variance = float(np.mean(np.var(data, axis=0)))
        if not variance > 0:
            variance = 1.0
        delta = np.tile(np.eye(dim) / variance, (n_classes, 1, 1))
        return cls(
            alpha=np.ones(n_classes),
            upsilon=upsilon,
            gamma=np.ones(n_classes),
            nu=np.full(n_classes, dim + 1.0),
            delta=delta,
        )


class PosteriorHyperparams(NormalWishartParams):
    """α, υ, γ, ν, Δ after an M-step."""


def _weighted_means(s0: np.ndarray, s1: np.ndarray) -> np.ndarray:
    safe = np.where(s0 > 0, s0, 1.0)
    return np.where(s0[:, np.newaxis] > 0, s1 / safe[:, np.newaxis], 0.0)


@dataclass(frozen=True)
class SufficientStats:
    s0: np.ndarray  # (K,)
    s1: np.ndarray  # (K, D)
    s2: np.ndarray  # (K, D, D)

    @property
    def means(self) -> np.ndarray:
        """x̄_k = S¹_k / S⁰_k (zero rows for empty classes)."""
        return _weighted_means(self.s0, self.s1)


@dataclass(frozen=True)
class ClampSet:
    """Observed (voxel, class) labels whose responsibilities stay one-hot."""

    entries: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        entries = tuple((int(i), int(k)) for i, k in self.entries)
        voxels = [i for i, _ in entries]
        if len(set(voxels)) != len(voxels):
            raise ArgumentError("at most one clamp per voxel is allowed")
        if any(i < 0 or k < 0 for i, k in entries):
            raise ArgumentError("clamp voxel and class indices must be non-negative")
        object.__setattr__(self, "entries", tuple(sorted(entries)))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def voxels(self) -> np.ndarray:
        return np.array([i for i, _ in self.entries], dtype=np.int64)

    @property
    def classes(self) -> np.ndarray:
        return np.array([k for _, k in self.entries], dtype=np.int64)

    def validate(self, n_voxels: int, n_classes: int) -> None:
        for i, k in self.entries:
            if i >= n_voxels:
                raise ArgumentError(f"clamped voxel {i} is outside the image ({n_voxels} voxels)")
            if k >= n_classes:
                raise ArgumentError(f"clamped class {k} is not below K={n_classes}")

    def apply(self, flat_rho: np.ndarray) -> np.ndarray:
        """Overwrite clamped rows of an (N, K) array in place with one-hot rows."""
        if self.entries:
            voxels = self.voxels
            flat_rho[voxels] = 0.0
            flat_rho[voxels, self.classes] = 1.0
        return flat_rho

    def rows_exact(self, flat_rho: np.ndarray) -> bool:
        if not self.entries:
            return True
        expected = np.zeros((len(self.entries), flat_rho.shape[1]))
        expected[np.arange(len(self.entries)), self.classes] = 1.0
        return bool(np.array_equal(flat_rho[self.voxels], expected))


@dataclass(frozen=True)
class VbConfig:
    max_iterations: int = 30
    tolerance: float = 1e-5

    def __post_init__(self):
        if self.max_iterations < 1 or not self.tolerance > 0:
            raise ArgumentError("VbConfig.max_iterations and tolerance must be positive")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "VbConfig":
        vb_config = config.get("vb", {}) or {}
        return cls(
            max_iterations=int(vb_config.get("max_iterations", 30)),
            tolerance=float(vb_config.get("tolerance", 1e-5)),
        )


@dataclass(frozen=True)
class VbResult:
    responsibilities: ResponsibilityField
    posterior: PosteriorHyperparams
    trace: Tuple[float, ...]
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def final_change(self) -> float:
        return self.trace[-1] if self.trace else math.nan


def _check_model(image: ImageGrid, params: NormalWishartParams, beta: SmoothnessParams, rho: ResponsibilityField):
    check_same_shape(image, rho)
    if not params.n_classes == beta.n_classes == rho.n_classes:
        raise ArgumentError(
            f"class counts disagree: hyperparams K={params.n_classes}, "
            f"beta K={beta.n_classes}, responsibilities K={rho.n_classes}"
        )
    if params.dim != image.channels:
        raise ArgumentError(f"hyperparams have D={params.dim} but the image has D={image.channels}")


def e_step(
    image: ImageGrid,
    post: PosteriorHyperparams,
    beta: SmoothnessParams,
    rho_prev: ResponsibilityField,
    clamps: ClampSet = ClampSet(),
) -> ResponsibilityField:
    """Responsibilities with the mean-field Potts term β_k Σ_j ρ_jk from ``rho_prev``."""
    _check_model(image, post, beta, rho_prev)
    data = image.flat()
    n_classes = post.n_classes
    clamps.validate(image.n_voxels, n_classes)

    neighbor_weights = neighbor_class_counts(rho_prev).values.reshape(-1, n_classes)
    log_weights = expect_log_mixture_weights(post.alpha)

    log_r = np.empty((image.n_voxels, n_classes))
    for k in range(n_classes):
        log_r[:, k] = (
            log_weights[k]
            + expect_log_gaussian(data, post.upsilon[k], post.gamma[k], post.nu[k], post.delta[k])
            + beta.beta[k] * neighbor_weights[:, k]
        )
        if not np.all(np.isfinite(log_r[:, k])):
            raise NumericError(f"non-finite E-step expectations for class {k}", stage="e-step")

    rho = softmax(log_r, axis=1)
    clamps.apply(rho)

    if np.max(np.abs(rho.sum(axis=1) - 1.0)) > NORMALIZATION_TOLERANCE:
        raise NumericError("responsibilities lost normalization", stage="e-step")
    if not clamps.rows_exact(rho):
        raise NumericError("clamped responsibilities are not one-hot", stage="e-step")

    return ResponsibilityField(rho.reshape(image.height, image.width, n_classes))


def compute_stats(image: ImageGrid, rho: ResponsibilityField) -> SufficientStats:
    """S⁰, S¹ and the scatter S² about the responsibility-weighted mean."""
    check_same_shape(image, rho)
    data = image.flat()
    weights = rho.flat()

    s0 = weights.sum(axis=0)
    s1 = weights.T @ data
    means = _weighted_means(s0, s1)
    centered = data[:, np.newaxis, :] - means[np.newaxis, :, :]
    s2 = np.einsum("nk,nki,nkj->kij", weights, centered, centered)
    return SufficientStats(s0=s0, s1=s1, s2=s2)


def m_step(priors: PriorHyperparams, stats: SufficientStats) -> PosteriorHyperparams:
    """Conjugate Normal-Wishart update.

    The scatter and the prior-mismatch term use the normalized mean x̄_k = S¹_k / S⁰_k.
    """
    n_classes, dim = priors.n_classes, priors.dim
    alpha = priors.alpha.copy()
    gamma = priors.gamma.copy()
    nu = priors.nu.copy()
    upsilon = priors.upsilon.copy()
    delta = priors.delta.copy()
    means = stats.means

    for k in range(n_classes):
        count = stats.s0[k]
        if count < EMPTY_CLASS_COUNT:
            continue

        gamma0 = priors.gamma[k]
        alpha[k] = priors.alpha[k] + count
        gamma[k] = gamma0 + count
        nu[k] = priors.nu[k] + count
        upsilon[k] = (gamma0 * priors.upsilon[k] + stats.s1[k]) / (gamma0 + count)

        deviation = (means[k] - priors.upsilon[k]).reshape(dim, 1)
        delta_inv = (
            np.linalg.inv(priors.delta[k])
            + stats.s2[k]
            + (gamma0 * count) / (gamma0 + count) * (deviation @ deviation.T)
        )
        try:
            updated = np.linalg.inv(delta_inv)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"posterior scale for class {k} is singular", stage="m-step") from exc
        updated = 0.5 * (updated + updated.T)
        if not _is_spd(updated):
            raise NumericError(f"posterior scale for class {k} is not positive-definite", stage="m-step")
        delta[k] = updated

    return PosteriorHyperparams(alpha=alpha, upsilon=upsilon, gamma=gamma, nu=nu, delta=delta)


def fit(
    image: ImageGrid,
    priors: PriorHyperparams,
    beta: SmoothnessParams,
    rho_init: ResponsibilityField,
    clamps: ClampSet = ClampSet(),
    config: VbConfig = VbConfig(),
) -> VbResult:
    """Alternate M-step and E-step until the mean |Δρ| drops below the tolerance."""
    _check_model(image, priors, beta, rho_init)
    clamps.validate(image.n_voxels, priors.n_classes)

    initial = rho_init.flat().copy()
    clamps.apply(initial)
    rho = ResponsibilityField(initial.reshape(rho_init.values.shape))

    trace = []
    converged = False
    posterior = None
    for iteration in range(1, config.max_iterations + 1):
        posterior = m_step(priors, compute_stats(image, rho))
        updated = e_step(image, posterior, beta, rho, clamps)
        change = float(np.mean(np.abs(updated.values - rho.values)))
        if not math.isfinite(change):
            raise NumericError(f"responsibility change is not finite at iteration {iteration}", stage="vb")
        trace.append(change)
        rho = updated
        logger.debug(f"VB iteration {iteration}/{config.max_iterations}: mean |Δρ| = {change:.3e}")
        if change < config.tolerance:
            converged = True
            break

    logger.info(
        f"VB finished after {len(trace)} iterations (converged={converged}, final change={trace[-1]:.3e})"
    )
    return VbResult(responsibilities=rho, posterior=posterior, trace=tuple(trace), converged=converged)


def segment(rho: ResponsibilityField) -> LabelField:
    return argmax_labels(rho)


def uniform_responsibilities(height: int, width: int, n_classes: int, clamps: Optional[ClampSet] = None) -> ResponsibilityField:
    values = np.full((height * width, n_classes), 1.0 / n_classes)
    if clamps is not None:
        clamps.apply(values)
    return ResponsibilityField(values.reshape(height, width, n_classes))

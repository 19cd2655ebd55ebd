"""
特殊関数と事後期待値
E-stepが使う digamma と Dirichlet / Normal-Wishart の期待値
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

from .errors import DomainError, NumericError

ArrayLike = Union[float, np.ndarray]

# 漸近展開を使い始めるしきい値
_DIGAMMA_SHIFT = 6.0

# B_2n / (2n) for n = 1..7
_ASYMPTOTIC_COEFFS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

LOG_2PI = math.log(2.0 * math.pi)


def digamma(x: ArrayLike) -> ArrayLike:
    """ψ(x) for x > 0 (scalar or array).

    ψ(x+1) = ψ(x) + 1/x で x >= 6 まで引き上げてから漸近展開を適用する。
    """
    values = np.asarray(x, dtype=np.float64)
    if values.size and not np.all(values > 0):
        raise DomainError(f"digamma is only defined for x > 0, got min {values.min()}")

    shifted = values.copy()
    correction = np.zeros_like(shifted)
    small = shifted < _DIGAMMA_SHIFT
    while np.any(small):
        correction[small] -= 1.0 / shifted[small]
        shifted[small] += 1.0
        small = shifted < _DIGAMMA_SHIFT

    inv_sq = 1.0 / (shifted * shifted)
    series = np.zeros_like(shifted)
    # Horner in x^-2, highest order first
    for coeff in reversed(_ASYMPTOTIC_COEFFS):
        series = (series + coeff) * inv_sq
    result = np.log(shifted) - 0.5 / shifted - series + correction

    if np.ndim(x) == 0:
        return float(result)
    return result


def expect_log_mixture_weights(alpha: np.ndarray) -> np.ndarray:
    """E[log π_k] = ψ(α_k) − ψ(Σα)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if not np.all(alpha > 0):
        raise DomainError(f"Dirichlet concentrations must be positive, got {alpha}")
    return digamma(alpha) - digamma(float(alpha.sum()))


def log_det_spd(matrix: np.ndarray) -> float:
    """log|A| through a Cholesky factor; fails loudly on non-SPD input."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    try:
        chol = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"matrix is not symmetric positive-definite: {exc}") from exc
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def expect_log_det_precision(nu: float, delta: np.ndarray) -> float:
    """E[log|Λ|] = Σ_d ψ((ν + 1 − d)/2) + D log 2 + log|Δ|."""
    delta = np.atleast_2d(np.asarray(delta, dtype=np.float64))
    dim = delta.shape[0]
    if not nu > dim - 1:
        raise DomainError(f"Wishart degrees of freedom {nu} too low for dimension {dim}")
    half_dofs = (nu + 1.0 - np.arange(1, dim + 1)) / 2.0
    return float(np.sum(digamma(half_dofs)) + dim * math.log(2.0) + log_det_spd(delta))


def expect_quadratic(
    x: np.ndarray, upsilon: np.ndarray, gamma: float, nu: float, delta: np.ndarray
) -> ArrayLike:
    """E[(x − μ) Λ (x − μ)ᵀ] = D/γ + ν (x − υ) Δ (x − υ)ᵀ.

    ``x`` may be a single D-vector or an (N, D) stack; the result follows.
    """
    if not gamma > 0:
        raise DomainError(f"precision scaling gamma must be positive, got {gamma}")
    delta = np.atleast_2d(np.asarray(delta, dtype=np.float64))
    diff = np.asarray(x, dtype=np.float64) - np.asarray(upsilon, dtype=np.float64)
    dim = delta.shape[0]
    if diff.ndim == 0:
        diff = diff.reshape(1)
    quad = np.einsum("...i,ij,...j->...", diff, delta, diff)
    result = dim / gamma + nu * quad
    if np.ndim(result) == 0:
        return float(result)
    return result


def expect_log_gaussian(
    x: np.ndarray, upsilon: np.ndarray, gamma: float, nu: float, delta: np.ndarray
) -> ArrayLike:
    """E[log N(x | μ, Λ⁻¹)] under the Normal-Wishart posterior (υ, γ, ν, Δ)."""
    delta = np.atleast_2d(np.asarray(delta, dtype=np.float64))
    dim = delta.shape[0]
    log_det = expect_log_det_precision(nu, delta)
    quad = expect_quadratic(x, upsilon, gamma, nu, delta)
    return -0.5 * dim * LOG_2PI + 0.5 * log_det - 0.5 * quad

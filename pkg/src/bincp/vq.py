"""Post-hoc sign quantization baseline (VQ-CP)."""

from __future__ import annotations

import logging

import numpy as np

from .cp import DenseFactors, PackedFactors, pack_signs

logger = logging.getLogger(__name__)


class DegenerateMatrix(ValueError):
    pass


def vq_quantize(X: np.ndarray) -> tuple[np.ndarray, float]:
    """Best alpha * sign(X) approximation of X in Frobenius norm.

    Returns the packed sign bits (``X >= 0`` maps to +1) and alpha, the mean
    absolute value of X.

    Raises:
        DegenerateMatrix: X is all zeros, so alpha would be 0.
    """
    X = np.asarray(X, dtype=np.float64)
    alpha = float(np.abs(X).mean())
    if alpha == 0.0:
        raise DegenerateMatrix("all-zero matrix has no positive VQ scale")
    return pack_signs(X), alpha


def vq_error(X: np.ndarray, signs: np.ndarray, alpha: float) -> float:
    """Squared Frobenius error of alpha * signs against X (signs in {+1, -1})."""
    X = np.asarray(X, dtype=np.float64)
    return float(np.sum((X - alpha * signs) ** 2))


def vq_factors(factors: DenseFactors) -> PackedFactors:
    """Quantize A, B and C independently; scores become aA*aB*aC*(2BitC - D)."""
    parts = [vq_quantize(m) for m in (factors.A, factors.B, factors.C)]
    alphas = tuple(alpha for _, alpha in parts)
    # the stored delta keeps the same coefficient when a reader ignores alphas
    delta = float(np.cbrt(alphas[0] * alphas[1] * alphas[2]))
    logger.info("VQ scales: A=%.6g B=%.6g C=%.6g", *alphas)
    return PackedFactors(
        A=parts[0][0], B=parts[1][0], C=parts[2][0],
        delta=delta, dim=factors.dim, alphas=alphas,
    )

"""Dense float64 linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. Weights are stored ``(d_out, d_in)`` and calibration activations
``(d_in, n_samples)``, one calibration position per column.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.linalg import solve_triangular

SYMMETRY_RTOL = 1e-10
INVERSE_RTOL = 1e-8


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is non-positive."""


class AsymmetricInputWarning(UserWarning):
    """Emitted when a nearly symmetric matrix is symmetrized before factoring."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite, C-contiguous float64 2-D array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def symmetrize(h: np.ndarray) -> np.ndarray:
    """Return ``h`` unchanged if symmetric within ``SYMMETRY_RTOL``, else ``(h + h.T) / 2``."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    scale = max(np.max(np.abs(h)), np.finfo(float).tiny) if h.size else 1.0
    if h.size and np.max(np.abs(h - h.T)) > SYMMETRY_RTOL * scale:
        warnings.warn("symmetrizing asymmetric input as (H + H^T)/2",
                      AsymmetricInputWarning, stacklevel=3)
        return 0.5 * (h + h.T)
    return h


def cholesky_inverse(h: np.ndarray, rtol: float = INVERSE_RTOL) -> np.ndarray:
    """Invert a symmetric positive definite matrix through its Cholesky factor.

    Args:
        h: Square SPD matrix.
        rtol: Acceptance bound on ``max|H @ H^-1 - I|`` relative to
            ``max(1, max|H^-1|)``.

    Raises:
        NotPositiveDefiniteError: If factorization fails or the residual check
            does not hold. Increase the damping of ``h`` and retry.
    """
    h = symmetrize(h)
    n = h.shape[0]
    try:
        lower = np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "matrix is not positive definite (Cholesky pivot <= 0); "
            "increase the damping percent") from exc
    lower_inv = solve_triangular(lower, np.eye(n), lower=True, check_finite=False)
    h_inv = lower_inv.T @ lower_inv
    h_inv = 0.5 * (h_inv + h_inv.T)
    resid = np.max(np.abs(h @ h_inv - np.eye(n))) if n else 0.0
    if not np.isfinite(resid) or resid > rtol * max(1.0, np.max(np.abs(h_inv))):
        raise NotPositiveDefiniteError(
            f"inverse residual {resid:.3e} exceeds tolerance; "
            "the matrix is too ill-conditioned, increase the damping percent")
    return h_inv


def frobenius_mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean of squared elementwise differences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    diff = a - b
    return float(np.mean(diff * diff))

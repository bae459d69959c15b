"""Input Gram matrix, damping, and progressive coordinate elimination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import NotPositiveDefiniteError, cholesky_inverse, symmetrize

DAMPING_FLOOR = 1e-10
PIVOT_FLOOR = 1e-300


class VanishingPivotError(ArithmeticError):
    """The inverse-Hessian diagonal at a coordinate collapsed to (near) zero."""


@dataclass
class HessianState:
    """Damped Gram matrix, its inverse, and the coordinates removed so far.

    ``h`` already includes the ``damping_lambda * I`` term. Rows and columns
    of ``h_inv`` listed in ``eliminated`` are exactly zero; the remaining
    block equals the inverse of the matching principal submatrix of ``h``.
    """

    h: np.ndarray
    h_inv: np.ndarray
    damping_lambda: float = 0.0
    eliminated: list[int] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.h.shape[0]

    def copy(self) -> "HessianState":
        return HessianState(self.h.copy(), self.h_inv.copy(), self.damping_lambda,
                            list(self.eliminated))


def accumulate_hessian(x_hat_batches) -> np.ndarray:
    """Sum of ``X X^T`` over batches whose columns are calibration samples."""
    if isinstance(x_hat_batches, np.ndarray):
        x_hat_batches = [x_hat_batches]
    h = None
    for x in x_hat_batches:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"batch must be 2-D, got shape {x.shape}")
        if h is None:
            h = np.zeros((x.shape[0], x.shape[0]))
        elif x.shape[0] != h.shape[0]:
            raise ValueError(f"batch row dimension {x.shape[0]} != {h.shape[0]}")
        h += x @ x.T
    if h is None:
        raise ValueError("no calibration batches given")
    return 0.5 * (h + h.T)


def damp_and_invert(h: np.ndarray, percent: float = 0.01) -> HessianState:
    """Add ``percent * mean(diag(h))`` (floored at 1e-10) to the diagonal and invert."""
    if not percent > 0:
        raise ValueError(f"damping percent must be positive, got {percent}")
    h = symmetrize(h)
    lam = max(percent * float(np.mean(np.diag(h))), DAMPING_FLOOR)
    damped = h + lam * np.eye(h.shape[0])
    try:
        h_inv = cholesky_inverse(damped)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            f"inversion failed with damping percent {percent}; retry with a larger value") from exc
    return HessianState(h=damped, h_inv=h_inv, damping_lambda=lam)


def eliminate_coordinate(state: HessianState, q: int) -> HessianState:
    """Remove coordinate ``q`` from ``state.h_inv`` in place and return ``state``.

    Applies ``H^-1 <- H^-1 - H^-1[:, q] H^-1[q, :] / H^-1[q, q]`` and then
    writes exact zeros into row and column ``q``.
    """
    if q in state.eliminated:
        raise ValueError(f"coordinate {q} already eliminated")
    h_inv = state.h_inv
    pivot = h_inv[q, q]
    if not abs(pivot) > PIVOT_FLOOR:
        raise VanishingPivotError(f"inverse Hessian pivot at {q} is {pivot!r}")
    col = h_inv[:, q].copy()
    h_inv -= np.outer(col, col) / pivot
    h_inv[q, :] = 0.0
    h_inv[:, q] = 0.0
    state.eliminated.append(q)
    return state

"""Independent reference solvers used to cross-check the closed-form sweep.

Nothing here touches Cholesky factors or coordinate elimination: every
solution comes from an explicit KKT system solved by LU (``numpy.linalg.solve``).
"""

from __future__ import annotations

import numpy as np


def constrained_lstsq(x, target, fixed_idx, fixed_vals, damping: float = 0.0) -> np.ndarray:
    """Minimize ``||dW x - target||_F^2 + damping ||dW||_F^2`` with ``dW[:, fixed_idx] = fixed_vals``.

    Args:
        x: ``(d_in, n)`` inputs.
        target: ``(d_out, n)`` target output perturbation.
        fixed_idx: Column indices held fixed.
        fixed_vals: ``(d_out, len(fixed_idx))`` values for those columns.
    """
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fixed_idx = np.asarray(fixed_idx, dtype=int).ravel()
    fixed_vals = np.asarray(fixed_vals, dtype=np.float64).reshape(target.shape[0], fixed_idx.size)
    d_in = x.shape[0]
    k = fixed_idx.size
    sel = np.zeros((k, d_in))
    sel[np.arange(k), fixed_idx] = 1.0
    gram = x @ x.T + damping * np.eye(d_in)
    kkt = np.zeros((d_in + k, d_in + k))
    kkt[:d_in, :d_in] = 2.0 * gram
    kkt[:d_in, d_in:] = sel.T
    kkt[d_in:, :d_in] = sel
    rhs = np.vstack([2.0 * x @ target.T, fixed_vals.T])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:d_in].T


def lstsq_objective(dw, x, target, damping: float = 0.0) -> float:
    e = np.asarray(dw) @ np.asarray(x) - np.asarray(target)
    return float(np.sum(e * e) + damping * np.sum(np.asarray(dw) ** 2))


def weighted_objective(dw, x, r, h_z) -> float:
    """Sample mean of ``(dW x_i - r_i)^T H_z (dW x_i - r_i)``."""
    e = np.asarray(dw) @ np.asarray(x) - np.asarray(r)
    return float(np.einsum("ij,ij->j", e, np.asarray(h_z) @ e).mean())


def weighted_constrained_lstsq(x, r, h_z, q: int, d) -> np.ndarray:
    """Minimize :func:`weighted_objective` over ``dW`` with ``dW[:, q] = d``.

    Works on the row-major vectorization of ``dW`` with the Kronecker
    curvature ``H_z (x) X X^T``, so output rows stay coupled unless ``H_z`` is
    diagonal.
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    h_z = np.asarray(h_z, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64).ravel()
    d_out, d_in = r.shape[0], x.shape[0]
    nvar = d_out * d_in
    quad = np.kron(h_z, x @ x.T)
    lin = (h_z @ r @ x.T).ravel()
    sel = np.zeros((d_out, nvar))
    sel[np.arange(d_out), np.arange(d_out) * d_in + q] = 1.0
    kkt = np.zeros((nvar + d_out, nvar + d_out))
    kkt[:nvar, :nvar] = 2.0 * quad
    kkt[:nvar, nvar:] = sel.T
    kkt[nvar:, :nvar] = sel
    rhs = np.concatenate([2.0 * lin, d])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:nvar].reshape(d_out, d_in)


def random_spd(rng: np.random.Generator, d: int, cond_floor: float = 0.1) -> np.ndarray:
    a = rng.standard_normal((d, d))
    return a @ a.T + cond_floor * d * np.eye(d)

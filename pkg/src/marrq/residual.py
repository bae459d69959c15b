"""Cross-layer activation residual, module objective, and HA bias terms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tensor_core import frobenius_mse


@dataclass(frozen=True)
class ResidualTarget:
    """``r = w X - w X_hat`` and its correlation ``r X_hat^T`` with the quantized input."""

    r: np.ndarray
    cross_corr: np.ndarray

    @classmethod
    def zero(cls, d_out: int, d_in: int, n: int) -> "ResidualTarget":
        return cls(np.zeros((d_out, n)), np.zeros((d_out, d_in)))


def compute_residual(w, x_fp, x_hat) -> ResidualTarget:
    w = np.asarray(w, dtype=np.float64)
    x_fp = np.asarray(x_fp, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_fp.shape != x_hat.shape:
        raise ValueError(f"FP and quantized inputs differ in shape: {x_fp.shape} vs {x_hat.shape}")
    if w.ndim != 2 or w.shape[1] != x_fp.shape[0]:
        raise ValueError(f"weight {w.shape} incompatible with inputs {x_fp.shape}")
    r = w @ (x_fp - x_hat)
    return ResidualTarget(r=r, cross_corr=r @ x_hat.T)


def module_objective(z_fp, z_quant) -> float:
    """Output MSE between the FP module output and its quantized counterpart."""
    return frobenius_mse(z_fp, z_quant)


class BiasTerms(NamedTuple):
    term_w: float
    term_cross: float
    term_rr: float
    signed_total: float


def bias_terms_per_sample(dw, x_hat, r, delta_hz) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-column quadratic forms behind :func:`hessian_bias_decomposition`.

    Returns ``|a^T D a|``, ``2|a^T D r|``, ``|r^T D r|`` and the signed
    ``(a - r)^T D (a - r)`` for each calibration column, with ``a = dw @ x_hat``.
    """
    dw = np.asarray(dw, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    delta_hz = np.asarray(delta_hz, dtype=np.float64)
    a = dw @ x_hat
    d_out = a.shape[0]
    if r.shape != a.shape:
        raise ValueError(f"residual shape {r.shape} != perturbation shape {a.shape}")
    if delta_hz.shape != (d_out, d_out):
        raise ValueError(f"delta_hz must be {(d_out, d_out)}, got {delta_hz.shape}")
    scale = max(np.max(np.abs(delta_hz)), 1.0) if delta_hz.size else 1.0
    if np.max(np.abs(delta_hz - delta_hz.T)) > 1e-10 * scale:
        raise ValueError("delta_hz must be symmetric")
    da = delta_hz @ a
    dr = delta_hz @ r
    aa = np.einsum("ij,ij->j", a, da)
    ar = np.einsum("ij,ij->j", a, dr)
    rr = np.einsum("ij,ij->j", r, dr)
    # Expanded form of (a - r)^T D (a - r): with monotone rounding its magnitude
    # can never exceed the sum of the absolute terms, even in floating point.
    signed = aa - 2.0 * ar + rr
    return np.abs(aa), 2.0 * np.abs(ar), np.abs(rr), signed


def hessian_bias_decomposition(dw, x_hat, r, delta_hz) -> BiasTerms:
    """Sample means of the weight, cross, and residual HA-bias terms.

    ``abs(signed_total) <= term_w + term_cross + term_rr`` always holds.
    """
    w_term, cross, rr, signed = bias_terms_per_sample(dw, x_hat, r, delta_hz)
    if signed.size == 0:
        return BiasTerms(0.0, 0.0, 0.0, 0.0)
    return BiasTerms(float(w_term.mean()), float(cross.mean()), float(rr.mean()),
                     float(signed.mean()))

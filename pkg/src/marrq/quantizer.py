"""Uniform affine quantization: per-output-channel weights, per-token activations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCALE_FLOOR = 1e-8
NO_QUANT_BITS = 16


@dataclass(frozen=True)
class QuantConfig:
    """Bit widths and grid symmetry for a WxAy run.

    A width of 16 disables quantization for that tensor kind.
    """

    weight_bits: int = 4
    act_bits: int = 16
    weight_symmetric: bool = True
    act_symmetric: bool = False

    def __post_init__(self):
        if self.weight_bits < 2:
            raise ValueError(f"weight_bits must be >= 2, got {self.weight_bits}")
        if self.act_bits < 3:
            raise ValueError(f"act_bits must be >= 3 or 16, got {self.act_bits}")

    @property
    def label(self) -> str:
        return f"W{self.weight_bits}A{self.act_bits}"


@dataclass(frozen=True)
class ChannelQuantParams:
    scale: float
    zero_point: int
    qmin: int
    qmax: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.qmin >= self.qmax:
            raise ValueError(f"empty grid [{self.qmin}, {self.qmax}]")

    def grid(self) -> np.ndarray:
        """All representable dequantized values, ascending."""
        k = np.arange(self.qmin, self.qmax + 1, dtype=np.float64)
        return self.scale * (k - self.zero_point)


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _usable_scale(scale: float) -> float:
    # Zero or subnormal ranges would divide by zero or lose precision.
    return scale if scale >= np.finfo(np.float64).tiny else SCALE_FLOOR


def calibrate_channel(values, bits: int, symmetric: bool) -> ChannelQuantParams:
    """Min-max grid for one channel.

    Symmetric grids are ``{-(2^(b-1)-1), ..., 2^(b-1)-1}`` with zero point 0.
    Asymmetric grids are ``{0, ..., 2^b - 1}``; the calibrated range is widened
    to contain zero so constant channels stay exactly representable.
    """
    if bits < 2:
        raise ValueError(f"bits must be >= 2, got {bits}")
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot calibrate an empty channel")
    if not np.all(np.isfinite(v)):
        raise ValueError("channel contains NaN or Inf")
    if symmetric:
        qmax = 2 ** (bits - 1) - 1
        amax = float(np.max(np.abs(v)))
        scale = _usable_scale(amax / qmax)
        return ChannelQuantParams(scale=scale, zero_point=0, qmin=-qmax, qmax=qmax)
    qmax = 2 ** bits - 1
    lo = min(float(v.min()), 0.0)
    hi = max(float(v.max()), 0.0)
    scale = _usable_scale((hi - lo) / qmax)
    zero_point = int(np.clip(round_half_away(-lo / scale), 0, qmax))
    return ChannelQuantParams(scale=scale, zero_point=zero_point, qmin=0, qmax=qmax)


def quantize_dequantize(values, params: ChannelQuantParams) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    k = np.clip(round_half_away(v / params.scale + params.zero_point), params.qmin, params.qmax)
    return params.scale * (k - params.zero_point)


def weight_channel_params(weight: np.ndarray, config: QuantConfig) -> list[ChannelQuantParams] | None:
    """Per-row grids for ``weight``; ``None`` when weights are not quantized."""
    if config.weight_bits >= NO_QUANT_BITS:
        return None
    return [calibrate_channel(row, config.weight_bits, config.weight_symmetric)
            for row in np.asarray(weight, dtype=np.float64)]


def quantize_column(column, params: list[ChannelQuantParams] | None) -> np.ndarray:
    """Quantize one weight column, element ``i`` on row ``i``'s grid."""
    column = np.asarray(column, dtype=np.float64)
    if params is None:
        return column.copy()
    scale = np.array([p.scale for p in params])
    zp = np.array([p.zero_point for p in params], dtype=np.float64)
    qmin = np.array([p.qmin for p in params], dtype=np.float64)
    qmax = np.array([p.qmax for p in params], dtype=np.float64)
    k = np.clip(round_half_away(column / scale + zp), qmin, qmax)
    return scale * (k - zp)


def rtn_quantize_module(weight, config: QuantConfig) -> np.ndarray:
    """Round-to-nearest baseline: each output row quantized independently."""
    w = np.asarray(weight, dtype=np.float64)
    params = weight_channel_params(w, config)
    if params is None:
        return w.copy()
    return np.stack([quantize_dequantize(row, p) for row, p in zip(w, params)])


def quantize_activations_per_token(x, act_bits: int, symmetric: bool = False) -> np.ndarray:
    """Dynamic per-token quantization; each column of ``x`` is one token."""
    x = np.asarray(x, dtype=np.float64)
    if act_bits >= NO_QUANT_BITS:
        return x.copy()
    out = np.empty_like(x)
    for j in range(x.shape[1]):
        params = calibrate_channel(x[:, j], act_bits, symmetric)
        out[:, j] = quantize_dequantize(x[:, j], params)
    return out

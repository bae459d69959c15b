import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from marrq.quantizer import (ChannelQuantParams, QuantConfig, calibrate_channel,
                             quantize_activations_per_token, quantize_column, quantize_dequantize,
                             round_half_away, rtn_quantize_module, weight_channel_params)

finite = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False, allow_infinity=False)
channels = arrays(np.float64, st.integers(1, 16), elements=finite)


def test_round_half_away_ties():
    assert list(round_half_away(np.array([0.5, 1.5, 2.5, -0.5, -2.5]))) == [1, 2, 3, -1, -3]


def test_symmetric_grid_is_restricted():
    p = calibrate_channel([1.0, -0.5], 2, symmetric=True)
    assert (p.qmin, p.qmax, p.zero_point) == (-1, 1, 0)
    assert p.scale == 1.0


def test_asymmetric_constant_channel_is_exact():
    p = calibrate_channel(np.full(5, 3.25), 4, symmetric=False)
    assert np.array_equal(quantize_dequantize(np.full(5, 3.25), p), np.full(5, 3.25))


def test_all_zero_channel_uses_floor_scale():
    p = calibrate_channel(np.zeros(4), 3, symmetric=True)
    assert p.scale > 0
    assert np.array_equal(quantize_dequantize(np.zeros(4), p), np.zeros(4))


def test_bad_inputs():
    with pytest.raises(ValueError):
        calibrate_channel([1.0, np.nan], 4, True)
    with pytest.raises(ValueError):
        calibrate_channel([], 4, True)
    with pytest.raises(ValueError):
        calibrate_channel([1.0], 1, True)
    with pytest.raises(ValueError):
        ChannelQuantParams(scale=0.0, zero_point=0, qmin=0, qmax=3)


def test_sixteen_bits_disables_weight_quantization(rng):
    w = rng.standard_normal((3, 5))
    cfg = QuantConfig(16, 16)
    assert weight_channel_params(w, cfg) is None
    assert np.array_equal(rtn_quantize_module(w, cfg), w)
    assert np.array_equal(quantize_activations_per_token(w, 16), w)


def test_quantize_column_uses_row_grids(rng):
    w = rng.standard_normal((4, 8))
    cfg = QuantConfig(3, 16)
    params = weight_channel_params(w, cfg)
    col = quantize_column(w[:, 2], params)
    for i, p in enumerate(params):
        assert col[i] == quantize_dequantize(w[i, 2], p)
    assert np.array_equal(rtn_quantize_module(w, cfg)[:, 2], col)


def test_activation_quantization_is_per_token():
    x = np.array([[0.0, 100.0], [1.0, 200.0], [2.0, 300.0]])
    xq = quantize_activations_per_token(x, 8)
    assert np.allclose(xq[:, 0], x[:, 0], atol=2.0 / 255)
    assert np.allclose(xq[:, 1], x[:, 1], atol=300.0 / 255)


@settings(max_examples=200, deadline=None)
@given(v=channels, bits=st.sampled_from([2, 3, 4, 8]), symmetric=st.booleans())
def test_idempotent_and_on_grid(v, bits, symmetric):
    p = calibrate_channel(v, bits, symmetric)
    once = quantize_dequantize(v, p)
    assert np.array_equal(quantize_dequantize(once, p), once)
    k = once / p.scale + p.zero_point
    assert np.allclose(k, np.round(k), atol=1e-6)
    assert np.all((np.round(k) >= p.qmin) & (np.round(k) <= p.qmax))


@settings(max_examples=200, deadline=None)
@given(v=channels, bits=st.sampled_from([2, 3, 4]), symmetric=st.booleans())
def test_monotone_and_error_bound(v, bits, symmetric):
    p = calibrate_channel(v, bits, symmetric)
    s = np.sort(v)
    qs = quantize_dequantize(s, p)
    assert np.all(np.diff(qs) >= 0)
    # The calibration range lies inside the grid, so nothing clips.
    assert np.all(np.abs(qs - s) <= p.scale / 2 * (1 + 1e-9) + 1e-12)


def test_random_matrix_two_bit_error_bound(rng):
    w = rng.standard_normal((4, 8))
    for row, p in zip(w, weight_channel_params(w, QuantConfig(2, 16))):
        assert np.max(np.abs(quantize_dequantize(row, p) - row)) <= p.scale / 2 + 1e-15


@pytest.mark.parametrize("symmetric", [True, False])
def test_subnormal_channel_does_not_divide_by_zero(symmetric):
    v = np.array([5e-324, -5e-324])
    p = calibrate_channel(v, 2, symmetric)
    assert np.all(np.abs(quantize_dequantize(v, p) - v) <= p.scale / 2)

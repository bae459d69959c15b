import numpy as np
import pytest

from marrq.residual import (ResidualTarget, bias_terms_per_sample, compute_residual,
                            hessian_bias_decomposition, module_objective)


def test_residual_definition(rng):
    w = rng.standard_normal((3, 4))
    x = rng.standard_normal((4, 9))
    x_hat = x + 0.1 * rng.standard_normal((4, 9))
    t = compute_residual(w, x, x_hat)
    assert np.allclose(t.r, w @ x - w @ x_hat)
    assert np.max(np.abs(t.cross_corr - t.r @ x_hat.T)) < 1e-10


def test_identical_flows_give_zero_residual(rng):
    w = rng.standard_normal((2, 3))
    x = rng.standard_normal((3, 5))
    t = compute_residual(w, x, x)
    assert not t.r.any() and not t.cross_corr.any()
    z = ResidualTarget.zero(2, 3, 5)
    assert z.r.shape == (2, 5) and z.cross_corr.shape == (2, 3)


def test_shape_checks():
    with pytest.raises(ValueError):
        compute_residual(np.zeros((2, 3)), np.zeros((3, 4)), np.zeros((3, 5)))
    with pytest.raises(ValueError):
        compute_residual(np.zeros((2, 2)), np.zeros((3, 4)), np.zeros((3, 4)))


def test_module_objective_is_output_mse():
    assert module_objective(np.zeros((2, 2)), np.ones((2, 2))) == 1.0


def test_zero_curvature_shift_gives_zero_terms(rng):
    dw, x, r = rng.standard_normal((3, 4)), rng.standard_normal((4, 6)), rng.standard_normal((3, 6))
    assert hessian_bias_decomposition(dw, x, r, np.zeros((3, 3))) == (0.0, 0.0, 0.0, 0.0)


def test_signed_total_matches_direct_quadratic(rng):
    dw, x, r = rng.standard_normal((3, 4)), rng.standard_normal((4, 6)), rng.standard_normal((3, 6))
    a = rng.standard_normal((3, 3))
    delta = a + a.T
    e = dw @ x - r
    *_, signed = bias_terms_per_sample(dw, x, r, delta)
    assert np.allclose(signed, np.einsum("ij,ij->j", e, delta @ e))


def test_asymmetric_shift_rejected(rng):
    with pytest.raises(ValueError):
        bias_terms_per_sample(np.eye(2), np.eye(2), np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]))

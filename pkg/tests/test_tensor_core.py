import numpy as np
import pytest

from marrq.tensor_core import (AsymmetricInputWarning, NotPositiveDefiniteError, as_matrix,
                               cholesky_inverse, frobenius_mse, matmul, symmetrize)


def test_cholesky_inverse_identity():
    assert np.array_equal(cholesky_inverse(np.eye(4)), np.eye(4))


def test_cholesky_inverse_matches_solve(rng):
    a = rng.standard_normal((7, 7))
    h = a @ a.T + 0.5 * np.eye(7)
    inv = cholesky_inverse(h)
    assert np.allclose(inv @ h, np.eye(7), atol=1e-10)
    assert np.array_equal(inv, inv.T)


def test_singular_matrix_names_damping():
    h = np.ones((3, 3))
    with pytest.raises(NotPositiveDefiniteError, match="damping"):
        cholesky_inverse(h)


def test_indefinite_raises():
    with pytest.raises(np.linalg.LinAlgError):
        cholesky_inverse(np.diag([1.0, -1.0]))


def test_symmetrize_warns_and_averages():
    h = np.array([[2.0, 1.0], [1.5, 2.0]])
    with pytest.warns(AsymmetricInputWarning):
        out = symmetrize(h)
    assert out[0, 1] == out[1, 0] == 1.25


def test_symmetrize_leaves_symmetric_alone(recwarn):
    h = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert symmetrize(h) is not None
    assert not [w for w in recwarn if issubclass(w.category, AsymmetricInputWarning)]


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_as_matrix_promotes_vectors_rejects_nan():
    assert as_matrix(np.zeros(3)).shape == (1, 3)
    with pytest.raises(ValueError):
        as_matrix(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        as_matrix(np.array([[np.nan]]))


def test_frobenius_mse_is_elementwise_mean():
    assert frobenius_mse(np.zeros((2, 2)), np.full((2, 2), 2.0)) == 4.0

"""Symmetric accumulator and SPD solve contract."""

import numpy as np
import pytest

from fedwd.linalg import SingularMatrixError, SymMatrix, add_outer, solve_spd


def test_add_outer_values():
    acc = SymMatrix.zeros(2)
    add_outer(acc, np.array([1.0, 0.0]), 3.0)
    np.testing.assert_array_equal(acc.a, [[3.0, 0.0], [0.0, 0.0]])

    acc = SymMatrix(np.eye(2))
    add_outer(acc, np.array([1.0, 1.0]), 1.0)
    np.testing.assert_array_equal(acc.a, [[2.0, 1.0], [1.0, 2.0]])


def test_add_outer_zero_weight_is_identity():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4))
    acc = SymMatrix(a + a.T)
    before = acc.a.copy()
    add_outer(acc, rng.standard_normal(4), 0.0)
    np.testing.assert_array_equal(acc.a, before)


def test_add_outer_dimension_check():
    with pytest.raises(ValueError):
        add_outer(SymMatrix.zeros(3), np.ones(2), 1.0)


def test_symmatrix_rejects_asymmetric():
    with pytest.raises(ValueError, match="not symmetric"):
        SymMatrix([[1.0, 2.0], [0.0, 1.0]])


def test_symmatrix_lower_roundtrip():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((5, 5))
    m = SymMatrix(a + a.T)
    back = SymMatrix.from_lower(m.to_lower(), 5)
    np.testing.assert_array_equal(back.a, m.a)


def test_solve_spd_values():
    np.testing.assert_allclose(
        solve_spd(np.eye(3), np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0],
        atol=1e-15)
    np.testing.assert_allclose(
        solve_spd(np.array([[2.0, 0.0], [0.0, 4.0]]), np.array([2.0, 8.0])),
        [1.0, 2.0], atol=1e-15)


def test_solve_spd_roundtrip_random():
    """1000 random PD systems, dimensions up to 101."""
    rng = np.random.default_rng(2)
    dims = np.concatenate([rng.integers(1, 30, size=980), [101] * 20])
    for dim in dims:
        dim = int(dim)
        b = rng.standard_normal((dim, dim))
        a = b @ b.T + dim * np.eye(dim)
        x_true = rng.standard_normal(dim)
        rhs = a @ x_true
        x = solve_spd(SymMatrix(a), rhs)
        err = np.linalg.norm(a @ x - rhs)
        assert err <= 1e-8 * (1.0 + np.linalg.norm(rhs))
        rel = np.linalg.norm(x - x_true) / max(1.0, np.linalg.norm(x_true))
        assert rel <= 1e-6


def test_solve_spd_determinism():
    rng = np.random.default_rng(3)
    b = rng.standard_normal((8, 8))
    a = b @ b.T + np.eye(8)
    rhs = rng.standard_normal(8)
    x1 = solve_spd(a, rhs)
    x2 = solve_spd(a.copy(), rhs.copy())
    np.testing.assert_array_equal(x1, x2)


def test_solve_spd_singular_names_pivot():
    a = np.diag([1.0, 0.0, 2.0])
    with pytest.raises(SingularMatrixError) as err:
        solve_spd(a, np.ones(3))
    assert err.value.pivot == 1
    assert "pivot index 1" in str(err.value)


def test_solve_spd_shape_errors():
    with pytest.raises(ValueError):
        solve_spd(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        solve_spd(np.eye(3), np.ones(2))

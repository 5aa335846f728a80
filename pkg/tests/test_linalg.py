import numpy as np
import pytest
from hypothesis import given, strategies as st

from fxlocalvol.errors import DomainError, NumericalError
from fxlocalvol.linalg import tridiag_solve


def dense(lower, diag, upper):
    return np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)


def test_identity():
    v = np.array([3.0, -1.0, 2.5, 7.0])
    assert np.array_equal(tridiag_solve(np.zeros(3), np.ones(4), np.zeros(3), v), v)


def test_three_by_three():
    x = tridiag_solve(np.array([-1.0, -1.0]), np.array([2.0, 2.0, 2.0]), np.array([-1.0, -1.0]),
                      np.array([1.0, 0.0, 1.0]))
    assert np.allclose(x, 1.0, rtol=0, atol=1e-15)


def test_random_dominant_50():
    rng = np.random.default_rng(5)
    lo, up = rng.uniform(-1, 1, 49), rng.uniform(-1, 1, 49)
    d = 2.5 + rng.uniform(0, 1, 50)
    b = rng.normal(size=50)
    assert np.allclose(tridiag_solve(lo, d, up, b), np.linalg.solve(dense(lo, d, up), b), rtol=0, atol=1e-10)


def test_two_hundred_random_systems():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 120))
        lo, up = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
        d = np.abs(np.r_[lo, 0]) + np.abs(np.r_[0, up]) + rng.uniform(0.1, 2, n)
        d *= rng.choice([-1, 1], n)
        b = rng.normal(size=n)
        worst = max(worst, np.max(np.abs(tridiag_solve(lo, d, up, b) - np.linalg.solve(dense(lo, d, up), b))))
    assert worst < 1e-10


def test_matrix_rhs():
    rng = np.random.default_rng(1)
    lo, up = rng.uniform(-1, 1, 9), rng.uniform(-1, 1, 9)
    d = 3 + rng.uniform(size=10)
    B = rng.normal(size=(10, 4))
    assert np.allclose(tridiag_solve(lo, d, up, B), np.linalg.solve(dense(lo, d, up), B), atol=1e-12)


def test_zero_pivot():
    with pytest.raises(NumericalError) as info:
        tridiag_solve(np.array([1.0]), np.array([1.0, 1.0]), np.array([1.0]), np.array([1.0, 2.0]))
    assert info.value.row == 1


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        tridiag_solve(np.zeros(2), np.ones(4), np.zeros(3), np.ones(4))
    with pytest.raises(DomainError):
        tridiag_solve(np.zeros(3), np.ones(4), np.zeros(3), np.ones(5))


@given(st.integers(2, 60), st.integers(0, 2**32 - 1))
def test_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    lo, up = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
    d = 2.1 + rng.uniform(size=n)
    b = rng.normal(size=n)
    x = tridiag_solve(lo, d, up, b)
    assert np.max(np.abs(dense(lo, d, up) @ x - b)) < 1e-12

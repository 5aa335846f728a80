"""Linear-time tridiagonal solver (Thomas algorithm)."""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import DomainError, NumericalError

PIVOT_RTOL = 1e-14


@njit(cache=True)
def _thomas(lower, diag, upper, rhs, tiny):
    n, k = rhs.shape
    cp = np.empty(n)
    x = np.empty((n, k))
    for i in range(n):
        p = diag[i]
        if i > 0:
            p -= lower[i - 1] * cp[i - 1]
        if abs(p) <= tiny:
            return x, i
        if i < n - 1:
            cp[i] = upper[i] / p
        for col in range(k):
            v = rhs[i, col]
            if i > 0:
                v -= lower[i - 1] * x[i - 1, col]
            x[i, col] = v / p
    for i in range(n - 2, -1, -1):
        for col in range(k):
            x[i, col] -= cp[i] * x[i + 1, col]
    return x, -1


def tridiag_solve(lower, diag, upper, rhs):
    """Solve ``A x = rhs`` for tridiagonal ``A`` in O(n).

    ``lower[k] = A[k+1, k]`` and ``upper[k] = A[k, k+1]``. ``rhs`` may be a
    vector or a 2-D array with one system per column sharing the matrix.
    No pivoting is done; a pivot below ``1e-14`` times the largest matrix
    entry raises :class:`NumericalError` with the row index in ``.row``.
    """
    diag = np.asarray(diag, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.shape[0]
    if n == 0 or lower.shape != (n - 1,) or upper.shape != (n - 1,) or rhs.shape[0] != n:
        raise DomainError("inconsistent tridiagonal system dimensions")
    scale = max(np.abs(diag).max(), np.abs(lower).max(initial=0.0), np.abs(upper).max(initial=0.0))
    x, bad = _thomas(lower, diag, upper, rhs.reshape(n, -1), PIVOT_RTOL * scale)
    if bad >= 0:
        err = NumericalError(f"zero pivot in tridiagonal solve at row {bad}")
        err.row = bad
        raise err
    return x.reshape(rhs.shape)

"""Batched Thomas algorithm for a tridiagonal system shared by many right-hand sides.

Without pivoting, an M-matrix with nonpositive off-diagonals keeps every
intermediate a same-signed sum, so a nonpositive right-hand side yields an
exactly nonpositive solution in floating point.  The discrete maximum
principle checks rely on that.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _solve(sub, diag, sup, rhs, out):
    n = diag.shape[0]
    k = rhs.shape[0]
    cp = np.empty(n)
    denom = np.empty(n)
    denom[0] = diag[0]
    cp[0] = sup[0] / diag[0]
    for i in range(1, n):
        denom[i] = diag[i] - sub[i] * cp[i - 1]
        cp[i] = sup[i] / denom[i]
    for b in range(k):
        out[b, 0] = rhs[b, 0] / denom[0]
        for i in range(1, n):
            out[b, i] = (rhs[b, i] - sub[i] * out[b, i - 1]) / denom[i]
        for i in range(n - 2, -1, -1):
            out[b, i] -= cp[i] * out[b, i + 1]


def solve_tridiagonal(sub, diag, sup, rhs):
    """Solve T x = rhs for each row of ``rhs``.

    ``sub[i]`` multiplies x[i-1] and ``sup[i]`` multiplies x[i+1]; sub[0] and
    sup[-1] are ignored.  ``rhs`` may be 1-D or (batch, n).
    """
    diag = np.ascontiguousarray(diag, dtype=float)
    sub = np.ascontiguousarray(sub, dtype=float)
    sup = np.ascontiguousarray(sup, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    single = rhs.ndim == 1
    r2 = np.ascontiguousarray(rhs.reshape(1, -1) if single else rhs)
    if not (sub.shape == diag.shape == sup.shape == r2.shape[1:]):
        raise ValueError("tridiagonal bands and right-hand side disagree in length")
    out = np.empty_like(r2)
    _solve(sub, diag, sup, r2, out)
    return out[0] if single else out

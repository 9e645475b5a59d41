"""Pure-numpy implementations of the hot block kernels.

Fallback backend used when the compiled extension is unavailable; the
compiled module in ``_kernels.pyx`` implements the same four functions with
identical semantics (same pivoting rule, same sweep order).
"""

import numpy as np

from .errors import SingularBlock, SingularPivot

# Relative pivot threshold: a pivot with magnitude <= RCOND * ||block||_inf
# is treated as singular (covers the exactly-zero block as well).
RCOND = 1e-13

IS_COMPILED = False


def lu_factor(a):
    """LU-factorize one dense block with partial (row) pivoting.

    Returns ``(lu, piv)`` where ``lu`` holds L (unit diagonal, below) and U
    (on/above the diagonal) and ``piv`` is the sequence of row swaps in
    elimination order, LAPACK-style.
    """
    lu = np.array(a, dtype=np.float64, order="C", copy=True)
    m = lu.shape[0]
    if lu.shape != (m, m):
        raise ValueError("block must be square")
    piv = np.empty(m, dtype=np.int64)
    norm = np.abs(lu).sum(axis=1).max() if m else 0.0
    tol = RCOND * norm
    for k in range(m):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= tol:
            raise SingularBlock(f"pivot {abs(lu[p, k]):.3e} below {tol:.3e}")
        piv[k] = p
        if p != k:
            lu[[k, p]] = lu[[p, k]]
        if k < m - 1:
            lu[k + 1 :, k] /= lu[k, k]
            lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, piv


def lu_solve(lu, piv, b):
    """Solve with a factored block; ``b`` is (m,) or (m, k)."""
    x = np.array(b, dtype=np.float64, copy=True)
    m = lu.shape[0]
    for k in range(m):
        p = piv[k]
        if p != k:
            x[[k, p]] = x[[p, k]]
    for k in range(1, m):
        x[k] -= lu[k, :k] @ x[:k]
    for k in range(m - 1, -1, -1):
        if k < m - 1:
            x[k] -= lu[k, k + 1 :] @ x[k + 1 :]
        x[k] /= lu[k, k]
    return x


def thomas_factor(diag, lower, upper):
    """Forward block-elimination sweep of a block-tridiagonal matrix.

    Row ``i`` of the system reads ``-A_i x_{i-1} + C_i x_i - B_i x_{i+1} = f_i``
    with ``diag[i] = C_i``, ``lower[i-1] = A_i``, ``upper[i] = B_i``.

    Returns ``(dlu, dpiv, supper)``: LU factors and pivots of the modified
    diagonal blocks ``D_i = C_i - A_i D_{i-1}^{-1} B_{i-1}`` and the
    premultiplied couplings ``S_i = D_i^{-1} B_i`` reused by every solve.
    """
    n, m, _ = diag.shape
    dlu = np.empty((n, m, m))
    dpiv = np.empty((n, m), dtype=np.int64)
    supper = np.empty((max(n - 1, 0), m, m))
    d = diag[0]
    for i in range(n):
        try:
            lu, piv = lu_factor(d)
        except SingularBlock as exc:
            raise SingularPivot(i, f"block row {i}: {exc}") from exc
        dlu[i] = lu
        dpiv[i] = piv
        if i < n - 1:
            supper[i] = lu_solve(lu, piv, upper[i])
            d = diag[i + 1] - lower[i] @ supper[i]
    return dlu, dpiv, supper


def thomas_solve(dlu, dpiv, supper, lower, f):
    """Two-sweep solve against a :func:`thomas_factor` result.

    ``f`` is (n, m) or (n, m, k); no block factorizations are performed.
    """
    n = dlu.shape[0]
    x = np.empty_like(np.asarray(f, dtype=np.float64))
    y = lu_solve(dlu[0], dpiv[0], f[0])
    x[0] = y
    for i in range(1, n):
        y = lu_solve(dlu[i], dpiv[i], f[i] + lower[i - 1] @ x[i - 1])
        x[i] = y
    for i in range(n - 2, -1, -1):
        x[i] += supper[i] @ x[i + 1]
    return x

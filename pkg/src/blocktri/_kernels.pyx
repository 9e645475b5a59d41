# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled block kernels: LU with partial pivoting and the block-Thomas sweeps.

Mirrors ``_kernels_py`` exactly (same pivoting rule, same sweep order); the
backend selector favours this module when the extension built.
"""

import numpy as np

cimport numpy as cnp

from .errors import SingularBlock, SingularPivot

cnp.import_array()

RCOND = 1e-13

IS_COMPILED = True

cdef double _RCOND = 1e-13


cdef double _block_inf_norm(const double[:, ::1] a) noexcept:
    cdef Py_ssize_t i, j, m = a.shape[0]
    cdef double s, best = 0.0
    for i in range(m):
        s = 0.0
        for j in range(m):
            s += a[i, j] if a[i, j] >= 0 else -a[i, j]
        if s > best:
            best = s
    return best


cdef int _lu_inplace(double[:, ::1] lu, cnp.int64_t[::1] piv) noexcept:
    """In-place LU with partial pivoting; returns failing column or -1."""
    cdef Py_ssize_t m = lu.shape[0]
    cdef Py_ssize_t i, j, k, p
    cdef double tol = _RCOND * _block_inf_norm(lu)
    cdef double best, v, lik
    for k in range(m):
        p = k
        best = lu[k, k] if lu[k, k] >= 0 else -lu[k, k]
        for i in range(k + 1, m):
            v = lu[i, k] if lu[i, k] >= 0 else -lu[i, k]
            if v > best:
                best = v
                p = i
        if best <= tol:
            return <int>k
        piv[k] = p
        if p != k:
            for j in range(m):
                v = lu[k, j]
                lu[k, j] = lu[p, j]
                lu[p, j] = v
        if k < m - 1:
            for i in range(k + 1, m):
                lu[i, k] /= lu[k, k]
                lik = lu[i, k]
                for j in range(k + 1, m):
                    lu[i, j] -= lik * lu[k, j]
    return -1


cdef void _lu_solve_inplace(const double[:, ::1] lu, const cnp.int64_t[::1] piv,
                            double[:, ::1] x) noexcept:
    """Solve LU x = b in place for x with k columns."""
    cdef Py_ssize_t m = lu.shape[0]
    cdef Py_ssize_t nrhs = x.shape[1]
    cdef Py_ssize_t i, k, c, p
    cdef double v
    for k in range(m):
        p = piv[k]
        if p != k:
            for c in range(nrhs):
                v = x[k, c]
                x[k, c] = x[p, c]
                x[p, c] = v
    for k in range(1, m):
        for i in range(k):
            v = lu[k, i]
            if v != 0.0:
                for c in range(nrhs):
                    x[k, c] -= v * x[i, c]
    for k in range(m - 1, -1, -1):
        for i in range(k + 1, m):
            v = lu[k, i]
            if v != 0.0:
                for c in range(nrhs):
                    x[k, c] -= v * x[i, c]
        v = lu[k, k]
        for c in range(nrhs):
            x[k, c] /= v


cdef void _matmul_acc(const double[:, ::1] a, const double[:, ::1] b, double[:, ::1] out,
                      double sign) noexcept:
    """out += sign * a @ b for small square/rectangular blocks."""
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t m = a.shape[0], n = b.shape[1], kk = a.shape[1]
    cdef double s
    for i in range(m):
        for j in range(n):
            s = 0.0
            for k in range(kk):
                s += a[i, k] * b[k, j]
            out[i, j] += sign * s


def lu_factor(a):
    """LU-factorize one dense block with partial (row) pivoting."""
    lu = np.array(a, dtype=np.float64, order="C", copy=True)
    if lu.ndim != 2 or lu.shape[0] != lu.shape[1]:
        raise ValueError("block must be square")
    piv = np.empty(lu.shape[0], dtype=np.int64)
    cdef int bad = _lu_inplace(lu, piv)
    if bad >= 0:
        raise SingularBlock(f"singular block (column {bad})")
    return lu, piv


def lu_solve(lu, piv, b):
    """Solve with a factored block; ``b`` is (m,) or (m, k)."""
    x = np.array(b, dtype=np.float64, order="C", copy=True)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    _lu_solve_inplace(lu, piv, x)
    return x[:, 0] if squeeze else x


def thomas_factor(diag, lower, upper):
    """Forward block-elimination sweep; see the numpy twin for the contract."""
    cdef const double[:, :, ::1] dv = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[:, :, ::1] lv = np.ascontiguousarray(lower, dtype=np.float64).reshape(
        max(diag.shape[0] - 1, 0), diag.shape[1], diag.shape[1])
    cdef const double[:, :, ::1] uv = np.ascontiguousarray(upper, dtype=np.float64).reshape(
        max(diag.shape[0] - 1, 0), diag.shape[1], diag.shape[1])
    cdef Py_ssize_t n = dv.shape[0], m = dv.shape[1]
    dlu_np = np.empty((n, m, m))
    dpiv_np = np.empty((n, m), dtype=np.int64)
    supper_np = np.empty((max(n - 1, 0), m, m))
    cdef double[:, :, ::1] dlu = dlu_np
    cdef cnp.int64_t[:, ::1] dpiv = dpiv_np
    cdef double[:, :, ::1] supper = supper_np
    cdef Py_ssize_t i, r, c
    cdef int bad
    d_np = np.empty((m, m))
    cdef double[:, ::1] d = d_np
    for r in range(m):
        for c in range(m):
            d[r, c] = dv[0, r, c]
    for i in range(n):
        for r in range(m):
            for c in range(m):
                dlu[i, r, c] = d[r, c]
        bad = _lu_inplace(dlu[i], dpiv[i])
        if bad >= 0:
            raise SingularPivot(i, f"block row {i}: singular pivot (column {bad})")
        if i < n - 1:
            for r in range(m):
                for c in range(m):
                    supper[i, r, c] = uv[i, r, c]
            _lu_solve_inplace(dlu[i], dpiv[i], supper[i])
            for r in range(m):
                for c in range(m):
                    d[r, c] = dv[i + 1, r, c]
            _matmul_acc(lv[i], supper[i], d, -1.0)
    return dlu_np, dpiv_np, supper_np


def thomas_solve(dlu, dpiv, supper, lower, f):
    """Two-sweep solve against a thomas_factor result; f is (n,m) or (n,m,k)."""
    farr = np.asarray(f, dtype=np.float64)
    squeeze = farr.ndim == 2
    if squeeze:
        farr = farr[:, :, None]
    x_np = np.ascontiguousarray(farr).copy()
    cdef double[:, :, ::1] x = x_np
    cdef const double[:, :, ::1] dluv = np.ascontiguousarray(dlu)
    cdef const cnp.int64_t[:, ::1] dpivv = np.ascontiguousarray(dpiv)
    cdef const double[:, :, ::1] supperv = np.ascontiguousarray(supper)
    cdef const double[:, :, ::1] lowerv = np.ascontiguousarray(lower, dtype=np.float64).reshape(
        max(dlu.shape[0] - 1, 0), dlu.shape[1], dlu.shape[1])
    cdef Py_ssize_t n = dluv.shape[0]
    cdef Py_ssize_t i
    _lu_solve_inplace(dluv[0], dpivv[0], x[0])
    for i in range(1, n):
        _matmul_acc(lowerv[i - 1], x[i - 1], x[i], 1.0)
        _lu_solve_inplace(dluv[i], dpivv[i], x[i])
    for i in range(n - 2, -1, -1):
        _matmul_acc(supperv[i], x[i + 1], x[i], 1.0)
    return x_np[:, :, 0] if squeeze else x_np

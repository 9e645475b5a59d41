"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (plain Gaussian elimination, direct
summation, scalar sweeps) and shares no code with the library paths it
checks.
"""

import numpy as np


def gauss_solve(a, b):
    """Dense Gaussian elimination with partial pivoting, hand-rolled."""
    a = np.array(a, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    n = a.shape[0]
    single = b.ndim == 1
    if single:
        b = b[:, None]
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if a[p, k] == 0.0:
            raise ZeroDivisionError("singular matrix in oracle")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            if f != 0.0:
                a[i, k + 1 :] -= f * a[k, k + 1 :]
                b[i] -= f * b[k]
            a[i, k] = 0.0
    x = np.zeros_like(b)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - a[i, i + 1 :] @ x[i + 1 :]) / a[i, i]
    return x[:, 0] if single else x


def scalar_thomas(lower, diag, upper, rhs):
    """Classical scalar Thomas sweep for -a x_{i-1} + c x_i - b x_{i+1} = f."""
    n = len(diag)
    c = np.array(diag, dtype=np.float64)
    f = np.array(rhs, dtype=np.float64)
    up = np.array(upper, dtype=np.float64)
    lo = np.array(lower, dtype=np.float64)
    for i in range(1, n):
        w = -lo[i - 1] / c[i - 1]
        c[i] -= w * (-up[i - 1])
        f[i] -= w * f[i - 1]
    x = np.zeros(n)
    x[-1] = f[-1] / c[-1]
    for i in range(n - 2, -1, -1):
        x[i] = (f[i] + up[i] * x[i + 1]) / c[i]
    return x


def random_spd_band(n, d, rng, scale=1.0):
    """Dense SPD matrix with bandwidth exactly <= d (Gershgorin-dominant)."""
    a = np.zeros((n, n))
    for off in range(1, d + 1):
        v = rng.uniform(-scale, scale, n - off)
        a[np.arange(off, n), np.arange(n - off)] = v
        a[np.arange(n - off), np.arange(off, n)] = v
    np.fill_diagonal(a, np.abs(a).sum(axis=1) + scale * (1.0 + rng.uniform(0, 1, n)))
    return a


def dense_from_blocks(diag, lower, upper):
    """Direct entry-by-entry dense assembly (independent of dense_expand)."""
    n, m, _ = diag.shape
    full = np.zeros((n * m, n * m))
    for i in range(n):
        for r in range(m):
            for c in range(m):
                full[i * m + r, i * m + c] = diag[i, r, c]
                if i > 0:
                    full[i * m + r, (i - 1) * m + c] = -lower[i - 1, r, c]
                if i < n - 1:
                    full[i * m + r, (i + 1) * m + c] = -upper[i, r, c]
    return full

"""Band matrices: probing construction, block-tridiagonal reinterpretation,
and dichotomy-backed solves used as the interface preconditioner.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from . import dichotomy
from .core import BlockTriMatrix
from .errors import BandTooWide, BlockTooSmall, DimensionMismatch

PRECOND_RANKS = 4


class BandMatrix:
    """Order-n matrix with entries only for |i - j| <= d.

    Stored column-wise: ``bands[k, j]`` holds entry (j + k - d, j) for
    k = 0..2d; positions outside the matrix are zero.
    """

    __slots__ = ("n", "d", "bands", "symmetric", "_solver_cache")

    def __init__(self, n, d, bands=None, symmetric=False):
        if d < 0 or n < 1:
            raise DimensionMismatch("need n >= 1 and d >= 0")
        self.n = n
        self.d = d
        self._solver_cache = None
        if bands is None:
            bands = np.zeros((2 * d + 1, n))
        bands = np.ascontiguousarray(bands, dtype=np.float64)
        if bands.shape != (2 * d + 1, n):
            raise DimensionMismatch(f"band storage must be {(2 * d + 1, n)}")
        self.bands = bands
        self.symmetric = symmetric

    @classmethod
    def from_dense(cls, a, d, symmetric=False):
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        b = cls(n, d, symmetric=symmetric)
        for off in range(-d, d + 1):
            diag = np.diagonal(a, -off)
            if off >= 0:
                b.bands[d + off, : n - off] = diag
            else:
                b.bands[d + off, -off:] = diag
        return b

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        for off in range(-self.d, self.d + 1):
            k = self.d + off
            if off >= 0:
                a[np.arange(off, self.n), np.arange(self.n - off)] = self.bands[
                    k, : self.n - off
                ]
            else:
                a[np.arange(self.n + off), np.arange(-off, self.n)] = self.bands[k, -off:]
        return a

    def diagonal(self):
        return self.bands[self.d].copy()

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        y = self.bands[self.d] * x
        for off in range(1, self.d + 1):
            y[off:] += self.bands[self.d + off, : self.n - off] * x[: self.n - off]
            y[: self.n - off] += self.bands[self.d - off, off:] * x[off:]
        return y

    def symmetrized(self):
        """(B + B^T)/2 in band storage."""
        out = BandMatrix(self.n, self.d, symmetric=True)
        d, n = self.d, self.n
        for off in range(-d, d + 1):
            k = d + off
            kt = d - off
            for j in range(max(0, -off), min(n, n - off)):
                out.bands[k, j] = 0.5 * (self.bands[k, j] + self.bands[kt, j + off])
        return out

    def upper_ab(self):
        """Upper band storage as scipy's cholesky_banded expects."""
        return np.ascontiguousarray(self.bands[: self.d + 1])


def probing_build(apply_op, d, n) -> BandMatrix:
    """Recover the band |i-j| <= d of an operator from 2d+1 probes.

    Probe l is the characteristic vector of the index class j = l mod 2d+1;
    within the band, columns of one class touch disjoint rows, so entry
    (i, j) reads off apply(p_{j mod 2d+1}) at row i. The result is
    symmetrized to (B + B^T)/2. Exact for any matrix of bandwidth <= d.
    """
    width = 2 * d + 1
    if width > n:
        raise BandTooWide(f"2d+1 = {width} exceeds operator order {n}")
    raw = BandMatrix(n, d)
    idx = np.arange(n)
    for cls_ in range(width):
        probe = (idx % width == cls_).astype(np.float64)
        y = np.asarray(apply_op(probe), dtype=np.float64)
        if y.shape != (n,):
            raise DimensionMismatch("operator output has wrong length")
        cols = idx[idx % width == cls_]
        for j in cols:
            lo = max(0, j - d)
            hi = min(n, j + d + 1)
            raw.bands[lo - j + d : hi - j + d, j] = y[lo:hi]
    return raw.symmetrized()


def band_as_blocktrid(b: BandMatrix, m: int):
    """Reinterpret a band matrix as block-tridiagonal with order-m blocks.

    Requires m >= d; the order is padded to a block multiple with identity
    rows. The coupling blocks are triangular corners (lower coupling upper-
    triangular, upper coupling lower-triangular). Returns
    ``(BlockTriMatrix, n)`` with n the unpadded order.
    """
    if m < b.d:
        raise BlockTooSmall(f"block order {m} smaller than half-bandwidth {b.d}")
    if m < 1:
        raise DimensionMismatch("block order must be positive")
    nblocks = -(-b.n // m)
    npad = nblocks * m
    dense_blocks = np.zeros((nblocks, m, m))
    lower = np.zeros((max(nblocks - 1, 0), m, m))
    upper = np.zeros((max(nblocks - 1, 0), m, m))
    d, n = b.d, b.n
    for off in range(-d, d + 1):
        k = d + off
        for j in range(max(0, -off), min(n, n - off)):
            i = j + off
            bi, r = divmod(i, m)
            bj, c = divmod(j, m)
            v = b.bands[k, j]
            if bi == bj:
                dense_blocks[bi, r, c] = v
            elif bi == bj + 1:
                lower[bj, r, c] = -v
            elif bi + 1 == bj:
                upper[bi, r, c] = -v
    for g in range(n, npad):
        bi, r = divmod(g, m)
        dense_blocks[bi, r, r] = 1.0
    return BlockTriMatrix(dense_blocks, lower, upper), n


class BandSolver:
    """Direct band solves routed through a dichotomy plan."""

    def __init__(self, b: BandMatrix, ranks=None):
        mat, self.n = band_as_blocktrid(b, max(b.d, 1))
        if ranks is None:
            ranks = min(PRECOND_RANKS, mat.n)
        self.plan = dichotomy.plan_build(mat, ranks)
        self.m = mat.m
        self.npad = mat.n * mat.m

    def solve(self, r):
        r = np.asarray(r, dtype=np.float64)
        flat = np.zeros(self.npad)
        flat[: self.n] = r
        x = dichotomy.plan_solve(self.plan, flat.reshape(-1, self.m))
        return x.reshape(-1)[: self.n]


class BandPreconditioner:
    """SPD-checked band preconditioner with a diagonal fallback.

    The symmetrized band is accepted when a banded Cholesky succeeds; the
    apply then solves through band_as_blocktrid + the dichotomy plan.
    Otherwise a warning is issued and the apply degrades to the (absolute)
    diagonal, keeping the interface iteration total.
    """

    def __init__(self, b: BandMatrix, ranks=None):
        self.band = b if b.symmetric else b.symmetrized()
        self.fallback = False
        try:
            scipy.linalg.cholesky_banded(self.band.upper_ab(), lower=False)
        except scipy.linalg.LinAlgError:
            self.fallback = True
        if self.fallback:
            warnings.warn(
                "probed band matrix is not SPD-factorizable; "
                "falling back to diagonal preconditioning",
                RuntimeWarning,
                stacklevel=2,
            )
            diag = np.abs(self.band.diagonal())
            diag[diag == 0.0] = 1.0
            self._diag = diag
            self._solver = None
        else:
            self._solver = BandSolver(self.band, ranks=ranks)

    def apply(self, r):
        if self.fallback:
            return np.asarray(r, dtype=np.float64) / self._diag
        return self._solver.solve(r)


def precond_apply(b: BandMatrix, r):
    """One-shot B^{-1} r through the dichotomy route (plan cached on b)."""
    cache = b._solver_cache
    if cache is None:
        cache = BandPreconditioner(b)
        b._solver_cache = cache
    return cache.apply(r)

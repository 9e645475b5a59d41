"""Dense block arithmetic, block LU, and the sequential block-Thomas solver.

The assembled operator follows the sign convention of the governing
three-term form: block row ``i`` applies ``-A_i x_{i-1} + C_i x_i - B_i
x_{i+1}``, while the *stored* ``A``, ``B``, ``C`` blocks are unsigned.

Everything here is float64 and row-major. Matrices and factorizations are
immutable after construction; solves may run concurrently against shared
factorizations.
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import backend as _bk
from .errors import (
    DimensionMismatch,
    OracleTooLarge,
    SingularBlock,
    SingularPivot,
)

DENSE_ORACLE_CAP = 4096

# Instrumented count of per-block LU factorizations (plan-reuse checks rely
# on this staying flat across solves).
_factor_count = 0


def factorization_count() -> int:
    return _factor_count


def reset_factorization_count() -> None:
    global _factor_count
    _factor_count = 0


def _as_blocks(arr, count, m, name):
    a = np.array(arr, dtype=np.float64, order="C", copy=True)
    if count == 0 and a.size == 0:
        a = a.reshape(0, m, m)
    if a.shape != (count, m, m):
        raise DimensionMismatch(f"{name}: expected shape {(count, m, m)}, got {a.shape}")
    return a


class BlockVector:
    """N blocks of length M, stored as an (n, m) array."""

    __slots__ = ("data",)

    def __init__(self, data):
        data = np.ascontiguousarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionMismatch("BlockVector expects a 2-d (n, m) array")
        self.data = data

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def ravel(self):
        return self.data.reshape(-1)

    def copy(self):
        return BlockVector(self.data.copy())

    @classmethod
    def from_flat(cls, flat, n, m):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != n * m:
            raise DimensionMismatch("flat vector length does not match n*m")
        return cls(flat.reshape(n, m))


class BlockTriMatrix:
    """Block-tridiagonal matrix of N block rows with M x M dense blocks.

    ``diag`` holds C_1..C_N, ``lower`` A_2..A_N, ``upper`` B_1..B_{N-1}
    (unsigned; the assembled operator applies -A and -B).
    """

    __slots__ = ("n", "m", "diag", "lower", "upper", "_fingerprint")

    def __init__(self, diag, lower=None, upper=None):
        diag = np.array(diag, dtype=np.float64, order="C", copy=True)
        if diag.ndim != 3 or diag.shape[1] != diag.shape[2]:
            raise DimensionMismatch("diag must be (n, m, m)")
        n, m, _ = diag.shape
        if n < 1:
            raise DimensionMismatch("need at least one block row")
        if lower is None:
            lower = np.zeros((n - 1, m, m))
        if upper is None:
            upper = np.zeros((n - 1, m, m))
        self.n = n
        self.m = m
        self.diag = diag
        self.lower = _as_blocks(lower, n - 1, m, "lower")
        self.upper = _as_blocks(upper, n - 1, m, "upper")
        for a in (self.diag, self.lower, self.upper):
            a.flags.writeable = False
        self._fingerprint = None

    @classmethod
    def identity(cls, n, m):
        diag = np.broadcast_to(np.eye(m), (n, m, m)).copy()
        return cls(diag)

    def apply(self, x):
        """Assembled operator applied to an (n, m) or (n, m, k) array."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n or x.shape[1] != self.m:
            raise DimensionMismatch("vector does not match matrix layout")
        y = np.einsum("nij,nj...->ni...", self.diag, x)
        if self.n > 1:
            y[1:] -= np.einsum("nij,nj...->ni...", self.lower, x[:-1])
            y[:-1] -= np.einsum("nij,nj...->ni...", self.upper, x[1:])
        return y

    def submatrix(self, lo, hi):
        """Rows lo..hi inclusive (0-based), dropping outward couplings."""
        if not (0 <= lo <= hi < self.n):
            raise DimensionMismatch(f"invalid range [{lo}, {hi}]")
        return BlockTriMatrix(
            self.diag[lo : hi + 1], self.lower[lo:hi], self.upper[lo:hi]
        )

    def transpose(self):
        """Block transpose: swaps the roles of A and B and transposes blocks."""
        return BlockTriMatrix(
            self.diag.transpose(0, 2, 1),
            self.upper.transpose(0, 2, 1),
            self.lower.transpose(0, 2, 1),
        )

    def fingerprint(self) -> str:
        if self._fingerprint is None:
            h = hashlib.sha256()
            h.update(np.int64([self.n, self.m]).tobytes())
            h.update(self.diag.tobytes())
            h.update(self.lower.tobytes())
            h.update(self.upper.tobytes())
            self._fingerprint = h.hexdigest()
        return self._fingerprint


class BlockLU:
    """Partially pivoted LU factors of one dense block."""

    __slots__ = ("lu", "piv")

    def __init__(self, lu, piv):
        self.lu = lu
        self.piv = piv
        self.lu.flags.writeable = False
        self.piv.flags.writeable = False

    @property
    def m(self) -> int:
        return self.lu.shape[0]

    def reconstruct(self):
        """P L U product; should reproduce the original block."""
        m = self.m
        lo = np.tril(self.lu, -1) + np.eye(m)
        up = np.triu(self.lu)
        a = lo @ up
        for k in range(m - 1, -1, -1):
            p = self.piv[k]
            if p != k:
                a[[k, p]] = a[[p, k]]
        return a


class ThomasFactorization:
    """Reusable forward-elimination factors of one BlockTriMatrix.

    Valid only for the matrix it was built from; the source fingerprint is
    stored and checked wherever a (matrix, factorization) pair meets.
    """

    __slots__ = ("n", "m", "dlu", "dpiv", "supper", "lower", "source_fingerprint")

    def __init__(self, n, m, dlu, dpiv, supper, lower, source_fingerprint):
        self.n = n
        self.m = m
        self.dlu = dlu
        self.dpiv = dpiv
        self.supper = supper
        self.lower = lower
        self.source_fingerprint = source_fingerprint

    def matches(self, p: BlockTriMatrix) -> bool:
        return p.fingerprint() == self.source_fingerprint


def lu_factor(block) -> BlockLU:
    """Factor one dense block; raises SingularBlock below working precision."""
    global _factor_count
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise DimensionMismatch("block must be a square 2-d array")
    if not np.all(np.isfinite(block)):
        raise SingularBlock("block contains non-finite entries")
    lu, piv = _bk.lu_factor(block)
    _factor_count += 1
    return BlockLU(lu, piv)


def lu_solve(fact: BlockLU, rhs):
    """Solve ``block @ x = rhs`` for (m,) or (m, k) right-hand sides."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != fact.m:
        raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, block order is {fact.m}")
    return _bk.lu_solve(fact.lu, fact.piv, rhs)


def dense_expand(p: BlockTriMatrix, cap: int = DENSE_ORACLE_CAP):
    """Materialize the assembled operator (test oracle only)."""
    nm = p.n * p.m
    if nm > cap:
        raise OracleTooLarge(f"dense oracle of order {nm} exceeds cap {cap}")
    m = p.m
    dense = np.zeros((nm, nm))
    for i in range(p.n):
        dense[i * m : (i + 1) * m, i * m : (i + 1) * m] = p.diag[i]
        if i > 0:
            dense[i * m : (i + 1) * m, (i - 1) * m : i * m] = -p.lower[i - 1]
        if i < p.n - 1:
            dense[i * m : (i + 1) * m, (i + 1) * m : (i + 2) * m] = -p.upper[i]
    return dense


def thomas_factor(p: BlockTriMatrix) -> ThomasFactorization:
    """Block forward elimination; reusable over arbitrarily many solves."""
    global _factor_count
    dlu, dpiv, supper = _bk.thomas_factor(p.diag, p.lower, p.upper)
    _factor_count += p.n
    return ThomasFactorization(p.n, p.m, dlu, dpiv, supper, p.lower, p.fingerprint())


def thomas_solve(fact: ThomasFactorization, f):
    """Solve with a prebuilt factorization; performs no factorizations.

    ``f`` may be a BlockVector, an (n, m) array, or an (n, m, k) batch;
    returns the matching type/shape.
    """
    is_bv = isinstance(f, BlockVector)
    data = f.data if is_bv else np.asarray(f, dtype=np.float64)
    if data.shape[0] != fact.n or data.shape[1] != fact.m:
        raise DimensionMismatch(
            f"rhs layout {data.shape[:2]} does not match factorization "
            f"({fact.n}, {fact.m})"
        )
    x = _bk.thomas_solve(fact.dlu, fact.dpiv, fact.supper, fact.lower, data)
    return BlockVector(x) if is_bv else x


def random_dominant(n, m, rng, coupling: float = 0.3):
    """Random strictly row-diagonally-dominant instance (test/CLI generator)."""
    lower = rng.uniform(-1.0, 1.0, size=(max(n - 1, 0), m, m)) * coupling
    upper = rng.uniform(-1.0, 1.0, size=(max(n - 1, 0), m, m)) * coupling
    diag = rng.uniform(-1.0, 1.0, size=(n, m, m)) * coupling
    for i in range(n):
        row_abs = np.abs(diag[i]).sum(axis=1) - np.abs(np.diagonal(diag[i]))
        if i > 0:
            row_abs += np.abs(lower[i - 1]).sum(axis=1)
        if i < n - 1:
            row_abs += np.abs(upper[i]).sum(axis=1)
        np.fill_diagonal(diag[i], row_abs + 1.0 + rng.uniform(0.0, 1.0, size=m))
    return BlockTriMatrix(diag, lower, upper)

"""Divide-and-conquer direct solver for block-tridiagonal systems.

Preprocessing (``plan_build``) computes, once per matrix: superposition
factors expressing interior unknowns through the two bracketing interface
components, local sweep factorizations, the reduced three-point interface
system, and inverse rows of the reduced matrix along a midpoint partition
tree. Each subsequent right-hand side (``plan_solve``) costs only sweeps,
inverse-row products and the recovery combination; no block is factorized
again.

Indices are 0-based throughout; interface block rows sit at K_q = q*L.
"""

from __future__ import annotations

import numpy as np

from . import core
from .core import BlockTriMatrix, BlockVector
from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InconsistentRanges,
    InvalidRankCount,
)


class PartitionTree:
    """Midpoint-split recursion over ``count`` interface indices.

    ``nodes`` is the breadth-first list of ``(lo, hi, k, level)`` with the
    split ``k = lo + ceil((hi - lo)/2)``; every index occurs as exactly one
    split. ``depth`` is the stage count ceil(log2 count) of the dichotomy
    process (node levels never exceed it).
    """

    __slots__ = ("count", "depth", "nodes")

    def __init__(self, count: int):
        if count < 1:
            raise InvalidRankCount(f"partition tree needs count >= 1, got {count}")
        self.count = count
        self.depth = (count - 1).bit_length()
        self.nodes = []
        frontier = [(0, count - 1)]
        level = 0
        while frontier:
            nxt = []
            for lo, hi in frontier:
                k = lo + (hi - lo + 1) // 2
                self.nodes.append((lo, hi, k, level))
                if k - 1 >= lo:
                    nxt.append((lo, k - 1))
                if k + 1 <= hi:
                    nxt.append((k + 1, hi))
            frontier = nxt
            level += 1


def build_partition_tree(count: int) -> PartitionTree:
    return PartitionTree(count)


class SuperpositionFactors:
    """U_i, V_i over one range [lo, hi] (hi = lo + L is the right interface).

    ``U[i]``/``V[i]`` for local index i = 0..L carry the boundary conditions
    U[0] = I, U[L] = 0, V[0] = 0, V[L] = I; ``fact`` is the interior sweep
    factorization reused for every particular solution (None when L < 2).
    """

    __slots__ = ("lo", "hi", "U", "V", "fact")

    def __init__(self, lo, hi, U, V, fact=None):
        self.lo = lo
        self.hi = hi
        self.U = U
        self.V = V
        self.fact = fact

    @property
    def length(self) -> int:
        return self.hi - self.lo


class ReducedSystem:
    """Three-point interface system: a block-tridiagonal matrix of p rows."""

    __slots__ = ("matrix",)

    def __init__(self, matrix: BlockTriMatrix):
        self.matrix = matrix

    @property
    def p(self) -> int:
        return self.matrix.n


class DichotomyPlan:
    """Reusable preprocessing product tied to one matrix by fingerprint."""

    __slots__ = (
        "n",
        "m",
        "ranks",
        "L",
        "npad",
        "padded",
        "ranges",
        "reduced",
        "tree",
        "inverse_rows",
        "matrix_fingerprint",
    )

    def __init__(self, n, m, ranks, L, npad, padded, ranges, reduced, tree,
                 inverse_rows, matrix_fingerprint):
        self.n = n
        self.m = m
        self.ranks = ranks
        self.L = L
        self.npad = npad
        self.padded = padded
        self.ranges = ranges
        self.reduced = reduced
        self.tree = tree
        self.inverse_rows = inverse_rows
        self.matrix_fingerprint = matrix_fingerprint

    def matches(self, matrix: BlockTriMatrix) -> bool:
        return matrix.fingerprint() == self.matrix_fingerprint


def inverse_block_rows(p: BlockTriMatrix, k: int):
    """Rows k*M..(k+1)*M-1 of the inverse, as an (M, N*M) array.

    Computed by M transposed sweeps with unit right-hand sides, never by
    explicit inversion.
    """
    if not 0 <= k < p.n:
        raise IndexOutOfRange(f"block row {k} outside [0, {p.n - 1}]")
    fact_t = core.thomas_factor(p.transpose())
    rhs = np.zeros((p.n, p.m, p.m))
    rhs[k] = np.eye(p.m)
    y = core.thomas_solve(fact_t, rhs)
    return np.ascontiguousarray(y.transpose(2, 0, 1).reshape(p.m, p.n * p.m))


def dichotomy_split(p: BlockTriMatrix, f: BlockVector, k: int, xk):
    """Split the system at block row k given its exact solution component.

    Returns the list of (lo, hi, modified BlockVector) subproblems; the left
    one exists for k > 0, the right one for k < N-1.
    """
    if not 0 <= k < p.n:
        raise IndexOutOfRange(f"split index {k} outside [0, {p.n - 1}]")
    if f.n != p.n or f.m != p.m:
        raise DimensionMismatch("right-hand side does not match the matrix")
    xk = np.asarray(xk, dtype=np.float64)
    subs = []
    if k > 0:
        fl = f.data[:k].copy()
        fl[-1] += p.upper[k - 1] @ xk
        subs.append((0, k - 1, BlockVector(fl)))
    if k < p.n - 1:
        fr = f.data[k + 1 :].copy()
        fr[0] += p.lower[k] @ xk
        subs.append((k + 1, p.n - 1, BlockVector(fr)))
    return subs


def superposition_factors(p: BlockTriMatrix, lo: int, hi: int) -> SuperpositionFactors:
    """Unit-boundary factors for the range [lo, hi]; hi may equal N (closure)."""
    L = hi - lo
    if L < 1 or lo < 0 or hi > p.n:
        raise IndexOutOfRange(f"invalid range [{lo}, {hi}] for N={p.n}")
    m = p.m
    U = np.zeros((L + 1, m, m))
    V = np.zeros((L + 1, m, m))
    U[0] = np.eye(m)
    V[L] = np.eye(m)
    fact = None
    if L >= 2:
        sub = p.submatrix(lo + 1, hi - 1)
        fact = core.thomas_factor(sub)
        rhs_u = np.zeros((L - 1, m, m))
        rhs_u[0] = p.lower[lo]
        U[1:L] = core.thomas_solve(fact, rhs_u)
        rhs_v = np.zeros((L - 1, m, m))
        if hi - 1 < p.n - 1:
            rhs_v[L - 2] = p.upper[hi - 1]
        V[1:L] = core.thomas_solve(fact, rhs_v)
    return SuperpositionFactors(lo, hi, U, V, fact)


def particular_solution(p: BlockTriMatrix, factors: SuperpositionFactors, f):
    """W_i on [lo, hi] for local right-hand side rows f[lo..hi-1].

    ``f`` has shape (L, m) or (L, m, k); W carries zero boundary values at
    both ends of the range, i.e. shape (L+1, m[, k]).
    """
    L = factors.length
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != L or f.shape[1] != p.m:
        raise DimensionMismatch("local rhs does not cover the range")
    w = np.zeros((L + 1,) + f.shape[1:])
    if L >= 2:
        w[1:L] = core.thomas_solve(factors.fact, f[1:])
    return w


def assemble_reduced(ranges, p: BlockTriMatrix) -> ReducedSystem:
    """Bracketed coefficients of the interface three-point system."""
    nranks = len(ranges)
    m = p.m
    if nranks < 1:
        raise InconsistentRanges("no ranges")
    L = ranges[0].length
    if any(r.length != L for r in ranges) or nranks * L != p.n:
        raise InconsistentRanges("ranges must tile the matrix uniformly")
    diag = np.empty((nranks, m, m))
    low = np.empty((max(nranks - 1, 0), m, m))
    up = np.empty((max(nranks - 1, 0), m, m))
    for q, rg in enumerate(ranges):
        K = q * L
        d = p.diag[K].copy()
        if q >= 1:
            prev = ranges[q - 1]
            d -= p.lower[K - 1] @ prev.V[L - 1]
            low[q - 1] = p.lower[K - 1] @ prev.U[L - 1]
        if K < p.n - 1:
            d -= p.upper[K] @ rg.U[1]
            if q <= nranks - 2:
                up[q] = p.upper[K] @ rg.V[1]
        diag[q] = d
    return ReducedSystem(BlockTriMatrix(diag, low, up))


def range_rhs_contribution(p: BlockTriMatrix, rg: SuperpositionFactors, q, nranks, f_range, w):
    """Per-range pieces of the reduced right-hand side.

    Returns (base, carry): ``base`` is F_K + B_K W_{K+1} for this range's own
    interface; ``carry`` is A_{K'} W_{K'-1} destined for the next interface
    (zeros for the last range).
    """
    K = rg.lo
    L = rg.length
    base = np.ascontiguousarray(f_range[0]).copy()
    if K < p.n - 1:
        base += p.upper[K] @ w[1]
    if q < nranks - 1:
        carry = p.lower[K + L - 1] @ w[L - 1]
    else:
        carry = np.zeros_like(base)
    return base, carry


def assemble_reduced_rhs(bases, carries):
    """Interface RHS: base_q plus the previous range's carry."""
    ftilde = np.ascontiguousarray(np.stack(bases))
    for q in range(1, len(bases)):
        ftilde[q] += carries[q - 1]
    return ftilde


def reduced_rhs(plan: DichotomyPlan, f, w_all):
    """F_K + A_K W_{K-1} + B_K W_{K+1} for every interface K."""
    bases = []
    carries = []
    for q, rg in enumerate(plan.ranges):
        base, carry = range_rhs_contribution(
            plan.padded, rg, q, plan.ranks, f[rg.lo : rg.hi], w_all[q]
        )
        bases.append(base)
        carries.append(carry)
    return assemble_reduced_rhs(bases, carries)


def reduced_solve(reduced: ReducedSystem, tree: PartitionTree, inverse_rows, ftilde):
    """Dichotomy recursion (inverse-row products + RHS corrections) on the tree."""
    mat = reduced.matrix
    m = mat.m
    fmod = np.ascontiguousarray(ftilde).copy()
    x = np.empty_like(fmod)
    batch = fmod.ndim == 3
    for (lo, hi, k, _level), rows in zip(tree.nodes, inverse_rows):
        seg = fmod[lo : hi + 1]
        seg = seg.reshape(-1, seg.shape[2]) if batch else seg.reshape(-1)
        xk = rows @ seg
        x[k] = xk
        if k - 1 >= lo:
            fmod[k - 1] += mat.upper[k - 1] @ xk
        if k + 1 <= hi:
            fmod[k + 1] += mat.lower[k] @ xk
    return x


def _build_inverse_rows(reduced: ReducedSystem, tree: PartitionTree):
    mat = reduced.matrix
    out = []
    for lo, hi, k, _level in tree.nodes:
        sub = mat.submatrix(lo, hi)
        out.append(inverse_block_rows(sub, k - lo))
    return out


def _pad_identity(p: BlockTriMatrix, npad: int) -> BlockTriMatrix:
    if npad == p.n:
        return p
    m = p.m
    diag = np.concatenate([p.diag, np.broadcast_to(np.eye(m), (npad - p.n, m, m))])
    zeros = np.zeros((npad - p.n, m, m))
    lower = np.concatenate([p.lower, zeros]) if p.n > 1 else zeros.copy()
    upper = np.concatenate([p.upper, zeros]) if p.n > 1 else zeros.copy()
    return BlockTriMatrix(diag, lower, upper)


def plan_build(p_matrix: BlockTriMatrix, ranks: int) -> DichotomyPlan:
    """One-time preprocessing for a fixed matrix and virtual rank count.

    If ``ranks`` does not divide N the matrix is logically padded with
    identity block rows and zero couplings; padded components are stripped
    on recovery.
    """
    n, m = p_matrix.n, p_matrix.m
    if ranks < 1 or ranks > n:
        raise InvalidRankCount(f"ranks={ranks} outside [1, N={n}]")
    L = -(-n // ranks)
    npad = L * ranks
    padded = _pad_identity(p_matrix, npad)
    ranges = [superposition_factors(padded, q * L, (q + 1) * L) for q in range(ranks)]
    reduced = assemble_reduced(ranges, padded)
    tree = build_partition_tree(ranks)
    inverse_rows = _build_inverse_rows(reduced, tree)
    return DichotomyPlan(
        n, m, ranks, L, npad, padded, ranges, reduced, tree, inverse_rows,
        p_matrix.fingerprint(),
    )


def _range_w(plan: DichotomyPlan, q: int, f_range):
    return particular_solution(plan.padded, plan.ranges[q], f_range)


def _recover_range(plan: DichotomyPlan, q: int, xt_q, xt_next, w):
    """Interior components of one range via the superposition identity."""
    rg = plan.ranges[q]
    L = rg.length
    out = np.empty_like(w[:L])
    out[0] = xt_q
    if L >= 2:
        out[1:L] = np.einsum("lij,j...->li...", rg.U[1:L], xt_q)
        out[1:L] += np.einsum("lij,j...->li...", rg.V[1:L], xt_next)
        out[1:L] += w[1:L]
    return out


def plan_solve(plan: DichotomyPlan, f_batch):
    """Solve for one or more right-hand sides; zero block factorizations.

    Accepts a BlockVector, an (n, m) array, an (n, m, k) batch, or a list of
    BlockVectors, and returns the matching form.
    """
    if isinstance(f_batch, (list, tuple)):
        stacked = np.stack([bv.data for bv in f_batch], axis=2)
        out = plan_solve(plan, stacked)
        return [BlockVector(np.ascontiguousarray(out[:, :, i])) for i in range(out.shape[2])]
    is_bv = isinstance(f_batch, BlockVector)
    data = f_batch.data if is_bv else np.asarray(f_batch, dtype=np.float64)
    if data.shape[0] != plan.n or data.shape[1] != plan.m:
        raise DimensionMismatch(
            f"rhs layout {data.shape[:2]} does not match plan ({plan.n}, {plan.m})"
        )
    if plan.npad != plan.n:
        pad = np.zeros((plan.npad - plan.n,) + data.shape[1:])
        data_p = np.concatenate([data, pad])
    else:
        data_p = data
    w_all = [
        _range_w(plan, q, data_p[rg.lo : rg.hi]) for q, rg in enumerate(plan.ranges)
    ]
    ftilde = reduced_rhs(plan, data_p, w_all)
    xt = reduced_solve(plan.reduced, plan.tree, plan.inverse_rows, ftilde)
    x = np.empty_like(data_p)
    zero = np.zeros_like(xt[0])
    for q, rg in enumerate(plan.ranges):
        xt_next = xt[q + 1] if q + 1 < plan.ranks else zero
        x[rg.lo : rg.hi] = _recover_range(plan, q, xt[q], xt_next, w_all[q])
    x = np.ascontiguousarray(x[: plan.n])
    return BlockVector(x) if is_bv else x

"""Non-overlapping domain decomposition through the Schur complement.

The partitioned system keeps one block per subdomain interior plus the
interface block; the interface problem S x_Γ = condensed RHS is solved
iteratively (CG for symmetric systems, restarted GMRES once any subdomain is
tagged unsymmetric) with S applied matrix-free. Band preconditioners come
from :mod:`blocktri.bands` probing.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import bands, dichotomy
from .errors import (
    Breakdown,
    DimensionMismatch,
    SubdomainSolveFailure,
    UnlabeledNode,
)

INTERFACE_LABEL = -1


def partition_numbering(labels):
    """Permutation to interior-then-interface ordering.

    ``labels`` assigns each node a subdomain id >= 0 or -1 for the
    interface. Returns ``(perm, inverse, group_slices)`` where ``perm`` lists
    old indices in the new order (domain 0 nodes, domain 1 nodes, ...,
    interface last) and ``group_slices`` maps label -> slice in the new
    ordering.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise DimensionMismatch("labels must be a flat nonempty sequence")
    if not np.issubdtype(labels.dtype, np.integer):
        raise UnlabeledNode("labels must be integers (subdomain id or -1)")
    bad = np.nonzero(labels < INTERFACE_LABEL)[0]
    if bad.size:
        raise UnlabeledNode(f"node {bad[0]} has label {labels[bad[0]]}")
    domains = sorted(set(int(l) for l in labels if l != INTERFACE_LABEL))
    perm = []
    slices = {}
    pos = 0
    for dom in domains + [INTERFACE_LABEL]:
        idx = np.nonzero(labels == dom)[0]
        perm.append(idx)
        slices[dom] = slice(pos, pos + idx.size)
        pos += idx.size
    perm = np.concatenate(perm)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size)
    return perm, inverse, slices


class CgStats:
    """Iteration report of one interface solve."""

    __slots__ = ("iterations", "relative_residual", "breakdown", "converged", "history")

    def __init__(self, iterations, relative_residual, breakdown, converged, history):
        self.iterations = iterations
        self.relative_residual = relative_residual
        self.breakdown = breakdown
        self.converged = converged
        self.history = history

    def __repr__(self):
        return (
            f"CgStats(iterations={self.iterations}, "
            f"relative_residual={self.relative_residual:.3e}, "
            f"converged={self.converged})"
        )


def cg_solve(apply_op, rhs, precond=None, tol=1e-8, maxit=None):
    """Preconditioned conjugate gradients on an SPD operator.

    Stops when the relative preconditioned residual drops below ``tol`` or
    after ``maxit`` iterations (default 10*sqrt(n)); raises Breakdown on
    nonpositive curvature or an indefinite preconditioner.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    n = rhs.size
    if maxit is None:
        maxit = int(10 * math.sqrt(n)) + 1
    x = np.zeros_like(rhs)
    if not np.any(rhs):
        return x, CgStats(0, 0.0, False, True, [0.0])
    r = rhs.copy()
    z = precond(r) if precond is not None else r.copy()
    rz = float(r @ z)
    if rz <= 0:
        raise Breakdown("preconditioner produced a nonpositive inner product")
    norm0 = math.sqrt(rz)
    p = z.copy()
    history = [1.0]
    for it in range(1, maxit + 1):
        ap = apply_op(p)
        pap = float(p @ ap)
        if pap <= 0:
            raise Breakdown(f"nonpositive curvature at iteration {it}")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = precond(r) if precond is not None else r.copy()
        rz_new = float(r @ z)
        if rz_new < 0:
            raise Breakdown(f"indefinite preconditioner at iteration {it}")
        res = math.sqrt(rz_new) / norm0
        history.append(res)
        if res <= tol:
            return x, CgStats(it, res, False, True, history)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, CgStats(maxit, history[-1], False, False, history)


# -- interior operator wrappers ---------------------------------------------


class DenseOperator:
    """Small dense interior factored once (oracle-scale subdomains)."""

    kind = "dense"

    def __init__(self, a):
        self.a = np.asarray(a, dtype=np.float64)
        self.n = self.a.shape[0]
        import scipy.linalg

        self._lu = scipy.linalg.lu_factor(self.a)

    def solve(self, r):
        import scipy.linalg

        return scipy.linalg.lu_solve(self._lu, r)

    def apply(self, x):
        return self.a @ x


class SparseLUOperator:
    """Sparse interior behind SuperLU (generic path of model problems)."""

    kind = "sparse"

    def __init__(self, a):
        self.a = scipy.sparse.csc_matrix(a)
        self.n = self.a.shape[0]
        self._lu = scipy.sparse.linalg.splu(self.a)

    def solve(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.ndim == 1:
            return self._lu.solve(r)
        return np.column_stack([self._lu.solve(r[:, j]) for j in range(r.shape[1])])

    def apply(self, x):
        return self.a @ x


class BlocktriOperator:
    """Interior that is block-tridiagonal in its native ordering; solves go
    through a dichotomy plan built once."""

    kind = "blocktri"

    def __init__(self, mat, ranks=1, unpadded=None):
        self.mat = mat
        self.plan = dichotomy.plan_build(mat, ranks)
        self.n = unpadded if unpadded is not None else mat.n * mat.m
        self._shape = (mat.n, mat.m)

    def solve(self, r):
        r = np.asarray(r, dtype=np.float64)
        single = r.ndim == 1
        cols = 1 if single else r.shape[1]
        full = np.zeros((self._shape[0] * self._shape[1], cols))
        full[: self.n] = r.reshape(self.n, cols)
        x = dichotomy.plan_solve(self.plan, full.reshape(self._shape + (cols,)))
        x = x.reshape(-1, cols)[: self.n]
        return x[:, 0] if single else x

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        full = np.zeros(self._shape[0] * self._shape[1])
        full[: self.n] = x
        y = self.mat.apply(full.reshape(self._shape))
        return y.reshape(-1)[: self.n]


class SeparableOperator:
    """Interior solved by separation of variables; exposes the O(N)
    boundary-restricted Schur term."""

    kind = "separable"

    def __init__(self, sub):
        self.sub = sub
        self.n = sub.ns * sub.nt

    def solve(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.ndim == 1:
            return self.sub.solve(r.reshape(self.sub.ns, self.sub.nt)).reshape(-1)
        return np.column_stack([self.solve(r[:, j]) for j in range(r.shape[1])])

    def apply(self, x):
        return self.sub.apply(np.asarray(x).reshape(self.sub.ns, self.sub.nt)).reshape(-1)


class SubdomainBlock:
    """One subdomain: interior operator plus its interface couplings.

    ``coupling`` maps interface values to interior equations (A_iΓ);
    ``coupling_t`` is the interface-equation side (defaults to A_iΓ^T, which
    only the unsymmetric PML block overrides).
    """

    __slots__ = ("label", "op", "coupling", "coupling_t", "symmetric", "fast_schur")

    def __init__(self, label, op, coupling, coupling_t=None, symmetric=True,
                 fast_schur=False):
        self.label = label
        self.op = op
        self.coupling = scipy.sparse.csr_matrix(coupling)
        self.coupling_t = (
            scipy.sparse.csr_matrix(coupling_t)
            if coupling_t is not None
            else self.coupling.T.tocsr()
        )
        self.symmetric = symmetric
        self.fast_schur = fast_schur
        if self.coupling.shape[0] != op.n:
            raise DimensionMismatch(
                f"coupling rows {self.coupling.shape[0]} != interior size {op.n}"
            )

    @property
    def n(self):
        return self.op.n

    def solve(self, r):
        try:
            return self.op.solve(r)
        except Exception as exc:  # noqa: BLE001 - uniform failure surface
            raise SubdomainSolveFailure(f"subdomain {self.label}: {exc}") from exc

    def schur_term(self, xg):
        """A_iΓ-condensed contribution of this subdomain to S*xg."""
        if self.fast_schur:
            return self.op.sub.schur_term_fast(xg, xg.size)
        return self.coupling_t @ self.solve(self.coupling @ xg)


class SchurSystem:
    """The partitioned saddle system: interior blocks and interface block."""

    __slots__ = ("blocks", "a_gamma", "ngamma", "symmetric")

    def __init__(self, blocks, a_gamma, symmetric=None):
        self.blocks = list(blocks)
        self.a_gamma = scipy.sparse.csr_matrix(a_gamma)
        self.ngamma = self.a_gamma.shape[0]
        for blk in self.blocks:
            if blk.coupling.shape[1] != self.ngamma:
                raise DimensionMismatch(
                    f"subdomain {blk.label} coupling has {blk.coupling.shape[1]} "
                    f"interface columns, expected {self.ngamma}"
                )
        if symmetric is None:
            symmetric = all(b.symmetric for b in self.blocks)
        self.symmetric = symmetric

    @property
    def interior_sizes(self):
        return [b.n for b in self.blocks]

    def split_rhs(self, f):
        f = np.asarray(f, dtype=np.float64)
        total = sum(self.interior_sizes) + self.ngamma
        if f.size != total:
            raise DimensionMismatch(f"rhs length {f.size}, system order {total}")
        parts = []
        pos = 0
        for n in self.interior_sizes:
            parts.append(f[pos : pos + n])
            pos += n
        return parts, f[pos:]

    def assemble_solution(self, x_is, xg):
        return np.concatenate(list(x_is) + [np.asarray(xg)])

    def apply_full(self, x):
        """Saddle operator applied to a full interior-then-interface vector."""
        parts, xg = self.split_rhs(x)
        out = []
        for blk, xi in zip(self.blocks, parts):
            out.append(blk.op.apply(xi) + blk.coupling @ xg)
        yg = self.a_gamma @ xg
        for blk, xi in zip(self.blocks, parts):
            yg = yg + blk.coupling_t @ xi
        out.append(yg)
        return np.concatenate(out)


def schur_apply(sys: SchurSystem, xg):
    """S xg = A_ΓΓ xg - sum_i A_iΓ^T A_ii^{-1} A_iΓ xg, matrix-free."""
    xg = np.asarray(xg, dtype=np.float64)
    y = np.asarray(sys.a_gamma @ xg)
    for blk in sys.blocks:
        y = y - blk.schur_term(xg)
    return y


def schur_rhs(sys: SchurSystem, f):
    """Condensed interface right-hand side f_Γ - sum A_iΓ^T A_ii^{-1} f_i."""
    parts, fg = sys.split_rhs(f)
    y = fg.copy()
    for blk, fi in zip(sys.blocks, parts):
        y -= blk.coupling_t @ blk.solve(fi)
    return y


def recover_interiors(sys: SchurSystem, xg, f):
    """x_i = A_ii^{-1} (f_i - A_iΓ x_Γ) for every subdomain."""
    parts, _ = sys.split_rhs(f)
    xg = np.asarray(xg, dtype=np.float64)
    return [blk.solve(fi - blk.coupling @ xg) for blk, fi in zip(sys.blocks, parts)]


def solve_interface(sys: SchurSystem, f, tol=1e-8, maxit=None, precond=None):
    """Interface solve: CG when symmetric, restarted GMRES otherwise."""
    rhs = schur_rhs(sys, f)
    if maxit is None:
        maxit = int(10 * math.sqrt(max(sys.ngamma, 1))) + 1
    apply_op = lambda v: schur_apply(sys, v)  # noqa: E731
    if sys.symmetric:
        return cg_solve(apply_op, rhs, precond=precond, tol=tol, maxit=maxit)
    n = sys.ngamma
    lin = scipy.sparse.linalg.LinearOperator((n, n), matvec=apply_op)
    m_op = (
        scipy.sparse.linalg.LinearOperator((n, n), matvec=precond)
        if precond is not None
        else None
    )
    history = []
    cb = lambda pr_norm: history.append(float(pr_norm))  # noqa: E731
    xg, info = scipy.sparse.linalg.gmres(
        lin, rhs, rtol=tol, atol=0.0, restart=min(50, n), maxiter=maxit,
        M=m_op, callback=cb, callback_type="pr_norm",
    )
    rnorm = np.linalg.norm(rhs - apply_op(xg))
    denom = np.linalg.norm(rhs) or 1.0
    stats = CgStats(len(history), rnorm / denom, False, info == 0, history)
    return xg, stats


def solve_schur(sys: SchurSystem, f, tol=1e-8, maxit=None, precond=None):
    """Full Schur pipeline: interface solve then interior recovery.

    Returns ``(x_full, stats)`` in interior-then-interface ordering.
    """
    xg, stats = solve_interface(sys, f, tol=tol, maxit=maxit, precond=precond)
    x_is = recover_interiors(sys, xg, f)
    return sys.assemble_solution(x_is, xg), stats


def probing_preconditioner(sys: SchurSystem, d, ranks=None):
    """Probe S to bandwidth d and wrap the band solve as a preconditioner."""
    band = bands.probing_build(lambda v: schur_apply(sys, v), d, sys.ngamma)
    return bands.BandPreconditioner(band, ranks=ranks), band

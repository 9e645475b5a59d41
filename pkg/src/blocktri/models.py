"""Bundled model problems used by the CLI and the verification suite."""

from __future__ import annotations

import numpy as np
import scipy.sparse

from . import acoustic, schur, separable
from .core import BlockTriMatrix
from .laguerre import LaguerreParams, SourceSpec


def poisson_grid_matrix(nx, ny, shift=0.0):
    """Five-point Dirichlet Laplacian (+shift) on an nx*ny node grid.

    Nodes are ordered y-fastest (flat = ix*ny + iy); spacing 1.
    """
    n = nx * ny
    main = np.full(n, 4.0 + shift)
    a = scipy.sparse.diags(main).tolil()
    for ix in range(nx):
        for iy in range(ny):
            i = ix * ny + iy
            if iy + 1 < ny:
                a[i, i + 1] = -1.0
                a[i + 1, i] = -1.0
            if ix + 1 < nx:
                a[i, i + ny] = -1.0
                a[i + ny, i] = -1.0
    return a.tocsr()


def _separable_strip(ncols, ny, shift, side, gamma, coef=-1.0):
    """Column strip of the Dirichlet grid as a separable subdomain.

    The transform stencil (ct = -1) carries +2 of the diagonal, so the sweep
    diagonal is 2+shift for a total of 4+shift.
    """
    lo = -np.ones(ncols - 1)
    up = -np.ones(ncols - 1)
    di = np.full(ncols, 2.0 + shift)
    cp = separable.CouplingSide(side, gamma, np.full(ny, coef))
    return separable.SeparableSubdomain(
        ncols, ny, lo, di, up, ct=-1.0, bc="dirichlet", couplings=[cp]
    )


def _blocktri_strip(ncols, ny, shift):
    """Same strip as a block-tridiagonal matrix (one block per column)."""
    col = (
        np.diag(np.full(ny, 4.0 + shift))
        + np.diag(-np.ones(ny - 1), 1)
        + np.diag(-np.ones(ny - 1), -1)
    )
    diag = np.broadcast_to(col, (ncols, ny, ny)).copy()
    eye = np.broadcast_to(np.eye(ny), (ncols - 1, ny, ny)).copy()
    return BlockTriMatrix(diag, eye, eye)


def poisson_two_domain(nx, ny, split=None, kinds=("separable", "sparse"), shift=0.0):
    """Rectangle split by one interface column into two subdomains.

    Returns ``(system, a_global, perm, inverse, slices)``: ``a_global`` is
    the monolithic operator in natural ordering for oracle solves; the
    SchurSystem lives in the permuted interior-then-interface ordering.
    """
    if split is None:
        split = nx // 2
    if not 0 < split < nx - 1:
        raise ValueError("interface column must be strictly interior")
    a = poisson_grid_matrix(nx, ny, shift)
    ix = np.repeat(np.arange(nx), ny)
    labels = np.where(ix < split, 0, np.where(ix == split, -1, 1)).astype(np.int64)
    perm, inverse, slices = schur.partition_numbering(labels)
    ap = a[perm][:, perm].tocsr()
    ngamma = ny
    blocks = []
    widths = {0: split, 1: nx - split - 1}
    for dom, kind in zip((0, 1), kinds):
        sl = slices[dom]
        a_ii = ap[sl, sl]
        a_ig = ap[sl, slices[-1]]
        if kind == "sparse":
            op = schur.SparseLUOperator(a_ii)
            blk = schur.SubdomainBlock(dom, op, a_ig)
        elif kind == "dense":
            op = schur.DenseOperator(a_ii.toarray())
            blk = schur.SubdomainBlock(dom, op, a_ig)
        elif kind == "blocktri":
            op = schur.BlocktriOperator(_blocktri_strip(widths[dom], ny, shift))
            blk = schur.SubdomainBlock(dom, op, a_ig)
        elif kind == "separable":
            side = "s_hi" if dom == 0 else "s_lo"
            sub = _separable_strip(widths[dom], ny, shift, side, np.arange(ngamma))
            op = schur.SeparableOperator(sub)
            blk = schur.SubdomainBlock(dom, op, a_ig, fast_schur=False)
        else:
            raise ValueError(f"unknown kind {kind!r}")
        blocks.append(blk)
    a_gg = ap[slices[-1], slices[-1]]
    system = schur.SchurSystem(blocks, a_gg)
    return system, a, perm, inverse, slices


def two_medium_model(nz1=40, nz2=40, nr=96, hz=5.0, hr=5.0,
                     c1=1500.0, rho1=1.0, c2=4500.0, rho2=2.2, eta=1800.0):
    """Desk-scale two-medium layered model for probing-preconditioner sweeps.

    A slow/light layer over a fast/dense one, split at the medium contrast;
    the interface operator is symmetric positive definite, so the sweep runs
    plain preconditioned CG.
    """
    nz = nz1 + 1 + nz2
    lp = LaguerreParams(5, eta, 4)
    med = acoustic.MediumModel.layered(
        nz, nr, hz, hr, [(nz1 + 1, rho1, c1), (nz2, rho2, c2)]
    )
    src = SourceSpec(30.0, 0.2, 4.0, r=0.0, z=10.0)
    return acoustic.AcousticModel(
        med, lp, src, splits=[nz1], bc_bottom="dirichlet",
        tol=1e-8, probe_bandwidth=None,
    )


def probe_sweep(model, d_values, tol=1e-8, rhs=None, seed=0):
    """CG iteration counts over probing bandwidths on one model.

    Returns a list of (d, iterations, seconds, band) in sweep order; d=0 is
    the diagonal-preconditioner baseline.
    """
    import time as _time
    import warnings

    sys_ = model.system
    if rhs is None:
        rng = np.random.default_rng(seed)
        f = rng.standard_normal(sum(sys_.interior_sizes) + sys_.ngamma)
        rhs = schur.schur_rhs(sys_, f)
    out = []
    for d in d_values:
        t0 = _time.time()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pre, band = schur.probing_preconditioner(sys_, d)
        _x, st = schur.cg_solve(
            lambda v: schur.schur_apply(sys_, v), rhs, precond=pre.apply, tol=tol
        )
        out.append((d, st.iterations, _time.time() - t0, band))
    return out

"""Separation-of-variables solver for constant-coefficient five-point
subdomains on rectangles.

The operator must be a Kronecker sum: a tridiagonal sweep operator along one
axis (coefficients may vary along it) plus a constant three-point stencil
along the transform axis, scaled per sweep row:

    (A u)[s, t] = lo[s] u[s-1, t] + di[s] u[s, t] + up[s] u[s+1, t]
                  + w[s] * ct * (u[s, t-1] - 2 u[s, t] + u[s, t+1])

with homogeneous Dirichlet (node-centered, DST-I) or Neumann (cell-centered,
DCT-II) closures on the transform axis. Diagonalizing the transform axis
turns each mode into an independent tridiagonal solve along the sweep axis;
the full solve costs O(N log N) and interface products restricted to
boundary-supported data cost O(N).
"""

from __future__ import annotations

import math

import numpy as np
import scipy.fft

from .errors import DimensionMismatch, NotSeparable

_SIDES = ("s_lo", "s_hi", "t_lo", "t_hi")


class CouplingSide:
    """One subdomain side adjacent to the interface.

    ``gamma`` maps the side's line nodes to global interface indices and
    ``coef`` scales the coupling entry per line node (A_iGamma is the map
    g -> coef * g[gamma] placed on the boundary line).
    """

    __slots__ = ("side", "gamma", "coef")

    def __init__(self, side, gamma, coef):
        if side not in _SIDES:
            raise NotSeparable(f"unknown side {side!r}")
        self.side = side
        self.gamma = np.asarray(gamma, dtype=np.int64)
        self.coef = np.asarray(coef, dtype=np.float64)
        if self.coef.shape != self.gamma.shape:
            raise DimensionMismatch("coef and gamma must have matching length")


class SeparableSubdomain:
    """Rectangular subdomain with a transform-diagonalizable operator."""

    def __init__(self, ns, nt, sweep_lower, sweep_diag, sweep_upper,
                 ct, weights=None, bc="dirichlet", couplings=()):
        if ns < 1 or nt < 1:
            raise DimensionMismatch("grid must be at least 1x1")
        if bc not in ("dirichlet", "neumann"):
            raise NotSeparable(f"transform axis bc {bc!r} not supported")
        self.ns = ns
        self.nt = nt
        self.bc = bc
        self.ct = float(ct)
        self.sweep_lower = np.asarray(sweep_lower, dtype=np.float64)
        self.sweep_diag = np.asarray(sweep_diag, dtype=np.float64)
        self.sweep_upper = np.asarray(sweep_upper, dtype=np.float64)
        if self.sweep_diag.shape != (ns,) or self.sweep_lower.shape != (max(ns - 1, 0),) \
                or self.sweep_upper.shape != (max(ns - 1, 0),):
            raise DimensionMismatch("sweep coefficient arrays have wrong shapes")
        self.weights = (
            np.ones(ns) if weights is None else np.asarray(weights, dtype=np.float64)
        )
        if self.weights.shape != (ns,):
            raise DimensionMismatch("weights must have one entry per sweep row")
        self.couplings = list(couplings)
        if bc == "dirichlet":
            k = np.arange(1, nt + 1)
            self.eigvals = 2.0 * np.cos(k * np.pi / (nt + 1)) - 2.0
        else:
            k = np.arange(nt)
            self.eigvals = 2.0 * np.cos(k * np.pi / nt) - 2.0
        self.op_count = 0

    # -- transforms ---------------------------------------------------------

    def _fwd(self, f):
        self.op_count += int(5 * f.shape[0] * self.nt * max(math.log2(self.nt), 1))
        if self.bc == "dirichlet":
            return scipy.fft.dst(f, type=1, norm="ortho", axis=-1)
        return scipy.fft.dct(f, type=2, norm="ortho", axis=-1)

    def _inv(self, fh):
        self.op_count += int(5 * fh.shape[0] * self.nt * max(math.log2(self.nt), 1))
        if self.bc == "dirichlet":
            return scipy.fft.dst(fh, type=1, norm="ortho", axis=-1)
        return scipy.fft.idct(fh, type=2, norm="ortho", axis=-1)

    def basis_row(self, t):
        """Transform-basis values phi_k(t) for one line node t (all modes)."""
        e = np.zeros(self.nt)
        e[t] = 1.0
        if self.bc == "dirichlet":
            return scipy.fft.dst(e, type=1, norm="ortho")
        return scipy.fft.dct(e, type=2, norm="ortho")

    # -- core solves --------------------------------------------------------

    def _mode_solve(self, fh):
        """Tridiagonal sweeps along s, vectorized over all modes."""
        ns, nt = self.ns, self.nt
        diag = self.sweep_diag[:, None] + np.outer(self.weights, self.ct * self.eigvals)
        self.op_count += 8 * ns * nt
        c = np.empty((max(ns - 1, 0), nt))
        x = np.empty((ns, nt))
        denom = diag[0].copy()
        x[0] = fh[0] / denom
        for s in range(1, ns):
            c[s - 1] = self.sweep_upper[s - 1] / denom
            denom = diag[s] - self.sweep_lower[s - 1] * c[s - 1]
            x[s] = (fh[s] - self.sweep_lower[s - 1] * x[s - 1]) / denom
        for s in range(ns - 2, -1, -1):
            x[s] -= c[s] * x[s + 1]
        return x

    def solve(self, f):
        """Full subdomain solve: forward transform, mode sweeps, inverse."""
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.ns, self.nt):
            raise DimensionMismatch(f"rhs must be {(self.ns, self.nt)}")
        return self._inv(self._mode_solve(self._fwd(f)))

    def apply(self, u):
        """Operator application (residual checks and dense oracles)."""
        u = np.asarray(u, dtype=np.float64)
        y = self.sweep_diag[:, None] * u
        y[1:] += self.sweep_lower[:, None] * u[:-1]
        y[:-1] += self.sweep_upper[:, None] * u[1:]
        lap = -2.0 * u.copy()
        lap[:, 1:] += u[:, :-1]
        lap[:, :-1] += u[:, 1:]
        if self.bc == "neumann":
            lap[:, 0] += u[:, 0]
            lap[:, -1] += u[:, -1]
        y += (self.weights * self.ct)[:, None] * lap
        return y

    def dense(self):
        nn = self.ns * self.nt
        a = np.zeros((nn, nn))
        e = np.zeros((self.ns, self.nt))
        for i in range(nn):
            e.reshape(-1)[i] = 1.0
            a[:, i] = self.apply(e).reshape(-1)
            e.reshape(-1)[i] = 0.0
        return a

    # -- interface products -------------------------------------------------

    def apply_coupling(self, g):
        """A_iGamma g: interface values placed as loads on boundary lines."""
        f = np.zeros((self.ns, self.nt))
        for cp in self.couplings:
            vals = cp.coef * np.asarray(g, dtype=np.float64)[cp.gamma]
            if cp.side == "s_lo":
                f[0] += vals
            elif cp.side == "s_hi":
                f[-1] += vals
            elif cp.side == "t_lo":
                f[:, 0] += vals
            else:
                f[:, -1] += vals
        return f

    def coupling_transpose(self, u, ngamma):
        """A_iGamma^T u collapsed onto the global interface vector."""
        y = np.zeros(ngamma)
        for cp in self.couplings:
            if cp.side == "s_lo":
                line = u[0]
            elif cp.side == "s_hi":
                line = u[-1]
            elif cp.side == "t_lo":
                line = u[:, 0]
            else:
                line = u[:, -1]
            np.add.at(y, cp.gamma, cp.coef * line)
        return y

    def schur_term(self, g, ngamma):
        """Generic-path A_iGamma^T A_ii^{-1} A_iGamma g."""
        return self.coupling_transpose(self.solve(self.apply_coupling(g)), ngamma)

    def schur_term_fast(self, g, ngamma):
        """Boundary-restricted product; identical to schur_term, O(N) ops.

        Transforms are applied only to the boundary-supported input lines and
        the solution trace is only evaluated on boundary lines, so no full
        2-d transform of the subdomain is formed.
        """
        g = np.asarray(g, dtype=np.float64)
        ns, nt = self.ns, self.nt
        fh = np.zeros((ns, nt))
        t_rows = {}
        for cp in self.couplings:
            vals = cp.coef * g[cp.gamma]
            if cp.side == "s_lo":
                fh[0] += self._fwd(vals[None, :])[0]
            elif cp.side == "s_hi":
                fh[-1] += self._fwd(vals[None, :])[0]
            else:
                t = 0 if cp.side == "t_lo" else nt - 1
                if t not in t_rows:
                    t_rows[t] = self.basis_row(t)
                self.op_count += ns * nt
                fh += np.outer(vals, t_rows[t])
        uh = self._mode_solve(fh)
        y = np.zeros(ngamma)
        for cp in self.couplings:
            if cp.side == "s_lo":
                line = self._inv(uh[0][None, :])[0]
            elif cp.side == "s_hi":
                line = self._inv(uh[-1][None, :])[0]
            else:
                t = 0 if cp.side == "t_lo" else nt - 1
                if t not in t_rows:
                    t_rows[t] = self.basis_row(t)
                self.op_count += ns * nt
                line = uh @ t_rows[t]
            np.add.at(y, cp.gamma, cp.coef * line)
        return y


def separable_solve(sub: SeparableSubdomain, f):
    """Solve the subdomain problem A u = f via transform + sweeps."""
    return sub.solve(f)


def boundary_schur_product_fast(sub: SeparableSubdomain, g, ngamma=None):
    """Interface-restricted subdomain term of the Schur product, O(N)."""
    if not sub.couplings:
        raise NotSeparable("subdomain has no interface couplings")
    if ngamma is None:
        ngamma = int(max(cp.gamma.max() for cp in sub.couplings)) + 1
    return sub.schur_term_fast(g, ngamma)

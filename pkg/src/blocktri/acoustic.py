"""Desk-scale 2D cylindrical acoustic modeling in the Laguerre domain.

The time axis is expanded in orthonormal Laguerre functions; every harmonic
then satisfies one elliptic problem with the SAME operator (all history
enters the right-hand side), so subdomain factorizations and dichotomy plans
are built once and reused across harmonics.

Discretization, (r, z) with z pointing down:

* interior regions: cell-centered five-point finite volumes, volume-scaled
  (symmetric), harmonic-mean face conductivities; natural axis regularity at
  r=0, zero-flux free surface on top, ghost-cell Dirichlet on the outer
  radius.
* absorbing strip at the bottom: first-order staggered system for
  (P, v_z, v_r) with the polynomial damping profile sigma(z); the auxiliary
  q field is eliminated algebraically. Velocities are scaled by rho0*c so
  all row coefficients are O(1). With sigma == 0 the strip eliminates to
  exactly the interior five-point scheme.
* domain decomposition: the boundary cell row of the upper neighbor forms
  the interface; the absorbing block is unsymmetric, so coupled solves use
  the restarted-GMRES interface path.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse

from . import bands, laguerre, schur
from .core import BlockTriMatrix
from .errors import DimensionMismatch, SolverFailure
from .laguerre import HistorySum, LaguerreParams, PhiAccumulator, SourceSpec


class PmlParams:
    """Absorbing layer profile parameters.

    ``width`` is the layer thickness in meters (a cell-count multiple of
    h_z), ``cp`` the profile velocity, ``nu`` the polynomial degree, ``chi``
    the target reflection coefficient, ``z0`` the layer start depth.
    """

    __slots__ = ("width", "cp", "nu", "chi", "z0")

    def __init__(self, width, cp, nu=2, chi=1e-6, z0=0.0):
        if width <= 0:
            raise ValueError("PML width must be positive")
        if not 0 < chi <= 1:
            raise ValueError("chi must lie in (0, 1]")
        if nu < 1:
            raise ValueError("nu must be at least 1")
        self.width = float(width)
        self.cp = float(cp)
        self.nu = int(nu)
        self.chi = float(chi)
        self.z0 = float(z0)


def sigma_profile(z, p: PmlParams):
    """Damping profile: ((nu+1) cp / 2L) log(1/chi) ((z-z0)/L)^nu inside the
    layer, zero above it. chi=1 gives an identically zero profile."""
    z = np.asarray(z, dtype=np.float64)
    amp = (p.nu + 1) * p.cp / (2.0 * p.width) * math.log(1.0 / p.chi)
    xi = np.clip((z - p.z0) / p.width, 0.0, None)
    return amp * xi**p.nu


class MediumModel:
    """Cell-centered density/stiffness fields on an (nz, nr) grid."""

    __slots__ = ("nz", "nr", "hz", "hr", "rho", "kappa")

    def __init__(self, nz, nr, hz, hr, rho, kappa):
        self.nz = int(nz)
        self.nr = int(nr)
        self.hz = float(hz)
        self.hr = float(hr)
        self.rho = np.ascontiguousarray(rho, dtype=np.float64)
        self.kappa = np.ascontiguousarray(kappa, dtype=np.float64)
        if self.rho.shape != (nz, nr) or self.kappa.shape != (nz, nr):
            raise DimensionMismatch("rho/kappa must be (nz, nr)")
        if np.any(self.rho <= 0) or np.any(self.kappa <= 0):
            raise ValueError("rho and kappa must be positive")

    @classmethod
    def uniform(cls, nz, nr, hz, hr, rho=1.0, c=2000.0):
        kappa = rho * c * c
        return cls(nz, nr, hz, hr, np.full((nz, nr), rho), np.full((nz, nr), kappa))

    @classmethod
    def layered(cls, nz, nr, hz, hr, layers):
        """``layers`` = [(cells, rho, c), ...] from the surface down."""
        rho = np.empty((nz, nr))
        kap = np.empty((nz, nr))
        iz = 0
        for cells, rho_l, c_l in layers:
            rho[iz : iz + cells] = rho_l
            kap[iz : iz + cells] = rho_l * c_l * c_l
            iz += cells
        if iz != nz:
            raise DimensionMismatch(f"layers cover {iz} cells, grid has {nz}")
        return cls(nz, nr, hz, hr, rho, kap)

    def r_centers(self):
        return (np.arange(self.nr) + 0.5) * self.hr

    def z_centers(self):
        return (np.arange(self.nz) + 0.5) * self.hz


def _harm(a, b):
    return 2.0 * a * b / (a + b)


class InteriorOperator:
    """Volume-scaled five-point operator on a z-slab of the medium.

    Sign convention: A = -integral of div(kappa grad) + V rho eta^2/4, an SPD
    matrix; the transformed equation reads A P = V*(source density) -
    V rho eta^2 H. Nodes are ordered z-fastest (column-major in (iz, ir)).
    """

    kind = "interior"

    def __init__(self, medium: MediumModel, lp: LaguerreParams, iz_lo=0, iz_hi=None,
                 bc_top="neumann", bc_bottom="neumann",
                 c_top_face=None, c_bot_face=None):
        if iz_hi is None:
            iz_hi = medium.nz
        if not 0 <= iz_lo < iz_hi <= medium.nz:
            raise DimensionMismatch("invalid z-slab")
        if bc_top not in ("neumann", "dirichlet", "interface"):
            raise ValueError(f"bc_top {bc_top!r}")
        if bc_bottom not in ("neumann", "dirichlet", "interface"):
            raise ValueError(f"bc_bottom {bc_bottom!r}")
        self.medium = medium
        self.lp = lp
        self.iz_lo = iz_lo
        self.iz_hi = iz_hi
        self.nz = iz_hi - iz_lo
        self.nr = medium.nr
        self.bc_top = bc_top
        self.bc_bottom = bc_bottom
        hz, hr = medium.hz, medium.hr
        r_c = medium.r_centers()
        kap = medium.kappa[iz_lo:iz_hi]
        rho = medium.rho[iz_lo:iz_hi]
        nz, nr = self.nz, self.nr
        self.volumes = np.broadcast_to(r_c * hr * hz, (nz, nr)).copy()
        # face conductances
        self.c_r = np.zeros((nz, nr))  # c_r[i, j]: face between j and j+1 (j<nr-1); j=nr-1: outer face
        for j in range(nr - 1):
            self.c_r[:, j] = (j + 1) * hr * hz * _harm(kap[:, j], kap[:, j + 1]) / hr
        self.c_r[:, nr - 1] = nr * hr * hz * kap[:, nr - 1] / hr  # ghost Dirichlet
        self.c_z = np.zeros((max(nz - 1, 0), nr))  # face between rows i and i+1
        for i in range(nz - 1):
            self.c_z[i] = r_c * hr * _harm(kap[i], kap[i + 1]) / hz
        # boundary-face conductances: interface faces are supplied by the
        # caller (harmonic mean across the face); ghost Dirichlet uses the
        # local kappa
        self.c_top = np.asarray(
            c_top_face if c_top_face is not None else r_c * hr * kap[0] / hz,
            dtype=np.float64,
        )
        self.c_bot = np.asarray(
            c_bot_face if c_bot_face is not None else r_c * hr * kap[-1] / hz,
            dtype=np.float64,
        )
        self.reaction = self.volumes * rho * lp.eta**2 / 4.0
        self.rho = rho
        self._sparse = None

    @property
    def n(self):
        return self.nz * self.nr

    def idx(self, iz, ir):
        """Flat index of local cell (iz, ir), z-fastest."""
        return ir * self.nz + iz

    def _diag(self):
        nz, nr = self.nz, self.nr
        d = self.reaction.copy()
        d[:, : nr - 1] += self.c_r[:, : nr - 1]
        d[:, 1:] += self.c_r[:, : nr - 1]
        d[:, nr - 1] += self.c_r[:, nr - 1]
        if nz > 1:
            d[: nz - 1] += self.c_z
            d[1:] += self.c_z
        if self.bc_top in ("dirichlet", "interface"):
            d[0] += self.c_top
        if self.bc_bottom in ("dirichlet", "interface"):
            d[-1] += self.c_bot
        return d

    def sparse(self):
        if self._sparse is not None:
            return self._sparse
        nz, nr = self.nz, self.nr
        d = self._diag()
        rows, cols, vals = [], [], []
        iz = np.arange(nz)
        for j in range(nr):
            base = j * nz
            rows.append(base + iz)
            cols.append(base + iz)
            vals.append(d[:, j])
            if nz > 1:
                rows.append(base + iz[:-1])
                cols.append(base + iz[1:])
                vals.append(-self.c_z[:, j])
                rows.append(base + iz[1:])
                cols.append(base + iz[:-1])
                vals.append(-self.c_z[:, j])
            if j < nr - 1:
                rows.append(base + iz)
                cols.append(base + nz + iz)
                vals.append(-self.c_r[:, j])
                rows.append(base + nz + iz)
                cols.append(base + iz)
                vals.append(-self.c_r[:, j])
        n = self.n
        self._sparse = scipy.sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )
        return self._sparse

    def blocktri(self) -> BlockTriMatrix:
        """One block per r-column; off-diagonal blocks are diagonal."""
        nz, nr = self.nz, self.nr
        d = self._diag()
        diag = np.zeros((nr, nz, nz))
        for j in range(nr):
            diag[j] = np.diag(d[:, j])
            if nz > 1:
                diag[j] -= np.diag(self.c_z[:, j], 1) + np.diag(self.c_z[:, j], -1)
        coupl = np.zeros((nr - 1, nz, nz))
        for j in range(nr - 1):
            coupl[j] = np.diag(self.c_r[:, j])
        return BlockTriMatrix(diag, coupl, coupl)

    def apply(self, x):
        return self.sparse() @ np.asarray(x, dtype=np.float64)

    def load_for_source(self, iz_global, ir, f_m):
        """Single-cell impulse of weight f_m/(2 pi) (volume-scaled form)."""
        b = np.zeros(self.n)
        b[self.idx(iz_global - self.iz_lo, ir)] = f_m / (2.0 * math.pi)
        return b

    def history_rhs(self, hist_field):
        """-V rho eta^2 * H contribution of the lower-harmonic sum."""
        return -(self.volumes * self.rho).reshape(-1, order="F") * self.lp.eta**2 * hist_field


def flatten_field(field):
    """(nz, nr) cell field -> flat z-fastest vector (matches idx())."""
    return np.asarray(field, dtype=np.float64).reshape(-1, order="F")


def unflatten_field(vec, nz, nr):
    return np.asarray(vec, dtype=np.float64).reshape(nz, nr, order="F")


class PmlOperator:
    """Staggered three-field absorbing strip as one unsymmetric block.

    Unknowns per cell (t, j), interleaved z-fastest with three slots:
    pressure P, scaled vertical velocity Zs = rho0*c*v_z on the cell's top
    face, scaled radial velocity Rs = rho0*c*v_r on the cell's right face.
    The strip couples to the interface row above through the top-face
    velocity equations. chi = 1 (sigma == 0) reduces the eliminated system
    to the interior five-point scheme exactly.
    """

    kind = "pml"

    def __init__(self, lp: LaguerreParams, pml: PmlParams, nzp, nr, hz, hr,
                 rho0, c0):
        self.lp = lp
        self.pml = pml
        self.nzp = int(nzp)
        self.nr = int(nr)
        self.hz = float(hz)
        self.hr = float(hr)
        self.rho0 = float(rho0)
        self.c0 = float(c0)
        self.n = 3 * self.nzp * self.nr
        z0 = pml.z0
        self.sigma_c = sigma_profile(z0 + (np.arange(nzp) + 0.5) * hz, pml)
        self.sigma_f = sigma_profile(z0 + np.arange(nzp) * hz, pml)
        self.r_c = (np.arange(nr) + 0.5) * hr
        self.r_face = np.arange(nr + 1) * hr  # r_face[j] = left face of cell j
        self._build_sparse()
        self._solver = None

    # slot helpers ----------------------------------------------------------
    def ip(self, t, j):
        return j * 3 * self.nzp + 3 * t

    def iz_(self, t, j):
        return j * 3 * self.nzp + 3 * t + 1

    def ir_(self, t, j):
        return j * 3 * self.nzp + 3 * t + 2

    def _build_sparse(self):
        nzp, nr, hz, hr = self.nzp, self.nr, self.hz, self.hr
        eta, c = self.lp.eta, self.c0
        rows, cols, vals = [], [], []

        def add(r, cc, v):
            rows.append(r)
            cols.append(cc)
            vals.append(v)

        for j in range(nr):
            rj = self.r_c[j]
            rl = self.r_face[j]      # left face radius (0 on the axis)
            rr = self.r_face[j + 1]  # right face radius
            for t in range(nzp):
                stretch = 1.0 + 2.0 * self.sigma_c[t] / eta
                # pressure row: radial divergence + vertical divergence - reaction
                rp = self.ip(t, j)
                add(rp, self.ir_(t, j), stretch * rr / (rj * hr))
                if j > 0:
                    add(rp, self.ir_(t, j - 1), -stretch * rl / (rj * hr))
                if t < nzp - 1:
                    add(rp, self.iz_(t + 1, j), 1.0 / hz)
                add(rp, self.iz_(t, j), -1.0 / hz)
                add(rp, rp, -(eta / 2.0 + self.sigma_c[t]) / c)
                # top-face vertical momentum row
                rz = self.iz_(t, j)
                add(rz, self.ip(t, j), 1.0 / hz)
                if t > 0:
                    add(rz, self.ip(t - 1, j), -1.0 / hz)
                # t == 0: the -1/hz coefficient couples to the interface row
                add(rz, rz, -(eta / 2.0 + self.sigma_f[t]) / c)
                # right-face radial momentum row
                rr_row = self.ir_(t, j)
                if j < nr - 1:
                    add(rr_row, self.ip(t, j + 1), 1.0 / hr)
                add(rr_row, self.ip(t, j), -1.0 / hr)
                add(rr_row, rr_row, -eta / (2.0 * c))
        self.sparse = scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(self.n, self.n)
        )
        bw = 0
        coo = self.sparse.tocoo()
        if coo.nnz:
            bw = int(np.abs(coo.row - coo.col).max())
        self.half_bandwidth = bw

    def gamma_couplings(self, gamma_index_of_col):
        """(A_4Γ, G_Γ4^pml-part) given the interface index per r-column.

        A_4Γ carries the -1/hz coefficient of the interface pressure in each
        top-face momentum row; the reverse coupling (interface FV rows to the
        strip's first pressure row) is built by the caller, which owns the
        interface face conductances.
        """
        rows, cols, vals = [], [], []
        for j in range(self.nr):
            rows.append(self.iz_(0, j))
            cols.append(gamma_index_of_col[j])
            vals.append(-1.0 / self.hz)
        return scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(self.n, max(gamma_index_of_col) + 1)
        )

    def band_matrix(self) -> bands.BandMatrix:
        d = self.half_bandwidth
        b = bands.BandMatrix(self.n, d)
        for off in range(-d, d + 1):
            diag = self.sparse.diagonal(-off)
            if off >= 0:
                b.bands[d + off, : self.n - off] = diag
            else:
                b.bands[d + off, -off:] = diag
        return b

    def solver(self):
        if self._solver is None:
            band = self.band_matrix()
            mat, n0 = bands.band_as_blocktrid(band, max(band.d, 1))
            from . import dichotomy

            ranks = min(4, mat.n)
            plan = dichotomy.plan_build(mat, ranks)
            self._solver = (plan, mat.m, mat.n * mat.m, n0)
        return self._solver

    def solve(self, r):
        from . import dichotomy

        plan, m, npad, n0 = self.solver()
        r = np.asarray(r, dtype=np.float64)
        single = r.ndim == 1
        cols = 1 if single else r.shape[1]
        full = np.zeros((npad, cols))
        full[:n0] = r.reshape(n0, cols)
        x = dichotomy.plan_solve(plan, full.reshape(-1, m, cols))
        x = x.reshape(-1, cols)[:n0]
        return x[:, 0] if single else x

    def apply(self, x):
        return self.sparse @ np.asarray(x, dtype=np.float64)

    # per-harmonic right-hand side -------------------------------------------
    def rhs_from_phi(self, phi_p, phi_zs, phi_rs, phi_qs):
        """Assemble the strip RHS from the Phi histories of the four fields.

        All Phi fields are (nzp, nr): phi_p on cells, phi_zs on top faces,
        phi_rs/phi_qs on right faces (scaled velocity/auxiliary units).
        """
        nzp, nr, hr = self.nzp, self.nr, self.hr
        eta, c = self.lp.eta, self.c0
        rhs = np.zeros(self.n)
        for j in range(nr):
            rj = self.r_c[j]
            rl = self.r_face[j]
            rr = self.r_face[j + 1]
            for t in range(nzp):
                q_div = rr * phi_qs[t, j] - (rl * phi_qs[t, j - 1] if j > 0 else 0.0)
                rhs[self.ip(t, j)] = (
                    phi_p[t, j] / c
                    + (2.0 * self.sigma_c[t] / eta) * q_div / (rj * hr)
                )
                rhs[self.iz_(t, j)] = phi_zs[t, j] / c
                rhs[self.ir_(t, j)] = phi_rs[t, j] / c
        return rhs

    def extract_fields(self, x):
        """Solution vector -> (P, Zs, Rs) fields of shape (nzp, nr)."""
        x = np.asarray(x, dtype=np.float64)
        cube = x.reshape(self.nr, self.nzp, 3)
        p = cube[:, :, 0].T.copy()
        zs = cube[:, :, 1].T.copy()
        rs = cube[:, :, 2].T.copy()
        return p, zs, rs


class HarmonicState:
    """Everything carried across harmonics: the next index m, per-field
    history accumulators, gauge coefficient records, and snapshot sums."""

    def __init__(self, model, gauges=(), snapshot_times=()):
        lp = model.lp
        self.m = 0
        self.hist_regions = [HistorySum(lp.alpha, shape=(op.n,)) for op in model.regions]
        self.hist_gamma = HistorySum(lp.alpha, shape=(model.ngamma,))
        if model.pml is not None:
            shape = (model.pml.nzp, model.pml.nr)
            self.phi_p = PhiAccumulator(lp.alpha, lp.eta, shape)
            self.phi_zs = PhiAccumulator(lp.alpha, lp.eta, shape)
            self.phi_rs = PhiAccumulator(lp.alpha, lp.eta, shape)
            self.phi_qs = PhiAccumulator(lp.alpha, lp.eta, shape)
        self.gauges = list(gauges)
        self.gauge_coeffs = np.zeros((lp.nterms, max(len(self.gauges), 1)))
        self.snapshot_times = np.asarray(list(snapshot_times), dtype=np.float64)
        basis = None
        if self.snapshot_times.size:
            basis = laguerre_basis_table(lp, self.snapshot_times)
        self._snap_basis = basis
        self.snapshots = [
            np.zeros((model.nz_total, model.nr)) for _ in range(self.snapshot_times.size)
        ]
        self.stats = []


def laguerre_basis_table(lp: LaguerreParams, times):
    """(nterms, ntimes) values of the synthesis basis (eta t)^(a/2) l_m."""
    x = lp.eta * np.asarray(times, dtype=np.float64)
    table = laguerre.laguerre_all(lp.nterms - 1, lp.alpha, x, weighted=True)
    return table * np.power(x, 0.5 * lp.alpha)


class AcousticModel:
    """Layered interior + optional absorbing strip, coupled through the
    Schur interface; one elliptic solve per Laguerre harmonic."""

    def __init__(self, medium: MediumModel, lp: LaguerreParams, source: SourceSpec,
                 pml_params: PmlParams | None = None, pml_cells=0, splits=(),
                 bc_bottom="neumann", tol=1e-9, probe_bandwidth=3, ranks=2):
        self.medium = medium
        self.lp = lp
        self.source = source
        self.tol = tol
        nz, nr, hz, hr = medium.nz, medium.nr, medium.hz, medium.hr
        self.nr = nr
        self.hz, self.hr = hz, hr

        gamma_rows = sorted(set(int(s) for s in splits))
        if pml_params is not None:
            if pml_cells < 1:
                raise ValueError("pml_cells must be positive with pml_params")
            gamma_rows.append(nz - 1)
        self.gamma_rows = gamma_rows
        if any(g < 1 or g >= nz for g in gamma_rows):
            raise DimensionMismatch("interface rows must be interior to the grid")

        # regions between interface rows
        spans = []
        prev = 0
        for g in gamma_rows:
            spans.append((prev, g))
            prev = g + 1
        if prev < nz:
            spans.append((prev, nz))
        if any(e <= s for s, e in spans):
            raise DimensionMismatch("empty region between interface rows")
        self.spans = spans

        self.ngamma = len(gamma_rows) * nr
        self._gamma_index = {}
        for pos, g in enumerate(gamma_rows):
            for j in range(nr):
                self._gamma_index[(g, j)] = pos * nr + j

        kap = medium.kappa
        r_c = medium.r_centers()

        def zface_conductance(iz_above):
            return r_c * hr * _harm(kap[iz_above], kap[iz_above + 1]) / hz

        # interior region operators
        self.regions = []
        self._region_of_row = {}
        for s, e in spans:
            bc_top = "neumann" if s == 0 else "interface"
            if e == nz:
                bot = bc_bottom
            else:
                bot = "interface"
            op = InteriorOperator(
                medium, lp, iz_lo=s, iz_hi=e, bc_top=bc_top, bc_bottom=bot,
                c_top_face=zface_conductance(s - 1) if s > 0 else None,
                c_bot_face=zface_conductance(e - 1) if e < nz else None,
            )
            for iz in range(s, e):
                self._region_of_row[iz] = (len(self.regions), iz - s)
            self.regions.append(op)

        # absorbing strip
        self.pml = None
        self.pml_params = pml_params
        if pml_params is not None:
            rho_bot = medium.rho[nz - 1]
            kap_bot = medium.kappa[nz - 1]
            if np.ptp(rho_bot) > 0 or np.ptp(kap_bot) > 0:
                raise DimensionMismatch("bottom row must be laterally uniform for the strip")
            rho0 = float(rho_bot[0])
            c0 = math.sqrt(float(kap_bot[0]) / rho0)
            self.pml = PmlOperator(lp, pml_params, pml_cells, nr, hz, hr, rho0, c0)

        self._assemble_interface()
        self._build_system(ranks)
        self._precond = None
        self.probe_bandwidth = probe_bandwidth

    # -- assembly ------------------------------------------------------------

    def _assemble_interface(self):
        med, lp = self.medium, self.lp
        nz, nr, hz, hr = med.nz, med.nr, med.hz, med.hr
        kap, rho = med.kappa, med.rho
        r_c = med.r_centers()
        ng = self.ngamma
        diag = np.zeros(ng)
        off = np.zeros(max(ng - 1, 0))
        self._gamma_volumes = np.zeros(ng)
        self._gamma_rho = np.zeros(ng)
        for pos, g in enumerate(self.gamma_rows):
            base = pos * nr
            vol = r_c * hr * hz
            self._gamma_volumes[base : base + nr] = vol
            self._gamma_rho[base : base + nr] = rho[g]
            d = vol * rho[g] * lp.eta**2 / 4.0
            cr = np.zeros(nr)
            for j in range(nr - 1):
                cr[j] = (j + 1) * hr * hz * _harm(kap[g, j], kap[g, j + 1]) / hr
            d[: nr - 1] += cr[: nr - 1]
            d[1:] += cr[: nr - 1]
            d += nr * hr * hz * kap[g, nr - 1] / hr * (np.arange(nr) == nr - 1)
            # faces to the neighbors above/below
            d += r_c * hr * _harm(kap[g - 1], kap[g]) / hz
            if g + 1 < nz:
                d += r_c * hr * _harm(kap[g], kap[g + 1]) / hz
            elif self.pml is not None:
                kap0 = self.pml.rho0 * self.pml.c0**2
                self._pml_face = r_c * hr * _harm(kap[g], np.full(nr, kap0)) / hz
                d += self._pml_face
            diag[base : base + nr] = d
            off[base : base + nr - 1] = -cr[: nr - 1]
        self.a_gamma = scipy.sparse.diags(
            [off, diag, off], [-1, 0, 1], format="csr"
        )

    def _region_coupling(self, ridx):
        """A_iGamma for region ridx (sparse, n_i x ngamma)."""
        op = self.regions[ridx]
        med = self.medium
        rows, cols, vals = [], [], []
        if op.bc_top == "interface":
            g = op.iz_lo - 1
            for j in range(self.nr):
                rows.append(op.idx(0, j))
                cols.append(self._gamma_index[(g, j)])
                vals.append(-op.c_top[j])
        if op.bc_bottom == "interface":
            g = op.iz_hi
            for j in range(self.nr):
                rows.append(op.idx(op.nz - 1, j))
                cols.append(self._gamma_index[(g, j)])
                vals.append(-op.c_bot[j])
        return scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(op.n, self.ngamma)
        )

    def _build_system(self, ranks):
        blocks = []
        for ridx, op in enumerate(self.regions):
            wrapped = schur.BlocktriOperator(op.blocktri(), ranks=min(ranks, self.nr))
            blk = schur.SubdomainBlock(f"region{ridx}", wrapped, self._region_coupling(ridx))
            blocks.append(blk)
        if self.pml is not None:
            g = self.gamma_rows[-1]
            gcols = [self._gamma_index[(g, j)] for j in range(self.nr)]
            a_4g = self.pml.gamma_couplings(gcols)
            if a_4g.shape[1] < self.ngamma:
                a_4g = scipy.sparse.hstack(
                    [a_4g, scipy.sparse.csr_matrix((self.pml.n, self.ngamma - a_4g.shape[1]))]
                ).tocsr()
            rows, cols, vals = [], [], []
            for j in range(self.nr):
                rows.append(gcols[j])
                cols.append(self.pml.ip(0, j))
                vals.append(-self._pml_face[j])
            g_4 = scipy.sparse.csr_matrix(
                (vals, (rows, cols)), shape=(self.ngamma, self.pml.n)
            )
            blocks.append(
                schur.SubdomainBlock("pml", self.pml, a_4g, coupling_t=g_4, symmetric=False)
            )
        self.system = schur.SchurSystem(blocks, self.a_gamma)

    # -- geometry helpers ----------------------------------------------------

    @property
    def nz_total(self):
        return self.medium.nz + (self.pml.nzp if self.pml is not None else 0)

    def source_cell(self):
        iz = min(max(int(self.source.z / self.hz), 0), self.medium.nz - 1)
        ir = min(max(int(self.source.r / self.hr), 0), self.nr - 1)
        return iz, ir

    def pressure_field(self, parts, xg, pml_p=None):
        """Assemble the full (nz_total, nr) pressure field of one harmonic."""
        field = np.zeros((self.nz_total, self.nr))
        for (s, e), op, xi in zip(self.spans, self.regions, parts):
            field[s:e] = unflatten_field(xi, op.nz, op.nr)
        for pos, g in enumerate(self.gamma_rows):
            field[g] = xg[pos * self.nr : (pos + 1) * self.nr]
        if self.pml is not None and pml_p is not None:
            field[self.medium.nz :] = pml_p
        return field

    # -- per-harmonic solve ---------------------------------------------------

    def preconditioner(self):
        d = self.probe_bandwidth
        if self._precond is None and d is not None and 2 * d + 1 <= self.ngamma:
            pre, _band = schur.probing_preconditioner(self.system, d)
            self._precond = pre
        return self._precond

    def solve_harmonic(self, state: HarmonicState, f_m):
        """Advance one harmonic: build the RHS from histories, solve the
        coupled system, update accumulators and output records."""
        m = state.m
        lp = self.lp
        src_iz, src_ir = self.source_cell()
        rhs_parts = []
        for ridx, op in enumerate(self.regions):
            b = op.history_rhs(state.hist_regions[ridx].weighted_sum())
            if op.iz_lo <= src_iz < op.iz_hi:
                b = b + op.load_for_source(src_iz, src_ir, f_m)
            rhs_parts.append(b)
        if self.pml is not None:
            rhs_parts.append(
                self.pml.rhs_from_phi(
                    state.phi_p.value(), state.phi_zs.value(),
                    state.phi_rs.value(), state.phi_qs.value(),
                )
            )
        bg = -self._gamma_volumes * self._gamma_rho * lp.eta**2 * state.hist_gamma.weighted_sum()
        for pos, g in enumerate(self.gamma_rows):
            if g == src_iz:
                bg[pos * self.nr + src_ir] += f_m / (2.0 * math.pi)
        f = np.concatenate(rhs_parts + [bg])
        try:
            x, stats = schur.solve_schur(
                self.system, f, tol=self.tol,
                precond=self.preconditioner().apply if self.preconditioner() else None,
            )
        except Exception as exc:  # noqa: BLE001
            raise SolverFailure(m, f"harmonic {m}: {exc}") from exc
        state.stats.append(stats)
        parts, xg = self.system.split_rhs(x)
        nreg = len(self.regions)
        pml_fields = None
        if self.pml is not None:
            pml_fields = self.pml.extract_fields(parts[nreg])
        field = self.pressure_field(
            parts[:nreg], xg, pml_fields[0] if pml_fields else None
        )
        # histories
        for ridx in range(nreg):
            state.hist_regions[ridx].append(parts[ridx])
        state.hist_gamma.append(xg)
        if self.pml is not None:
            p_pml, zs, rs = pml_fields
            qs = (2.0 / lp.eta) * (rs - state.phi_qs.value())
            state.phi_p.step(p_pml)
            state.phi_zs.step(zs)
            state.phi_rs.step(rs)
            state.phi_qs.step(qs)
        # outputs
        for gi, (gr, gz) in enumerate(state.gauges):
            iz = min(max(int(gz / self.hz), 0), self.nz_total - 1)
            ir = min(max(int(gr / self.hr), 0), self.nr - 1)
            state.gauge_coeffs[m, gi] = field[iz, ir]
        for ti in range(state.snapshot_times.size):
            state.snapshots[ti] += state._snap_basis[m, ti] * field
        state.m += 1
        return state

    def run(self, gauges=(), snapshot_times=(), nterms=None, progress=None):
        """Full harmonic loop; returns the finished HarmonicState."""
        lp = self.lp
        n = nterms if nterms is not None else lp.nterms
        fm = laguerre.source_coeffs(self.source, lp)
        state = HarmonicState(self, gauges=gauges, snapshot_times=snapshot_times)
        for m in range(n):
            self.solve_harmonic(state, fm[m])
            if progress is not None:
                progress(m, n)
        return state

    def gauge_series(self, state: HarmonicState, times):
        """Reconstruct gauge time series from recorded coefficients."""
        return laguerre.reconstruct_time(state.gauge_coeffs, self.lp, times)

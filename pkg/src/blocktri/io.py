"""Binary containers and atomic file output.

Formats (all little-endian, float64 payloads, row-major blocks):

* ``BTR1`` block-tridiagonal matrix: magic, u64 N, u64 M, then C blocks
  (N*M*M), A blocks ((N-1)*M*M), B blocks ((N-1)*M*M).
* ``BVC1`` block vector: magic, u64 N, u64 M, then N*M doubles.
* ``BAND`` band matrix: magic, u64 n, u64 d, then (2d+1)*n doubles, rows
  k = 0..2d holding diagonal offset k-d in column-aligned storage
  (entry (j+k-d, j) at position [k, j]; out-of-matrix positions zero).
* ``DPLN`` dichotomy plan: versioned dump of every factor payload; loading
  requires the source matrix and checks its fingerprint.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from . import dichotomy
from .bands import BandMatrix
from .core import BlockTriMatrix, BlockVector, ThomasFactorization
from .errors import FileFormatError


def atomic_write(path, data: bytes):
    """Write via a temp file + rename so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-blocktri-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_exact(fh, count, what):
    data = fh.read(count)
    if len(data) != count:
        raise FileFormatError(f"truncated file while reading {what}")
    return data


def _read_f64(fh, count, what):
    return np.frombuffer(_read_exact(fh, count * 8, what), dtype="<f8").copy()


def _read_i64(fh, count, what):
    return np.frombuffer(_read_exact(fh, count * 8, what), dtype="<i8").copy()


def _check_magic(fh, magic):
    got = fh.read(4)
    if got != magic:
        raise FileFormatError(f"bad magic {got!r}, expected {magic!r}")


# -- BTR1 / BVC1 --------------------------------------------------------------


def write_matrix(path, p: BlockTriMatrix):
    parts = [b"BTR1", struct.pack("<QQ", p.n, p.m)]
    parts.append(p.diag.astype("<f8").tobytes())
    parts.append(p.lower.astype("<f8").tobytes())
    parts.append(p.upper.astype("<f8").tobytes())
    atomic_write(path, b"".join(parts))


def read_matrix(path) -> BlockTriMatrix:
    with open(path, "rb") as fh:
        _check_magic(fh, b"BTR1")
        n, m = struct.unpack("<QQ", _read_exact(fh, 16, "header"))
        diag = _read_f64(fh, n * m * m, "diag blocks").reshape(n, m, m)
        lower = _read_f64(fh, (n - 1) * m * m, "lower blocks").reshape(n - 1, m, m)
        upper = _read_f64(fh, (n - 1) * m * m, "upper blocks").reshape(n - 1, m, m)
        if fh.read(1):
            raise FileFormatError("trailing bytes after BTR1 payload")
    return BlockTriMatrix(diag, lower, upper)


def write_vector(path, v: BlockVector):
    parts = [b"BVC1", struct.pack("<QQ", v.n, v.m), v.data.astype("<f8").tobytes()]
    atomic_write(path, b"".join(parts))


def read_vector(path) -> BlockVector:
    with open(path, "rb") as fh:
        _check_magic(fh, b"BVC1")
        n, m = struct.unpack("<QQ", _read_exact(fh, 16, "header"))
        data = _read_f64(fh, n * m, "vector payload").reshape(n, m)
        if fh.read(1):
            raise FileFormatError("trailing bytes after BVC1 payload")
    return BlockVector(data)


# -- BAND ---------------------------------------------------------------------


def write_band(path, b: BandMatrix):
    parts = [b"BAND", struct.pack("<QQ", b.n, b.d), b.bands.astype("<f8").tobytes()]
    atomic_write(path, b"".join(parts))


def read_band(path) -> BandMatrix:
    with open(path, "rb") as fh:
        _check_magic(fh, b"BAND")
        n, d = struct.unpack("<QQ", _read_exact(fh, 16, "header"))
        bands = _read_f64(fh, (2 * d + 1) * n, "band payload").reshape(2 * d + 1, n)
        if fh.read(1):
            raise FileFormatError("trailing bytes after BAND payload")
    return BandMatrix(n, d, bands)


# -- DPLN ---------------------------------------------------------------------

PLAN_VERSION = 1


def write_plan(path, plan: dichotomy.DichotomyPlan):
    parts = [b"DPLN", struct.pack("<Q", PLAN_VERSION)]
    parts.append(
        struct.pack("<QQQQQ", plan.n, plan.m, plan.ranks, plan.L, plan.npad)
    )
    fp = plan.matrix_fingerprint.encode("ascii")
    parts.append(struct.pack("<Q", len(fp)))
    parts.append(fp)
    red = plan.reduced.matrix
    parts.append(red.diag.astype("<f8").tobytes())
    parts.append(red.lower.astype("<f8").tobytes())
    parts.append(red.upper.astype("<f8").tobytes())
    for rg in plan.ranges:
        parts.append(rg.U.astype("<f8").tobytes())
        parts.append(rg.V.astype("<f8").tobytes())
        if plan.L >= 2:
            parts.append(rg.fact.dlu.astype("<f8").tobytes())
            parts.append(rg.fact.dpiv.astype("<i8").tobytes())
            parts.append(rg.fact.supper.astype("<f8").tobytes())
    for rows in plan.inverse_rows:
        parts.append(rows.astype("<f8").tobytes())
    atomic_write(path, b"".join(parts))


def read_plan(path, matrix: BlockTriMatrix) -> dichotomy.DichotomyPlan:
    """Load a plan and bind it to its source matrix (fingerprint-checked)."""
    with open(path, "rb") as fh:
        _check_magic(fh, b"DPLN")
        (version,) = struct.unpack("<Q", _read_exact(fh, 8, "version"))
        if version != PLAN_VERSION:
            raise FileFormatError(f"unsupported plan version {version}")
        n, m, ranks, L, npad = struct.unpack(
            "<QQQQQ", _read_exact(fh, 40, "plan dims")
        )
        (fplen,) = struct.unpack("<Q", _read_exact(fh, 8, "fingerprint length"))
        fingerprint = _read_exact(fh, fplen, "fingerprint").decode("ascii")
        if matrix.fingerprint() != fingerprint:
            raise FileFormatError("plan does not belong to this matrix")
        if matrix.n != n or matrix.m != m:
            raise FileFormatError("plan dimensions disagree with the matrix")
        rdiag = _read_f64(fh, ranks * m * m, "reduced diag").reshape(ranks, m, m)
        rlow = _read_f64(fh, (ranks - 1) * m * m, "reduced lower").reshape(
            max(ranks - 1, 0), m, m
        )
        rup = _read_f64(fh, (ranks - 1) * m * m, "reduced upper").reshape(
            max(ranks - 1, 0), m, m
        )
        reduced = dichotomy.ReducedSystem(BlockTriMatrix(rdiag, rlow, rup))
        padded = dichotomy._pad_identity(matrix, npad)
        ranges = []
        for q in range(ranks):
            U = _read_f64(fh, (L + 1) * m * m, "U factors").reshape(L + 1, m, m)
            V = _read_f64(fh, (L + 1) * m * m, "V factors").reshape(L + 1, m, m)
            fact = None
            if L >= 2:
                dlu = _read_f64(fh, (L - 1) * m * m, "sweep factors").reshape(L - 1, m, m)
                dpiv = _read_i64(fh, (L - 1) * m, "sweep pivots").reshape(L - 1, m)
                supper = _read_f64(fh, max(L - 2, 0) * m * m, "sweep couplings").reshape(
                    max(L - 2, 0), m, m
                )
                sub = padded.submatrix(q * L + 1, (q + 1) * L - 1)
                fact = ThomasFactorization(
                    L - 1, m, dlu, dpiv, supper, sub.lower, sub.fingerprint()
                )
            ranges.append(
                dichotomy.SuperpositionFactors(q * L, (q + 1) * L, U, V, fact)
            )
        tree = dichotomy.build_partition_tree(ranks)
        inverse_rows = []
        for lo, hi, _k, _level in tree.nodes:
            size = hi - lo + 1
            inverse_rows.append(
                _read_f64(fh, m * size * m, "inverse rows").reshape(m, size * m)
            )
        if fh.read(1):
            raise FileFormatError("trailing bytes after DPLN payload")
    return dichotomy.DichotomyPlan(
        n, m, ranks, L, npad, padded, ranges, reduced, tree, inverse_rows, fingerprint
    )


# -- snapshots ----------------------------------------------------------------


def write_snapshot(path, field, meta: dict):
    """Raw doubles plus a text sidecar (``path`` + '.txt') describing them."""
    field = np.ascontiguousarray(field, dtype="<f8")
    atomic_write(path, field.tobytes())
    lines = [f"{key} = {meta[key]}" for key in sorted(meta)]
    atomic_write(path + ".txt", ("\n".join(lines) + "\n").encode())


def read_snapshot(path, nz, nr):
    with open(path, "rb") as fh:
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != nz * nr:
        raise FileFormatError(f"snapshot has {data.size} doubles, expected {nz * nr}")
    return data.reshape(nz, nr).copy()

"""Both kernel backends implement the same contract with the same pivoting."""

import numpy as np
import pytest

from blocktri import _kernels_py, core
from blocktri.errors import SingularBlock, SingularPivot

compiled = pytest.importorskip("blocktri._kernels")


@pytest.fixture
def rng():
    return np.random.default_rng(77)


def test_extension_is_active_by_default():
    from blocktri import backend

    assert backend.backend_name() == "compiled"


def test_lu_identical_pivoting(rng):
    for m in (1, 2, 5, 9):
        a = rng.standard_normal((m, m)) + m * np.eye(m)
        lu_p, piv_p = _kernels_py.lu_factor(a)
        lu_c, piv_c = compiled.lu_factor(a)
        assert np.array_equal(piv_p, piv_c)
        assert np.abs(lu_p - lu_c).max() <= 1e-14 * np.abs(lu_p).max()


def test_lu_solve_agreement(rng):
    a = rng.standard_normal((6, 6)) + 6 * np.eye(6)
    b = rng.standard_normal((6, 4))
    xp = _kernels_py.lu_solve(*_kernels_py.lu_factor(a), b)
    xc = compiled.lu_solve(*compiled.lu_factor(a), b)
    assert np.abs(xp - xc).max() <= 1e-13 * np.abs(xp).max()


def test_singular_block_both(rng):
    with pytest.raises(SingularBlock):
        _kernels_py.lu_factor(np.zeros((3, 3)))
    with pytest.raises(SingularBlock):
        compiled.lu_factor(np.zeros((3, 3)))


def test_thomas_agreement(rng):
    for n, m in [(1, 3), (2, 1), (17, 5), (40, 2)]:
        mat = core.random_dominant(n, m, rng)
        f = rng.standard_normal((n, m))
        fp = _kernels_py.thomas_factor(mat.diag, mat.lower, mat.upper)
        fc = compiled.thomas_factor(mat.diag, mat.lower, mat.upper)
        assert np.array_equal(fp[1], fc[1])  # identical pivot choices
        xp = _kernels_py.thomas_solve(*fp, mat.lower, f)
        xc = compiled.thomas_solve(*fc, mat.lower, f)
        scale = max(np.abs(xp).max(), 1e-300)
        assert np.abs(xp - xc).max() <= 1e-12 * scale


def test_singular_pivot_row_agreement():
    diag = np.broadcast_to(np.eye(2), (4, 2, 2)).copy()
    diag[2] = 0.0
    lower = np.zeros((3, 2, 2))
    upper = np.zeros((3, 2, 2))
    with pytest.raises(SingularPivot) as e1:
        _kernels_py.thomas_factor(diag, lower, upper)
    with pytest.raises(SingularPivot) as e2:
        compiled.thomas_factor(diag, lower, upper)
    assert e1.value.row == e2.value.row == 2


def test_batched_rhs_agreement(rng):
    mat = core.random_dominant(12, 4, rng)
    f = rng.standard_normal((12, 4, 7))
    fp = _kernels_py.thomas_factor(mat.diag, mat.lower, mat.upper)
    fc = compiled.thomas_factor(mat.diag, mat.lower, mat.upper)
    xp = _kernels_py.thomas_solve(*fp, mat.lower, f)
    xc = compiled.thomas_solve(*fc, mat.lower, f)
    assert np.abs(xp - xc).max() <= 1e-12 * np.abs(xp).max()

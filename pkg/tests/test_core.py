import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blocktri import core
from blocktri.errors import (
    DimensionMismatch,
    OracleTooLarge,
    SingularBlock,
    SingularPivot,
)

from oracles import dense_from_blocks, gauss_solve, scalar_thomas


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class TestLuFactor:
    def test_identity_unit_pivots(self):
        fact = core.lu_factor(np.eye(3))
        assert np.array_equal(fact.lu, np.eye(3))
        assert np.array_equal(fact.piv, np.arange(3))

    def test_reconstruction(self, rng):
        a = rng.uniform(-1, 1, (4, 4))
        np.fill_diagonal(a, np.abs(a).sum(axis=1) + 1)
        fact = core.lu_factor(a)
        assert np.abs(fact.reconstruct() - a).max() <= 1e-12

    def test_zero_block_rejected(self):
        with pytest.raises(SingularBlock):
            core.lu_factor(np.zeros((3, 3)))

    def test_nonfinite_rejected(self):
        a = np.eye(2)
        a[0, 0] = np.nan
        with pytest.raises(SingularBlock):
            core.lu_factor(a)

    def test_counts_factorizations(self):
        before = core.factorization_count()
        core.lu_factor(np.eye(2))
        assert core.factorization_count() == before + 1


class TestLuSolve:
    def test_identity(self, rng):
        b = rng.standard_normal(3)
        assert np.array_equal(core.lu_solve(core.lu_factor(np.eye(3)), b), b)

    def test_diagonal(self):
        x = core.lu_solve(core.lu_factor(np.diag([2.0, 4.0])), np.array([2.0, 4.0]))
        assert np.allclose(x, [1.0, 1.0], rtol=0, atol=1e-15)

    def test_matches_gauss_oracle(self, rng):
        a = rng.standard_normal((5, 5)) + 5 * np.eye(5)
        b = rng.standard_normal(5)
        x = core.lu_solve(core.lu_factor(a), b)
        assert np.abs(x - gauss_solve(a, b)).max() <= 1e-10 * np.abs(b).max()
        assert np.abs(a @ x - b).max() <= 1e-10 * np.abs(b).max()

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            core.lu_solve(core.lu_factor(np.eye(3)), np.ones(4))


class TestDenseExpand:
    def test_single_block(self, rng):
        c = rng.standard_normal((1, 3, 3))
        p = core.BlockTriMatrix(c)
        assert np.array_equal(core.dense_expand(p), c[0])

    def test_scalar_signs(self):
        p = core.BlockTriMatrix(
            np.array([[[2.0]], [[2.0]]]), np.array([[[1.0]]]), np.array([[[1.0]]])
        )
        assert np.array_equal(core.dense_expand(p), [[2.0, -1.0], [-1.0, 2.0]])

    def test_symmetry_condition(self, rng):
        m = 3
        upper = rng.standard_normal((3, m, m))
        lower = upper.transpose(0, 2, 1)
        diag = rng.standard_normal((4, m, m))
        diag = diag + diag.transpose(0, 2, 1)
        p = core.BlockTriMatrix(diag, lower, upper)
        dense = core.dense_expand(p)
        assert np.abs(dense - dense.T).max() == 0.0

    def test_matches_direct_assembly(self, rng):
        p = core.random_dominant(5, 2, rng)
        assert np.array_equal(
            core.dense_expand(p), dense_from_blocks(p.diag, p.lower, p.upper)
        )

    def test_zero_outside_three_diagonals(self, rng):
        p = core.random_dominant(6, 2, rng)
        dense = core.dense_expand(p)
        m = p.m
        for i in range(p.n):
            for j in range(p.n):
                if abs(i - j) > 1:
                    assert np.all(dense[i * m : (i + 1) * m, j * m : (j + 1) * m] == 0)

    def test_cap(self, rng):
        p = core.random_dominant(8, 2, rng)
        with pytest.raises(OracleTooLarge):
            core.dense_expand(p, cap=8)


class TestThomas:
    def test_block_diagonal_decoupled(self, rng):
        diag = rng.standard_normal((4, 3, 3)) + 4 * np.eye(3)
        p = core.BlockTriMatrix(diag)
        fact = core.thomas_factor(p)
        f = rng.standard_normal((4, 3))
        x = core.thomas_solve(fact, f)
        for i in range(4):
            assert np.abs(diag[i] @ x[i] - f[i]).max() <= 1e-12

    def test_scalar_matches_classic_thomas(self, rng):
        n = 12
        lo = rng.uniform(0.1, 0.4, n - 1)
        up = rng.uniform(0.1, 0.4, n - 1)
        di = rng.uniform(2.0, 3.0, n)
        f = rng.standard_normal(n)
        p = core.BlockTriMatrix(
            di.reshape(n, 1, 1), lo.reshape(n - 1, 1, 1), up.reshape(n - 1, 1, 1)
        )
        x = core.thomas_solve(core.thomas_factor(p), f.reshape(n, 1))
        assert np.abs(x[:, 0] - scalar_thomas(lo, di, up, f)).max() <= 1e-12

    def test_dominant_instance_succeeds(self, rng):
        p = core.random_dominant(32, 6, rng)
        core.thomas_factor(p)

    def test_identity_passthrough(self, rng):
        p = core.BlockTriMatrix.identity(5, 4)
        f = rng.standard_normal((5, 4))
        assert np.array_equal(core.thomas_solve(core.thomas_factor(p), f), f)

    def test_zero_rhs(self, rng):
        p = core.random_dominant(6, 3, rng)
        x = core.thomas_solve(core.thomas_factor(p), np.zeros((6, 3)))
        assert np.all(x == 0)

    def test_matches_dense_oracle(self, rng):
        p = core.random_dominant(16, 4, rng)
        f = rng.standard_normal((16, 4))
        x = core.thomas_solve(core.thomas_factor(p), f)
        xd = gauss_solve(core.dense_expand(p), f.reshape(-1)).reshape(16, 4)
        assert np.abs(x - xd).max() <= 1e-9 * np.abs(xd).max()

    def test_singular_pivot_reports_row(self):
        diag = np.broadcast_to(np.eye(2), (3, 2, 2)).copy()
        diag[1] = 0.0
        p = core.BlockTriMatrix(diag)
        with pytest.raises(SingularPivot) as ei:
            core.thomas_factor(p)
        assert ei.value.row == 1

    def test_factorization_fingerprint(self, rng):
        p = core.random_dominant(5, 2, rng)
        q = core.random_dominant(5, 2, rng)
        fact = core.thomas_factor(p)
        assert fact.matches(p) and not fact.matches(q)

    def test_reuse_is_bitwise_identical(self, rng):
        p = core.random_dominant(10, 3, rng)
        fs = [rng.standard_normal((10, 3)) for _ in range(4)]
        fact = core.thomas_factor(p)
        xs_shared = [core.thomas_solve(fact, f) for f in fs]
        for f, x in zip(fs, xs_shared):
            fresh = core.thomas_solve(core.thomas_factor(p), f)
            assert np.array_equal(x, fresh)

    def test_solve_counts_no_factorizations(self, rng):
        p = core.random_dominant(10, 3, rng)
        fact = core.thomas_factor(p)
        before = core.factorization_count()
        for _ in range(5):
            core.thomas_solve(fact, rng.standard_normal((10, 3)))
        assert core.factorization_count() == before

    def test_dimension_mismatch(self, rng):
        p = core.random_dominant(5, 2, rng)
        fact = core.thomas_factor(p)
        with pytest.raises(DimensionMismatch):
            core.thomas_solve(fact, np.zeros((4, 2)))


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 24),
    m=st.integers(1, 6),
    seed=st.integers(0, 2**31),
)
def test_oracle_equivalence_property(n, m, seed):
    rng = np.random.default_rng(seed)
    p = core.random_dominant(n, m, rng)
    f = rng.standard_normal((n, m))
    x = core.thomas_solve(core.thomas_factor(p), f)
    dense = core.dense_expand(p)
    xd = np.linalg.solve(dense, f.reshape(-1)).reshape(n, m)
    scale = max(np.abs(xd).max(), 1e-300)
    assert np.abs(x - xd).max() <= 1e-9 * scale


def test_blockvector_roundtrip(rng):
    v = core.BlockVector(rng.standard_normal((4, 3)))
    w = core.BlockVector.from_flat(v.ravel(), 4, 3)
    assert np.array_equal(v.data, w.data)


def test_matrix_immutable(rng):
    p = core.random_dominant(4, 2, rng)
    with pytest.raises(ValueError):
        p.diag[0, 0, 0] = 99.0


def test_apply_matches_dense(rng):
    p = core.random_dominant(7, 3, rng)
    x = rng.standard_normal((7, 3))
    y = p.apply(x)
    yd = core.dense_expand(p) @ x.reshape(-1)
    assert np.abs(y.reshape(-1) - yd).max() <= 1e-12 * np.abs(yd).max()

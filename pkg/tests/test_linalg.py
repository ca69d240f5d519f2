import numpy as np
import pytest

from implicitad import SingularSystemError, StructureError, lu_factor, lu_solve
from implicitad.linalg import block_bidiagonal_solve, solve


class TestLuFactor:
    def test_identity(self):
        f = lu_factor(np.eye(3))
        np.testing.assert_array_equal(f.lu, np.eye(3))
        assert not f.singular

    def test_permutation_handles_zero_pivot(self):
        f = lu_factor([[0.0, 1.0], [1.0, 0.0]])
        assert not f.singular
        np.testing.assert_allclose(lu_solve(f, [3.0, 4.0]), [4.0, 3.0])

    def test_reconstruction(self):
        a = np.array([[2.0, 1.0], [1.0, 3.0]])
        f = lu_factor(a)
        np.testing.assert_allclose(f.reconstruct(), a, rtol=1e-12, atol=0)

    def test_non_square_rejected(self):
        with pytest.raises(StructureError):
            lu_factor(np.ones((2, 3)))

    def test_singular_flagged(self):
        assert lu_factor([[1.0, 2.0], [2.0, 4.0]]).singular
        assert lu_factor(np.zeros((2, 2))).singular

    def test_reconstruction_random(self, rng):
        for n in (1, 2, 5, 16):
            a = rng.normal(size=(n, n)) + n * np.eye(n)
            f = lu_factor(a)
            assert not f.singular
            np.testing.assert_allclose(f.reconstruct(), a, rtol=0,
                                       atol=1e-12 * np.max(np.abs(a)))


class TestLuSolve:
    def test_identity(self):
        f = lu_factor(np.eye(3))
        b = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(lu_solve(f, b), b)

    def test_diagonal(self):
        f = lu_factor([[2.0, 0.0], [0.0, 4.0]])
        np.testing.assert_allclose(lu_solve(f, [2.0, 4.0]), [1.0, 1.0])

    def test_transposed_residual(self):
        a = np.array([[1.0, 2.0], [0.0, 1.0]])
        x = lu_solve(lu_factor(a), [1.0, 1.0], transposed=True)
        np.testing.assert_allclose(a.T @ x, [1.0, 1.0], atol=1e-14)

    def test_singular_raises(self):
        f = lu_factor([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularSystemError):
            lu_solve(f, [1.0, 1.0])

    def test_dimension_mismatch(self):
        f = lu_factor(np.eye(2))
        with pytest.raises(StructureError):
            lu_solve(f, [1.0, 2.0, 3.0])

    def test_residual_bound_random(self, rng):
        for n in (2, 8, 32, 64):
            a = rng.normal(size=(n, n)) + 2 * n * np.eye(n)
            f = lu_factor(a)
            norm_a = np.linalg.norm(a)
            for transposed in (False, True):
                b = rng.normal(size=n)
                x = lu_solve(f, b, transposed=transposed)
                m = a.T if transposed else a
                resid = np.linalg.norm(m @ x - b)
                bound = 1e-10 * (norm_a * np.linalg.norm(x) + np.linalg.norm(b))
                assert resid <= bound


class TestBlockBidiagonal:
    def test_zero_off_blocks_return_rhs(self):
        rhs = np.array([1.0, 2.0, 3.0, 4.0])
        off = [np.zeros((2, 2))]
        np.testing.assert_array_equal(
            block_bidiagonal_solve(None, off, rhs), rhs)

    def test_scalar_chain(self):
        # x_i - 2 x_{i+1} = rhs_i with rhs = (0, 0, 1)
        off = [np.array([[-2.0]]), np.array([[-2.0]])]
        got = block_bidiagonal_solve(None, off, [0.0, 0.0, 1.0])
        dense = np.array([[1.0, -2.0, 0.0], [0.0, 1.0, -2.0], [0.0, 0.0, 1.0]])
        np.testing.assert_array_equal(got, solve(dense, [0.0, 0.0, 1.0]))
        np.testing.assert_array_equal(got, [4.0, 2.0, 1.0])

    def test_random_vs_dense(self, rng):
        count, n = 4, 2
        off = [rng.normal(size=(n, n)) for _ in range(count - 1)]
        rhs = rng.normal(size=count * n)
        dense = np.eye(count * n)
        for i, blk in enumerate(off):
            dense[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = blk
        got = block_bidiagonal_solve([np.eye(n)] * count, off, rhs)
        want = solve(dense, rhs)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_random_sizes_vs_dense(self, rng):
        for _ in range(8):
            count = int(rng.integers(2, 17))
            n = int(rng.integers(1, 5))
            off = [rng.normal(size=(n, n)) * 0.5 for _ in range(count - 1)]
            rhs = rng.normal(size=count * n)
            dense = np.eye(count * n)
            for i, blk in enumerate(off):
                dense[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = blk
            got = block_bidiagonal_solve(None, off, rhs)
            want = solve(dense, rhs)
            scale = np.max(np.abs(want)) + 1.0
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12 * scale)

    def test_non_identity_diagonal_rejected(self):
        with pytest.raises(StructureError):
            block_bidiagonal_solve([np.array([[2.0]])] * 2,
                                   [np.array([[1.0]])], [1.0, 2.0])

    def test_dimension_mismatch(self):
        with pytest.raises(StructureError):
            block_bidiagonal_solve(None, [np.eye(2)], [1.0, 2.0, 3.0])

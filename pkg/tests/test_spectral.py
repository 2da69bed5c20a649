import numpy as np
import pytest

from fractex import sparse, spectral
from fractex.spectral import (
    ConvergenceError,
    RankDeficiencyError,
    area_resize,
    inv_sqrt_sym,
    orthogonalize_columns,
    orthogonalize_rows,
    truncated_svd,
)


def sparse_from_dense(dense):
    r, c = np.nonzero(dense)
    return sparse.from_triplets(r, c, dense.shape[0], dense.shape[1])


class TestTruncatedSVD:
    def test_disjoint_row_blocks(self):
        # 3 rows with 3, 2, 1 ones in disjoint columns: singular values are
        # the square roots of the row sums.
        dense = np.zeros((3, 6))
        dense[0, :3] = 1
        dense[1, 3:5] = 1
        dense[2, 5] = 1
        oracle = np.linalg.svd(dense, compute_uv=False)
        assert np.allclose(oracle, [np.sqrt(3), np.sqrt(2), 1.0])
        got = truncated_svd(sparse_from_dense(dense), 3, seed=2)
        assert np.allclose(got.sigma, oracle, rtol=1e-10)

    def test_identity_spectrum(self):
        eye = sparse.from_triplets(range(4), range(4), 4, 4)
        got = truncated_svd(eye, 2, seed=0)
        assert np.allclose(got.sigma, [1.0, 1.0], atol=1e-12)

    def test_factor_orthogonality(self):
        rng = np.random.default_rng(3)
        dense = (rng.random((40, 30)) < 0.2).astype(float)
        got = truncated_svd(sparse_from_dense(dense), 5, seed=9)
        assert np.max(np.abs(got.U.T @ got.U - np.eye(5))) <= 1e-8
        assert np.max(np.abs(got.V @ got.V.T - np.eye(5))) <= 1e-8
        assert np.all(np.diff(got.sigma) <= 0)

    def test_reconstruction_near_best_rank_k(self):
        rng = np.random.default_rng(4)
        for m, n, k in [(20, 30, 3), (60, 60, 5), (45, 25, 4)]:
            dense = (rng.random((m, n)) < 0.25).astype(float)
            got = truncated_svd(sparse_from_dense(dense), k, seed=17)
            approx = (got.U * got.sigma) @ got.V
            u, s, vt = np.linalg.svd(dense)
            best = (u[:, :k] * s[:k]) @ vt[:k]
            err = np.linalg.norm(dense - approx)
            best_err = np.linalg.norm(dense - best)
            assert err <= best_err * (1 + 1e-3)

    def test_k_out_of_range(self):
        eye = sparse.from_triplets(range(3), range(3), 3, 3)
        with pytest.raises(ValueError):
            truncated_svd(eye, 0, seed=0)
        with pytest.raises(ValueError):
            truncated_svd(eye, 4, seed=0)

    def test_zero_matrix_degenerates(self):
        empty = sparse.from_triplets([], [], 5, 5)
        with pytest.raises(ConvergenceError, match="zero column norms"):
            truncated_svd(empty, 2, seed=0)

    def test_seed_determinism(self):
        rng = np.random.default_rng(5)
        dense = (rng.random((30, 40)) < 0.2).astype(float)
        m = sparse_from_dense(dense)
        a = truncated_svd(m, 4, seed=77)
        b = truncated_svd(m, 4, seed=77)
        assert np.array_equal(a.sigma, b.sigma)
        assert np.array_equal(a.U, b.U)
        c = truncated_svd(m, 4, seed=78)
        assert not np.array_equal(a.U, c.U)


class TestInvSqrtSym:
    def test_identity(self):
        assert np.allclose(inv_sqrt_sym(np.eye(3)), np.eye(3), atol=1e-12)

    def test_diagonal_closed_form(self):
        got = inv_sqrt_sym(np.diag([4.0, 9.0]))
        assert np.allclose(got, np.diag([0.5, 1.0 / 3.0]), atol=1e-12)

    def test_residual_on_gram_matrix(self):
        rng = np.random.default_rng(6)
        w = rng.standard_normal((6, 4))
        s = w.T @ w
        x = inv_sqrt_sym(s)
        assert np.max(np.abs(x @ s @ x - np.eye(4))) <= 1e-8

    def test_commutes_with_input(self):
        rng = np.random.default_rng(8)
        w = rng.standard_normal((7, 5))
        s = w.T @ w
        x = inv_sqrt_sym(s)
        assert np.max(np.abs(x @ s - s @ x)) <= 1e-9

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            inv_sqrt_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_singular_advising_smaller_k(self):
        s = np.diag([1.0, 0.0])
        with pytest.raises(RankDeficiencyError, match="smaller k"):
            inv_sqrt_sym(s)


class TestAreaResize:
    def test_two_by_two_to_scalar(self):
        assert area_resize(np.array([[1.0, 1.0], [3.0, 3.0]]), 1, 1).tolist() == [[2.0]]

    def test_constant_preserved(self):
        m = np.full((5, 7), 7.0)
        assert np.allclose(area_resize(m, 2, 3), 7.0, atol=1e-12)

    def test_global_mean(self):
        magic = np.array([[2.0, 7.0, 6.0], [9.0, 5.0, 1.0], [4.0, 3.0, 8.0]])
        assert np.allclose(area_resize(magic, 1, 1), [[5.0]], atol=1e-12)

    def test_mean_preserved_when_dims_divide(self):
        rng = np.random.default_rng(9)
        m = rng.standard_normal((12, 8))
        out = area_resize(m, 4, 2)
        assert abs(out.mean() - m.mean()) <= 1e-12

    def test_fractional_overlap_against_fine_grid_oracle(self):
        # Resizing n -> k is exact averaging on the lcm(n, k) refinement.
        rng = np.random.default_rng(10)
        m = rng.standard_normal((3, 5))
        fine = np.repeat(np.repeat(m, 2, axis=0), 2, axis=1)  # 6 x 10 grid
        oracle = fine.reshape(2, 3, 2, 5).mean(axis=(1, 3))
        assert np.allclose(area_resize(m, 2, 2), oracle, atol=1e-12)

    def test_upscaling_rejected(self):
        with pytest.raises(ValueError, match="upscal"):
            area_resize(np.ones((2, 2)), 3, 2)


class TestOrthogonalize:
    def test_orthonormal_fixed_point(self):
        rng = np.random.default_rng(11)
        q, _ = np.linalg.qr(rng.standard_normal((10, 4)))
        assert np.max(np.abs(orthogonalize_columns(q) - q)) <= 1e-10

    def test_column_scaling_removed(self):
        ubar = np.array([[2.0, 0.0], [0.0, 3.0], [0.0, 0.0]])
        expected = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        assert np.allclose(orthogonalize_columns(ubar), expected, atol=1e-12)

    def test_matches_polar_decomposition_oracle(self):
        rng = np.random.default_rng(12)
        ubar = rng.standard_normal((40, 5))
        u, _, vt = np.linalg.svd(ubar, full_matrices=False)
        polar = u @ vt  # nearest column-orthogonal matrix in Frobenius norm
        got = orthogonalize_columns(ubar)
        assert np.max(np.abs(got - polar)) <= 1e-9
        assert np.max(np.abs(got.T @ got - np.eye(5))) <= 1e-8

    def test_idempotent(self):
        rng = np.random.default_rng(13)
        got = orthogonalize_columns(rng.standard_normal((20, 4)))
        again = orthogonalize_columns(got)
        assert np.max(np.abs(again - got)) <= 1e-9

    def test_row_variant(self):
        rng = np.random.default_rng(14)
        vbar = rng.standard_normal((4, 30))
        got = orthogonalize_rows(vbar)
        assert np.max(np.abs(got @ got.T - np.eye(4))) <= 1e-8
        u, _, vt = np.linalg.svd(vbar, full_matrices=False)
        assert np.max(np.abs(got - u @ vt)) <= 1e-9

    def test_rank_deficiency_surfaces(self):
        ubar = np.ones((5, 2))
        with pytest.raises(RankDeficiencyError):
            orthogonalize_columns(ubar)


class TestSpectrumExport:
    def test_rank_value_rows(self, tmp_path):
        path = tmp_path / "spec.tsv"
        spectral.write_spectrum([3.5, 1.25], path)
        assert path.read_text() == "1\t3.5\n2\t1.25\n"

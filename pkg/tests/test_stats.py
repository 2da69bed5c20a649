import numpy as np
import pytest

from fractex import sparse, stats
from fractex.sparse import from_triplets
from fractex.stats import compare_ranked, minkowski_product, predict_expanded_spectrum, predict_expanded_sums, ranked


class TestMinkowski:
    def test_definition(self):
        assert sorted(minkowski_product([1, 2], [3]).tolist()) == [3, 6]

    def test_zero_absorbs(self):
        assert minkowski_product([0], [5, 7, 9]).tolist() == [0, 0, 0]

    def test_two_by_two(self):
        assert sorted(minkowski_product([1, 2], [3, 4]).tolist()) == [3, 4, 6, 8]


class TestPredictSums:
    def test_identity_factor(self):
        b = from_triplets([0, 0, 1], [0, 1, 1], 2, 3)
        rows, cols = predict_expanded_sums(np.array([[1.0]]), b)
        assert rows.values.tolist() == sorted(sparse.row_sums(b).tolist(), reverse=True)
        assert cols.values.tolist() == sorted(sparse.col_sums(b).tolist(), reverse=True)

    def test_matches_dense_kron_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.integers(0, 4, (3, 2)).astype(float)
        mask = rng.random((4, 5)) < 0.5
        b = from_triplets(*np.nonzero(mask), 4, 5)
        dense_b = np.zeros((4, 5))
        dense_b[np.nonzero(mask)] = 1.0
        k = np.kron(a, dense_b)
        rows, cols = predict_expanded_sums(a, b)
        assert np.array_equal(rows.values, np.sort(k.sum(axis=1))[::-1])
        assert np.array_equal(cols.values, np.sort(k.sum(axis=0))[::-1])

    def test_zero_row_block(self):
        a = np.array([[0.0, 0.0], [1.0, 2.0]])
        b = from_triplets([0, 1, 2], [0, 0, 0], 3, 1)
        rows, _ = predict_expanded_sums(a, b)
        assert int(np.sum(rows.values == 0.0)) == 3  # one zero block of rows(B)


class TestPredictSpectrum:
    def test_small_products(self):
        got = predict_expanded_spectrum([2.0, 1.0], [3.0, 1.0], 4)
        assert got.values.tolist() == [6.0, 3.0, 2.0, 1.0]
        # cross-check against a dense SVD oracle on diagonal factors
        oracle = np.linalg.svd(np.kron(np.diag([2.0, 1.0]), np.diag([3.0, 1.0])),
                               compute_uv=False)
        assert np.allclose(got.values, oracle)

    def test_unit_factor(self):
        got = predict_expanded_spectrum([1.0], [5.0, 2.0, 0.5], 3)
        assert got.values.tolist() == [5.0, 2.0, 0.5]

    def test_zero_spectrum(self):
        got = predict_expanded_spectrum([0.0, 0.0], [1.0, 2.0], 4)
        assert got.values.tolist() == [0.0, 0.0, 0.0, 0.0]

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            predict_expanded_spectrum([-1.0], [1.0], 1)


class TestCompareRanked:
    def test_identical(self):
        a = ranked([5, 3, 2, 1], "a")
        report = compare_ranked(a, ranked([5, 3, 2, 1], "b"))
        assert report.pearson_loglog == 1.0
        assert report.max_rel_gap_topn == 0.0

    def test_scaled_copy_perfectly_correlated(self):
        vals = np.array([8.0, 5.0, 3.0, 2.0, 1.0])
        report = compare_ranked(ranked(vals, "a"), ranked(2 * vals, "b"))
        assert report.pearson_loglog == pytest.approx(1.0, abs=1e-12)

    def test_too_few_positive_values(self):
        with pytest.raises(ValueError, match="3 positive"):
            compare_ranked(ranked([1.0, 2.0], "a"), ranked([1, 2, 3], "b"))

    def test_zeros_excluded_and_counted(self):
        a = ranked([4, 2, 1, 0, 0], "a")
        b = ranked([4, 2, 1], "b")
        report = compare_ranked(a, b)
        assert report.zeros_excluded_a == 2 and report.zeros_excluded_b == 0
        assert report.pearson_loglog == 1.0

    def test_resampling_staircase_exact(self):
        # entrywise duplication is invisible to quantile resampling
        short = ranked([32.0, 16.0, 8.0, 4.0, 2.0], "short")
        long = ranked(np.repeat([32.0, 16.0, 8.0, 4.0, 2.0], 4), "long")
        report = compare_ranked(long, short)
        assert report.pearson_loglog == 1.0
        assert report.max_rel_gap_topn == 0.0

    def test_resampling_power_law_at_expansion_ratio(self):
        # a power law compared with itself at 4x the length stays tightly
        # correlated under rank-quantile matching
        long = ranked((1.0 + np.arange(1000)) ** -1.5, "long")
        short = ranked((1.0 + np.arange(250)) ** -1.5, "short")
        assert compare_ranked(long, short).pearson_loglog >= 0.99

    def test_deterministic_prediction_matches_exactly(self):
        rng = np.random.default_rng(4)
        a = rng.integers(1, 4, (2, 3)).astype(float)
        mask = rng.random((3, 4)) < 0.6
        b = from_triplets(*np.nonzero(mask), 3, 4)
        dense_b = np.zeros((3, 4))
        dense_b[np.nonzero(mask)] = 1.0
        actual = ranked(np.kron(a, dense_b).sum(axis=1), "actual")
        predicted, _ = predict_expanded_sums(a, b)
        report = compare_ranked(actual, predicted)
        assert report.pearson_loglog == 1.0
        assert report.max_rel_gap_topn <= 1e-12


class TestEmitReport:
    def test_files_and_summary(self, tmp_path):
        dists = [ranked([3, 2, 1], "expanded"), ranked([6, 4, 2], "original")]
        comparison = {"row_sums_vs_original": compare_ranked(dists[1], dists[0])}
        out = stats.emit_report(
            tmp_path / "report",
            row_sums=dists,
            col_sums=[ranked([5, 1], "expanded")],
            spectra=[ranked([], "expanded")],
            comparisons=comparison,
        )
        assert (out / "row_sums_expanded.tsv").read_text().startswith("1\t3\n")
        assert (out / "row_sums_original.tsv").exists()
        assert (out / "col_sums_expanded.tsv").exists()
        summary = (out / "summary.tsv").read_text()
        assert "spectrum_expanded\tstatus\tabsent" in summary
        assert "row_sums_vs_original\tpearson_loglog\t1\n" in summary

    def test_rerun_byte_identical(self, tmp_path):
        dists = [ranked([9.5, 2.25, 1.125], "x")]
        blobs = []
        for sub in ("a", "b"):
            out = stats.emit_report(tmp_path / sub, row_sums=dists)
            blobs.append((out / "summary.tsv").read_bytes()
                         + (out / "row_sums_x.tsv").read_bytes())
        assert blobs[0] == blobs[1]

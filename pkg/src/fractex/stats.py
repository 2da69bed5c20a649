"""Preserved-statistic computation and comparison.

Three statistics matter here: ranked row sums, ranked column sums and the
singular spectrum. In deterministic mode all three distribute over the
expansion as Minkowski set products of the factors' statistics, which
gives exact analytic predictions; in randomized mode the same shapes are
checked empirically via log-log rank-curve correlation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fractex import sparse
from fractex.sparse import SparseBinaryMatrix

__all__ = [
    "RankedDistribution",
    "ComparisonReport",
    "ranked",
    "minkowski_product",
    "predict_expanded_sums",
    "predict_expanded_spectrum",
    "compare_ranked",
    "emit_report",
]


@dataclass(frozen=True, eq=False)
class RankedDistribution:
    """Values sorted descending, with a label for report files."""

    values: np.ndarray
    label: str


def ranked(values, label: str) -> RankedDistribution:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size and not np.all(np.isfinite(values)):
        raise ValueError(f"distribution {label!r} contains non-finite values")
    return RankedDistribution(np.sort(values)[::-1].copy(), label)


def minkowski_product(xs, ys) -> np.ndarray:
    """All pairwise products {x * y}, multiset semantics (unsorted)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    return np.multiply.outer(xs, ys).ravel()


def predict_expanded_sums(
    a: np.ndarray, b: SparseBinaryMatrix
) -> tuple[RankedDistribution, RankedDistribution]:
    """Analytic row/column sum distributions of the deterministic
    expansion of `b` through grid `a`: the Minkowski products of the
    factors' sum multisets."""
    a = np.asarray(a, dtype=np.float64)
    rows = minkowski_product(a.sum(axis=1), sparse.row_sums(b))
    cols = minkowski_product(a.sum(axis=0), sparse.col_sums(b))
    return ranked(rows, "predicted_row_sums"), ranked(cols, "predicted_col_sums")


def predict_expanded_spectrum(sig_a, sig_b, top_k: int) -> RankedDistribution:
    """Top `top_k` pairwise products of two singular value sets."""
    sig_a = np.asarray(sig_a, dtype=np.float64)
    sig_b = np.asarray(sig_b, dtype=np.float64)
    if np.any(sig_a < 0) or np.any(sig_b < 0):
        raise ValueError("singular values must be non-negative")
    products = np.sort(minkowski_product(sig_a, sig_b))[::-1]
    return RankedDistribution(products[:top_k].copy(), "predicted_spectrum")


@dataclass(frozen=True)
class ComparisonReport:
    pearson_loglog: float
    max_rel_gap_topn: float
    zeros_excluded_a: int
    zeros_excluded_b: int


def _rank_resample(values: np.ndarray, n: int) -> np.ndarray:
    """Pick n values at evenly spaced rank quantiles (endpoints included)."""
    if n == values.size:
        return values
    idx = np.round(np.linspace(0.0, values.size - 1, n)).astype(np.int64)
    return values[idx]


def compare_ranked(
    a: RankedDistribution, b: RankedDistribution, top_n: int = 100
) -> ComparisonReport:
    """Compare two ranked distributions on log-log axes.

    Only positive values enter (excluded counts are reported). Both curves
    are resampled to the shorter length at matching rank quantiles; the
    Pearson correlation is taken between the log-value curves, and the
    maximum relative gap |a - b| / a is reported over the top `top_n`
    resampled ranks.
    """
    pa = a.values[a.values > 0]
    pb = b.values[b.values > 0]
    if pa.size < 3 or pb.size < 3:
        raise ValueError(
            "correlation undefined: need at least 3 positive values "
            f"(got {pa.size} and {pb.size})"
        )
    n = min(pa.size, pb.size)
    ra = _rank_resample(pa, n)
    rb = _rank_resample(pb, n)
    la, lb = np.log(ra), np.log(rb)
    if np.array_equal(la, lb):
        pearson = 1.0
    else:
        da, db = la - la.mean(), lb - lb.mean()
        denom = np.sqrt((da @ da) * (db @ db))
        pearson = float(da @ db / denom) if denom > 0 else float("nan")
    head = min(top_n, n)
    gap = float(np.max(np.abs(ra[:head] - rb[:head]) / ra[:head]))
    return ComparisonReport(
        pearson_loglog=pearson,
        max_rel_gap_topn=gap,
        zeros_excluded_a=int(a.values.size - pa.size),
        zeros_excluded_b=int(b.values.size - pb.size),
    )


def _write_rank_table(path: Path, dist: RankedDistribution) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rank, value in enumerate(dist.values.tolist(), start=1):
            fh.write(f"{rank}\t{value:.17g}\n")


def emit_report(
    report_dir,
    row_sums: list[RankedDistribution] = (),
    col_sums: list[RankedDistribution] = (),
    spectra: list[RankedDistribution] = (),
    comparisons: dict[str, ComparisonReport] | None = None,
    manifest_totals: dict | None = None,
) -> Path:
    """Write rank tables plus summary.tsv into `report_dir`.

    Layout: row_sums_{label}.tsv, col_sums_{label}.tsv,
    spectrum_{label}.tsv and a summary table of comparison metrics.
    Outputs are byte-deterministic for identical inputs.
    """
    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    for prefix, dists in (("row_sums", row_sums), ("col_sums", col_sums), ("spectrum", spectra)):
        for dist in dists:
            if dist.values.size == 0:
                summary_rows.append((f"{prefix}_{dist.label}", "status", "absent"))
                continue
            _write_rank_table(out / f"{prefix}_{dist.label}.tsv", dist)
            summary_rows.append((f"{prefix}_{dist.label}", "count", str(dist.values.size)))
    for name, report in sorted((comparisons or {}).items()):
        summary_rows.append((name, "pearson_loglog", f"{report.pearson_loglog:.17g}"))
        summary_rows.append((name, "max_rel_gap_topn", f"{report.max_rel_gap_topn:.17g}"))
        summary_rows.append((name, "zeros_excluded", f"{report.zeros_excluded_a}+{report.zeros_excluded_b}"))
    for key, value in sorted((manifest_totals or {}).items()):
        summary_rows.append(("manifest", key, str(value)))
    with open(out / "summary.tsv", "w", encoding="utf-8") as fh:
        for statistic, metric, value in summary_rows:
            fh.write(f"{statistic}\t{metric}\t{value}\n")
    return out

"""Build a small dense matrix that inherits the leading spectrum and the
sum-distribution shape of a large sparse one.

Pipeline: truncated SVD of R -> area-resize U and V down to the target
shape -> snap the resized factors back to (column/row) orthogonality ->
reassemble with the original leading singular values -> rescale. Because
the snapped factors are exactly orthogonal, the pre-rescale product's
spectrum equals the retained singular values, not an approximation of
them.

The expander consumes the result as a grid of Bernoulli keep
probabilities, which is why `unit_interval` rescaling is the default; the
division-only mode is kept behind a flag for fidelity experiments (its
output may leave [0, 1] and gets clamped at the expander boundary).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fractex import spectral
from fractex.prng import PURPOSE_SKETCH, philox_stream
from fractex.sparse import SparseBinaryMatrix

__all__ = [
    "RESCALE_MODES",
    "ReducedMatrix",
    "DegenerateRangeError",
    "build_reduced",
    "rescale",
    "sketch_reduced",
    "write_reduced",
    "read_reduced",
]

RESCALE_MODES = ("unit_interval", "paper_range_only")


class DegenerateRangeError(ValueError):
    """Rescaling a constant matrix has no defined range."""


@dataclass(frozen=True, eq=False)
class ReducedMatrix:
    """Small dense expansion-multiplier grid.

    `data` holds the rescaled entries. `pre_rescale` and `source_spectrum`
    carry the unscaled product and the singular values it was built from
    (None when loaded from disk, where only `data` is persisted).
    """

    data: np.ndarray
    rescale_mode: str
    seed: int
    source_spectrum: np.ndarray | None = None
    pre_rescale: np.ndarray | None = None

    def __post_init__(self):
        if self.rescale_mode not in RESCALE_MODES:
            raise ValueError(f"unknown rescale_mode {self.rescale_mode!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def rescale(m: np.ndarray, mode: str) -> np.ndarray:
    """Map matrix values into the expansion-rate domain.

    unit_interval: (x - min) / (max - min), attaining both endpoints.
    paper_range_only: x / (max - min), a pure range division that need not
    land in [0, 1].
    """
    if mode not in RESCALE_MODES:
        raise ValueError(f"unknown rescale_mode {mode!r}")
    m = np.asarray(m, dtype=np.float64)
    lo, hi = float(np.min(m)), float(np.max(m))
    if hi <= lo:
        raise DegenerateRangeError("constant matrix has a degenerate value range")
    if mode == "unit_interval":
        return (m - lo) / (hi - lo)
    return m / (hi - lo)


def build_reduced(
    r: SparseBinaryMatrix,
    m_prime: int,
    n_prime: int,
    seed: int,
    rescale_mode: str = "unit_interval",
    n_power_iters: int = 8,
    oversample: int = 10,
) -> ReducedMatrix:
    """Reduce `r` to an (m_prime, n_prime) dense matrix whose pre-rescale
    singular values are exactly the k = min(m', n') leading singular
    values of `r`."""
    if m_prime >= r.n_rows or n_prime >= r.n_cols:
        raise ValueError(
            f"reduction only: requested ({m_prime}, {n_prime}) "
            f"from {r.shape}"
        )
    if m_prime < 1 or n_prime < 1:
        raise ValueError("reduced dims must be >= 1")
    k = min(m_prime, n_prime)
    svd = spectral.truncated_svd(
        r, k, seed, n_power_iters=n_power_iters, oversample=oversample
    )
    u_bar = spectral.area_resize(svd.U, m_prime, k)
    v_bar = spectral.area_resize(svd.V, k, n_prime)
    u_tilde = spectral.orthogonalize_columns(u_bar)
    v_tilde = spectral.orthogonalize_rows(v_bar)
    pre = (u_tilde * svd.sigma) @ v_tilde
    return ReducedMatrix(
        data=rescale(pre, rescale_mode),
        rescale_mode=rescale_mode,
        seed=seed,
        source_spectrum=svd.sigma.copy(),
        pre_rescale=pre,
    )


def sketch_reduced(
    r: SparseBinaryMatrix, m_prime: int, n_prime: int, seed: int
) -> ReducedMatrix:
    """Alternative reducer: sample m' rows and n' columns uniformly without
    replacement (seeded) and extract the submatrix.

    The submatrix of a binary matrix already lives in [0, 1]; when it is
    non-constant it is min-max rescaled like the spectral reducer, and a
    constant submatrix passes through unchanged (rescaling has no defined
    range there).
    """
    if m_prime > r.n_rows or n_prime > r.n_cols:
        raise ValueError(f"sample size ({m_prime}, {n_prime}) exceeds {r.shape}")
    rng = philox_stream(seed, PURPOSE_SKETCH)
    row_sel = np.sort(rng.choice(r.n_rows, size=m_prime, replace=False))
    col_sel = np.sort(rng.choice(r.n_cols, size=n_prime, replace=False))

    col_map = np.full(r.n_cols, -1, dtype=np.int64)
    col_map[col_sel] = np.arange(n_prime)
    sub = np.zeros((m_prime, n_prime))
    for out_i, row in enumerate(row_sel):
        cols = r.col_indices[r.row_offsets[row] : r.row_offsets[row + 1]]
        hits = col_map[cols]
        sub[out_i, hits[hits >= 0]] = 1.0

    data = sub if np.max(sub) <= np.min(sub) else rescale(sub, "unit_interval")
    return ReducedMatrix(
        data=data,
        rescale_mode="unit_interval",
        seed=seed,
        source_spectrum=np.linalg.svd(data, compute_uv=False),
        pre_rescale=sub,
    )


def write_reduced(rm: ReducedMatrix, path) -> None:
    """Dense text table: header `m' n' rescale_mode seed`, then row-major
    values at 17 significant digits (round-trip exact for float64)."""
    m, n = rm.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{m} {n} {rm.rescale_mode} {rm.seed}\n")
        for row in rm.data:
            fh.write(" ".join(f"{v:.17g}" for v in row.tolist()) + "\n")


def read_reduced(path) -> ReducedMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ValueError(f"{path}: malformed reduced-matrix header")
        m, n, mode, seed = int(header[0]), int(header[1]), header[2], int(header[3])
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (m, n):
        raise ValueError(f"{path}: expected {m}x{n} values, got {data.shape}")
    return ReducedMatrix(data=data, rescale_mode=mode, seed=seed)

"""CSR sparse matrices with implicit unit values, plus a signed variant.

A binary interaction matrix stores only structure (row offsets and column
indices); every stored entry is an implicit 1. The signed variant adds an
int8 value array over {-1, +1} and is used to carry a train/test partition
through a single randomized pipeline.

Layouts are canonical: rows in order, columns strictly increasing within a
row, no duplicates. Instances are frozen and their arrays are marked
read-only, so they can be shared across threads and worker processes.
All index arrays are int64; expanded matrices can exceed 2**31 entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SparseBinaryMatrix",
    "SignedSparseMatrix",
    "from_triplets",
    "to_triplets",
    "row_sums",
    "col_sums",
    "transpose",
    "matvec",
    "matvec_t",
    "matmat",
    "matmat_t",
    "signed_difference",
    "write_triplets",
    "read_triplets",
]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SparseBinaryMatrix:
    """Binary matrix in CSR layout; stored entries are implicit ones."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        if self.row_offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.col_indices.size:
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        _freeze(self.row_offsets)
        _freeze(self.col_indices)

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)


@dataclass(frozen=True, eq=False)
class SignedSparseMatrix:
    """CSR matrix with values restricted to {-1, +1}."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.col_indices.shape:
            raise ValueError("values must align with col_indices")
        if self.values.size and not np.all(np.abs(self.values) == 1):
            raise ValueError("signed values must be -1 or +1")
        _freeze(self.row_offsets)
        _freeze(self.col_indices)
        _freeze(self.values)

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)


def _csr_from_sorted(rows, cols, n_rows, n_cols):
    """Build CSR arrays from row-major sorted, deduplicated triplets."""
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
    return offsets, np.ascontiguousarray(cols, dtype=np.int64)


def _canonicalize(rows, cols):
    """Sort triplets row-major and drop duplicate (row, col) pairs."""
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    if rows.size:
        keep = np.empty(rows.size, dtype=bool)
        keep[0] = True
        keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        rows, cols = rows[keep], cols[keep]
    return rows, cols


def _check_bounds(rows, cols, n_rows, n_cols):
    bad_r = (rows < 0) | (rows >= n_rows)
    if np.any(bad_r):
        k = int(np.argmax(bad_r))
        raise ValueError(
            f"row index out of range: triplet ({rows[k]}, {cols[k]}) "
            f"in a {n_rows}x{n_cols} matrix"
        )
    bad_c = (cols < 0) | (cols >= n_cols)
    if np.any(bad_c):
        k = int(np.argmax(bad_c))
        raise ValueError(
            f"column index out of range: triplet ({rows[k]}, {cols[k]}) "
            f"in a {n_rows}x{n_cols} matrix"
        )


def from_triplets(rows, cols, n_rows: int, n_cols: int) -> SparseBinaryMatrix:
    """Construct a binary matrix from (row, col) pairs.

    Duplicate pairs collapse to one entry (binarized interactions carry no
    multiplicity). Out-of-range indices raise with the offending triplet.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.ndim != 1 or rows.shape != cols.shape:
        raise ValueError("rows and cols must be equal-length 1-d sequences")
    _check_bounds(rows, cols, n_rows, n_cols)
    rows, cols = _canonicalize(rows, cols)
    offsets, cols = _csr_from_sorted(rows, cols, n_rows, n_cols)
    return SparseBinaryMatrix(n_rows, n_cols, offsets, cols)


def to_triplets(m) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate stored entries as (rows, cols) in canonical order."""
    counts = np.diff(m.row_offsets)
    rows = np.repeat(np.arange(m.n_rows, dtype=np.int64), counts)
    return rows, m.col_indices.copy()


def row_sums(m) -> np.ndarray:
    """Number of stored entries per row."""
    return np.diff(m.row_offsets)


def col_sums(m) -> np.ndarray:
    """Number of stored entries per column."""
    return np.bincount(m.col_indices, minlength=m.n_cols).astype(np.int64)


def transpose(m: SparseBinaryMatrix) -> SparseBinaryMatrix:
    rows, cols = to_triplets(m)
    order = np.lexsort((rows, cols))
    offsets, new_cols = _csr_from_sorted(cols[order], rows[order], m.n_cols, m.n_rows)
    return SparseBinaryMatrix(m.n_cols, m.n_rows, offsets, new_cols)


def _segment_sums(contributions: np.ndarray, offsets: np.ndarray, n_out: int) -> np.ndarray:
    """Sum `contributions` over the CSR segments given by `offsets`.

    reduceat mishandles empty segments (it returns the element at the
    boundary), so empty rows are masked out and left at zero.
    """
    out_shape = (n_out,) + contributions.shape[1:]
    out = np.zeros(out_shape, dtype=np.float64)
    if contributions.shape[0] == 0:
        return out
    nonempty = np.diff(offsets) > 0
    starts = offsets[:-1][nonempty]
    out[nonempty] = np.add.reduceat(contributions, starts, axis=0)
    return out


def matvec(m, x) -> np.ndarray:
    """M @ x with entries accumulated in storage (row-major) order."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_cols,):
        raise ValueError(f"vector length {x.shape} does not match n_cols={m.n_cols}")
    taken = x[m.col_indices]
    if hasattr(m, "values"):
        taken = taken * m.values
    return _segment_sums(taken, m.row_offsets, m.n_rows)


def matvec_t(m, x) -> np.ndarray:
    """M.T @ x (same deterministic accumulation contract as matvec)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_rows,):
        raise ValueError(f"vector length {x.shape} does not match n_rows={m.n_rows}")
    weights = np.repeat(x, np.diff(m.row_offsets))
    if hasattr(m, "values"):
        weights = weights * m.values
    return np.bincount(m.col_indices, weights=weights, minlength=m.n_cols)


def matmat(m, x: np.ndarray) -> np.ndarray:
    """M @ X for a dense block X; vectorized batch of matvec."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != m.n_cols:
        raise ValueError(f"block has {x.shape[0]} rows, expected n_cols={m.n_cols}")
    return _segment_sums(x[m.col_indices], m.row_offsets, m.n_rows)


def matmat_t(m, x: np.ndarray) -> np.ndarray:
    """M.T @ X for a dense block X."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != m.n_rows:
        raise ValueError(f"block has {x.shape[0]} rows, expected n_rows={m.n_rows}")
    rows = np.repeat(np.arange(m.n_rows, dtype=np.int64), np.diff(m.row_offsets))
    out = np.zeros((m.n_cols,) + x.shape[1:], dtype=np.float64)
    np.add.at(out, m.col_indices, x[rows])
    return out


def signed_difference(plus: SparseBinaryMatrix, minus: SparseBinaryMatrix) -> SignedSparseMatrix:
    """Encode two disjoint binary matrices as one matrix over {-1, +1}.

    Entries of `plus` become +1 and entries of `minus` become -1. Raises if
    the supports overlap (the encoding would be ambiguous).
    """
    if plus.shape != minus.shape:
        raise ValueError(f"shape mismatch: {plus.shape} vs {minus.shape}")
    rp, cp = to_triplets(plus)
    rm, cm = to_triplets(minus)
    rows = np.concatenate([rp, rm])
    cols = np.concatenate([cp, cm])
    vals = np.concatenate([
        np.ones(rp.size, dtype=np.int8),
        -np.ones(rm.size, dtype=np.int8),
    ])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size > 1:
        dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
        if np.any(dup):
            k = int(np.argmax(dup))
            raise ValueError(
                f"supports overlap at ({rows[k]}, {cols[k]}); "
                "positive and negative entries must be disjoint"
            )
    offsets, cols = _csr_from_sorted(rows, cols, plus.n_rows, plus.n_cols)
    return SignedSparseMatrix(plus.n_rows, plus.n_cols, offsets, cols, vals)


def write_triplets(m: SparseBinaryMatrix, path) -> None:
    """Write the triplet text format: header `n_rows<TAB>n_cols`, then one
    `row<TAB>col` line per stored entry in canonical order."""
    rows, cols = to_triplets(m)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{m.n_rows}\t{m.n_cols}\n")
        for r, c in zip(rows.tolist(), cols.tolist()):
            fh.write(f"{r}\t{c}\n")


def read_triplets(path) -> SparseBinaryMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed triplet header")
        n_rows, n_cols = int(header[0]), int(header[1])
        rows, cols = [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected `row<TAB>col`")
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
    return from_triplets(rows, cols, n_rows, n_cols)

"""Spectral primitives: randomized truncated SVD, symmetric inverse square
root, area-weighted downscaling, and nearest-orthogonal projections.

The truncated SVD is a randomized subspace iteration: a seeded Gaussian
test block is alternately pushed through M and M.T with a QR
re-orthonormalization after every half application, then an exact SVD of
the small projected matrix recovers the leading factors. Results are a
pure function of (matrix, k, seed, iteration parameters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fractex import sparse
from fractex.prng import PURPOSE_GAUSSIAN, philox_stream

__all__ = [
    "TruncatedSVD",
    "ConvergenceError",
    "RankDeficiencyError",
    "truncated_svd",
    "inv_sqrt_sym",
    "area_resize",
    "orthogonalize_columns",
    "orthogonalize_rows",
    "write_spectrum",
]


class ConvergenceError(RuntimeError):
    """Subspace iteration degenerated (e.g. zero column norms)."""


class RankDeficiencyError(ValueError):
    """Matrix is numerically rank deficient for the requested operation."""


@dataclass(frozen=True, eq=False)
class TruncatedSVD:
    """Leading rank-k factors: U (m, k) column-orthogonal, sigma (k,)
    non-increasing, V (k, n) row-orthogonal, with M ~= U @ diag(sigma) @ V."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray


def truncated_svd(
    m,
    k: int,
    seed: int,
    n_power_iters: int = 8,
    oversample: int = 10,
) -> TruncatedSVD:
    """Leading k singular triplets of a sparse matrix by randomized
    subspace iteration.

    Parameters
    ----------
    m : SparseBinaryMatrix
        Matrix to factor (only matvec access is used).
    k : int
        Number of leading singular values/vectors, 1 <= k <= min(shape).
    seed : int
        Seeds the Gaussian test block; identical seeds give bit-identical
        results.
    n_power_iters : int
        Full M/M.T alternations after the initial projection. Each half
        step re-orthonormalizes, so accuracy improves roughly with the
        spectral-gap ratio to the power 2*n_power_iters + 1.
    oversample : int
        Extra test-block columns beyond k (capped at min(shape)).
    """
    n_rows, n_cols = m.shape
    if not 1 <= k <= min(n_rows, n_cols):
        raise ValueError(f"k={k} out of range [1, {min(n_rows, n_cols)}]")
    width = min(k + oversample, n_rows, n_cols)
    rng = philox_stream(seed, PURPOSE_GAUSSIAN)
    omega = rng.standard_normal((n_cols, width))

    def orth(block):
        norms = np.linalg.norm(block, axis=0)
        if not np.all(np.isfinite(block)):
            raise ConvergenceError("subspace block contains non-finite values")
        if np.max(norms) == 0.0:
            raise ConvergenceError("orthonormalization degenerated: zero column norms")
        q, _ = np.linalg.qr(block)
        return q

    q = orth(sparse.matmat(m, omega))
    for _ in range(n_power_iters):
        q = orth(sparse.matmat_t(m, q))
        q = orth(sparse.matmat(m, q))

    b = sparse.matmat_t(m, q).T  # = q.T @ M, shape (width, n_cols)
    u_small, sig, vt = np.linalg.svd(b, full_matrices=False)
    return TruncatedSVD(
        U=q @ u_small[:, :k],
        sigma=sig[:k].copy(),
        V=vt[:k, :].copy(),
    )


def inv_sqrt_sym(s: np.ndarray, sym_tol: float = 1e-10) -> np.ndarray:
    """S**(-1/2) of a symmetric positive-definite matrix via eigh.

    Eigenvalues at or below 1e-12 * max(eigenvalue) are treated as rank
    deficiency and raise rather than being silently regularized, which
    would corrupt exact-spectrum guarantees downstream.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    if np.max(np.abs(s - s.T), initial=0.0) > sym_tol:
        raise ValueError(f"matrix is not symmetric within {sym_tol}")
    lam, q = np.linalg.eigh(s)
    eps_pd = 1e-12 * float(lam[-1])
    if lam[-1] <= 0 or float(lam[0]) <= eps_pd:
        raise RankDeficiencyError(
            "matrix is numerically singular (smallest eigenvalue "
            f"{lam[0]:.3e} <= {eps_pd:.3e}); use a smaller k"
        )
    x = (q * (1.0 / np.sqrt(lam))) @ q.T
    return (x + x.T) / 2.0


def _overlap_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) weights: output cell o averages input
    cells over [o*n_in/n_out, (o+1)*n_in/n_out), fractional boundary cells
    weighted by their overlap length."""
    w = np.zeros((n_out, n_in))
    for o in range(n_out):
        lo = o * n_in / n_out
        hi = (o + 1) * n_in / n_out
        first = int(np.floor(lo))
        last = min(int(np.ceil(hi)), n_in)
        for i in range(first, last):
            w[o, i] = max(0.0, min(hi, i + 1.0) - max(lo, float(i)))
    return w * (n_out / n_in)


def area_resize(m: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Downscale by exact area-weighted local averaging.

    Mean-preserving (constant in -> same constant out), implementation
    independent: weights come from fractional cell overlaps, not from a
    smoothing kernel. Upscaling is out of scope and raises.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if out_rows > m.shape[0] or out_cols > m.shape[1]:
        raise ValueError(
            f"upscaling requested: ({out_rows}, {out_cols}) from {m.shape}"
        )
    if out_rows < 1 or out_cols < 1:
        raise ValueError("output dims must be >= 1")
    wr = _overlap_weights(m.shape[0], out_rows)
    wc = _overlap_weights(m.shape[1], out_cols)
    return wr @ m @ wc.T


def orthogonalize_columns(ubar: np.ndarray) -> np.ndarray:
    """Column-orthogonal matrix closest to `ubar` in Frobenius norm,
    computed as ubar @ (ubar.T @ ubar)**(-1/2). Requires full column rank
    (rank deficiency surfaces as the inverse-square-root error)."""
    ubar = np.asarray(ubar, dtype=np.float64)
    return ubar @ inv_sqrt_sym(ubar.T @ ubar)


def orthogonalize_rows(vbar: np.ndarray) -> np.ndarray:
    """Row variant: (vbar @ vbar.T)**(-1/2) @ vbar."""
    vbar = np.asarray(vbar, dtype=np.float64)
    return inv_sqrt_sym(vbar @ vbar.T) @ vbar


def write_spectrum(sigma, path) -> None:
    """Export `rank<TAB>singular_value` rows, rank starting at 1."""
    sigma = np.asarray(sigma, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for rank, value in enumerate(sigma.tolist(), start=1):
            fh.write(f"{rank}\t{value:.17g}\n")

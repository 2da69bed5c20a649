"""Grow a sparse binary user/item interaction matrix by randomized
Kronecker fractal expansion while preserving row-sum, column-sum and
singular-value distributions, with leak-free train/test handling."""

from fractex.sparse import SparseBinaryMatrix, SignedSparseMatrix
from fractex.ingest import RatingEvent, SplitDataset
from fractex.spectral import TruncatedSVD
from fractex.reducer import ReducedMatrix
from fractex.expander import BlockRandomStream, ExpansionConfig, ExpansionManifest
from fractex.stats import RankedDistribution

__version__ = "0.1.0"

__all__ = [
    "SparseBinaryMatrix",
    "SignedSparseMatrix",
    "RatingEvent",
    "SplitDataset",
    "TruncatedSVD",
    "ReducedMatrix",
    "BlockRandomStream",
    "ExpansionConfig",
    "ExpansionManifest",
    "RankedDistribution",
]

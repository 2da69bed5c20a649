import os
from pathlib import Path

import numpy as np
import pytest

from fractex import ingest
from fractex.synthdata import write_synthetic_ratings


@pytest.fixture(scope="session")
def ratings_file(tmp_path_factory):
    """(path, format) of a 943x1682-shaped ratings dump.

    Points at the real MovieLens-100K `u.data` when FRACTEX_ML100K is set;
    otherwise writes a deterministic synthetic stand-in with the same
    shape and fat-tailed margins (see fractex.synthdata).
    """
    env = os.environ.get("FRACTEX_ML100K")
    if env:
        return Path(env), "tsv"
    path = tmp_path_factory.mktemp("data") / "ratings.csv"
    write_synthetic_ratings(path)
    return path, "csv_header"


@pytest.fixture(scope="session")
def benchmark_split(ratings_file):
    path, fmt = ratings_file
    events = ingest.parse_ratings(path, format=fmt)
    events = ingest.binarize(events)
    events = ingest.dedupe_keep_latest(events)
    events = ingest.filter_min_distinct_timestamps(events)
    return ingest.leave_last_out_split(events)


@pytest.fixture(scope="session")
def train_matrix(benchmark_split):
    return benchmark_split.train


def dense_of(m) -> np.ndarray:
    """Independent dense reconstruction straight from the CSR arrays."""
    out = np.zeros((m.n_rows, m.n_cols))
    values = getattr(m, "values", None)
    for i in range(m.n_rows):
        for k in range(int(m.row_offsets[i]), int(m.row_offsets[i + 1])):
            out[i, m.col_indices[k]] = 1.0 if values is None else float(values[k])
    return out

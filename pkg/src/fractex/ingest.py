"""Ratings ingestion: parse, binarize, filter, leave-last-out split.

The pipeline turns a MovieLens-style ratings file into a leak-free pair of
train/test matrices of identical shape. Per user, the latest-timestamped
interaction goes to test and everything else to train. Ties at a user's
maximum timestamp break by the larger (timestamp, item index) key so the
split is a total order and re-runs are bit-identical.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from fractex import sparse
from fractex.sparse import SparseBinaryMatrix

__all__ = [
    "RatingEvent",
    "SplitDataset",
    "ParseError",
    "parse_ratings",
    "binarize",
    "filter_min_distinct_timestamps",
    "dedupe_keep_latest",
    "leave_last_out_split",
    "write_split",
    "read_index_map",
]


class ParseError(ValueError):
    """Malformed ratings input; message carries the line number."""


@dataclass(frozen=True)
class RatingEvent:
    user_id: str
    item_id: str
    rating: float
    timestamp: int


@dataclass(frozen=True)
class SplitDataset:
    """Same-shape train/test matrices with disjoint supports.

    Every user row has at least one train entry and exactly one test entry.
    Index maps record the id -> row/column assignment (first-appearance
    order) so original ids are recoverable.
    """

    train: SparseBinaryMatrix
    test: SparseBinaryMatrix
    user_index: dict[str, int]
    item_index: dict[str, int]


def parse_ratings(source, format: str = "csv_header") -> list[RatingEvent]:
    """Parse `userId,movieId,rating,timestamp` rows into events.

    `source` is a path or a binary/text stream. `csv_header` skips the
    first line; `tsv` is headerless and tab-separated.
    """
    if format not in ("csv_header", "tsv"):
        raise ValueError(f"unknown ratings format: {format!r}")
    sep = "," if format == "csv_header" else "\t"
    if isinstance(source, (str, Path)):
        fh = open(source, "r", encoding="utf-8")
        close = True
    elif isinstance(source, (io.RawIOBase, io.BufferedIOBase)):
        fh = io.TextIOWrapper(source, encoding="utf-8")
        close = False
    else:
        fh = source
        close = False

    events: list[RatingEvent] = []
    try:
        start = 1
        if format == "csv_header":
            if fh.readline() == "":
                raise ParseError("empty ratings file")
            start = 2
        for lineno, line in enumerate(fh, start=start):
            line = line.strip()
            if not line:
                continue
            parts = line.split(sep)
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                rating = float(parts[2])
                timestamp = int(parts[3])
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric rating or timestamp") from None
            if not np.isfinite(rating):
                raise ParseError(f"line {lineno}: rating must be finite")
            if timestamp < 0:
                raise ParseError(f"line {lineno}: negative timestamp")
            events.append(RatingEvent(parts[0], parts[1], rating, timestamp))
    finally:
        if close:
            fh.close()
    if not events:
        raise ParseError("empty ratings file")
    return events


def binarize(events: list[RatingEvent]) -> list[RatingEvent]:
    """Set every rating value to 1.0, preserving order and count."""
    return [e if e.rating == 1.0 else replace(e, rating=1.0) for e in events]


def filter_min_distinct_timestamps(
    events: list[RatingEvent], min_distinct: int = 2
) -> list[RatingEvent]:
    """Drop all events of users with fewer than `min_distinct` distinct
    timestamps; other users' events pass through untouched."""
    stamps: dict[str, set[int]] = {}
    for e in events:
        stamps.setdefault(e.user_id, set()).add(e.timestamp)
    return [e for e in events if len(stamps[e.user_id]) >= min_distinct]


def dedupe_keep_latest(events: list[RatingEvent]) -> list[RatingEvent]:
    """Collapse duplicate (user, item) events, keeping the latest timestamp.

    Output preserves the first-appearance order of each (user, item) pair,
    so downstream index assignment is unaffected by duplicates.
    """
    best: dict[tuple[str, str], RatingEvent] = {}
    for e in events:
        key = (e.user_id, e.item_id)
        prev = best.get(key)
        if prev is None or e.timestamp >= prev.timestamp:
            best[key] = e
    return list(best.values())


def leave_last_out_split(events: list[RatingEvent]) -> SplitDataset:
    """Per user, route the latest event to test and the rest to train.

    Duplicates are collapsed first (latest timestamp wins) so the split
    invariants hold even on raw input. A user left with fewer than two
    events cannot satisfy ">=1 train, exactly 1 test" and raises.
    """
    events = dedupe_keep_latest(events)
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    for e in events:
        user_index.setdefault(e.user_id, len(user_index))
        item_index.setdefault(e.item_id, len(item_index))

    per_user: dict[int, list[tuple[int, int]]] = {}
    for e in events:
        u = user_index[e.user_id]
        per_user.setdefault(u, []).append((e.timestamp, item_index[e.item_id]))

    inv_user = {v: k for k, v in user_index.items()}
    train_r, train_c, test_r, test_c = [], [], [], []
    for u, pairs in per_user.items():
        if len(pairs) < 2:
            raise ValueError(
                f"user {inv_user[u]!r} has fewer than 2 interactions after "
                "deduplication; filter the input first"
            )
        held = max(pairs)  # lexicographic (timestamp, item_index)
        test_r.append(u)
        test_c.append(held[1])
        for ts, item in pairs:
            if (ts, item) != held:
                train_r.append(u)
                train_c.append(item)

    m, n = len(user_index), len(item_index)
    return SplitDataset(
        train=sparse.from_triplets(train_r, train_c, m, n),
        test=sparse.from_triplets(test_r, test_c, m, n),
        user_index=user_index,
        item_index=item_index,
    )


def write_split(ds: SplitDataset, out_dir) -> dict[str, Path]:
    """Write train.tsv / test.tsv triplet files and index_map.tsv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": out / "train.tsv",
        "test": out / "test.tsv",
        "index_map": out / "index_map.tsv",
    }
    sparse.write_triplets(ds.train, paths["train"])
    sparse.write_triplets(ds.test, paths["test"])
    with open(paths["index_map"], "w", encoding="utf-8") as fh:
        for original, idx in ds.user_index.items():
            fh.write(f"user\t{original}\t{idx}\n")
        for original, idx in ds.item_index.items():
            fh.write(f"item\t{original}\t{idx}\n")
    return paths


def read_index_map(path) -> tuple[dict[str, int], dict[str, int]]:
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3 or parts[0] not in ("user", "item"):
                raise ValueError(f"{path}:{lineno}: malformed index map row")
            target = users if parts[0] == "user" else items
            target[parts[1]] = int(parts[2])
    return users, items

"""Deterministic synthetic ratings with fat-tailed marginals.

Generates a ratings table shaped like a public movie-ratings dump
(user id, item id, rating on a 1..5 scale, timestamp): item popularity
and user activity follow truncated power laws, and a hierarchy of
progressively smaller dense user/item co-consumption cliques plants a
cleanly decaying leading singular spectrum above the sampling-noise
bulk, mimicking the community structure of real collaborative-filtering
data.

Used by the test suite and demo scripts when no real ratings file is
supplied. Every item is guaranteed to appear at least once, so matrix
dimensions are exactly (n_users, n_items) after ingestion.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from fractex.prng import PURPOSE_SYNTH, philox_stream

__all__ = ["synthetic_ratings_rows", "write_synthetic_ratings"]


# (users, items, density) per planted clique; clique k contributes a
# singular value ~ density * sqrt(users * items), so this ladder yields a
# decaying, well-separated leading spectrum above the sampling-noise bulk.
_CLIQUE_LADDER = (
    (200, 110, 0.42),
    (170, 95, 0.41),
    (150, 82, 0.39),
    (130, 70, 0.37),
    (110, 60, 0.35),
    (95, 50, 0.32),
    (80, 42, 0.30),
    (65, 35, 0.28),
)


def synthetic_ratings_rows(
    n_users: int = 943,
    n_items: int = 1682,
    target_events: int = 100_000,
    seed: int = 20260810,
) -> list[tuple[int, int, int, int]]:
    """Return (user_id, item_id, rating, timestamp) rows, ids 1-based.

    Deterministic in all arguments. Each user gets at least 20 events,
    all with distinct timestamps and distinct items; events are grouped
    by user in id order.
    """
    rng = philox_stream(seed, PURPOSE_SYNTH)
    per_user_items: list[set[int]] = [set() for _ in range(n_users)]

    # Cliques draw from disjoint item pools so their singular directions
    # stay nearly orthogonal instead of merging.
    item_pool = rng.permutation(n_items)
    pool_at = 0
    clique_events = 0
    for nu, ni, density in _CLIQUE_LADDER:
        nu = min(n_users, nu)
        ni = min(ni, n_items // 2, n_items - pool_at)
        if ni < 2:
            break
        users = rng.choice(n_users, nu, replace=False)
        items = item_pool[pool_at : pool_at + ni]
        pool_at += ni
        mask = rng.random((nu, ni)) < density
        for ui, u in enumerate(users):
            got = items[mask[ui]]
            per_user_items[int(u)].update(got.tolist())
            clique_events += int(got.size)

    popularity = (1.0 + np.arange(n_items)) ** -0.85
    popularity = popularity[rng.permutation(n_items)]
    activity = (1.0 + np.arange(n_users)) ** -0.60
    activity = activity[rng.permutation(n_users)]
    budget = max(target_events - clique_events - 20 * n_users, 0)
    raw = budget * activity / activity.sum()
    # soft saturation instead of a hard cap: keeps the engagement head
    # strictly decaying rather than clipped flat
    cap = max(n_items // 2 - 20, 1)
    counts = 20 + np.floor(cap * (1.0 - np.exp(-raw / cap))).astype(np.int64)

    # Weighted sampling without replacement per user via Gumbel top-k.
    keys = np.log(popularity)[None, :] + rng.gumbel(size=(n_users, n_items))
    for u in range(n_users):
        c = int(counts[u])
        chosen = np.argpartition(-keys[u], c)[:c]
        per_user_items[u].update(chosen.tolist())

    rows: list[tuple[int, int, int, int]] = []
    first_ts = np.zeros(n_users, dtype=np.int64)
    for u in range(n_users):
        items_u = sorted(per_user_items[u])
        c = len(items_u)
        base = int(rng.integers(800_000_000, 1_100_000_000))
        stamps = base + np.cumsum(rng.integers(1, 10_000, c))
        first_ts[u] = int(stamps[0])
        order = rng.permutation(c)
        ratings = rng.integers(1, 6, c)
        for pos, item in enumerate(items_u):
            rows.append((u + 1, item + 1, int(ratings[pos]), int(stamps[order[pos]])))

    # Guarantee full item coverage; backdated timestamps keep the fixup
    # events out of the per-user latest slot.
    seen = np.zeros(n_items, dtype=bool)
    seen[[r[1] - 1 for r in rows]] = True
    for item in np.flatnonzero(~seen).tolist():
        u = int(rng.integers(0, n_users))
        first_ts[u] -= int(rng.integers(1, 10_000))
        rows.append((u + 1, item + 1, int(rng.integers(1, 6)), int(first_ts[u])))

    return rows


def write_synthetic_ratings(path, **kwargs) -> int:
    """Write a header CSV (`userId,movieId,rating,timestamp`); returns the
    number of rating rows."""
    rows = synthetic_ratings_rows(**kwargs)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("userId,movieId,rating,timestamp\n")
        for user, item, rating, ts in rows:
            fh.write(f"{user},{item},{rating},{ts}\n")
    return len(rows)

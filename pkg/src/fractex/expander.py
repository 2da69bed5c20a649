"""Fractal expansion engine.

Expands a base sparse binary matrix B through a small multiplier grid: the
deterministic mode emits scaled copies of B per grid cell (the Kronecker
product), the randomized mode Bernoulli-thins each copy with the grid
entry as keep probability and then shuffles its rows and columns, which
breaks block-wise self-similarity while preserving sum and spectrum
distributions statistically.

Determinism contract: every block (i, j) owns an independent random
stream derived from (master_seed, i, j), consumed in a fixed order
(one keep draw per base non-zero in row-major order, then the row
permutation, then the column permutation). Output is therefore
byte-identical for a fixed seed no matter how blocks are scheduled
across workers.

Train/test consistency: both matrices ride through one pipeline as a
single {-1, +1}-valued matrix, so dropout and shuffling treat them
identically; survivors are routed to per-side sinks by sign afterwards,
which keeps the expanded supports disjoint by construction.
"""

from __future__ import annotations

import gzip
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from fractex import sparse
from fractex.prng import PURPOSE_BLOCK, philox_stream
from fractex.reducer import ReducedMatrix
from fractex.sparse import SignedSparseMatrix, SparseBinaryMatrix

__all__ = [
    "MODES",
    "SHARD_GRANULARITIES",
    "BlockRandomStream",
    "ExpansionConfig",
    "ExpansionManifest",
    "ShardSink",
    "derive_block_stream",
    "block_dropout",
    "block_shuffle",
    "kron_deterministic",
    "expand_randomized",
    "expand_split",
    "read_expansion",
]

MODES = ("deterministic", "randomized")
SHARD_GRANULARITIES = ("per_block_row", "per_block")


@dataclass(frozen=True)
class BlockRandomStream:
    """Self-contained random stream for one expansion block."""

    master_seed: int
    block_row: int
    block_col: int
    generator: np.random.Generator


def derive_block_stream(master_seed: int, i: int, j: int) -> BlockRandomStream:
    """Stream for block (i, j); see fractex.prng for the key packing."""
    return BlockRandomStream(master_seed, i, j, philox_stream(master_seed, PURPOSE_BLOCK, i, j))


@dataclass(frozen=True)
class ExpansionConfig:
    reduced: ReducedMatrix
    mode: str = "randomized"
    shuffle: bool = True
    master_seed: int = 0
    shard_granularity: str = "per_block_row"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.shard_granularity not in SHARD_GRANULARITIES:
            raise ValueError(f"unknown shard granularity {self.shard_granularity!r}")


@dataclass
class ExpansionManifest:
    """Run record: shapes, per-block survivor counts, seed, config echo.

    `block_nnz` is an m' x n' grid; entries are None only when
    `partial_output` marks an aborted run.
    """

    reduced_shape: list
    base_shape: list
    expanded_shape: list
    mode: str
    shuffle: bool
    master_seed: int
    shard_granularity: str
    block_nnz: list
    total_nnz: int
    expected_nnz: float
    clamped_negative_rates: int
    shards: list
    value_column: bool
    gzip: bool
    partial_output: bool = False
    config: dict = field(default_factory=dict)

    def save(self, path) -> None:
        text = json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ExpansionManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        manifest = cls(**data)
        if not manifest.partial_output:
            total = sum(sum(row) for row in manifest.block_nnz)
            if total != manifest.total_nnz:
                raise ValueError(
                    f"{path}: total_nnz {manifest.total_nnz} != sum of block counts {total}"
                )
        return manifest


@dataclass
class ShardSink:
    """Writes shard files under one directory.

    Lines are `row<TAB>col`, plus a value column when `value_column` is
    set (deterministic expansions of a real-valued grid need it). Gzip
    output pins mtime=0 and an empty name so bytes stay reproducible.
    """

    directory: Path
    gzip: bool = False
    value_column: bool = False

    def __post_init__(self):
        self.directory = Path(self.directory)

    def prepare(self) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)

    def shard_ext(self) -> str:
        return ".tsv.gz" if self.gzip else ".tsv"

    def write(self, name: str, rows: np.ndarray, cols: np.ndarray, values=None) -> None:
        if self.value_column and values is not None:
            lines = [
                f"{r}\t{c}\t{v:.17g}"
                for r, c, v in zip(rows.tolist(), cols.tolist(), values.tolist())
            ]
        else:
            lines = [f"{r}\t{c}" for r, c in zip(rows.tolist(), cols.tolist())]
        payload = ("\n".join(lines) + "\n" if lines else "").encode("ascii")
        path = self.directory / name
        if self.gzip:
            with open(path, "wb") as raw:
                with gzip.GzipFile(
                    filename="", mode="wb", fileobj=raw, mtime=0
                ) as gz:
                    gz.write(payload)
        else:
            path.write_bytes(payload)


def _rebuild(template, rows, cols, values):
    """CSR from row-major sorted triplets, matching the template's type."""
    offsets, cols = sparse._csr_from_sorted(rows, cols, template.n_rows, template.n_cols)
    if values is None:
        return SparseBinaryMatrix(template.n_rows, template.n_cols, offsets, cols)
    return SignedSparseMatrix(template.n_rows, template.n_cols, offsets, cols, values)


def block_dropout(b, keep_prob: float, rng: BlockRandomStream):
    """Keep each stored entry independently with probability `keep_prob`.

    Consumes exactly nnz(b) uniform draws in row-major entry order,
    regardless of the outcome, so downstream draws stay aligned.
    """
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError(f"keep probability {keep_prob} outside [0, 1] after clamping")
    draws = rng.generator.random(b.nnz)
    keep = draws < keep_prob
    rows, cols = sparse.to_triplets(b)
    values = b.values[keep] if isinstance(b, SignedSparseMatrix) else None
    return _rebuild(b, rows[keep], cols[keep], values)


def block_shuffle(b, rng: BlockRandomStream):
    """Apply one uniform row permutation then one uniform column
    permutation (entry (r, c) moves to (perm_r[r], perm_c[c])).

    Preserves nnz, the row/column sum multisets and the singular values
    exactly.
    """
    perm_r = rng.generator.permutation(b.n_rows)
    perm_c = rng.generator.permutation(b.n_cols)
    rows, cols = sparse.to_triplets(b)
    rows, cols = perm_r[rows], perm_c[cols]
    order = np.lexsort((cols, rows))
    values = b.values[order] if isinstance(b, SignedSparseMatrix) else None
    return _rebuild(b, rows[order], cols[order], values)


def kron_deterministic(a: np.ndarray, b: SparseBinaryMatrix):
    """Yield blocks of the Kronecker product a (x) b in row-major block
    order as (i, j, global_rows, global_cols, value).

    Block (i, j) is a[i, j] * b placed at offset (i * rows(b), j * cols(b));
    a zero multiplier yields an empty block.
    """
    a = np.asarray(a, dtype=np.float64)
    p, q = b.shape
    base_rows, base_cols = sparse.to_triplets(b)
    empty = np.empty(0, dtype=np.int64)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            value = float(a[i, j])
            if value == 0.0:
                yield i, j, empty, empty, value
            else:
                yield i, j, i * p + base_rows, j * q + base_cols, value


def _effective_rates(cfg: ExpansionConfig) -> tuple[np.ndarray, int]:
    """Grid actually used by the pipeline. Randomized mode clamps negative
    keep probabilities to zero (counted for the manifest) and rejects
    anything above one; deterministic mode passes multipliers through."""
    grid = np.asarray(cfg.reduced.data, dtype=np.float64)
    if cfg.mode != "randomized":
        return grid, 0
    clamped = int(np.sum(grid < 0.0))
    rates = np.clip(grid, 0.0, None)
    if np.max(rates, initial=0.0) > 1.0:
        raise ValueError(
            f"keep probability {np.max(rates):.6g} outside [0, 1] after clamping; "
            "rescale the reduced matrix to unit_interval"
        )
    return rates, clamped


def _plan_shards(m_p: int, n_p: int, granularity: str, ext: str):
    if granularity == "per_block":
        return [
            (f"part-{i:05d}-{j:05d}{ext}", [(i, j)])
            for i in range(m_p)
            for j in range(n_p)
        ]
    return [
        (f"part-{i:05d}{ext}", [(i, j) for j in range(n_p)]) for i in range(m_p)
    ]


def _transform_block(state: dict, i: int, j: int):
    """Run one block through the configured pipeline.

    Returns (per-sink entry arrays, per-sink survivor counts); entries are
    in global coordinates, sorted by (row, col).
    """
    base = state["base"]
    p, q = base.shape
    rate = state["rates"][i][j]
    split = state["split"]

    if state["mode"] == "randomized":
        stream = derive_block_stream(state["master_seed"], i, j)
        blk = block_dropout(base, rate, stream)
        if state["shuffle"]:
            blk = block_shuffle(blk, stream)
        rows, cols = sparse.to_triplets(blk)
        values = blk.values if isinstance(blk, SignedSparseMatrix) else None
        file_values = [None] * len(state["sinks"])
    else:
        if rate == 0.0:
            rows = cols = np.empty(0, dtype=np.int64)
            values = np.empty(0, dtype=np.int8) if split else None
        else:
            rows, cols = sparse.to_triplets(base)
            values = base.values if isinstance(base, SignedSparseMatrix) else None
            if state["shuffle"]:
                stream = derive_block_stream(state["master_seed"], i, j)
                perm_r = stream.generator.permutation(p)
                perm_c = stream.generator.permutation(q)
                rows, cols = perm_r[rows], perm_c[cols]
                order = np.lexsort((cols, rows))
                rows, cols = rows[order], cols[order]
                if values is not None:
                    values = values[order]
        n_entries = rows.size
        file_values = [np.full(n_entries, rate)] if not split else [
            np.full(n_entries, rate),
            np.full(n_entries, rate),
        ]

    rows = rows + i * p
    cols = cols + j * q
    if not split:
        return [(rows, cols, file_values[0])], [int(rows.size)]
    pos = values > 0
    neg = ~pos
    return (
        [
            (rows[pos], cols[pos], file_values[0][pos] if file_values[0] is not None else None),
            (rows[neg], cols[neg], file_values[1][neg] if file_values[1] is not None else None),
        ],
        [int(np.sum(pos)), int(np.sum(neg))],
    )


def _compute_and_write_shard(state: dict, shard_idx: int):
    name, blocks = state["shards"][shard_idx]
    n_sinks = len(state["sinks"])
    parts = [[] for _ in range(n_sinks)]
    counts = []
    for i, j in blocks:
        per_sink, per_counts = _transform_block(state, i, j)
        for s in range(n_sinks):
            parts[s].append(per_sink[s])
        counts.append((i, j, per_counts))
    for s, sink in enumerate(state["sinks"]):
        rows = np.concatenate([x[0] for x in parts[s]]) if parts[s] else np.empty(0, np.int64)
        cols = np.concatenate([x[1] for x in parts[s]]) if parts[s] else np.empty(0, np.int64)
        vals = None
        if sink.value_column and parts[s] and parts[s][0][2] is not None:
            vals = np.concatenate([x[2] for x in parts[s]])
        if len(blocks) > 1 and rows.size:
            order = np.lexsort((cols, rows))
            rows, cols = rows[order], cols[order]
            if vals is not None:
                vals = vals[order]
        sink.write(name, rows, cols, vals)
    return shard_idx, name, counts


_WORKER_STATE: dict | None = None


def _set_worker_state(state: dict) -> None:
    global _WORKER_STATE
    _WORKER_STATE = state


def _worker_shard(shard_idx: int):
    return _compute_and_write_shard(_WORKER_STATE, shard_idx)


def _execute(state: dict, workers: int):
    n = len(state["shards"])
    if workers <= 1:
        return [_compute_and_write_shard(state, s) for s in range(n)]
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_set_worker_state, initargs=(state,)
    ) as pool:
        return list(pool.map(_worker_shard, range(n)))


def _run_expansion(cfg: ExpansionConfig, base, sinks, workers: int, config_echo, split: bool):
    rates, clamped = _effective_rates(cfg)
    m_p, n_p = rates.shape
    p, q = base.shape
    for sink in sinks:
        sink.prepare()
    shards = _plan_shards(m_p, n_p, cfg.shard_granularity, sinks[0].shard_ext())

    state = {
        "base": base,
        "rates": rates.tolist(),
        "mode": cfg.mode,
        "shuffle": cfg.shuffle,
        "master_seed": cfg.master_seed,
        "sinks": sinks,
        "shards": shards,
        "split": split,
    }

    if split:
        per_sink_base_nnz = [int(np.sum(base.values > 0)), int(np.sum(base.values < 0))]
    else:
        per_sink_base_nnz = [base.nnz]
    if cfg.mode == "randomized":
        expected = [float(np.sum(rates)) * nz for nz in per_sink_base_nnz]
    else:
        expected = [float(np.count_nonzero(rates)) * nz for nz in per_sink_base_nnz]

    grids = [[[None] * n_p for _ in range(m_p)] for _ in sinks]
    shard_names = [name for name, _ in shards]

    def build_manifest(sink_idx, partial):
        grid = grids[sink_idx]
        complete = all(v is not None for row in grid for v in row)
        total = sum(v for row in grid for v in row if v is not None)
        return ExpansionManifest(
            reduced_shape=[m_p, n_p],
            base_shape=[p, q],
            expanded_shape=[m_p * p, n_p * q],
            mode=cfg.mode,
            shuffle=cfg.shuffle,
            master_seed=cfg.master_seed,
            shard_granularity=cfg.shard_granularity,
            block_nnz=grid,
            total_nnz=total,
            expected_nnz=expected[sink_idx],
            clamped_negative_rates=clamped,
            shards=shard_names,
            value_column=sinks[sink_idx].value_column,
            gzip=sinks[sink_idx].gzip,
            partial_output=partial or not complete,
            config=dict(config_echo or {}),
        )

    try:
        results = _execute(state, workers)
    except Exception:
        for s, sink in enumerate(sinks):
            build_manifest(s, partial=True).save(sink.directory / "manifest.json")
        raise

    for _, _, counts in results:
        for i, j, per_counts in counts:
            for s in range(len(sinks)):
                grids[s][i][j] = per_counts[s]

    manifests = []
    for s, sink in enumerate(sinks):
        manifest = build_manifest(s, partial=False)
        manifest.save(sink.directory / "manifest.json")
        manifests.append(manifest)
    return manifests


def expand_randomized(
    cfg: ExpansionConfig,
    b: SparseBinaryMatrix,
    sink: ShardSink,
    workers: int = 1,
    config_echo: dict | None = None,
) -> ExpansionManifest:
    """Expand `b` through the configured grid into `sink`.

    Randomized mode thins block (i, j) with keep probability grid[i, j]
    and optionally shuffles it; deterministic mode emits value-scaled
    copies. A sink failure writes manifests flagged `partial_output`
    before the error propagates.
    """
    return _run_expansion(cfg, b, [sink], workers, config_echo, split=False)[0]


def expand_split(
    cfg: ExpansionConfig,
    train: SparseBinaryMatrix,
    test: SparseBinaryMatrix,
    train_sink: ShardSink,
    test_sink: ShardSink,
    workers: int = 1,
    config_echo: dict | None = None,
) -> tuple[ExpansionManifest, ExpansionManifest]:
    """Expand a train/test pair through one consistent pipeline.

    The pair is encoded as a single {-1, +1} matrix (overlapping supports
    raise before any randomness is consumed), pushed through the identical
    dropout + shuffle pipeline, and partitioned by sign into the two
    sinks. Expanded supports are disjoint by construction.
    """
    if train_sink.gzip != test_sink.gzip:
        raise ValueError("train and test sinks must agree on gzip compression")
    signed = sparse.signed_difference(train, test)
    manifests = _run_expansion(
        cfg, signed, [train_sink, test_sink], workers, config_echo, split=True
    )
    return manifests[0], manifests[1]


def _read_shard_text(path: Path) -> str:
    if path.suffix == ".gz":
        with gzip.open(path, "rt", encoding="ascii") as fh:
            return fh.read()
    return path.read_text(encoding="ascii")


def read_expansion(directory):
    """Load a (desk-scale) expansion back from its shard directory.

    Returns (manifest, rows, cols, values); values is None for 2-column
    shards.
    """
    directory = Path(directory)
    manifest = ExpansionManifest.load(directory / "manifest.json")
    n_fields = 3 if manifest.value_column else 2
    rows_parts, cols_parts, val_parts = [], [], []
    for name in manifest.shards:
        tokens = _read_shard_text(directory / name).split()
        if not tokens:
            continue
        if len(tokens) % n_fields:
            raise ValueError(f"{directory / name}: truncated shard line")
        table = np.array(tokens).reshape(-1, n_fields)
        rows_parts.append(table[:, 0].astype(np.int64))
        cols_parts.append(table[:, 1].astype(np.int64))
        if manifest.value_column:
            val_parts.append(table[:, 2].astype(np.float64))
    if rows_parts:
        rows = np.concatenate(rows_parts)
        cols = np.concatenate(cols_parts)
        values = np.concatenate(val_parts) if val_parts else None
    else:
        rows = cols = np.empty(0, dtype=np.int64)
        values = np.empty(0, dtype=np.float64) if manifest.value_column else None
    return manifest, rows, cols, values

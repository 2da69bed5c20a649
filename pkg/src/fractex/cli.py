"""Command-line surface: split -> reduce -> expand -> stats / verify.

Every command is driven by a resolved RunConfig (config file values
overridden by flags, `FRACTEX_SEED` as the seed fallback) which is echoed
verbatim into run manifests, so any output is reproducible from its
manifest alone.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from fractex import expander, ingest, reducer, sparse, spectral, stats
from fractex.expander import ExpansionConfig, ShardSink

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

_RESCALE_FLAGS = {"unit": "unit_interval", "paper": "paper_range_only"}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for data
    errors, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    input: str | None = None
    out: str | None = None
    rows: int | None = None
    cols: int | None = None
    seed: int = 0
    mode: str = "randomized"
    shuffle: bool = True
    rescale: str = "unit"
    granularity: str = "per_block_row"
    power_iters: int = 8
    oversample: int = 10
    gzip: bool = False
    format: str = "csv_header"

    @property
    def rescale_mode(self) -> str:
        return _RESCALE_FLAGS[self.rescale]


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = set(data) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Precedence: flags > config file > FRACTEX_SEED env > defaults."""
    cfg = RunConfig()
    if os.environ.get("FRACTEX_SEED"):
        cfg.seed = int(os.environ["FRACTEX_SEED"])
    for key, value in _load_config_file(getattr(args, "config", None)).items():
        setattr(cfg, key, value)
    for key in RunConfig.__dataclass_fields__:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if cfg.rescale not in _RESCALE_FLAGS:
        raise ValueError(f"unknown rescale flag {cfg.rescale!r}")
    return cfg


def _bool_flag(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def cmd_split(args) -> int:
    cfg = resolve_config(args)
    events = ingest.parse_ratings(cfg.input, format=cfg.format)
    n_parsed = len(events)
    events = ingest.binarize(events)
    events = ingest.dedupe_keep_latest(events)
    events = ingest.filter_min_distinct_timestamps(events)
    ds = ingest.leave_last_out_split(events)
    paths = ingest.write_split(ds, cfg.out)
    print(f"parsed {n_parsed} events, {len(events)} after filtering")
    print(f"users {ds.train.n_rows}, items {ds.train.n_cols}")
    print(f"train nnz {ds.train.nnz} -> {paths['train']}")
    print(f"test nnz {ds.test.nnz} -> {paths['test']}")
    return EXIT_OK


def cmd_reduce(args) -> int:
    cfg = resolve_config(args)
    if cfg.rows is None or cfg.cols is None:
        raise ValueError("reduce requires --rows and --cols")
    train = sparse.read_triplets(cfg.input)
    rm = reducer.build_reduced(
        train,
        cfg.rows,
        cfg.cols,
        cfg.seed,
        rescale_mode=cfg.rescale_mode,
        n_power_iters=cfg.power_iters,
        oversample=cfg.oversample,
    )
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    reducer.write_reduced(rm, out)
    spectral.write_spectrum(rm.source_spectrum, out.with_suffix(".spectrum.tsv"))
    print(f"reduced {train.shape} -> {rm.shape}, spectrum head "
          f"{rm.source_spectrum[0]:.4g} -> {out}")
    return EXIT_OK


def cmd_expand(args) -> int:
    cfg = resolve_config(args)
    train = sparse.read_triplets(cfg.input)
    rm = reducer.read_reduced(args.reduced)
    ecfg = ExpansionConfig(
        reduced=rm,
        mode=cfg.mode,
        shuffle=cfg.shuffle,
        master_seed=cfg.seed,
        shard_granularity=cfg.granularity,
    )
    echo = asdict(cfg)
    value_column = cfg.mode == "deterministic"
    out = Path(cfg.out)
    if args.test:
        test = sparse.read_triplets(args.test)
        m_train, m_test = expander.expand_split(
            ecfg,
            train,
            test,
            ShardSink(out / "train", gzip=cfg.gzip, value_column=value_column),
            ShardSink(out / "test", gzip=cfg.gzip, value_column=value_column),
            workers=args.workers,
            config_echo=echo,
        )
        print(f"expanded train {m_train.expanded_shape} nnz {m_train.total_nnz}")
        print(f"expanded test  {m_test.expanded_shape} nnz {m_test.total_nnz}")
    else:
        manifest = expander.expand_randomized(
            ecfg,
            train,
            ShardSink(out, gzip=cfg.gzip, value_column=value_column),
            workers=args.workers,
            config_echo=echo,
        )
        print(f"expanded {manifest.expanded_shape} nnz {manifest.total_nnz} "
              f"(expected {manifest.expected_nnz:.1f})")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = resolve_config(args)
    manifest, rows, cols, _ = expander.read_expansion(args.expansion)
    m, n = manifest.expanded_shape
    expanded_rows = np.bincount(rows, minlength=m)
    expanded_cols = np.bincount(cols, minlength=n)
    row_dists = [stats.ranked(expanded_rows, "expanded")]
    col_dists = [stats.ranked(expanded_cols, "expanded")]
    spectra = []
    comparisons = {}
    if cfg.input:
        original = sparse.read_triplets(cfg.input)
        row_dists.append(stats.ranked(sparse.row_sums(original), "original"))
        col_dists.append(stats.ranked(sparse.col_sums(original), "original"))
        comparisons["row_sums_vs_original"] = stats.compare_ranked(row_dists[1], row_dists[0])
        comparisons["col_sums_vs_original"] = stats.compare_ranked(col_dists[1], col_dists[0])
        k = int(args.spectrum_k)
        if k > 0:
            expanded = sparse.from_triplets(rows, cols, m, n)
            sig_exp = spectral.truncated_svd(expanded, k, cfg.seed).sigma
            sig_orig = spectral.truncated_svd(original, k, cfg.seed).sigma
            spectra = [
                stats.ranked(sig_exp, "expanded"),
                stats.ranked(sig_orig, "original"),
            ]
            comparisons["spectrum_vs_original"] = stats.compare_ranked(spectra[1], spectra[0])
    out = stats.emit_report(
        cfg.out,
        row_sums=row_dists,
        col_sums=col_dists,
        spectra=spectra,
        comparisons=comparisons,
        manifest_totals={
            "total_nnz": manifest.total_nnz,
            "expected_nnz": manifest.expected_nnz,
            "expanded_shape": "x".join(str(d) for d in manifest.expanded_shape),
        },
    )
    for name, report in sorted(comparisons.items()):
        print(f"{name}: pearson_loglog={report.pearson_loglog:.6f} "
              f"max_rel_gap={report.max_rel_gap_topn:.3g}")
    print(f"report -> {out}")
    return EXIT_OK


def _verify_expansion_dir(directory: Path, failures: list[str]) -> None:
    manifest, rows, cols, _ = expander.read_expansion(directory)
    if manifest.partial_output:
        failures.append(f"{directory}: manifest flags partial output")
        return
    p, q = manifest.base_shape
    m_p, n_p = manifest.reduced_shape
    grid = np.zeros((m_p, n_p), dtype=np.int64)
    if rows.size:
        np.add.at(grid, (rows // p, cols // q), 1)
    for i in range(m_p):
        for j in range(n_p):
            want = manifest.block_nnz[i][j]
            if int(grid[i, j]) != want:
                failures.append(
                    f"{directory}: block ({i}, {j}) has {int(grid[i, j])} entries, "
                    f"manifest says {want}"
                )
    if int(rows.size) != manifest.total_nnz:
        failures.append(
            f"{directory}: shards hold {int(rows.size)} entries, "
            f"manifest total is {manifest.total_nnz}"
        )


def _verify_builtin_suites(seed: int, failures: list[str]) -> None:
    rng = np.random.default_rng(seed)

    # Deterministic expansion: sum multisets equal Minkowski predictions.
    for trial in range(10):
        a = rng.integers(0, 4, (rng.integers(1, 5), rng.integers(1, 5))).astype(float)
        base = sparse.from_triplets(*_random_triplets(rng, 6, 7, 0.4), 6, 7)
        got_r = np.zeros(a.shape[0] * 6)
        got_c = np.zeros(a.shape[1] * 7)
        for _, _, brows, bcols, value in expander.kron_deterministic(a, base):
            np.add.at(got_r, brows, value)
            np.add.at(got_c, bcols, value)
        pred_r, pred_c = stats.predict_expanded_sums(a, base)
        if not (np.array_equal(np.sort(got_r)[::-1], pred_r.values)
                and np.array_equal(np.sort(got_c)[::-1], pred_c.values)):
            failures.append(f"sum-conservation suite: trial {trial} mismatch")

    # Spectrum of the Kronecker product equals pairwise products.
    for trial in range(5):
        a = rng.uniform(0.1, 1.0, (4, 4))
        b = rng.uniform(0.1, 1.0, (5, 5))
        actual = np.linalg.svd(np.kron(a, b), compute_uv=False)
        pred = stats.predict_expanded_spectrum(
            np.linalg.svd(a, compute_uv=False),
            np.linalg.svd(b, compute_uv=False),
            actual.size,
        ).values
        if np.max(np.abs(actual - pred) / pred) > 1e-9:
            failures.append(f"spectrum-conservation suite: trial {trial} exceeded 1e-9")

    # Dropout concentration: 4-sigma binomial bounds.
    base = sparse.from_triplets(*_random_triplets(rng, 25, 20, 0.5), 25, 20)
    nnz = base.nnz
    bad = 0
    for trial in range(200):
        p = rng.uniform(0.05, 0.95)
        stream = expander.derive_block_stream(seed + trial, 0, 0)
        kept = expander.block_dropout(base, p, stream).nnz
        sigma = np.sqrt(nnz * p * (1 - p))
        if abs(kept - nnz * p) > 4 * sigma:
            bad += 1
    if bad > 2:
        failures.append(f"dropout-concentration suite: {bad}/200 trials outside 4 sigma")

    # Leak freedom: expanded supports disjoint, union matches unsigned run.
    for trial in range(10):
        if not _leak_check(rng, seed + trial):
            failures.append(f"leak-freedom suite: trial {trial} failed")

    # Determinism: same seed twice gives identical shard bytes.
    if not _determinism_check(seed):
        failures.append("determinism suite: repeated run differed")


def _random_triplets(rng, m, n, density):
    mask = rng.random((m, n)) < density
    r, c = np.nonzero(mask)
    if r.size == 0:
        r, c = np.array([0]), np.array([0])
    return r, c


def _leak_check(rng, seed) -> bool:
    m, n = 10, 8
    taken = rng.random((m, n)) < 0.4
    r, c = np.nonzero(taken)
    if r.size < 4:
        return True
    split_at = r.size // 2
    train = sparse.from_triplets(r[:split_at], c[:split_at], m, n)
    test = sparse.from_triplets(r[split_at:], c[split_at:], m, n)
    union = sparse.from_triplets(r, c, m, n)
    rm = reducer.ReducedMatrix(
        data=np.array([[0.9, 0.4], [0.2, 0.7]]), rescale_mode="unit_interval", seed=seed
    )
    cfg = ExpansionConfig(reduced=rm, mode="randomized", shuffle=True, master_seed=seed)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        expander.expand_split(
            cfg, train, test, ShardSink(tmp / "tr"), ShardSink(tmp / "te")
        )
        expander.expand_randomized(cfg, union, ShardSink(tmp / "un"))
        _, tr_r, tr_c, _ = expander.read_expansion(tmp / "tr")
        _, te_r, te_c, _ = expander.read_expansion(tmp / "te")
        _, un_r, un_c, _ = expander.read_expansion(tmp / "un")
    tr = set(zip(tr_r.tolist(), tr_c.tolist()))
    te = set(zip(te_r.tolist(), te_c.tolist()))
    un = set(zip(un_r.tolist(), un_c.tolist()))
    return not (tr & te) and (tr | te) == un


def _determinism_check(seed) -> bool:
    base = sparse.from_triplets([0, 1, 2, 2], [1, 0, 0, 2], 3, 3)
    rm = reducer.ReducedMatrix(
        data=np.array([[0.8, 0.3]]), rescale_mode="unit_interval", seed=seed
    )
    cfg = ExpansionConfig(reduced=rm, master_seed=seed, shard_granularity="per_block")
    blobs = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            expander.expand_randomized(cfg, base, ShardSink(tmp))
            names = sorted(p.name for p in Path(tmp).iterdir())
            blobs.append([(n, (Path(tmp) / n).read_bytes()) for n in names])
    return blobs[0] == blobs[1]


def cmd_verify(args) -> int:
    cfg = resolve_config(args)
    failures: list[str] = []
    _verify_builtin_suites(cfg.seed, failures)
    if args.expansion:
        _verify_expansion_dir(Path(args.expansion), failures)
    suites = "sum-conservation, spectrum-conservation, dropout-concentration, " \
             "leak-freedom, determinism"
    if args.expansion:
        suites += f", expansion dir {args.expansion}"
    if failures:
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        print(f"verify: {len(failures)} failure(s) across suites ({suites})")
        return EXIT_VERIFY
    print(f"verify: all suites passed ({suites})")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--input", help="input file")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fractex", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="parse ratings and write leak-free train/test")
    _add_common(p)
    p.add_argument("--format", choices=["csv_header", "tsv"], default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("reduce", help="build the dense reduced multiplier grid")
    _add_common(p)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--rescale", choices=list(_RESCALE_FLAGS), default=None)
    p.add_argument("--power-iters", dest="power_iters", type=int, default=None)
    p.add_argument("--oversample", type=int, default=None)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("expand", help="expand a triplet matrix into shards")
    _add_common(p)
    p.add_argument("--reduced", required=True, help="reduced-matrix table file")
    p.add_argument("--test", help="test triplets; enables consistent split expansion")
    p.add_argument("--mode", choices=list(expander.MODES), default=None)
    p.add_argument("--shuffle", type=_bool_flag, default=None)
    p.add_argument("--granularity", choices=list(expander.SHARD_GRANULARITIES), default=None)
    p.add_argument("--gzip", action="store_true", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("stats", help="ranked-distribution report for an expansion")
    _add_common(p)
    p.add_argument("--expansion", required=True, help="shard directory with manifest")
    p.add_argument("--spectrum-k", dest="spectrum_k", type=int, default=0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("verify", help="run invariant suites; nonzero exit on failure")
    _add_common(p)
    p.add_argument("--expansion", help="optionally check shards against their manifest")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"fractex {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

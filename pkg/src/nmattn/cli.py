"""Command-line harness: fuzzing, sweeps, model tables, attention demos.

Every command is deterministic given --seed (fallback: the NM_SPARSE_SEED
environment variable, then 0) and emits RFC-4180-style CSV with LF line
endings and '.' decimals. Exit codes: 0 success, 1 validation failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import backend, container, theory
from .codec import (
    Layout,
    SparsityMode,
    compress_logical,
    decompress,
    prune_dense,
    tile_layout_decode,
    tile_layout_encode,
)
from .dense import AttentionInputs, DenseMatrix
from .fused import attention_sddmm
from .pipeline import approx_error, attention_heatmap, nm_attention
from .sparse_ops import softmax_rows
from .theory import CostModelParams

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2

_CONFIG_TYPES = {
    "mode": str,
    "iters": int,
    "seed": int,
    "check": str,
    "p": float,
    "sigma": float,
    "mu": float,
    "densities": str,
    "n": int,
    "d": int,
    "T": int,
    "s": float,
    "m": int,
    "samples": int,
    "out": str,
    "n_list": str,
    "s_grid": str,
    "kind": str,
    "dump_heatmaps": str,
    "dump_compressed": str,
}


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("NM_SPARSE_SEED", "").strip()
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ValueError(f"NM_SPARSE_SEED={env!r} is not an integer") from exc
    return 0


def _load_config(path: str) -> dict:
    """key=value defaults; '#' starts a comment; flags always win."""
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _CONFIG_TYPES[key](raw.strip())
    return values


def _write_csv(rows: list[dict], fieldnames: list[str], out: str | None) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _format_cell(row.get(k, "")) for k in fieldnames})
    data = buf.getvalue()
    if out:
        Path(out).write_text(data)
    else:
        sys.stdout.write(data)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _matrix_csv(m: DenseMatrix, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in m.data:
            writer.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# roundtrip-fuzz


def _fuzz_matrix(rng: np.random.Generator, mode: SparsityMode) -> DenseMatrix:
    rows = 32 * int(rng.integers(1, 4))
    unit = 16 if mode is SparsityMode.ONE_OF_TWO else 32
    cols = unit * int(rng.integers(1, 5))
    if rng.random() < 0.25:
        # small-integer lattice exercises the tie-break rules
        data = rng.integers(-2, 3, size=(rows, cols)).astype(np.float64)
    else:
        data = rng.standard_normal((rows, cols))
    return DenseMatrix(data)


def _roundtrip_failure(m: DenseMatrix, mode: SparsityMode) -> str | None:
    """Name of the first failing roundtrip check, or None."""
    pruned, _ = prune_dense(m, mode)
    c = compress_logical(m, mode)
    if not np.array_equal(decompress(c).data, pruned.data):
        return "compress->decompress != prune oracle"
    back = tile_layout_decode(tile_layout_encode(c))
    if not np.array_equal(back.metadata, c.metadata) or not np.array_equal(
        back.nonzeros, c.nonzeros
    ):
        return "tile encode->decode != identity"
    again = container.from_bytes(container.to_bytes(c))
    if not np.array_equal(again.metadata, c.metadata) or not np.array_equal(
        again.nonzeros, c.nonzeros
    ):
        return "container serialize->parse != identity"
    return None


def _shrink(m: DenseMatrix, mode: SparsityMode) -> DenseMatrix:
    """Greedily drop tile-aligned slices while the matrix keeps failing."""
    unit = 16 if mode is SparsityMode.ONE_OF_TWO else 32
    current = m
    changed = True
    while changed:
        changed = False
        rows, cols = current.shape
        candidates = []
        if rows - 32 >= 32:
            candidates.append((rows - 32, cols))
        if cols - unit >= unit:
            candidates.append((rows, cols - unit))
        for crows, ccols in candidates:
            trial = DenseMatrix(current.data[:crows, :ccols].copy())
            if _roundtrip_failure(trial, mode) is not None:
                current = trial
                changed = True
                break
    return current


def cmd_roundtrip_fuzz(args: argparse.Namespace) -> int:
    mode = SparsityMode.parse(args.mode)
    if args.check:
        try:
            c = container.read_container(args.check)
            if c.layout is not Layout.LOGICAL:
                c = tile_layout_decode(c)  # assumes the default 32-row tiling
            decompress(c)
        except (ValueError, OSError) as exc:
            print(f"container check failed: {exc}")
            return EXIT_VALIDATION
        print(f"container ok: {args.check}")
    rng = np.random.default_rng(_resolve_seed(args.seed))
    for i in range(args.iters):
        m = _fuzz_matrix(rng, mode)
        reason = _roundtrip_failure(m, mode)
        if reason is not None:
            small = _shrink(m, mode)
            print(f"FAIL at iteration {i}: {reason}")
            print(f"minimized counterexample ({small.rows}x{small.cols}):")
            print(np.array2string(small.data, threshold=256))
            return EXIT_VALIDATION
    print(f"{args.iters}/{args.iters} ok" if args.iters else "0 cases")
    return EXIT_OK


# ---------------------------------------------------------------------------
# quality-sweep


def _topk_mask(a: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(-a, axis=1, kind="stable")[:, :k]
    mask = np.zeros_like(a, dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def _fixed_mask(a: np.ndarray, k: int) -> np.ndarray:
    mask = np.zeros_like(a, dtype=bool)
    mask[:, :k] = True
    return mask


def cmd_quality_sweep(args: argparse.Namespace) -> int:
    from .codec import PruneMask
    from .theory import (
        QualityParams,
        empirical_quality,
        quality_fixed,
        quality_nm,
        quality_topk,
    )

    if args.n % 4 != 0 or args.n < 8:
        raise ValueError(f"--n must be a multiple of 4 and >= 8, got {args.n}")
    params = QualityParams(p=args.p, sigma=args.sigma, mu=args.mu)
    densities = [float(x) for x in args.densities.split(",") if x]
    for s in densities:
        if not 0 < s < 1:
            raise ValueError(f"densities must lie in (0, 1), got {s}")
    p_sigma = params.p_sigma
    rng = np.random.default_rng(_resolve_seed(args.seed))

    weights = []
    for _ in range(args.samples):
        scores = params.mu + params.sigma * rng.standard_normal((args.n, args.n))
        weights.append(backend.kernels().row_softmax_dense(scores))

    def measure(mask_fn) -> tuple[float, float]:
        vals = [
            empirical_quality(DenseMatrix(a), PruneMask(mask_fn(a)), args.p)
            for a in weights
        ]
        mean = float(np.mean(vals))
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        return mean, std

    rows = []
    for s in densities:
        k = max(1, min(args.n - 1, round(s * args.n)))
        mean, std = measure(lambda a, k=k: _topk_mask(a, k))
        rows.append(
            {"pattern": "topk", "s": s, "theory": quality_topk(s, p_sigma),
             "empirical_mean": mean, "empirical_std": std}
        )
    for s in densities:
        k = max(1, min(args.n - 1, round(s * args.n)))
        mean, std = measure(lambda a, k=k: _fixed_mask(a, k))
        rows.append(
            {"pattern": "fixed", "s": s, "theory": quality_fixed(s),
             "empirical_mean": mean, "empirical_std": std}
        )
    for mode in (SparsityMode.ONE_OF_TWO, SparsityMode.TWO_OF_FOUR):
        mean, std = measure(
            lambda a, mode=mode: prune_dense(DenseMatrix(a), mode)[1].bits
        )
        rows.append(
            {"pattern": mode.value, "s": 0.5, "theory": quality_nm(p_sigma, mode).value,
             "empirical_mean": mean, "empirical_std": std}
        )
    _write_csv(rows, ["pattern", "s", "theory", "empirical_mean", "empirical_std"], args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# speedup-table


def cmd_speedup_table(args: argparse.Namespace) -> int:
    d, T = args.d, args.T
    m = args.m if args.m is not None else theory.performer_feature_count(d)
    n_list = [int(x) for x in args.n_list.split(",") if x]
    s_grid = [float(x) for x in args.s_grid.split(",") if x]
    rows = []
    for s in s_grid:
        rows.append(
            {"model": "topk_bound", "s": s,
             "value": theory.speedup_topk_bound(CostModelParams(d=d, T=T, s=s))}
        )
    for s in s_grid:
        if s > 0:
            rows.append(
                {"model": "fixed_asym", "s": s,
                 "value": theory.speedup_fixed(CostModelParams(d=d, T=T, s=s)).asymptotic}
            )
    nm_asym = theory.speedup_nm(CostModelParams(d=d, T=T)).asymptotic
    rows.append({"model": "nm_asym", "value": nm_asym})
    for n in n_list:
        rows.append(
            {"model": "nm_finite", "n": n,
             "value": theory.speedup_nm(CostModelParams(n=n, d=d, T=T)).finite}
        )
    for n in n_list:
        v = theory.performer_speedup(n, d, T, m)
        rows.append(
            {"model": "performer", "n": n, "value": v,
             "note": "faster_than_dense" if v > 1 else ""}
        )
    rows.append(
        {"model": "crossover_topk_unity", "s": theory.topk_unity_density(d, T),
         "value": 1.0, "note": "topk bound == 1"}
    )
    rows.append(
        {"model": "crossover_topk_equal_nm",
         "s": theory.topk_equal_efficiency_density(d, T), "value": nm_asym,
         "note": "topk bound == nm"}
    )
    rows.append(
        {"model": "crossover_fixed_equal_nm",
         "s": theory.nm_fixed_crossover_density(d, T), "value": nm_asym,
         "note": "fixed == nm"}
    )
    n1 = theory.performer_unity_crossover(d, T, m)
    rows.append(
        {"model": "crossover_performer_dense", "n": n1,
         "value": theory.performer_speedup(n1, d, T, m),
         "note": "performer passes dense"}
    )
    n2 = theory.performer_nm_crossover(d, T, m)
    rows.append(
        {"model": "crossover_performer_nm", "n": n2,
         "value": theory.performer_speedup(n2, d, T, m),
         "note": "performer passes nm"}
    )
    _write_csv(rows, ["model", "n", "s", "value", "note"], args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# attn-demo


def cmd_attn_demo(args: argparse.Namespace) -> int:
    mode = SparsityMode.parse(args.mode)
    if args.n % mode.group_size != 0:
        raise ValueError(
            f"alignment error: n={args.n} is not a multiple of the {mode.value} "
            f"group size {mode.group_size}"
        )
    if args.d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(_resolve_seed(args.seed))
    q, k, v = (DenseMatrix(rng.standard_normal((args.n, args.d))) for _ in range(3))
    inputs = AttentionInputs(q, k, v)

    from .dense import full_attention

    full = full_attention(inputs)
    sparse = nm_attention(inputs, mode)
    err = approx_error(full, sparse)

    compressed, stats = attention_sddmm(q, k, mode)
    weights = softmax_rows(compressed)
    row_sums = weights.nonzeros.sum(axis=1)
    stochastic_ok = bool(np.abs(row_sums - 1.0).max() <= 1e-12)

    print(f"n={args.n} d={args.d} mode={mode.value} backend={backend.active_backend()}")
    print(f"rel_l2={err.rel_l2!r} max_abs={err.max_abs!r}")
    print(f"dense_elems_written={stats.dense_elems_written} "
          f"peak_tile_elems={stats.peak_tile_elems}")
    print(f"row-stochastic: {'PASS' if stochastic_ok else 'FAIL'}")

    if args.dump_compressed:
        container.write_container(compressed, args.dump_compressed)
        print(f"compressed scores written to {args.dump_compressed}")
    if args.dump_heatmaps:
        out_dir = Path(args.dump_heatmaps)
        out_dir.mkdir(parents=True, exist_ok=True)
        pair = attention_heatmap(inputs, mode)
        _matrix_csv(pair.dense, out_dir / "dense_weights.csv")
        _matrix_csv(pair.sparse, out_dir / "sparse_weights.csv")
        print(f"heatmaps written to {out_dir}")
    return EXIT_OK if stochastic_ok else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# traffic


def cmd_traffic(args: argparse.Namespace) -> int:
    kind = args.kind.lower()
    counts = theory.memory_access_counts(kind, args.n, args.d, args.T, args.s)
    rows = [
        {"kind": kind, "n": args.n, "d": args.d, "T": args.T, "s": args.s,
         "qk": counts.qk, "softmax": counts.softmax, "av": counts.av,
         "total": counts.total}
    ]
    _write_csv(rows, ["kind", "n", "d", "T", "s", "qk", "softmax", "av", "total"], args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser plumbing


def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    """CLI parser; ``defaults`` (from --config) rewires flag defaults after
    construction, so explicitly passed flags still win."""
    parser = argparse.ArgumentParser(
        prog="nmattn",
        description="Dynamic N:M structured sparse attention toolbox",
    )
    parser.add_argument("--config", help="key=value file preloading flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("roundtrip-fuzz", help="codec/container bijection fuzzing")
    p.add_argument("--mode", default="2:4", choices=["1:2", "2:4"])
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--check", default=None, help="validate an NMCS container file")
    p.set_defaults(func=cmd_roundtrip_fuzz)

    p = sub.add_parser("quality-sweep", help="theoretical vs empirical ticket quality")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--densities", default="0.02,0.05,0.1,0.25,0.5,0.75")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_quality_sweep)

    p = sub.add_parser("speedup-table", help="memory-traffic speedup models")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--T", type=int, default=128)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--n-list", dest="n_list", default="256,512,1024,2048,4096")
    p.add_argument("--s-grid", dest="s_grid",
                   default="0.01,0.02,0.045,0.1,0.25,0.5,0.63,1.0")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_speedup_table)

    p = sub.add_parser("attn-demo", help="full vs sparse attention on Gaussian inputs")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--mode", default="1:2", choices=["1:2", "2:4"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dump-heatmaps", dest="dump_heatmaps", default=None)
    p.add_argument("--dump-compressed", dest="dump_compressed", default=None)
    p.set_defaults(func=cmd_attn_demo)

    p = sub.add_parser("traffic", help="memory-access counts per attention stage")
    p.add_argument("--kind", default="full", choices=["full", "topk"])
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--T", type=int, default=128)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_traffic)

    if defaults:
        for sp in sub.choices.values():
            sp.set_defaults(**defaults)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    defaults = None
    if config_path:
        try:
            defaults = _load_config(config_path)
        except (ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    parser = build_parser(defaults)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: generate, evaluate, sweep, bench, probe, sizing.

Every command is driven by a JSON config (see :mod:`windec.config`) plus
flag overrides, and is deterministic given (config, seed) except for wall
clock timings.  Exit codes: 0 success, 1 configuration error, 2 runtime
error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, IcConfig, load_config
from .errors import ConfigError, WindecError, WindowTooLarge
from .generators import Dataset, generate_dataset, read_dataset, write_dataset
from .models import (
    DiffusionStencil,
    IdentityPredictor,
    MetricsRecord,
    UpwindStencil,
    fit_global_linear,
    fit_stencil,
    metrics_record,
)
from .sizing import recommend_window
from .tensor import BatchTensor, Shape
from .windowing import (
    WindowSpec,
    chunk_domain,
    integrate_predictions,
    receptive_field_probe,
    window_patch,
)

_CHAR_LENGTH_KIND = {"advection": "advection", "heat": "diffusion", "burgers": "burgers"}


@dataclass
class RunRecord:
    """Everything needed to reproduce and audit one eval run."""

    tool_version: str
    seed: int
    config: dict
    window: list[int] | None
    train: list[dict] = field(default_factory=list)
    test: list[dict] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _write_metrics_csv(path: Path, rows: list[tuple[int, MetricsRecord]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frame,rel_l2,paper_l2,r2\n")
        for frame, m in rows:
            fh.write(f"{frame},{_fmt(m.rel_l2)},{_fmt(m.paper_l2)},{_fmt(m.r2)}\n")


def _split_pairs(n_pairs: int, fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Seeded shuffle of frame-pair indices, first part for training."""
    perm = np.random.default_rng(seed).permutation(n_pairs)
    k = int(math.floor(n_pairs * fraction))
    return sorted(int(i) for i in perm[:k]), sorted(int(i) for i in perm[k:])


def _probe_line(ds: Dataset) -> np.ndarray:
    """1D probe along the first spatial axis of frame 0."""
    idx = (0, slice(None), *(0,) * (ds.grid.ndim - 1), 0)
    return ds.frames[0].data[idx]


def _resolve_window(cfg: ExperimentConfig, ds: Dataset) -> WindowSpec:
    if isinstance(cfg.window, tuple):
        if len(cfg.window) != ds.grid.ndim:
            raise ConfigError(
                f"window: rank {len(cfg.window)} does not match grid rank {ds.grid.ndim}"
            )
        return WindowSpec(cfg.window)
    u_max = None
    if ds.kind == "burgers":
        u_max = float(np.max(np.abs(ds.frames[0].data)))
    report = recommend_window(
        ds.pde,
        kind=_CHAR_LENGTH_KIND[ds.kind],
        probe=_probe_line(ds),
        u_max=u_max,
    )
    return WindowSpec.cube(report.recommended_cells, ds.grid.ndim)


def _build_predictor(cfg: ExperimentConfig, ds: Dataset, w: WindowSpec | None,
                     train_pairs: list[int]):
    kind = cfg.predictor.kind
    if kind == "identity":
        return IdentityPredictor(ds.grid.ndim)
    if kind == "upwind":
        return UpwindStencil(ds.pde, w)
    if kind == "diffusion":
        return DiffusionStencil(ds.pde, w)
    if kind == "stencil":
        return fit_stencil(
            ds, w,
            ridge_lambda=cfg.predictor.ridge_lambda,
            sample_budget=cfg.predictor.sample_budget,
            seed=cfg.seed,
            pair_indices=train_pairs,
        )
    if kind == "global":
        return fit_global_linear(
            ds,
            ridge_lambda=cfg.predictor.ridge_lambda,
            sample_budget=cfg.predictor.sample_budget,
            seed=cfg.seed,
            pair_indices=train_pairs,
        )
    raise ConfigError(f"predictor.kind: unknown kind {kind!r}")


def _evaluate_pairs(ds: Dataset, pairs: list[int], predictor, w: WindowSpec | None,
                    threads: int) -> list[tuple[int, MetricsRecord]]:
    rows = []
    for t in pairs:
        if hasattr(predictor, "predict_frame"):
            pred = predictor.predict_frame(ds.frames[t])
        else:
            pred = integrate_predictions(ds.frames[t], w, predictor, threads=threads)
        rows.append((t, metrics_record(pred, ds.frames[t + 1])))
    return rows


def _dataset_from_config(cfg: ExperimentConfig) -> Dataset:
    dc = cfg.dataset
    return generate_dataset(dc.kind, dc.grid(), dc.pde(), dc.ic.build(),
                            dc.n_steps, dc.seed)


def _check_window_fits(w: WindowSpec, grid: Shape) -> None:
    # expansion always succeeds, but a window so large that one block swallows
    # the whole padded grid and then some is almost certainly a config slip
    for wi, n in zip(w.sizes, grid.spatial):
        if wi > 2 * n + 1:
            raise WindowTooLarge(f"window {wi} exceeds twice the grid extent {n}")


# --- commands ---------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = _load_effective_config(args)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = _dataset_from_config(cfg)
    path = out / "dataset.ddld"
    write_dataset(path, ds)
    g = ds.grid
    print(f"wrote {path}")
    print(f"kind={ds.kind} batch={g.batch} extents={list(g.spatial)} "
          f"channels={g.channels} frames={len(ds.frames)}")
    print(f"dt={ds.pde.dt!r} dx={ds.pde.dx!r} c={ds.pde.c} nu={ds.pde.nu!r} "
          f"alpha={ds.pde.alpha!r} boundary={ds.pde.boundary} seed={ds.seed}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_effective_config(args)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    ds = read_dataset(args.data) if args.data else _dataset_from_config(cfg)
    timings["dataset"] = time.perf_counter() - t0
    if ds.n_steps < 1:
        raise WindecError("evaluation needs at least 2 frames")

    train_pairs, test_pairs = _split_pairs(ds.n_steps, cfg.split_fraction, cfg.seed)
    w = None
    if cfg.predictor.kind != "global":
        w = _resolve_window(cfg, ds)
        _check_window_fits(w, ds.grid)

    t0 = time.perf_counter()
    predictor = _build_predictor(cfg, ds, w, train_pairs)
    timings["fit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    train_rows = _evaluate_pairs(ds, train_pairs, predictor, w, args.threads)
    test_rows = _evaluate_pairs(ds, test_pairs, predictor, w, args.threads)
    timings["evaluate"] = time.perf_counter() - t0

    _write_metrics_csv(out / "metrics_train.csv", train_rows)
    _write_metrics_csv(out / "metrics_test.csv", test_rows)
    record = RunRecord(
        tool_version=__version__,
        seed=cfg.seed,
        config=cfg.snapshot(),
        window=list(w.sizes) if w is not None else None,
        train=[{"frame": t, **asdict(m)} for t, m in train_rows],
        test=[{"frame": t, **asdict(m)} for t, m in test_rows],
        timings=timings,
    )
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(record), fh, indent=2, sort_keys=True)
        fh.write("\n")
    mean_rel = statistics.fmean(m.rel_l2 for _, m in test_rows) if test_rows else float("nan")
    mean_r2 = statistics.fmean(m.r2 for _, m in test_rows) if test_rows else float("nan")
    print(f"window={list(w.sizes) if w else None} predictor={cfg.predictor.kind}")
    print(f"test mean rel_l2={_fmt(mean_rel)} mean r2={_fmt(mean_r2)}")
    print(f"wrote {out / 'metrics_train.csv'}, {out / 'metrics_test.csv'}, {out / 'run.json'}")
    return 0


def _parse_number_list(text: str, where: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if not values:
        raise ConfigError(f"{where}: empty list")
    return values


def cmd_sweep(args) -> int:
    cfg = _load_effective_config(args)
    if cfg.dataset.kind != "advection":
        raise ConfigError("sweep: dataset.kind must be advection")
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    windows, freqs = [], []
    for v in (int(x) for x in _parse_number_list(args.windows, "--windows")):
        if v not in windows:
            windows.append(v)
    for v in _parse_number_list(args.freqs, "--freqs"):
        if v not in freqs:
            freqs.append(v)
    if len(windows) < 2 or len(freqs) < 2:
        raise ConfigError("sweep needs at least 2 windows and 2 frequencies")
    for wcells in windows:
        if wcells < 3 or wcells % 2 == 0:
            raise ConfigError(f"--windows: sizes must be odd and >= 3, got {wcells}")

    d = len(cfg.dataset.extents)
    rows = []
    for fi, freq in enumerate(freqs):
        base = cfg.dataset
        if base.ic.kind == "harmonics":
            ic = IcConfig(kind="harmonics", bandwidth=freq, base_freq=base.ic.base_freq,
                          envelope_sigma=base.ic.envelope_sigma)
        else:
            ic = IcConfig(kind="sine", freq=freq)
        dc = replace(base, ic=ic, seed=base.seed + 1000 * fi)
        ds = generate_dataset(dc.kind, dc.grid(), dc.pde(), ic.build(),
                              dc.n_steps, dc.seed)
        train_pairs, test_pairs = _split_pairs(ds.n_steps, cfg.split_fraction, cfg.seed)
        for wcells in windows:
            w = WindowSpec.cube(wcells, d)
            stencil = fit_stencil(
                ds, w,
                ridge_lambda=cfg.predictor.ridge_lambda,
                sample_budget=cfg.predictor.sample_budget,
                seed=cfg.seed,
                pair_indices=train_pairs,
            )
            test_rows = _evaluate_pairs(ds, test_pairs, stencil, w, args.threads)
            rows.append((
                wcells, freq,
                statistics.fmean(m.r2 for _, m in test_rows),
                statistics.fmean(m.rel_l2 for _, m in test_rows),
            ))
            print(f"window={wcells} freq={freq}: r2={rows[-1][2]:.6f} "
                  f"rel_l2={rows[-1][3]:.3e}")
    path = out / "sweep.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("window,frequency,r2,rel_l2\n")
        for wcells, freq, r2v, relv in rows:
            fh.write(f"{wcells},{_fmt(freq)},{_fmt(r2v)},{_fmt(relv)}\n")
    print(f"wrote {path}")
    return 0


def bench_roundtrip(
    block_counts: list[int],
    repetitions: int,
    window: int = 3,
    fixed_blocks: int = 8,
    batch: int = 16,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """Median chunk+patch seconds for each largest-block count.

    The scaled dimension carries ``b_max`` blocks of ``window`` cells; the
    second dimension stays at ``fixed_blocks`` so cost isolates b_max.  The
    batch and fixed extents are sized so block movement dominates per-call
    overhead from the smallest point on.
    """
    rng = np.random.default_rng(seed)
    results = []
    for b_max in block_counts:
        blocks = (b_max, fixed_blocks)
        extents = (window * b_max, window * fixed_blocks)
        x = BatchTensor(rng.standard_normal((batch, *extents, 1)))
        window_patch(chunk_domain(x, blocks), batch, blocks)  # warmup
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            chunked = chunk_domain(x, blocks)
            window_patch(chunked, batch, blocks)
            times.append(time.perf_counter() - t0)
        results.append((b_max, statistics.median(times)))
    return results


def loglog_slope(points: list[tuple[int, float]]) -> float:
    xs = np.log([float(b) for b, _ in points])
    ys = np.log([t for _, t in points])
    return float(np.polyfit(xs, ys, 1)[0])


def cmd_bench(args) -> int:
    blocks = [int(v) for v in _parse_number_list(args.blocks, "--blocks")]
    if len(blocks) < 4:
        raise ConfigError("--blocks: need at least 4 points")
    if blocks != sorted(blocks):
        raise ConfigError("--blocks: list must be sorted ascending")
    if args.reps < 1:
        raise ConfigError("--reps: must be >= 1")
    out = Path(args.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    results = bench_roundtrip(blocks, args.reps, window=args.bench_window)
    path = out / "bench.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("b_max,median_seconds,repetitions\n")
        for b_max, seconds in results:
            fh.write(f"{b_max},{_fmt(seconds)},{args.reps}\n")
    slope = loglog_slope(results)
    for b_max, seconds in results:
        print(f"b_max={b_max}: {seconds * 1e3:.3f} ms")
    print(f"log-log slope={slope:.3f}")

    # single-inference reference cost for scale, not a pass/fail quantity
    rng = np.random.default_rng(0)
    wspec = WindowSpec.cube(args.bench_window, 2)
    windows = BatchTensor(rng.standard_normal((1024, *wspec.sizes, 1)))
    ident = IdentityPredictor(2)
    t0 = time.perf_counter()
    ident.predict_batch(windows)
    print(f"reference identity inference over 1024 windows: "
          f"{(time.perf_counter() - t0) * 1e3:.3f} ms")
    print(f"wrote {path}")
    return 0


def cmd_probe(args) -> int:
    extent = args.extent or 2 * args.radius * args.layers + 3
    widths = receptive_field_probe(args.radius, args.layers, extent, ndim=args.ndim)
    predicted = 2 * args.radius * args.layers + 1
    ok = all(w == predicted for w in widths)
    print(f"radius={args.radius} layers={args.layers} measured={list(widths)} "
          f"predicted={predicted} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


def cmd_sizing(args) -> int:
    cfg = _load_effective_config(args)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dc = cfg.dataset
    ds = generate_dataset(dc.kind, dc.grid(), dc.pde(), dc.ic.build(), 0, dc.seed)
    u_max = None
    if ds.kind == "burgers":
        u_max = float(np.max(np.abs(ds.frames[0].data)))
    report = recommend_window(
        ds.pde, kind=_CHAR_LENGTH_KIND[ds.kind], probe=_probe_line(ds), u_max=u_max
    )
    text = report.as_text()
    sys.stdout.write(text)
    (out / "sizing.txt").write_text(text, encoding="utf-8")
    return 0


# --- argument plumbing ------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); config errors are exit 1
        raise ConfigError(message)


def _load_effective_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.window:
        sizes = tuple(int(v) for v in _parse_number_list(args.window, "--window"))
        cfg = replace(cfg, window=sizes)
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="path to a JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--window", default=None,
                   help="override window sizes, comma separated (e.g. 5,5)")
    default_threads = os.environ.get("DDELD_THREADS", "1")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads for offset sweeps "
                        f"(default {default_threads}, from DDELD_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="windec",
                     description="Window decomposition pipeline for grid PDE data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset and write it to disk")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="fit/evaluate a predictor on a dataset")
    _add_common(p)
    p.add_argument("--data", default=None, help="read this .ddld instead of generating")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid of test r2 over window sizes and frequencies")
    _add_common(p)
    p.add_argument("--windows", required=True, help="comma-separated window cell counts")
    p.add_argument("--freqs", required=True, help="comma-separated frequencies")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="time chunk+patch while scaling block count")
    _add_common(p)
    p.add_argument("--blocks", default="8,16,32,64,128,256",
                   help="comma-separated b_max values, ascending")
    p.add_argument("--reps", type=int, default=5, help="repetitions per point")
    p.add_argument("--bench-window", type=int, default=3, help="window cells per dim")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("probe", help="measure a composed stencil receptive field")
    _add_common(p)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--extent", type=int, default=None)
    p.add_argument("--ndim", type=int, default=2, choices=(1, 2, 3))
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sizing", help="report a recommended window size")
    _add_common(p)
    p.set_defaults(func=cmd_sizing)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None) is None:
            try:
                args.threads = int(os.environ.get("DDELD_THREADS", "1"))
            except ValueError as exc:
                raise ConfigError(f"DDELD_THREADS: {exc}") from exc
        if args.threads < 1:
            raise ConfigError(f"--threads: must be >= 1, got {args.threads}")
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except WindecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

"""Benchmark command line: synthetic data, training runs, split protocol.

Subcommands:
  synth  generate a synthetic dataset (with Bayes sidecar)
  train  one training run on a single seeded 60/20/20 split
  bench  the full protocol: 14 seeded splits, lambda grid selected on
         validation, test losses reported as a table
  calib  calibration constants on tiny enumerable tasks

Machine-readable results go to <out>/results.jsonl; per-pass training
diagnostics (including wall-clock times) to <out>/diagnostics.jsonl.
Exit codes: 0 success, 2 parse/config error, 3 training failure.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from .calibration import constant_c, ranking_d_bound, zeta_bruteforce
from .datasets import Dataset, DatasetFormatError, load_dataset, make_synth
from .kernels import KernelSpec, median_heuristic
from .tasks import make_task
from .trainer import TrainConfig, gbcfw_train, m3n_train, predict

EXIT_PARSE = 2
EXIT_TRAIN = 3

DEFAULT_LAMBDA_GRID = [2.0 ** -j for j in range(1, 11)]


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _file_hash(path) -> int:
    digest = hashlib.sha256(Path(path).read_bytes()).digest()
    return int.from_bytes(digest[:8], "big")


def _split_indices(n: int, seed: int, data_hash: int):
    """Deterministic 60/20/20 split from (seed, dataset hash)."""
    rng = np.random.default_rng([seed, data_hash])
    perm = rng.permutation(n)
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def _standardize(train_xs: np.ndarray):
    mean = train_xs.mean(axis=0)
    std = train_xs.std(axis=0)
    std[std < 1e-12] = 1.0
    return lambda xs: (xs - mean) / std


def _mean_loss(task, preds, truths) -> float:
    return float(np.mean([task.loss(p, y) for p, y in zip(preds, truths)]))


def _resolve_gamma(kernel_gamma: str, xs: np.ndarray) -> float:
    if kernel_gamma == "median":
        return median_heuristic(xs)
    try:
        g = float(kernel_gamma)
    except ValueError:
        raise ValueError(f"--kernel-gamma must be 'median' or a float, got {kernel_gamma!r}")
    if g <= 0:
        raise ValueError("--kernel-gamma must be positive")
    return g


def _train_once(ds: Dataset, task, method: str, lam: float, passes: int,
                spmp_iters: int, warm_start: bool, gamma: float, seed: int,
                idx_train, idx_val, idx_test, scale):
    xs = scale(ds.xs)
    cfg = TrainConfig(
        passes=passes, lam=lam, spmp_iters=spmp_iters, warm_start=warm_start,
        seed=seed, kernel=KernelSpec("gaussian", gamma), method=method,
    )
    train_fn = gbcfw_train if method == "m4n" else m3n_train
    data = (xs[idx_train], [ds.ys[i] for i in idx_train])
    model, report = train_fn(data, task, cfg)
    val_loss = _mean_loss(task, predict(model, xs[idx_val]), [ds.ys[i] for i in idx_val]) if len(idx_val) else math.nan
    test_loss = _mean_loss(task, predict(model, xs[idx_test]), [ds.ys[i] for i in idx_test]) if len(idx_test) else math.nan
    return model, report, val_loss, test_loss


def _emit(out_dir: Path, results: list[dict], diagnostics: list[dict]):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.jsonl", "w") as fh:
        for rec in results:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(out_dir / "diagnostics.jsonl", "w") as fh:
        for rec in diagnostics:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _table(rows: list[dict], columns: list[str]) -> str:
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for r in rows:
        lines.append("  ".join(str(r.get(c, "")).ljust(widths[c]) for c in columns))
    return "\n".join(lines)


def _load(data_path: str, task_kind: str) -> Dataset:
    try:
        return load_dataset(data_path, task_kind)
    except (DatasetFormatError, FileNotFoundError, ValueError) as exc:
        _fail(EXIT_PARSE, str(exc))


def _make_task_for(ds: Dataset):
    return make_task(ds.task_kind, **ds.task_params)


@click.group()
def main():
    """Structured prediction benchmark driver."""


@main.command()
@click.option("--kind", required=True,
              type=click.Choice(["blobs", "flatnoise", "ordinal", "hmm", "ranking"]))
@click.option("--n", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--param", "params", multiple=True,
              help="generator parameter as name=value (e.g. k=3, separation=2.5)")
def synth(kind, n, seed, out, params):
    """Generate a synthetic dataset and its Bayes sidecar."""
    kwargs = {}
    for p in params:
        if "=" not in p:
            _fail(EXIT_PARSE, f"bad --param {p!r}, expected name=value")
        name, value = p.split("=", 1)
        try:
            kwargs[name] = json.loads(value)
        except json.JSONDecodeError:
            _fail(EXIT_PARSE, f"bad value in --param {p!r}")
    try:
        ds = make_synth(kind, out, seed=seed, n=n, **kwargs)
    except (TypeError, ValueError) as exc:
        _fail(EXIT_PARSE, str(exc))
    click.echo(f"wrote {len(ds)} examples ({ds.task_kind} {ds.task_params}) to {out}")


def _common_train_options(fn):
    fn = click.option("--data", required=True, type=click.Path())(fn)
    fn = click.option("--task", "task_kind", required=True,
                      type=click.Choice(["multiclass", "ordinal", "chain", "ranking"]))(fn)
    fn = click.option("--method", default="m4n", show_default=True,
                      type=click.Choice(["m4n", "m3n"]))(fn)
    fn = click.option("--lambda", "lam", default=None, type=float)(fn)
    fn = click.option("--lambda-grid", default=None,
                      help="comma-separated values; default 2^-1..2^-10")(fn)
    fn = click.option("--passes", default=10, show_default=True)(fn)
    fn = click.option("--spmp-iters", default=20, show_default=True)(fn)
    fn = click.option("--warm-start", default="on", show_default=True,
                      type=click.Choice(["on", "off"]))(fn)
    fn = click.option("--kernel-gamma", default="median", show_default=True)(fn)
    fn = click.option("--seed", default=0, show_default=True)(fn)
    fn = click.option("--out", default="out", show_default=True, type=click.Path())(fn)
    return fn


def _parse_grid(lam, lambda_grid):
    if lam is not None:
        return [lam]
    if lambda_grid is None:
        return list(DEFAULT_LAMBDA_GRID)
    try:
        grid = [float(v) for v in lambda_grid.split(",")]
    except ValueError:
        raise ValueError(f"bad --lambda-grid {lambda_grid!r}")
    if not grid or any(g <= 0 for g in grid):
        raise ValueError("lambda grid values must be positive")
    return grid


@main.command()
@_common_train_options
def train(data, task_kind, method, lam, lambda_grid, passes, spmp_iters,
          warm_start, kernel_gamma, seed, out):
    """One training run on a single seeded 60/20/20 split."""
    ds = _load(data, task_kind)
    task = _make_task_for(ds)
    try:
        grid = _parse_grid(lam, lambda_grid)
        idx_train, idx_val, idx_test = _split_indices(len(ds), seed, _file_hash(data))
        scale = _standardize(ds.xs[idx_train])
        gamma = _resolve_gamma(kernel_gamma, scale(ds.xs[idx_train]))
    except ValueError as exc:
        _fail(EXIT_PARSE, str(exc))
    results, diagnostics = [], []
    try:
        best = None
        for g_lam in grid:
            model, report, val_loss, test_loss = _train_once(
                ds, task, method, g_lam, passes, spmp_iters, warm_start == "on",
                gamma, seed, idx_train, idx_val, idx_test, scale)
            rec = {
                "dataset": Path(data).name, "method": method, "split_seed": seed,
                "lambda": g_lam, "val_loss": val_loss, "test_loss": test_loss,
                "passes": passes, "K": spmp_iters, "warm_start": warm_start == "on",
            }
            for r in report.records:
                diagnostics.append({
                    "dataset": Path(data).name, "method": method, "split_seed": seed,
                    "lambda": g_lam, **{k: v for k, v in r.items() if k != "wall_s"},
                    "wall_ms": r["wall_s"] * 1000.0,
                })
            if best is None or val_loss < best["val_loss"]:
                best = rec
            results.append(rec)
    except (RuntimeError, ValueError) as exc:
        _fail(EXIT_TRAIN, str(exc))
    _emit(Path(out), results, diagnostics)
    click.echo(_table(results, ["dataset", "method", "lambda", "val_loss", "test_loss"]))
    click.echo(f"selected lambda={best['lambda']} test_loss={best['test_loss']:.4f}")


@main.command()
@_common_train_options
@click.option("--splits", default=14, show_default=True)
def bench(data, task_kind, method, lam, lambda_grid, passes, spmp_iters,
          warm_start, kernel_gamma, seed, out, splits):
    """Full protocol: seeded splits, lambda selected on validation."""
    ds = _load(data, task_kind)
    task = _make_task_for(ds)
    try:
        grid = _parse_grid(lam, lambda_grid)
    except ValueError as exc:
        _fail(EXIT_PARSE, str(exc))
    data_hash = _file_hash(data)
    results, diagnostics = [], []
    try:
        for split in range(splits):
            split_seed = seed + split
            idx_train, idx_val, idx_test = _split_indices(len(ds), split_seed, data_hash)
            scale = _standardize(ds.xs[idx_train])
            gamma = _resolve_gamma(kernel_gamma, scale(ds.xs[idx_train]))
            best = None
            for g_lam in grid:
                _, report, val_loss, test_loss = _train_once(
                    ds, task, method, g_lam, passes, spmp_iters, warm_start == "on",
                    gamma, split_seed, idx_train, idx_val, idx_test, scale)
                for r in report.records:
                    diagnostics.append({
                        "dataset": Path(data).name, "method": method,
                        "split_seed": split_seed, "lambda": g_lam,
                        **{k: v for k, v in r.items() if k != "wall_s"},
                        "wall_ms": r["wall_s"] * 1000.0,
                    })
                if best is None or val_loss < best[0]:
                    best = (val_loss, g_lam, test_loss)
            results.append({
                "dataset": Path(data).name, "method": method, "split_seed": split_seed,
                "lambda": best[1], "val_loss": best[0], "test_loss": best[2],
                "passes": passes, "K": spmp_iters, "warm_start": warm_start == "on",
            })
    except (RuntimeError, ValueError) as exc:
        _fail(EXIT_TRAIN, str(exc))
    _emit(Path(out), results, diagnostics)
    losses = [r["test_loss"] for r in results]
    mean, std = float(np.mean(losses)), float(np.std(losses))
    table = _table(results, ["dataset", "method", "split_seed", "lambda", "val_loss", "test_loss"])
    summary = f"mean test loss over {splits} splits: {mean:.4f} +/- {std:.4f}"
    out_dir = Path(out)
    (out_dir / "table.txt").write_text(table + "\n" + summary + "\n")
    click.echo(table)
    click.echo(summary)


@main.command()
@click.option("--task", "task_kind", required=True,
              type=click.Choice(["multiclass", "ordinal", "chain", "ranking"]))
@click.option("--k", default=3, show_default=True)
@click.option("--chain-m", default=2, show_default=True)
@click.option("--chain-r", default=2, show_default=True)
@click.option("--rank-m", default=3, show_default=True)
@click.option("--budget", default=20000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="out", show_default=True, type=click.Path())
def calib(task_kind, k, chain_m, chain_r, rank_m, budget, seed, out):
    """Calibration constants and zeta estimates on a tiny task."""
    try:
        if task_kind in ("multiclass", "ordinal"):
            task = make_task(task_kind, k=k)
        elif task_kind == "chain":
            task = make_task("chain", M=chain_m, R=chain_r)
        else:
            task = make_task("ranking", M=rank_m)
        records = []
        c = constant_c(task)
        rec = {"task": task_kind, "constant_c": c}
        if task_kind == "ranking":
            rec["constant_d_bound"] = ranking_d_bound(rank_m)
        else:
            est = zeta_bruteforce(task, [0.1, 0.3, 0.5], search_budget=budget, seed=seed)
            rec["zeta_lower"] = {str(e): v for e, v in est.zeta_lower.items()}
        records.append(rec)
    except (ValueError, AssertionError) as exc:
        _fail(EXIT_PARSE, str(exc))
    _emit(Path(out), records, [])
    click.echo(json.dumps(records[0], sort_keys=True))


if __name__ == "__main__":
    main()

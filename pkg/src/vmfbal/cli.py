"""Batch pipeline driver.

Subcommands: ``subsample`` (long-tail subset), ``balance`` (synthetic
top-up), ``train`` (linear head), ``eval`` (accuracy report), and
``grid`` (full method x imbalance-ratio x seed sweep with a combined
CSV).  Every flag can also be set through an environment variable with
the ``VMFBAL_`` prefix, e.g. ``VMFBAL_SEED=7``.

Exit codes: 0 success, 1 computation failure, 2 usage or input error.
"""
from __future__ import annotations

import csv
import json
import subprocess
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import click
import numpy as np

from . import classifier as _classifier
from . import data as _data
from .balance import METHODS
from .balance import balance as _run_balance
from .rng import RngHandle

_ENV_PREFIX = "VMFBAL"


@dataclass
class RunConfig:
    """One grid cell: where the data lives and how the stages run."""

    train_path: str
    test_path: str
    method: str
    ir: float
    seed: int
    n_max: int
    l2_strength: float | None
    max_iterations: int
    gradient_tolerance: float
    history_size: int
    head_over: int
    tail_under: int
    output_dir: str


def _git_describe() -> str | None:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
        return out.stdout.strip() or None
    except Exception:
        return None


def _write_manifest(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload.setdefault("git_describe", _git_describe())
    payload.setdefault("written_at_unix", time.time())
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load(path: str, split: str) -> _data.EmbeddingDataset:
    try:
        return _data.read_embeddings(path, split=split)
    except _data.FormatError as exc:
        raise click.UsageError(f"{path}: {exc}") from exc


def _check_unit_rows(ds: _data.EmbeddingDataset, path: str) -> None:
    norms = np.linalg.norm(ds.matrix.astype(np.float64), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-4)
    if bad.size:
        raise click.UsageError(
            f"{path}: row {int(bad[0])} has norm {norms[bad[0]]:.6f}; "
            "embeddings must be unit-norm (rerun with --normalize or fix the extractor)")


def _fail(message: str) -> "click.ClickException":
    exc = click.ClickException(message)
    exc.exit_code = 1
    return exc


@click.group(context_settings={"auto_envvar_prefix": _ENV_PREFIX})
def main() -> None:
    """Long-tail embedding balancing pipeline."""


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Source embedding file.")
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--ir", required=True, type=click.FloatRange(min=1.0),
              help="Imbalance ratio between largest and smallest class.")
@click.option("--nmax", required=True, type=click.IntRange(min=1),
              help="Samples kept for the largest class.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--classes", default=None, type=int,
              help="Expected class count; fails if the file disagrees.")
def subsample(input_path: str, output_path: str, ir: float, nmax: int,
              seed: int, classes: int | None) -> None:
    """Carve an exponential long-tail subset out of a balanced training file."""
    ds = _load(input_path, "train")
    if classes is not None and ds.num_classes != classes:
        raise click.UsageError(
            f"{input_path} declares {ds.num_classes} classes, expected {classes}")
    profile = _data.LongTailProfile(ir=ir, n_max=nmax, seed=seed)
    try:
        subset = _data.make_longtail_subset(ds, profile, RngHandle(seed))
    except (_data.InsufficientSamples, ValueError) as exc:
        raise _fail(str(exc)) from exc
    _data.write_embeddings(subset, output_path)
    counts = _data.class_counts(subset)
    ordered = sorted(counts.values(), reverse=True)
    click.echo(f"wrote {output_path}: {subset.n} rows, {len(counts)} classes, "
               f"counts {ordered[0]} .. {ordered[-1]}")


@main.command(name="balance")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--method", required=True, type=click.Choice(METHODS))
@click.option("--seed", default=None, type=int,
              help="Required for every method except 'none'.")
@click.option("--smote-k", default=5, show_default=True, type=click.IntRange(min=1))
@click.option("--normalize", is_flag=True,
              help="Renormalize input rows instead of requiring unit norm.")
def balance_cmd(input_path: str, output_path: str, method: str, seed: int | None,
                smote_k: int, normalize: bool) -> None:
    """Top every class up to the largest one with synthetic embeddings."""
    ds = _load(input_path, "train")
    if normalize:
        ds = _data.normalize_all(ds)
    else:
        _check_unit_rows(ds, input_path)
    if method != "none" and seed is None:
        raise click.UsageError(f"--seed is required for method {method!r}")
    t0 = time.time()
    try:
        balanced = _run_balance(ds, method, None if seed is None else RngHandle(seed),
                                    smote_k=smote_k)
    except Exception as exc:
        raise _fail(f"balancing failed: {exc}") from exc
    out = _data.EmbeddingDataset(balanced.matrix, balanced.labels, balanced.num_classes,
                                 class_names=ds.class_names, split="train")
    _data.write_embeddings(out, output_path)

    synth_rows = np.flatnonzero(balanced.synthetic)
    provenance = {
        "method": balanced.method,
        "synthetic_indices": synth_rows.tolist(),
    }
    out_path = Path(output_path)
    prov_path = out_path.with_suffix(out_path.suffix + ".provenance.json")
    prov_path.write_text(json.dumps(provenance) + "\n")

    synth_counts = {int(k): int(v) for k, v in
                    zip(*np.unique(balanced.labels[synth_rows], return_counts=True))}
    _write_manifest(out_path.with_suffix(out_path.suffix + ".manifest.json"), {
        "command": "balance",
        "method": method,
        "seed": seed,
        "smote_k": smote_k if method == "smote" else None,
        "input": input_path,
        "output": output_path,
        "real_counts": _data.class_counts(ds),
        "synthetic_counts": synth_counts,
        "wall_time_seconds": time.time() - t0,
    })
    click.echo(f"wrote {output_path}: {out.n} rows "
               f"({int(balanced.synthetic.sum())} synthetic, method={method})")


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Balanced training embedding file.")
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--l2", "l2_strength", default=None, type=float,
              help="Weight penalty; defaults to 1/N.")
@click.option("--max-iter", default=1000, show_default=True, type=click.IntRange(min=1))
@click.option("--tol", default=1e-6, show_default=True, type=float)
@click.option("--history", default=10, show_default=True, type=click.IntRange(min=1))
def train(input_path: str, output_path: str, l2_strength: float | None,
          max_iter: int, tol: float, history: int) -> None:
    """Fit the multinomial logistic-regression head and store it."""
    ds = _load(input_path, "train")
    _check_unit_rows(ds, input_path)
    cfg = _classifier.TrainConfig(l2_strength=l2_strength, max_iterations=max_iter,
                                  gradient_tolerance=tol, history_size=history)
    t0 = time.time()
    try:
        model = _classifier.train_logreg(ds, cfg)
    except _classifier.TrainingError as exc:
        raise _fail(str(exc)) from exc
    model.save(output_path)
    out_path = Path(output_path)
    _write_manifest(out_path.with_suffix(out_path.suffix + ".manifest.json"), {
        "command": "train",
        "input": input_path,
        "output": output_path,
        "config": asdict(cfg),
        "wall_time_seconds": time.time() - t0,
    })
    click.echo(f"wrote {output_path}: {model.num_classes} x {model.dim} linear head")


@main.command(name="eval")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--test", "test_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--group-by", "group_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Embedding file whose class counts define head/medium/tail.")
@click.option("--group-thresholds", default="100,20", show_default=True,
              help="head-over,tail-under training-count thresholds.")
def eval_cmd(model_path: str, test_path: str, report_path: str,
             group_path: str | None, group_thresholds: str) -> None:
    """Score a stored model on a test file and emit a JSON report."""
    try:
        model = _classifier.LinearClassifier.load(model_path)
    except _data.FormatError as exc:
        raise click.UsageError(f"{model_path}: {exc}") from exc
    test = _load(test_path, "test")
    _check_unit_rows(test, test_path)
    if test.dim != model.dim:
        raise _fail(f"model dimension {model.dim} != test dimension {test.dim}")
    try:
        head_over, tail_under = (int(v) for v in group_thresholds.split(","))
    except ValueError as exc:
        raise click.UsageError("--group-thresholds must be 'HEAD,TAIL' integers") from exc
    group_map = None
    if group_path is not None:
        group_map = _classifier.group_map_from_counts(
            _data.class_counts(_load(group_path, "train")), head_over, tail_under)
    t0 = time.time()
    try:
        report = _classifier.evaluate(model, test, group_map)
    except ValueError as exc:
        raise _fail(str(exc)) from exc
    payload = {
        "overall": report.overall,
        "head": report.groups.get("head"),
        "medium": report.groups.get("medium"),
        "tail": report.groups.get("tail"),
        "per_class": [None if np.isnan(v) else float(v) for v in report.per_class],
        "config": {
            "model": model_path,
            "test": test_path,
            "group_by": group_path,
            "group_thresholds": [head_over, tail_under],
        },
        "wall_time_seconds": time.time() - t0,
    }
    Path(report_path).write_text(json.dumps(payload, indent=2) + "\n")
    click.echo(f"overall {report.overall:.4f}  " +
               "  ".join(f"{k} {v:.4f}" for k, v in sorted(report.groups.items())))


@main.command()
@click.option("--train", "train_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Balanced source training file (subsampled per cell).")
@click.option("--test", "test_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
@click.option("--irs", default="10,50,100", show_default=True,
              help="Comma-separated imbalance ratios.")
@click.option("--seeds", default="0", show_default=True, help="Comma-separated seeds.")
@click.option("--methods", default=",".join(METHODS), show_default=True)
@click.option("--nmax", required=True, type=click.IntRange(min=1))
@click.option("--l2", "l2_strength", default=None, type=float)
@click.option("--max-iter", default=1000, show_default=True, type=click.IntRange(min=1))
@click.option("--tol", default=1e-6, show_default=True, type=float)
@click.option("--history", default=10, show_default=True, type=click.IntRange(min=1))
@click.option("--group-thresholds", default="100,20", show_default=True)
def grid(train_path: str, test_path: str, outdir: str, irs: str, seeds: str,
         methods: str, nmax: int, l2_strength: float | None, max_iter: int,
         tol: float, history: int, group_thresholds: str) -> None:
    """Run the full method x imbalance-ratio x seed matrix."""
    try:
        ir_list = [float(v) for v in irs.split(",") if v]
        seed_list = [int(v) for v in seeds.split(",") if v]
        head_over, tail_under = (int(v) for v in group_thresholds.split(","))
    except ValueError as exc:
        raise click.UsageError(f"bad list flag: {exc}") from exc
    method_list = [m.strip() for m in methods.split(",") if m.strip()]
    unknown = [m for m in method_list if m not in METHODS]
    if unknown:
        raise click.UsageError(f"unknown methods: {unknown}")

    source = _load(train_path, "train")
    _check_unit_rows(source, train_path)
    test = _load(test_path, "test")
    _check_unit_rows(test, test_path)

    out_root = Path(outdir)
    out_root.mkdir(parents=True, exist_ok=True)
    cfg = _classifier.TrainConfig(l2_strength=l2_strength, max_iterations=max_iter,
                                  gradient_tolerance=tol, history_size=history)

    rows = []
    cells = []
    t_grid = time.time()
    for seed in seed_list:
        for ir_index, ir in enumerate(ir_list):
            profile = _data.LongTailProfile(ir=ir, n_max=nmax, seed=seed)
            base = RngHandle(seed)
            try:
                subset = _data.make_longtail_subset(source, profile,
                                                    base.child(0).child(ir_index))
            except (ValueError, _data.InsufficientSamples) as exc:
                for method in method_list:
                    rows.append({"method": method, "ir": ir, "seed": seed,
                                 "overall": "", "head": "", "medium": "", "tail": ""})
                    cells.append({"method": method, "ir": ir, "seed": seed,
                                  "error": str(exc)})
                continue
            group_map = _classifier.group_map_from_counts(
                _data.class_counts(subset), head_over, tail_under)
            for method_index, method in enumerate(method_list):
                t0 = time.time()
                cell = {"method": method, "ir": ir, "seed": seed}
                try:
                    handle = base.child(1).child(ir_index).child(method_index)
                    balanced = _run_balance(subset, method,
                                                None if method == "none" else handle)
                    model = _classifier.train_logreg(balanced, cfg)
                    report = _classifier.evaluate(model, test, group_map)
                except Exception as exc:
                    rows.append({**cell, "overall": "", "head": "", "medium": "", "tail": ""})
                    cells.append({**cell, "error": str(exc)})
                    click.echo(f"cell {method}/ir={ir}/seed={seed} failed: {exc}", err=True)
                    continue
                rows.append({**cell,
                             "overall": f"{report.overall:.6f}",
                             "head": f"{report.groups.get('head', float('nan')):.6f}",
                             "medium": f"{report.groups.get('medium', float('nan')):.6f}",
                             "tail": f"{report.groups.get('tail', float('nan')):.6f}"})
                cells.append({**cell, "wall_time_seconds": time.time() - t0})

    csv_path = out_root / "grid.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "ir", "seed", "overall",
                                                "head", "medium", "tail"])
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(out_root / "grid.manifest.json", {
        "command": "grid",
        "train": train_path,
        "test": test_path,
        "methods": method_list,
        "irs": ir_list,
        "seeds": seed_list,
        "nmax": nmax,
        "train_config": asdict(cfg),
        "group_thresholds": [head_over, tail_under],
        "cells": cells,
        "wall_time_seconds": time.time() - t_grid,
    })
    click.echo(f"wrote {csv_path} ({len(rows)} rows)")


if __name__ == "__main__":  # pragma: no cover
    main()

"""Command-line front end: train, eval, sweep, ablate, audit, export-boundary."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from .config import RunConfig
from .errors import MarginSphereError, NuBoundError
from .metrics import accuracy, auc, export_boundary, nu_audit
from .modelio import load_model, save_model
from .sphere import NuParams, validate_nu, view_hypersphere
from .trainer import FittedModel, TrainConfig, fit


def _thread_count():
    value = os.environ.get("MARGINSPHERE_THREADS")
    if value:
        return max(1, int(value))
    return min(4, os.cpu_count() or 1)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _safe_auc(scores, labels):
    labels = np.asarray(labels)
    if len(set(labels.tolist())) < 2:
        return float("nan")
    return auc(scores, labels)


@click.group()
def main():
    """Margin-sphere anomaly detection experiments."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override train.seed.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def train(config_path, seed, out_dir):
    """Train one model and write model.json, epochs.csv and summary.json."""
    cfg = RunConfig.from_file(config_path)
    train_cfg = cfg.train if seed is None else dataclasses.replace(cfg.train, seed=seed)
    split = cfg.split(seed=train_cfg.seed)
    model, report = fit(split, train_cfg)

    os.makedirs(out_dir, exist_ok=True)
    save_model(os.path.join(out_dir, "model.json"),
               model, split.dataset.feature_stats)
    report.write_csv(os.path.join(out_dir, "epochs.csv"))
    split.write_manifest(os.path.join(out_dir, "dataset.json"))

    X_test, y_test = split.test
    summary = report.summary()
    summary["variant"] = train_cfg.variant
    summary["seed"] = train_cfg.seed
    if len(y_test):
        test_scores = model.scores(X_test)
        summary["test_auc"] = _safe_auc(test_scores, y_test)
        summary["test_acc"] = accuracy(test_scores, y_test)
    if train_cfg.variant == "imdad":
        view = view_hypersphere(model.net)
        summary["T"] = view.T
        summary["c"] = view.c.tolist()
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    click.echo(f"run written to {out_dir} (stop epoch {report.stop_epoch}, "
               f"{report.stop_reason})")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="Run config naming the dataset to score.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--split", "which", type=click.Choice(["test", "all"]), default="test")
def eval_cmd(model_path, config_path, out_dir, which):
    """Score a held-out set; writes metrics.json and scores.csv."""
    cfg = RunConfig.from_file(config_path)
    model, stats = load_model(model_path)
    if which == "test":
        split = cfg.split()
        X, y = split.test
        if len(y) == 0:
            raise click.ClickException("test split is empty")
    else:
        ds = cfg.load_dataset()
        X, y = ds.X, ds.y
    if X.shape[1] != model.net.in_dim:
        raise click.ClickException(
            f"dataset dim {X.shape[1]} != model input dim {model.net.in_dim}"
        )
    if which == "all" and stats is not None:
        X = stats.apply(X)
    scores = model.scores(X)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "scores.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "label", "score"])
        for i, (label, score) in enumerate(zip(y, scores)):
            writer.writerow([i, int(label), repr(float(score))])
    _write_json(os.path.join(out_dir, "metrics.json"), {
        "n": int(len(y)),
        "auc": _safe_auc(scores, y),
        "acc": accuracy(scores, y),
    })
    click.echo(f"metrics written to {out_dir}")


def _sweep_one(cfg, combo, fold_idx, split):
    nu, nu1, nu2 = combo
    params = NuParams(nu=nu, nu1=nu1, nu2=nu2,
                      weight_decay=cfg.train.nu_params.weight_decay)
    train_cfg = dataclasses.replace(cfg.train, nu_params=params)
    model, report = fit(split, train_cfg)
    X_test, y_test = split.test
    row = {
        "nu": nu, "nu1": nu1, "nu2": nu2, "fold": fold_idx,
        "auc": _safe_auc(model.scores(X_test), y_test),
        "stop_epoch": report.stop_epoch,
    }
    if train_cfg.variant == "imdad":
        X_train, y_train = split.train
        audit = nu_audit(model.net, X_train, y_train, params)
        row["ratio_normal"] = audit.ratio_normal
        row["ratio_abnormal"] = audit.ratio_abnormal
        row["bound_normal"] = audit.bound_normal
        row["bound_abnormal"] = audit.bound_abnormal
    return row


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def sweep(config_path, out_dir):
    """Grid search over (nu, nu1, nu2) with k-fold cross-validation."""
    cfg = RunConfig.from_file(config_path)
    combos, skipped = [], []
    for combo in itertools.product(cfg.sweep_nu, cfg.sweep_nu1, cfg.sweep_nu2):
        try:
            validate_nu(NuParams(*combo))
            combos.append(combo)
        except NuBoundError as exc:
            skipped.append({"combo": list(combo), "reason": str(exc)})
    if not combos:
        raise click.ClickException("every grid combination violates the nu bounds")
    splits = cfg.folds_of()

    jobs = [(combo, i, split) for combo in combos for i, split in enumerate(splits)]
    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        rows = list(pool.map(lambda j: _sweep_one(cfg, *j), jobs))

    means = {}
    for combo in combos:
        vals = [r["auc"] for r in rows
                if (r["nu"], r["nu1"], r["nu2"]) == combo and np.isfinite(r["auc"])]
        means[combo] = float(np.mean(vals)) if vals else float("nan")
    best = max(combos, key=lambda c: (means[c] if np.isfinite(means[c]) else -1.0))

    os.makedirs(out_dir, exist_ok=True)
    fields = sorted({k for r in rows for k in r})
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields + ["best"])
        writer.writeheader()
        for row in rows:
            row = dict(row)
            row["best"] = int((row["nu"], row["nu1"], row["nu2"]) == best)
            writer.writerow(row)
    _write_json(os.path.join(out_dir, "sweep.json"), {
        "best": {"nu": best[0], "nu1": best[1], "nu2": best[2],
                 "mean_auc": means[best]},
        "n_combos": len(combos),
        "n_folds": len(splits),
        "skipped": skipped,
    })
    for entry in skipped:
        click.echo(f"skipped {entry['combo']}: {entry['reason']}")
    click.echo(f"best combo nu={best[0]} nu1={best[1]} nu2={best[2]} "
               f"mean AUC {means[best]:.4f}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seeds", default="0,1,2,3,4", help="Comma-separated seeds.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def ablate(config_path, seeds, out_dir):
    """Train all four variants per seed and rank them by mean test AUC."""
    cfg = RunConfig.from_file(config_path)
    seed_list = [int(s) for s in seeds.split(",")]
    variants = ("deepsvdd", "dad", "mdad", "imdad")

    def one(job):
        variant, seed = job
        train_cfg = dataclasses.replace(cfg.train, variant=variant, seed=seed)
        split = cfg.split(seed=seed)
        model, report = fit(split, train_cfg)
        X_test, y_test = split.test
        return {"variant": variant, "seed": seed,
                "auc": _safe_auc(model.scores(X_test), y_test),
                "stop_epoch": report.stop_epoch}

    jobs = [(v, s) for v in variants for s in seed_list]
    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        rows = list(pool.map(one, jobs))

    stats = {}
    for variant in variants:
        aucs = [r["auc"] for r in rows if r["variant"] == variant]
        stats[variant] = {"mean_auc": float(np.mean(aucs)),
                          "std_auc": float(np.std(aucs)),
                          "n_seeds": len(aucs)}
    ranked = sorted(variants, key=lambda v: -stats[v]["mean_auc"])

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "ablation.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed", "auc", "stop_epoch"])
        for row in rows:
            writer.writerow([row["variant"], row["seed"], repr(row["auc"]),
                             row["stop_epoch"]])
    _write_json(os.path.join(out_dir, "ablation.json"), {
        "stats": stats,
        "rank": ranked,
        "seeds": seed_list,
    })
    for i, variant in enumerate(ranked, start=1):
        s = stats[variant]
        click.echo(f"{i}. {variant}: {s['mean_auc']:.4f} +- {s['std_auc']:.4f}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--grid/--no-grid", default=False,
              help="Audit over the sweep grid instead of the configured nu values.")
def audit(model_path, config_path, out_path, grid):
    """Check the training data against the margin-fraction bounds."""
    cfg = RunConfig.from_file(config_path)
    model, _ = load_model(model_path)
    if model.variant != "imdad":
        raise click.ClickException("audit applies to imdad models only")
    split = cfg.split()
    X_train, y_train = split.train

    if grid:
        rows = []
        for combo in itertools.product(cfg.sweep_nu, cfg.sweep_nu1, cfg.sweep_nu2):
            params = NuParams(*combo)
            try:
                validate_nu(params)
            except NuBoundError:
                continue
            report = nu_audit(model.net, X_train, y_train, params)
            rows.append({"nu": combo[0], "nu1": combo[1], "nu2": combo[2],
                         **dataclasses.asdict(report)})
        _write_json(out_path, {"grid": rows})
    else:
        report = nu_audit(model.net, X_train, y_train, cfg.train.nu_params)
        _write_json(out_path, dataclasses.asdict(report))
    click.echo(f"audit written to {out_path}")


@main.command("export-boundary")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--resolution", type=int, default=100)
@click.option("--out", "out_path", required=True, type=click.Path())
def export_boundary_cmd(model_path, config_path, resolution, out_path):
    """Export a dense score field over the data bounding box as CSV."""
    cfg = RunConfig.from_file(config_path)
    model, stats = load_model(model_path)
    ds = cfg.load_dataset()
    if stats is not None:
        ds = dataclasses.replace(ds, X=stats.apply(ds.X))
    try:
        grid = export_boundary(model.net, ds, resolution=resolution)
    except MarginSphereError as exc:
        raise click.ClickException(str(exc))
    grid.write_csv(out_path)
    click.echo(f"{resolution}x{resolution} boundary grid written to {out_path}")


if __name__ == "__main__":
    main()

"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import csv
import functools
import json
import sys
from pathlib import Path

import click

from . import figures
from .checkpoint import restore_model, save_checkpoint, training_metadata
from .config import load_config
from .crossval import run_cv
from .data import load_dataset, make_folds, write_dataset
from .diagnostics import export_diagnostics
from .errors import (ConfigError, DegenerateAttention, DegenerateBatch,
                     LengthMismatch, MissingFile, NonFiniteLoss, ShapeMismatch)
from .gradcheck import SCOPES, grad_check
from .metrics import compute_metrics
from .synthetic import generate_synthetic, synth_config_from_dict
from .training import history_rows, predict, train

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _with_exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (MissingFile, ShapeMismatch, LengthMismatch, ValueError) as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except (NonFiniteLoss, DegenerateAttention, DegenerateBatch) as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
    return wrapper


def _load_synth_section(path: str):
    import sys as _sys
    if _sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    cfg_path = Path(path)
    if not cfg_path.exists():
        raise ConfigError(f"config file not found: {cfg_path}")
    with open(cfg_path, "rb") as fh:
        data = tomllib.load(fh)
    if "synth" not in data:
        raise ConfigError(f"{cfg_path} has no [synth] section")
    return synth_config_from_dict(data["synth"])


def _echo_stats(stats) -> None:
    click.echo(f"epoch {stats.epoch:3d} [{stats.stage:6s}] "
               f"total {stats.l_total:.4f} cls {stats.l_cls:.4f} "
               f"con {stats.l_con:.4f} val {stats.l_val:.4f} "
               f"| val acc {stats.val_acc:.3f} macro-F1 {stats.val_macro_f1:.3f}")


@click.group()
def main():
    """Polarity-congruity multimodal sarcasm detection toolkit."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@_with_exit_codes
def synth(config_path, out_dir):
    """Generate a seeded synthetic dataset from the [synth] config section."""
    cfg = _load_synth_section(config_path)
    dataset = generate_synthetic(cfg)
    manifest = write_dataset(dataset, out_dir)
    click.echo(f"wrote {len(dataset)} records to {manifest}")


@main.command(name="train")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--fold", type=int, default=None,
              help="held-out fold index; omit to train on the full dataset")
@click.option("--out", "out_dir", default="runs/train", type=click.Path())
@_with_exit_codes
def train_cmd(config_path, data_path, fold, out_dir):
    """Train one model, writing checkpoint, history CSV and loss figure."""
    config = load_config(config_path)
    dataset = load_dataset(data_path)
    train_ids = val_ids = None
    if fold is not None:
        folds = make_folds(dataset, config.training.k_folds, config.training.seed)
        if not 0 <= fold < len(folds):
            raise ConfigError(f"fold {fold} out of range for k={len(folds)}")
        val_ids = folds[fold]
        train_ids = [rid for j, f in enumerate(folds) if j != fold for rid in f]

    result = train(dataset, config, train_ids=train_ids, val_ids=val_ids,
                   log=_echo_stats)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "history.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(history_rows(result.history))
    save_checkpoint(out / "checkpoint.pcmc", result.model,
                    training_metadata(result.seed, result.stage, result.epoch,
                                      result.best_metric, config),
                    result.optimizer)
    figures.save_loss_curves(result.history, out / "loss_curves.png")
    click.echo(f"best val macro-F1 {result.best_metric:.4f} "
               f"at epoch {result.best_epoch}; artifacts in {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", default="runs/cv", type=click.Path())
@_with_exit_codes
def cv(config_path, data_path, k, seed, out_dir):
    """K-fold cross-validation with per-fold artifacts and a summary report."""
    config = load_config(config_path)
    dataset = load_dataset(data_path)
    report = run_cv(dataset, config, k, seed, out_dir=out_dir)
    for i, m in enumerate(report.fold_metrics):
        click.echo(f"fold {i}: acc {m.accuracy:.4f} macro-F1 {m.macro_f1:.4f}")
    click.echo(f"mean macro-F1 {report.mean['macro_f1']:.4f} "
               f"± {report.std['macro_f1']:.4f}; report in {out_dir}")


@main.command(name="eval")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--json-out", "json_path", default=None, type=click.Path())
@_with_exit_codes
def eval_cmd(ckpt_path, data_path, json_path):
    """Evaluate a checkpoint on a dataset."""
    model, metadata, _ = restore_model(ckpt_path)
    dataset = load_dataset(data_path)
    preds, labels = predict(model, dataset.records, dataset.dims,
                            model.cfg.j_history)
    metrics = compute_metrics(preds, labels)
    click.echo(f"accuracy        {metrics.accuracy:.4f}")
    click.echo(f"macro precision {metrics.macro_precision:.4f}")
    click.echo(f"macro recall    {metrics.macro_recall:.4f}")
    click.echo(f"macro F1        {metrics.macro_f1:.4f}")
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(metrics.to_dict(), fh, indent=1)


@main.command()
@click.option("--scope", type=click.Choice(SCOPES), default="full", show_default=True)
@click.option("--eps", type=float, default=1e-5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--samples", type=int, default=200, show_default=True,
              help="parameter coordinates checked per module group")
@_with_exit_codes
def gradcheck(scope, eps, seed, samples):
    """Check autograd against central finite differences at float64."""
    report = grad_check(scope=scope, eps=eps, seed=seed, samples_per_group=samples)
    for group, (err, n) in sorted(report.per_group.items()):
        click.echo(f"{group:22s} max rel err {err:.3e}  ({n} coords)")
    click.echo(f"overall max rel err {report.max_rel_err:.3e} "
               f"over {report.n_checked} coordinates")
    if not report.passed():
        click.echo("gradient check FAILED (threshold 1e-4)", err=True)
        sys.exit(EXIT_NUMERIC)
    click.echo("gradient check passed")


@main.command()
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--limit", type=int, default=None, help="export only the first N records")
@click.option("--no-plots", is_flag=True, help="skip the rendered figures")
@_with_exit_codes
def export(ckpt_path, data_path, out_dir, limit, no_plots):
    """Export attention maps, routing weights and embeddings for a dataset."""
    model, _, _ = restore_model(ckpt_path)
    dataset = load_dataset(data_path)
    paths = export_diagnostics(model, dataset, out_dir, limit=limit,
                               render=not no_plots)
    for key in ("attention", "routing", "embeddings"):
        click.echo(f"wrote {paths[key]}")
    for fig in paths["figures"]:
        click.echo(f"rendered {fig}")


if __name__ == "__main__":
    main()

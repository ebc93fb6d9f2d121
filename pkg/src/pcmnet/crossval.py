"""K-fold cross-validation harness with delimited and rendered reports."""

import copy
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import figures
from .checkpoint import save_checkpoint, training_metadata
from .config import Config
from .data import Dataset, make_folds
from .metrics import Metrics
from .training import evaluate, history_rows, train

METRIC_KEYS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


@dataclass
class CvReport:
    k: int
    seed: int
    fold_metrics: list[Metrics]
    fold_seeds: list[int]
    fold_ids: list[list[str]]
    config: dict
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.mean:
            for key in METRIC_KEYS:
                values = [getattr(m, key) for m in self.fold_metrics]
                self.mean[key] = float(np.mean(values))
                self.std[key] = float(np.std(values))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "fold_seeds": self.fold_seeds,
            "fold_ids": self.fold_ids,
            "per_fold": [m.to_dict() for m in self.fold_metrics],
            "mean": self.mean,
            "std": self.std,
            "config": self.config,
        }


def run_cv(dataset: Dataset, config: Config, k: int, seed: int,
           out_dir: str | Path | None = None, log=None) -> CvReport:
    """Train k models, each validated on its held-out fold, and aggregate.

    Fold i trains with seed config.training.seed + i so the folds stay
    independent but reproducible. When out_dir is given, writes per-fold
    history CSVs, checkpoints, report.json, and summary figures.
    """
    folds = make_folds(dataset, k, seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    fold_metrics, fold_seeds = [], []
    for i, held_out in enumerate(folds):
        cfg = copy.deepcopy(config)
        cfg.training.seed = config.training.seed + i
        fold_seeds.append(cfg.training.seed)
        train_ids = [rid for j, fold in enumerate(folds) if j != i for rid in fold]
        result = train(dataset, cfg, train_ids=train_ids, val_ids=held_out, log=log)
        val_recs = [r for r in dataset.records if r.id in set(held_out)]
        metrics = evaluate(result.model, val_recs, dataset.dims, cfg.model.j_history)
        fold_metrics.append(metrics)

        if out_dir is not None:
            with open(out_dir / f"history_fold{i}.csv", "w", newline="") as fh:
                csv.writer(fh).writerows(history_rows(result.history))
            save_checkpoint(out_dir / f"checkpoint_fold{i}.pcmc", result.model,
                            training_metadata(cfg.training.seed, result.stage,
                                              result.epoch, result.best_metric, cfg),
                            result.optimizer)
            figures.save_loss_curves(result.history, out_dir / f"loss_fold{i}.png")

    report = CvReport(k=k, seed=seed, fold_metrics=fold_metrics,
                      fold_seeds=fold_seeds, fold_ids=folds,
                      config=config.to_dict())
    if out_dir is not None:
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=1)
        with open(out_dir / "report.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", *METRIC_KEYS])
            for i, m in enumerate(fold_metrics):
                writer.writerow([i] + [getattr(m, key) for key in METRIC_KEYS])
            writer.writerow(["mean"] + [report.mean[key] for key in METRIC_KEYS])
            writer.writerow(["std"] + [report.std[key] for key in METRIC_KEYS])
        figures.save_cv_summary(fold_metrics, out_dir / "cv_summary.png")
    return report

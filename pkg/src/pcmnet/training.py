"""Training loop: AdamW, stage switch at e_warm, early stopping on macro-F1."""

import copy
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import Config
from .data import Dataset, UtteranceRecord
from .errors import ConfigError, NonFiniteLoss
from .losses import (REFINE, WARMUP, LossWeights, classification_loss,
                     contrastive_loss, has_contrastive_pairs, total_loss,
                     valence_loss)
from .metrics import Metrics, compute_metrics
from .network import Batch, ModelOutput, PCMNet, collate

HISTORY_COLUMNS = ("epoch", "l_cls", "l_con", "l_val", "l_total",
                   "val_acc", "val_macro_f1", "stage")


@dataclass
class EpochStats:
    epoch: int
    l_cls: float
    l_con: float
    l_val: float
    l_total: float
    val_acc: float
    val_macro_f1: float
    stage: str

    def row(self) -> list:
        return [self.epoch, self.l_cls, self.l_con, self.l_val, self.l_total,
                self.val_acc, self.val_macro_f1, self.stage]


@dataclass
class TrainResult:
    model: PCMNet
    optimizer: torch.optim.AdamW
    history: list[EpochStats]
    best_epoch: int
    best_metric: float
    stage: str
    epoch: int
    seed: int


def stage_for_epoch(epoch: int, e_warm: int) -> str:
    return WARMUP if epoch < e_warm else REFINE


def loss_weights_for_stage(stage: str, cfg: Config) -> LossWeights:
    t = cfg.training
    if stage == WARMUP:
        return LossWeights(t.lambda_cls_warm, t.lambda_con_warm, t.lambda_val,
                           t.tau, t.e_warm)
    return LossWeights(t.lambda_cls, t.lambda_con, 0.0, t.tau, t.e_warm)


def compute_batch_losses(model: PCMNet, batch: Batch, stage: str, cfg: Config,
                         train_mode: bool = True) -> tuple[torch.Tensor, dict, ModelOutput]:
    """Forward plus all loss components for one batch."""
    out = model(batch, train_mode=train_mode)
    l_cls = classification_loss(out.prediction.logits, batch.labels)

    if cfg.ablation.no_contrastive or not has_contrastive_pairs(batch.labels):
        l_con = torch.zeros((), dtype=l_cls.dtype)
    else:
        l_con = contrastive_loss(out.z_incon, batch.labels, cfg.training.tau)

    l_val = None
    if stage == WARMUP:
        if cfg.ablation.no_valence_loss:
            l_val = torch.zeros((), dtype=l_cls.dtype)
        else:
            l_val = valence_loss(out.probe_outputs, batch.valence,
                                 batch.valence_present)

    weights = loss_weights_for_stage(stage, cfg)
    total = total_loss(stage, l_cls, l_con, l_val, weights)
    parts = {
        "l_cls": float(l_cls.detach()),
        "l_con": float(l_con.detach()),
        "l_val": 0.0 if l_val is None else float(l_val.detach()),
        "l_total": float(total.detach()),
    }
    return total, parts, out


def predict(model: PCMNet, records: list[UtteranceRecord], dims, j_history: int,
            batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Hard predictions and labels for a record list, eval mode."""
    model.eval()
    preds, labels = [], []
    with torch.no_grad():
        for start in range(0, len(records), batch_size):
            batch = collate(records[start:start + batch_size], dims, j_history)
            out = model(batch)
            preds.append(out.prediction.logits.argmax(dim=-1).numpy())
            labels.append(batch.labels.numpy())
    return np.concatenate(preds), np.concatenate(labels)


def evaluate(model: PCMNet, records: list[UtteranceRecord], dims,
             j_history: int) -> Metrics:
    preds, labels = predict(model, records, dims, j_history)
    return compute_metrics(preds, labels)


def train(dataset: Dataset, config: Config, train_ids: list[str] | None = None,
          val_ids: list[str] | None = None, log=None) -> TrainResult:
    """Train on train_ids, validate on val_ids (defaults: all / train set)."""
    config.validate()
    t = config.training
    by_id = {r.id: r for r in dataset.records}
    train_recs = [by_id[i] for i in train_ids] if train_ids is not None \
        else list(dataset.records)
    val_recs = [by_id[i] for i in val_ids] if val_ids is not None else train_recs
    if not train_recs:
        raise ConfigError("empty training split")

    torch.manual_seed(t.seed)
    model = PCMNet(config.model, dataset.dims, config.ablation)
    optimizer = torch.optim.AdamW(model.parameters(), lr=t.lr,
                                  weight_decay=t.weight_decay)
    rng = np.random.default_rng(t.seed)
    j = config.model.j_history

    history: list[EpochStats] = []
    best_metric, best_epoch, since_best = -1.0, -1, 0
    best_snapshot = None

    for epoch in range(t.max_epochs):
        stage = stage_for_epoch(epoch, t.e_warm)
        model.train()
        order = rng.permutation(len(train_recs))
        sums = {"l_cls": 0.0, "l_con": 0.0, "l_val": 0.0, "l_total": 0.0}
        n_batches = 0
        for start in range(0, len(order), t.batch_size):
            chunk = [train_recs[k] for k in order[start:start + t.batch_size]]
            if len(chunk) < 2:
                continue    # a singleton batch carries no contrastive signal
            batch = collate(chunk, dataset.dims, j)
            total, parts, _ = compute_batch_losses(model, batch, stage, config)
            if not torch.isfinite(total):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch} batch {n_batches}: {parts}")
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            for k in sums:
                sums[k] += parts[k]
            n_batches += 1

        val = evaluate(model, val_recs, dataset.dims, j)
        denom = max(n_batches, 1)
        stats = EpochStats(
            epoch=epoch, stage=stage,
            l_cls=sums["l_cls"] / denom, l_con=sums["l_con"] / denom,
            l_val=sums["l_val"] / denom, l_total=sums["l_total"] / denom,
            val_acc=val.accuracy, val_macro_f1=val.macro_f1)
        history.append(stats)
        if log is not None:
            log(stats)

        if val.macro_f1 > best_metric:
            best_metric, best_epoch, since_best = val.macro_f1, epoch, 0
            best_snapshot = copy.deepcopy(model.state_dict())
        else:
            since_best += 1
            if t.early_stopping and since_best >= t.patience:
                break

    if best_snapshot is not None:
        model.load_state_dict(best_snapshot)
    return TrainResult(model=model, optimizer=optimizer, history=history,
                       best_epoch=best_epoch, best_metric=best_metric,
                       stage=stage_for_epoch(len(history) - 1, t.e_warm),
                       epoch=len(history) - 1, seed=t.seed)


def history_rows(history: list[EpochStats]) -> list[list]:
    return [list(HISTORY_COLUMNS)] + [s.row() for s in history]

"""Loss terms and the two-stage asymmetric schedule.

Warm-up anchors the polarity space with a valence MSE next to the
classification and contrastive terms; refinement drops the valence term
structurally, so probe parameters receive exactly zero gradient afterwards.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor

from .errors import DegenerateBatch

WARMUP = "warmup"
REFINE = "refine"


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float
    lambda_con: float
    lambda_val: float
    tau: float
    e_warm: int


def classification_loss(logits: Tensor, labels: Tensor) -> Tensor:
    return F.cross_entropy(logits, labels)


def has_contrastive_pairs(labels: Tensor) -> bool:
    """True when at least one anchor has a same-class partner."""
    return bool((labels[:, None] == labels[None, :]).sum() > len(labels))


def contrastive_loss(z: Tensor, labels: Tensor, tau: float) -> Tensor:
    """Supervised contrastive loss over unit-norm rows.

    For each anchor i the positives are the other same-class rows and the
    denominator runs over every row except the anchor itself. Anchors with
    no positive are skipped; the mean runs over the remaining anchors.
    """
    b = z.shape[0]
    if b < 2:
        raise DegenerateBatch(f"need at least 2 samples, got {b}")
    sim = z @ z.T / tau
    eye = torch.eye(b, dtype=torch.bool)
    positives = (labels[:, None] == labels[None, :]) & ~eye
    has_pos = positives.any(dim=1)
    if not has_pos.any():
        raise DegenerateBatch("no anchor has a same-class partner")

    # shift by the detached row max: exact in value and gradient, overflow-safe
    shift = sim.masked_fill(eye, float("-inf")).max(dim=1, keepdim=True).values.detach()
    log_denom = shift.squeeze(1) + torch.log(
        (torch.exp(sim - shift) * ~eye).sum(dim=1))
    log_prob = sim - log_denom[:, None]
    per_anchor = (log_prob * positives).sum(dim=1) / positives.sum(dim=1).clamp(min=1)
    return -per_anchor[has_pos].mean()


def valence_loss(outputs: Tensor, targets: Tensor, present: Tensor) -> Tensor:
    """MSE over the (sample, modality) pairs that carry a target; 0 if none do."""
    if not present.any():
        return torch.zeros((), dtype=outputs.dtype)
    diff = (outputs - targets)[present]
    return (diff * diff).mean()


def total_loss(stage: str, l_cls: Tensor, l_con: Tensor,
               l_val: Tensor | None, weights: LossWeights) -> Tensor:
    """Combine per Eq-style schedule; the valence term exists only in warm-up."""
    total = weights.lambda_cls * l_cls + weights.lambda_con * l_con
    if stage == WARMUP:
        if l_val is None:
            raise ValueError("warm-up stage requires a valence loss value")
        total = total + weights.lambda_val * l_val
    elif stage != REFINE:
        raise ValueError(f"unknown stage {stage!r}")
    return total

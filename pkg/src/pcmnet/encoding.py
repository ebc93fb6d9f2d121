"""Projection of raw per-modality features into the shared semantic space.

Each modality runs through Dropout(ReLU(LayerNorm(X W + b))) row-wise; the
visual tensor is first flattened frame-major over its subject axis. Rows
marked invalid are forced to zero after the transform so that padding can
never leak downstream, even through the bias.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
from torch import Tensor

from . import ops
from .errors import ShapeMismatch


@dataclass
class ModalSequence:
    """A batch of padded feature sequences with a validity mask."""

    feats: Tensor    # [B, L, d_enc]
    mask: Tensor     # bool [B, L], true = valid
    modality: str    # "T", "A" or "V"


def flatten_visual(visual: Tensor, present: Tensor) -> tuple[Tensor, Tensor]:
    """Flatten [B, L_V, K, d] to [B, L_V*K, d], frame-major then subject.

    Row i*K+j of the output is frame i, subject j; its mask entry is
    present[i, j] and absent rows are zeroed.
    """
    if visual.dim() != 4:
        raise ShapeMismatch(f"visual must be [B, L_V, K, d], got {tuple(visual.shape)}")
    b, l_v, k, d = visual.shape
    if present.shape != (b, l_v, k):
        raise ShapeMismatch(
            f"present shape {tuple(present.shape)} does not match visual {tuple(visual.shape)}")
    flat = visual.reshape(b, l_v * k, d)
    mask = present.reshape(b, l_v * k)
    return ops.zero_masked_rows(flat, mask), mask


class ModalEncoder(nn.Module):
    """Eq-style shared encoder for one modality: affine, LayerNorm, ReLU, dropout."""

    def __init__(self, d_in: int, d_enc: int, dropout: float = 0.1,
                 ln_eps: float = 1e-5):
        super().__init__()
        self.proj = nn.Linear(d_in, d_enc)
        self.norm = nn.LayerNorm(d_enc, eps=ln_eps)
        self.dropout = nn.Dropout(dropout)
        self.d_in = d_in

    def forward(self, seq: Tensor, mask: Tensor, modality: str,
                train_mode: bool = False) -> ModalSequence:
        if seq.shape[-1] != self.d_in:
            raise ShapeMismatch(
                f"expected {self.d_in} input features, got {seq.shape[-1]}")
        h = ops.relu(self.norm(self.proj(seq)), mask)
        if train_mode:
            h = self.dropout(h)
        return ModalSequence(ops.zero_masked_rows(h, mask), mask, modality)


def pool_anchor(seq: ModalSequence) -> Tensor:
    """Mean over valid rows -> [B, d_enc]; all-invalid sequences give zero."""
    return ops.masked_mean(seq.feats, seq.mask)

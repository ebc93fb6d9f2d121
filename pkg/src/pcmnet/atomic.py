"""Polarity-modulated multi-head cross attention, text querying audio/visual.

Pre-softmax scores are scaled dot products plus alpha_mic times the
contradiction matrix, broadcast identically to every head, so attention is
steered toward conflicting cross-modal pairs instead of similar ones.
"""

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
from torch import Tensor

from . import ops
from .encoding import ModalSequence
from .errors import DegenerateAttention, ShapeMismatch


@dataclass
class AtomicOutput:
    e_ta: Tensor               # [B, L_T, d_enc]
    e_tv: Tensor
    e_atomic: Tensor           # [B, 2*d_enc], audio half first
    attention: dict = field(default_factory=dict)    # branch -> [B, h, L_T, L_k]
    base_scores: dict = field(default_factory=dict)  # pre-modulation scores
    mod_scores: dict = field(default_factory=dict)


class PolarityModulatedAttention(nn.Module):
    """One cross-modal branch with a residual back to the query sequence."""

    def __init__(self, d_enc: int, n_heads: int):
        super().__init__()
        if d_enc % n_heads != 0:
            raise ShapeMismatch(f"d_enc={d_enc} not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.d_head = d_enc // n_heads
        self.q_proj = nn.Linear(d_enc, d_enc)
        self.k_proj = nn.Linear(d_enc, d_enc)
        self.v_proj = nn.Linear(d_enc, d_enc)
        self.out_proj = nn.Linear(d_enc, d_enc)

    def _heads(self, x: Tensor) -> Tensor:
        b, l, _ = x.shape
        return x.view(b, l, self.n_heads, self.d_head).transpose(1, 2)

    def scores(self, h_q: Tensor, h_k: Tensor, contradiction: Tensor,
               alpha_mic: Tensor | float) -> tuple[Tensor, Tensor]:
        """Base and modulated scores, both [B, n_heads, L_q, L_k]."""
        if contradiction.shape[-2:] != (h_q.shape[-2], h_k.shape[-2]):
            raise ShapeMismatch("contradiction matrix does not match sequence lengths")
        q = self._heads(self.q_proj(h_q))
        k = self._heads(self.k_proj(h_k))
        base = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        modulated = base + alpha_mic * contradiction.unsqueeze(1)
        return base, modulated

    def forward(self, seq_q: ModalSequence, seq_k: ModalSequence,
                contradiction: Tensor, alpha_mic: Tensor | float) -> tuple[Tensor, dict]:
        degenerate = seq_q.mask.any(dim=1) & ~seq_k.mask.any(dim=1)
        if degenerate.any():
            idx = int(degenerate.nonzero()[0])
            raise DegenerateAttention(
                f"sample {idx}: valid {seq_q.modality} queries face zero valid "
                f"{seq_k.modality} keys")

        base, mod = self.scores(seq_q.feats, seq_k.feats, contradiction, alpha_mic)
        attn = ops.masked_softmax(mod, seq_k.mask[:, None, None, :])  # [B, h, L_q, L_k]

        v = self._heads(self.v_proj(seq_k.feats))
        ctx = attn @ v                                   # [B, h, L_q, d_head]
        b, _, l_q, _ = ctx.shape
        ctx = ctx.transpose(1, 2).reshape(b, l_q, -1)    # concat heads
        out = self.out_proj(ctx) + seq_q.feats           # residual keeps query semantics
        out = ops.zero_masked_rows(out, seq_q.mask)
        return out, {"attention": attn, "base": base, "modulated": mod}


def atomic_vector(e_ta: Tensor, e_tv: Tensor, text_mask: Tensor) -> Tensor:
    """Concat of masked mean pools over text positions, audio branch first."""
    if e_ta.shape != e_tv.shape:
        raise ShapeMismatch("branch outputs differ in shape")
    return torch.cat([ops.masked_mean(e_ta, text_mask),
                      ops.masked_mean(e_tv, text_mask)], dim=-1)


class AtomicCongruity(nn.Module):
    """Both cross-modal branches plus the shared learnable amplifier."""

    def __init__(self, d_enc: int, n_heads: int, alpha_mic_init: float = 0.5,
                 modulated: bool = True):
        super().__init__()
        self.audio_branch = PolarityModulatedAttention(d_enc, n_heads)
        self.visual_branch = PolarityModulatedAttention(d_enc, n_heads)
        self.alpha_mic = nn.Parameter(torch.tensor(float(alpha_mic_init)))
        self.modulated = modulated

    def forward(self, seq_t: ModalSequence, seq_a: ModalSequence,
                seq_v: ModalSequence, c_ta: Tensor, c_tv: Tensor) -> AtomicOutput:
        alpha = self.alpha_mic if self.modulated else 0.0
        e_ta, aux_a = self.audio_branch(seq_t, seq_a, c_ta, alpha)
        e_tv, aux_v = self.visual_branch(seq_t, seq_v, c_tv, alpha)
        return AtomicOutput(
            e_ta=e_ta, e_tv=e_tv,
            e_atomic=atomic_vector(e_ta, e_tv, seq_t.mask),
            attention={"audio": aux_a["attention"], "visual": aux_v["attention"]},
            base_scores={"audio": aux_a["base"], "visual": aux_v["base"]},
            mod_scores={"audio": aux_a["modulated"], "visual": aux_v["modulated"]},
        )

"""Adaptive dual-granularity fusion and the binary classifier.

The micro-conflict vector and the contextual vector are projected into a
common scale (affine, GELU, LayerNorm, learnable scalar), scored by a small
tanh attention, and combined by the resulting 2-way softmax weights. Only
these two granularities ever reach the classifier.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor


@dataclass
class Prediction:
    logits: Tensor          # [B, 2]
    prob_sarcastic: Tensor  # [B]
    a_fuse: Tensor          # [B, n_branches], rows on the simplex
    fused: Tensor           # [B, d_enc]


class BranchProjection(nn.Module):
    """Scale-bridging projection: gamma * LayerNorm(GELU(W x + b))."""

    def __init__(self, d_in: int, d_enc: int, ln_eps: float = 1e-5):
        super().__init__()
        self.proj = nn.Linear(d_in, d_enc)
        self.norm = nn.LayerNorm(d_enc, eps=ln_eps)
        self.gamma = nn.Parameter(torch.tensor(1.0))

    def forward(self, x: Tensor) -> Tensor:
        return self.gamma * self.norm(F.gelu(self.proj(x)))


class FusionHead(nn.Module):
    """Scores the projected branches and classifies their weighted sum.

    use_atomic/use_contextual drop a branch entirely (the ablations); with a
    single branch the routing softmax degenerates to weight 1 on it.
    branch_comp_dim, when nonzero, adds a third row fed by the pair-graph
    features (the direct-fusion ablation).
    """

    def __init__(self, d_enc: int, d_score: int, ln_eps: float = 1e-5,
                 use_atomic: bool = True, use_contextual: bool = True,
                 branch_comp_dim: int = 0):
        super().__init__()
        if not (use_atomic or use_contextual):
            raise ValueError("at least one fusion branch must stay enabled")
        self.use_atomic = use_atomic
        self.use_contextual = use_contextual
        self.proj_atomic = BranchProjection(2 * d_enc, d_enc, ln_eps) if use_atomic else None
        self.proj_context = BranchProjection(d_enc, d_enc, ln_eps) if use_contextual else None
        self.proj_comp = BranchProjection(branch_comp_dim, d_enc, ln_eps) \
            if branch_comp_dim else None
        self.score_proj = nn.Linear(d_enc, d_score, bias=False)   # W_F
        self.score_vec = nn.Parameter(torch.zeros(d_score))       # w_fuse
        self.classifier = nn.Linear(d_enc, 2)

    def fuse(self, e_atomic: Tensor | None, e_inter: Tensor | None,
             branch_feats: Tensor | None = None) -> tuple[Tensor, Tensor]:
        rows = []
        if self.proj_atomic is not None:
            rows.append(self.proj_atomic(e_atomic))
        if self.proj_context is not None:
            rows.append(self.proj_context(e_inter))
        if self.proj_comp is not None:
            rows.append(self.proj_comp(branch_feats))
        m_fuse = torch.stack(rows, dim=1)                          # [B, R, d_enc]
        scores = torch.tanh(self.score_proj(m_fuse)) @ self.score_vec  # [B, R]
        a_fuse = F.softmax(scores, dim=-1)
        fused = (a_fuse.unsqueeze(1) @ m_fuse).squeeze(1)          # M_fuse^T a_fuse
        return fused, a_fuse

    def classify(self, fused: Tensor, a_fuse: Tensor) -> Prediction:
        logits = self.classifier(fused)
        prob = F.softmax(logits, dim=-1)[:, 1]
        return Prediction(logits=logits, prob_sarcastic=prob, a_fuse=a_fuse, fused=fused)

    def forward(self, e_atomic: Tensor | None, e_inter: Tensor | None,
                branch_feats: Tensor | None = None) -> Prediction:
        fused, a_fuse = self.fuse(e_atomic, e_inter, branch_feats)
        return self.classify(fused, a_fuse)

    def routing_weights(self, a_fuse: Tensor) -> Tensor:
        """Canonical [a_mic, a_ctx] pairs even when a branch is ablated."""
        b = a_fuse.shape[0]
        out = torch.zeros(b, 2, dtype=a_fuse.dtype)
        col = 0
        if self.use_atomic:
            out[:, 0] = a_fuse[:, col]
            col += 1
        if self.use_contextual:
            out[:, 1] = a_fuse[:, col]
        return out

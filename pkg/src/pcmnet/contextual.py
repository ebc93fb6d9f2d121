"""Prior-guided conversational graph over history turns plus the target.

History nodes come from single-query multi-head attention, text anchor
against that turn's audio/visual rows. The target node is the pooled,
projected utterance plus a LayerNormed linear lift of the scalar congruity
prior. Message passing runs a relational GAT whose scores are penalized by
polarity opposition recomputed from the evolving node features each layer.
"""

from dataclasses import dataclass, field

import torch
import torch.nn as nn
from torch import Tensor

from . import ops
from .errors import DegenerateAttention, ShapeMismatch
from .polarity import PolarityProjector

RELATIONS = ("seq", "ctx", "spk")


@dataclass
class RgatOutput:
    e_inter: Tensor                 # [B, d_enc]
    node_states: Tensor             # [B, J+1, d_enc] after the last layer
    attention: list = field(default_factory=list)  # per layer: {rel: [B, N, N]}


class TextAnchoredAttention(nn.Module):
    """Multi-head attention with a single pooled-text query per turn."""

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

    def forward(self, anchor: Tensor, keys: Tensor, key_mask: Tensor,
                turn_valid: Tensor) -> Tensor:
        """anchor [N, d], keys [N, L, d], key_mask [N, L], turn_valid [N] -> [N, d]."""
        degenerate = turn_valid & ~key_mask.any(dim=-1)
        if degenerate.any():
            idx = int(degenerate.nonzero()[0])
            raise DegenerateAttention(
                f"history turn {idx} is valid but has zero valid audio/visual rows")

        n, l, _ = keys.shape
        q = self.q_proj(anchor).view(n, self.n_heads, 1, self.d_head)
        k = self.k_proj(keys).view(n, l, self.n_heads, self.d_head).transpose(1, 2)
        v = self.v_proj(keys).view(n, l, self.n_heads, self.d_head).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / self.d_head ** 0.5   # [N, h, 1, L]
        attn = ops.masked_softmax(scores, key_mask[:, None, None, :])
        ctx = (attn @ v).transpose(1, 2).reshape(n, -1)
        out = self.out_proj(ctx)
        return out * turn_valid.unsqueeze(-1).to(out.dtype)


class PriorInjection(nn.Module):
    """Adds LayerNorm(W_pri s_comp) onto the pooled target state."""

    def __init__(self, d_enc: int, ln_eps: float = 1e-5):
        super().__init__()
        self.lift = nn.Linear(2, d_enc, bias=False)
        self.norm = nn.LayerNorm(d_enc, eps=ln_eps)

    def forward(self, h_tgt: Tensor, s_comp: Tensor) -> Tensor:
        return h_tgt + self.norm(self.lift(s_comp))


def relation_masks(validity: Tensor, speakers: Tensor) -> Tensor:
    """Binary relation masks [B, 3, J+1, J+1] in (seq, ctx, spk) order.

    validity [B, J] flags real history turns; node J is the target and is
    always valid. All three relations are symmetric and carry self-loops on
    valid nodes; rows and columns of invalid nodes are zero.
    """
    b, j = validity.shape
    n = j + 1
    if speakers.shape != (b, n):
        raise ShapeMismatch(f"speakers must be [B, {n}], got {tuple(speakers.shape)}")
    valid = torch.cat([validity, torch.ones(b, 1, dtype=torch.bool)], dim=1)
    pair = valid[:, :, None] & valid[:, None, :]
    idx = torch.arange(n)
    eye = torch.eye(n, dtype=torch.bool)

    seq = (idx[:, None] - idx[None, :]).abs() == 1
    is_tgt = idx == j
    ctx = is_tgt[:, None] ^ is_tgt[None, :]
    spk = (speakers[:, :, None] == speakers[:, None, :]) & ~eye

    masks = torch.stack([
        (seq & pair) | (eye & valid[:, None, :]),
        (ctx & pair) | (eye & valid[:, None, :]),
        (spk & pair) | (eye & valid[:, None, :]),
    ], dim=1)
    return masks.to(torch.bool)


class ContextualRgat(nn.Module):
    """K_gnn relational attention layers with weights shared across layers."""

    def __init__(self, d_enc: int, d_pol_hidden: int, d_p: int,
                 alpha_ctx_init: float = 0.1, leaky_slope: float = 0.2,
                 k_gnn: int = 2, modulated: bool = True):
        super().__init__()
        self.projector = PolarityProjector(d_enc, d_pol_hidden, d_p, scope="contextual")
        self.transform = nn.ModuleDict(
            {r: nn.Linear(d_enc, d_enc, bias=False) for r in RELATIONS})
        self.score = nn.ModuleDict(
            {r: nn.Linear(2 * d_enc, 1) for r in RELATIONS})
        self.alpha_ctx = nn.Parameter(torch.tensor(float(alpha_ctx_init)))
        self.leaky_slope = leaky_slope
        self.k_gnn = k_gnn
        self.modulated = modulated

    def _pair_scores(self, h: Tensor, relation: str) -> Tensor:
        """Linear(H_i, H_j) as w^T [H_i || H_j] + b, evaluated for all pairs."""
        layer = self.score[relation]
        d = h.shape[-1]
        left = h @ layer.weight[:, :d].T            # [B, N, 1]
        right = h @ layer.weight[:, d:].T
        return left + right.transpose(1, 2) + layer.bias

    def layer(self, h: Tensor, valid: Tensor, masks: Tensor,
              collect: bool = False) -> tuple[Tensor, dict]:
        pol = self.projector.project_rows(h, valid)
        contradiction = 1.0 - pol @ pol.transpose(-1, -2)
        alpha = self.alpha_ctx if self.modulated else 0.0

        message = None
        attn_out = {}
        for r, name in enumerate(RELATIONS):
            scores = ops.leaky_relu(
                self._pair_scores(h, name) + alpha * contradiction,
                self.leaky_slope, masks[:, r])
            attn = ops.masked_softmax(scores, masks[:, r])
            if collect:
                attn_out[name] = attn.detach()
            contrib = attn @ self.transform[name](h)
            message = contrib if message is None else message + contrib
        out = ops.zero_masked_rows(ops.relu(message, valid), valid)
        return out, attn_out

    def forward(self, nodes: Tensor, validity: Tensor, masks: Tensor,
                collect: bool = False) -> RgatOutput:
        """nodes [B, J+1, d_enc]; validity [B, J] for the history positions."""
        b, n, _ = nodes.shape
        valid = torch.cat([validity, torch.ones(b, 1, dtype=torch.bool)], dim=1)
        h = ops.zero_masked_rows(nodes, valid)
        attention = []
        for _ in range(self.k_gnn):
            h, attn = self.layer(h, valid, masks, collect)
            if collect:
                attention.append(attn)
        return RgatOutput(e_inter=h[:, -1], node_states=h, attention=attention)


class TargetNodeBuilder(nn.Module):
    """Pools the target's three encoded sequences and projects them to d_enc."""

    def __init__(self, d_enc: int):
        super().__init__()
        self.proj = nn.Linear(3 * d_enc, d_enc)

    def forward(self, pooled_t: Tensor, pooled_a: Tensor, pooled_v: Tensor) -> Tensor:
        return self.proj(torch.cat([pooled_t, pooled_a, pooled_v], dim=-1))

"""Bipartite-dominant pair graphs over the target utterance.

Two graphs, (text, audio) and (text, visual), share type embeddings and
convolution weights. Cross-modal edges are weighted up by polarity
contradiction through a bounded amplifier; intra-modal edges exist only
inside a sliding window. Only two things leave this stage: the scalar
cosine congruity per pair and the normalized inconsistency vector built
from the pooled discrepancies.
"""

from dataclasses import dataclass, field

import torch
import torch.nn as nn
from torch import Tensor

from . import ops
from .encoding import ModalSequence
from .errors import ShapeMismatch
from .polarity import PolarityProjector


@dataclass
class CongruityPrior:
    s_comp: Tensor                      # [B, 2] = [s_TA, s_TV], entries in [-1, 1]
    delta_ta: Tensor                    # [B, d_enc]
    delta_tv: Tensor
    z_incon: Tensor                     # [B, d_z], unit rows
    branch_feats: Tensor                # [B, 4*d_enc] pooled per-branch features
    pooled: dict = field(default_factory=dict)  # modality -> [B, d_enc] diagnostics


def build_joint_nodes(seq_q: ModalSequence, seq_k: ModalSequence,
                      e_type_q: Tensor, e_type_k: Tensor) -> tuple[Tensor, Tensor]:
    """Stack the two sequences into one node matrix, adding type embeddings
    to valid rows only."""
    if seq_q.feats.shape[-1] != seq_k.feats.shape[-1]:
        raise ShapeMismatch("node feature widths differ")
    nodes_q = ops.zero_masked_rows(seq_q.feats + e_type_q, seq_q.mask)
    nodes_k = ops.zero_masked_rows(seq_k.feats + e_type_k, seq_k.mask)
    return torch.cat([nodes_q, nodes_k], dim=1), torch.cat([seq_q.mask, seq_k.mask], dim=1)


def normalize_adjacency(adj: Tensor) -> Tensor:
    """Symmetric degree normalization D^{-1/2} A D^{-1/2}; zero-degree rows stay zero."""
    deg = adj.sum(dim=-1)
    dinv = torch.where(deg > 0, torch.clamp_min(deg, 1e-30).pow(-0.5),
                       torch.zeros_like(deg))
    return dinv.unsqueeze(-1) * adj * dinv.unsqueeze(-2)


def build_modulated_adjacency(nodes: Tensor, mask: Tensor, block: Tensor,
                              position: Tensor, projector: PolarityProjector,
                              alpha_mac: Tensor | float, window: int,
                              modulated: bool = True) -> Tensor:
    """Normalized adjacency: unit self-loops, windowed intra-modal edges,
    contradiction-amplified cross-modal edges, zeros at masked nodes.

    block/position are per-node [N] tensors shared across the batch.
    """
    n = nodes.shape[1]
    same = block[:, None] == block[None, :]
    near = (position[:, None] - position[None, :]).abs() <= window

    if modulated:
        pol = projector.project_rows(nodes, mask)
        contradiction = 1.0 - pol @ pol.transpose(-1, -2)
        cross = 1.0 + torch.sigmoid(alpha_mac) * contradiction
    else:
        cross = torch.ones(nodes.shape[0], n, n, dtype=nodes.dtype, device=nodes.device)

    # self-loops and windowed intra-modal edges carry weight 1; cross-modal
    # pairs carry 1 + sigmoid(alpha_mac) * contradiction
    base = (same & near).to(nodes.dtype)
    adj = base + (~same).to(nodes.dtype) * cross
    valid_pair = (mask[:, :, None] & mask[:, None, :]).to(nodes.dtype)
    return normalize_adjacency(adj.expand(nodes.shape[0], n, n) * valid_pair)


def gcn_forward(feats: Tensor, mask: Tensor, adj_norm: Tensor,
                layers: nn.ModuleList) -> Tensor:
    """H^(l) = ReLU(A_hat H^(l-1) W^(l)), masked rows re-zeroed each layer."""
    h = feats
    for layer in layers:
        h = ops.relu(adj_norm @ layer(h), mask)
        h = ops.zero_masked_rows(h, mask)
    return h


def congruity_prior(h_q: Tensor, h_k: Tensor) -> Tensor:
    """Guarded cosine similarity between pooled branch features, in [-1, 1]."""
    return ops.guarded_cosine(h_q, h_k)


class CompositionCongruity(nn.Module):
    """Both pair graphs, the scalar routing outputs, and the contrastive anchor."""

    def __init__(self, d_enc: int, d_z: int, l_mac: int, window: int,
                 alpha_mac_init: float = 0.0, modulated: bool = True,
                 tripartite: bool = False):
        super().__init__()
        self.type_embed = nn.ParameterDict(
            {m: nn.Parameter(torch.zeros(d_enc)) for m in ("T", "A", "V")})
        self.gcn = nn.ModuleList(
            nn.Linear(d_enc, d_enc, bias=False) for _ in range(l_mac))
        self.alpha_mac = nn.Parameter(torch.tensor(float(alpha_mac_init)))
        self.diff_fc1 = nn.Linear(2 * d_enc, d_enc)
        self.diff_fc2 = nn.Linear(d_enc, d_z)
        self.window = window
        self.modulated = modulated
        self.tripartite = tripartite

    def incongruity_representation(self, delta_ta: Tensor, delta_tv: Tensor) -> Tensor:
        raw = self.diff_fc2(ops.relu(self.diff_fc1(torch.cat([delta_ta, delta_tv], dim=-1))))
        return ops.l2_normalize(raw)

    def _run_graph(self, sequences: list[ModalSequence],
                   projector: PolarityProjector) -> list[Tensor]:
        """Convolve one joint graph; returns the pooled vector per modality block."""
        parts, masks, blocks, positions = [], [], [], []
        for i, seq in enumerate(sequences):
            parts.append(ops.zero_masked_rows(
                seq.feats + self.type_embed[seq.modality], seq.mask))
            masks.append(seq.mask)
            length = seq.feats.shape[1]
            blocks.append(torch.full((length,), i, dtype=torch.long))
            positions.append(torch.arange(length))
        nodes = torch.cat(parts, dim=1)
        mask = torch.cat(masks, dim=1)
        block = torch.cat(blocks)
        position = torch.cat(positions)

        adj = build_modulated_adjacency(nodes, mask, block, position, projector,
                                        self.alpha_mac, self.window, self.modulated)
        h = gcn_forward(nodes, mask, adj, self.gcn)

        pooled = []
        offset = 0
        for seq in sequences:
            length = seq.feats.shape[1]
            pooled.append(ops.masked_mean(h[:, offset:offset + length],
                                          mask[:, offset:offset + length]))
            offset += length
        return pooled

    def forward(self, seq_t: ModalSequence, seq_a: ModalSequence,
                seq_v: ModalSequence, projector: PolarityProjector) -> CongruityPrior:
        if self.tripartite:
            h_t, h_a, h_v = self._run_graph([seq_t, seq_a, seq_v], projector)
            h_t_a, h_t_v = h_t, h_t
        else:
            h_t_a, h_a = self._run_graph([seq_t, seq_a], projector)
            h_t_v, h_v = self._run_graph([seq_t, seq_v], projector)
            h_t = h_t_a

        s_ta = congruity_prior(h_t_a, h_a)
        s_tv = congruity_prior(h_t_v, h_v)
        delta_ta = h_t_a - h_a
        delta_tv = h_t_v - h_v
        return CongruityPrior(
            s_comp=torch.stack([s_ta, s_tv], dim=-1),
            delta_ta=delta_ta, delta_tv=delta_tv,
            z_incon=self.incongruity_representation(delta_ta, delta_tv),
            branch_feats=torch.cat([h_t_a, h_a, h_t_v, h_v], dim=-1),
            pooled={"T": h_t, "A": h_a, "V": h_v},
        )

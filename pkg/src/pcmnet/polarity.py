"""The shared polarity space: unit-norm affective directions per position.

Two projector instances exist in the full network: one shared by the atomic
and composition stages, one private to the conversational graph. Cosine
distance in this space encodes opposition, so the contradiction matrix
1 - P_q P_k^T is 0 for agreement and 2 for antipodal pairs.
"""

import torch
import torch.nn as nn
from torch import Tensor

from . import ops
from .encoding import ModalSequence
from .errors import ShapeMismatch


class PolaritySequence:
    """Unit-norm polarity rows plus the validity mask they inherit."""

    def __init__(self, rows: Tensor, mask: Tensor):
        self.rows = rows    # [B, L, d_p], valid rows unit norm, invalid rows zero
        self.mask = mask


class PolarityProjector(nn.Module):
    """Two-layer perceptron into the polarity space followed by guarded L2 norm."""

    def __init__(self, d_enc: int, d_hidden: int, d_p: int, scope: str):
        super().__init__()
        self.fc1 = nn.Linear(d_enc, d_hidden)
        self.fc2 = nn.Linear(d_hidden, d_p)
        self.scope = scope  # "atomic_shared" or "contextual"
        self.d_enc = d_enc

    def project_rows(self, feats: Tensor, mask: Tensor | None = None) -> Tensor:
        if feats.shape[-1] != self.d_enc:
            raise ShapeMismatch(f"expected {self.d_enc} features, got {feats.shape[-1]}")
        raw = self.fc2(ops.relu(self.fc1(feats), mask))
        return ops.l2_normalize(raw, mask)

    def forward(self, seq: ModalSequence) -> PolaritySequence:
        return PolaritySequence(self.project_rows(seq.feats, seq.mask), seq.mask)


def project_polarity(seq: ModalSequence, proj: PolarityProjector) -> PolaritySequence:
    return proj(seq)


def contradiction_matrix(p_q: PolaritySequence, p_k: PolaritySequence) -> Tensor:
    """C[i, j] = 1 - p_q[i] . p_k[j]; pairs touching masked rows equal 1."""
    if p_q.rows.shape[-1] != p_k.rows.shape[-1]:
        raise ShapeMismatch("polarity dims differ")
    return 1.0 - torch.matmul(p_q.rows, p_k.rows.transpose(-1, -2))


class ValenceProbe(nn.Module):
    """Tanh-bounded scalar readout of the pooled polarity of one modality."""

    def __init__(self, d_p: int):
        super().__init__()
        self.weight = nn.Parameter(torch.zeros(d_p))
        self.bias = nn.Parameter(torch.zeros(()))

    def forward(self, p: PolaritySequence) -> Tensor:
        pooled = ops.masked_mean(p.rows, p.mask)            # [B, d_p]
        return torch.tanh(pooled @ self.weight + self.bias)  # [B]

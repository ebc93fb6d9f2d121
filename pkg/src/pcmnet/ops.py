"""Small differentiable helpers shared by the model modules.

Every piecewise-linear activation and guarded norm in the network goes
through this module, so the gradient checker can confirm a forward pass
stayed clear of the kinks before trusting central differences.
"""

from contextlib import contextmanager

import torch
import torch.nn.functional as F
from torch import Tensor

MASK_FILL = -1e9

# L2 norm guard; division uses max(norm, NORM_EPS) to avoid NaN gradients at 0.
NORM_EPS = 1e-8


class KinkTrace:
    """Distances to the nearest non-smooth point seen during a forward pass."""

    def __init__(self) -> None:
        self.min_activation_abs = float("inf")
        self.min_prenorm = float("inf")

    def clear_of_kinks(self, eps: float, norm_eps: float = NORM_EPS) -> bool:
        return (self.min_activation_abs > 10.0 * eps
                and self.min_prenorm > 10.0 * norm_eps)


_TRACES: list[KinkTrace] = []


@contextmanager
def trace_kinks():
    """Collect kink margins for every traced op run inside the block."""
    trace = KinkTrace()
    _TRACES.append(trace)
    try:
        yield trace
    finally:
        _TRACES.pop()


def _note_activation(x: Tensor, mask: Tensor | None) -> None:
    if not _TRACES or not x.numel():
        return
    if mask is not None:
        if not mask.any():
            return
        x = x[mask]
    m = float(x.detach().abs().min())
    for t in _TRACES:
        t.min_activation_abs = min(t.min_activation_abs, m)


def _note_prenorm(norms: Tensor) -> None:
    if _TRACES and norms.numel():
        m = float(norms.detach().min())
        for t in _TRACES:
            t.min_prenorm = min(t.min_prenorm, m)


def relu(x: Tensor, mask: Tensor | None = None) -> Tensor:
    """ReLU; when a mask is given, only valid entries feed the kink trace."""
    _note_activation(x, mask)
    return F.relu(x)


def leaky_relu(x: Tensor, slope: float, mask: Tensor | None = None) -> Tensor:
    _note_activation(x, mask)
    return F.leaky_relu(x, slope)


def zero_masked_rows(x: Tensor, mask: Tensor) -> Tensor:
    """Zero rows of x [..., L, d] whose mask [..., L] entry is false."""
    return x * mask.unsqueeze(-1).to(x.dtype)


def l2_normalize(x: Tensor, mask: Tensor | None = None, eps: float = NORM_EPS) -> Tensor:
    """Row-normalize x to unit L2 norm with a max(norm, eps) guard.

    Rows whose pre-norm length is below eps come out (near) zero instead of
    NaN. When a mask is given, only valid rows count toward the kink trace
    and invalid rows are zeroed.
    """
    norms = x.norm(dim=-1, keepdim=True)
    if mask is None:
        _note_prenorm(norms.squeeze(-1))
    elif mask.any():
        _note_prenorm(norms.squeeze(-1)[mask])
    out = x / torch.clamp_min(norms, eps)
    if mask is not None:
        out = zero_masked_rows(out, mask)
    return out


def masked_mean(x: Tensor, mask: Tensor) -> Tensor:
    """Mean of x [..., L, d] over valid rows; zero vector when none are valid."""
    m = mask.unsqueeze(-1).to(x.dtype)
    total = (x * m).sum(dim=-2)
    count = m.sum(dim=-2)
    return total / torch.clamp_min(count, 1.0)


def masked_softmax(scores: Tensor, key_mask: Tensor) -> Tensor:
    """Softmax over the last dim with -1e9 added at invalid key positions.

    Rows with no valid key come out all-zero rather than NaN; callers that
    consider such rows an error must check before calling.
    """
    fill = torch.where(key_mask, 0.0, MASK_FILL).to(scores.dtype)
    weights = F.softmax(scores + fill, dim=-1)
    return weights * key_mask.to(scores.dtype)


def guarded_cosine(a: Tensor, b: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Cosine similarity over the last dim, clamped into [-1, 1]."""
    na = a.norm(dim=-1)
    nb = b.norm(dim=-1)
    _note_prenorm(na)
    _note_prenorm(nb)
    dot = (a * b).sum(dim=-1)
    cos = dot / (torch.clamp_min(na, eps) * torch.clamp_min(nb, eps))
    return torch.clamp(cos, -1.0, 1.0)

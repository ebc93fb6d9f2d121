"""Finite-difference verification of autograd gradients.

Central differences at float64 over a random subset of parameter
coordinates, compared against autograd. A forward pass whose ReLU or
LeakyReLU inputs (or guarded pre-norms) sit within 10x the step size of
their kink is rejected and re-seeded, so the comparison never straddles a
non-smooth point.
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from .config import AblationConfig, Config, ModelConfig, TrainingConfig
from .data import Dims
from .losses import WARMUP
from .network import PCMNet, collate
from .ops import trace_kinks
from .synthetic import SynthConfig, balanced_modes, generate_synthetic

SCOPES = ("atomic", "composition", "rgat", "fusion", "full")

# spec-level module grouping: top-level attribute -> report group
_GROUP_OF = {
    "encoders": "shared_encoding",
    "ctx_encoders": "shared_encoding",
    "polarity": "polarity_space",
    "probes": "polarity_space",
    "atomic": "atomic_congruity",
    "composition": "composition_congruity",
    "history_attn": "contextual_rgat",
    "target_builder": "contextual_rgat",
    "prior_injection": "contextual_rgat",
    "rgat": "contextual_rgat",
    "fusion": "fusion_head",
}

_SCOPE_GROUPS = {
    "atomic": {"atomic_congruity"},
    "composition": {"composition_congruity"},
    "rgat": {"contextual_rgat"},
    "fusion": {"fusion_head"},
    "full": set(_GROUP_OF.values()),
}


@dataclass
class GradCheckReport:
    scope: str
    eps: float
    max_rel_err: float
    n_checked: int
    per_group: dict = field(default_factory=dict)   # group -> (max err, count)
    retries: int = 0

    def passed(self, threshold: float = 1e-4) -> bool:
        return self.max_rel_err < threshold


def _tiny_dims() -> Dims:
    return Dims(text_len=5, audio_len=6, visual_frames=3, max_subjects=2,
                text_dim=7, audio_dim=9, visual_dim=8)


def _tiny_config(seed: int) -> Config:
    model = ModelConfig(d_enc=16, d_p=8, d_pol_hidden=12, d_z=12, d_score=8,
                        n_heads=2, dropout=0.0, window=2, l_mac=2, k_gnn=2,
                        j_history=2)
    training = TrainingConfig(seed=seed)
    return Config(model=model, training=training, ablation=AblationConfig())


def build_check_problem(seed: int, dtype: torch.dtype = torch.float64):
    """Seeded small model plus one float64 batch of synthetic data."""
    cfg = _tiny_config(seed)
    dims = _tiny_dims()
    synth = SynthConfig(n_samples=6, conflict_modes=balanced_modes(6),
                        noise_std=0.7, seed=seed, dims=dims, n_speakers=3,
                        n_history=cfg.model.j_history)
    data = generate_synthetic(synth)
    batch = collate(data.records, dims, cfg.model.j_history, dtype=dtype)
    torch.manual_seed(seed)
    model = PCMNet(cfg.model, dims, cfg.ablation).to(dtype)
    model.eval()
    return model, batch, cfg


def _readout(tensor: torch.Tensor, seed: int) -> torch.Tensor:
    """Fixed random linear functional, collapses any tensor to a scalar."""
    gen = torch.Generator().manual_seed(seed)
    probe = torch.randn(tensor.shape, generator=gen, dtype=tensor.dtype)
    return (tensor * probe).sum()


def _scope_functional(scope: str, model: PCMNet, batch, cfg: Config, seed: int):
    from .losses import (classification_loss, contrastive_loss, total_loss,
                         valence_loss)
    from .training import loss_weights_for_stage

    def full():
        out = model(batch)
        l_cls = classification_loss(out.prediction.logits, batch.labels)
        l_con = contrastive_loss(out.z_incon, batch.labels, cfg.training.tau)
        l_val = valence_loss(out.probe_outputs, batch.valence, batch.valence_present)
        return total_loss(WARMUP, l_cls, l_con, l_val,
                          loss_weights_for_stage(WARMUP, cfg))

    def atomic():
        return _readout(model(batch).e_atomic, seed + 11)

    def composition():
        out = model(batch)
        return _readout(out.s_comp, seed + 12) + _readout(out.z_incon, seed + 13)

    def rgat():
        return _readout(model(batch).e_inter, seed + 14)

    def fusion():
        return _readout(model(batch).prediction.logits, seed + 15)

    return {"full": full, "atomic": atomic, "composition": composition,
            "rgat": rgat, "fusion": fusion}[scope]


def _rel_err(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale < 1e-7:
        return 0.0
    return abs(analytic - numeric) / scale


def grad_check(scope: str = "full", eps: float = 1e-5, seed: int = 0,
               samples_per_group: int = 200, max_retries: int = 50) -> GradCheckReport:
    """Compare autograd with (f(p+eps) - f(p-eps)) / 2eps coordinate-wise."""
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}, pick one of {SCOPES}")

    retries = 0
    while True:
        model, batch, cfg = build_check_problem(seed + retries)
        fn = _scope_functional(scope, model, batch, cfg, seed)
        with trace_kinks() as trace:
            base = fn()
        if trace.clear_of_kinks(eps):
            break
        retries += 1
        if retries > max_retries:
            raise RuntimeError("could not find a kink-free evaluation point")

    wanted = _SCOPE_GROUPS[scope]
    groups: dict[str, list[tuple[str, torch.nn.Parameter]]] = {}
    for name, param in model.named_parameters():
        group = _GROUP_OF.get(name.split(".")[0])
        if group in wanted:
            groups.setdefault(group, []).append((name, param))

    params = [p for members in groups.values() for _, p in members]
    grads = torch.autograd.grad(base, params, allow_unused=True)
    grad_of = {id(p): g for p, g in zip(params, grads)}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(scope=scope, eps=eps, max_rel_err=0.0,
                             n_checked=0, retries=retries)
    for group, members in sorted(groups.items()):
        coords = []
        for name, param in members:
            coords.extend((name, param, i) for i in range(param.numel()))
        if len(coords) > samples_per_group:
            picked = rng.choice(len(coords), size=samples_per_group, replace=False)
            coords = [coords[i] for i in picked]

        group_max = 0.0
        for name, param, flat_idx in coords:
            flat = param.data.view(-1)
            original = flat[flat_idx].item()
            with torch.no_grad():
                flat[flat_idx] = original + eps
                f_plus = float(fn())
                flat[flat_idx] = original - eps
                f_minus = float(fn())
                flat[flat_idx] = original
            numeric = (f_plus - f_minus) / (2.0 * eps)
            g = grad_of[id(param)]
            analytic = 0.0 if g is None else float(g.view(-1)[flat_idx])
            group_max = max(group_max, _rel_err(analytic, numeric))
        report.per_group[group] = (group_max, len(coords))
        report.n_checked += len(coords)
        report.max_rel_err = max(report.max_rel_err, group_max)
    return report

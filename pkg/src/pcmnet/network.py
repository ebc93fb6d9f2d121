"""Full model assembly: encoding, congruity stages, fusion, and collation."""

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
from torch import Tensor

from . import ops
from .atomic import AtomicCongruity, AtomicOutput
from .composition import CompositionCongruity, CongruityPrior
from .config import AblationConfig, ModelConfig
from .contextual import (ContextualRgat, PriorInjection, RgatOutput,
                         TargetNodeBuilder, TextAnchoredAttention, relation_masks)
from .data import Dims, UtteranceRecord
from .encoding import ModalEncoder, ModalSequence, flatten_visual, pool_anchor
from .fusion import FusionHead, Prediction
from .polarity import PolarityProjector, ValenceProbe, contradiction_matrix

MODALITIES = ("T", "A", "V")


@dataclass
class Batch:
    """Padded tensors for a list of records, history already left-padded to J."""

    text: Tensor            # [B, L_T, d_T]
    text_mask: Tensor       # bool [B, L_T]
    audio: Tensor
    audio_mask: Tensor
    visual: Tensor          # [B, L_V, K, d_V]
    visual_present: Tensor  # bool [B, L_V, K]
    hist_text: Tensor       # [B, J, L_T, d_T]
    hist_text_mask: Tensor
    hist_audio: Tensor
    hist_audio_mask: Tensor
    hist_visual: Tensor     # [B, J, L_V, K, d_V]
    hist_present: Tensor
    hist_valid: Tensor      # bool [B, J]
    speakers: Tensor        # [B, J+1] int64, -1 on padded turns
    labels: Tensor          # [B]
    valence: Tensor         # [B, 3]
    valence_present: Tensor  # bool [B, 3]
    ids: list[str] = field(default_factory=list)
    conflict_modes: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.text.shape[0]


def _length_mask(n_rows: int, valid: int) -> np.ndarray:
    m = np.zeros(n_rows, dtype=bool)
    m[:valid] = True
    return m


def collate(records: list[UtteranceRecord], dims: Dims, j_history: int,
            dtype: torch.dtype = torch.float32) -> Batch:
    """Stack records into batch tensors, truncating history to the most
    recent j_history turns and left-padding deficits with invalid turns."""
    b = len(records)
    j = j_history

    def zeros(*shape):
        return np.zeros(shape, dtype=np.float32)

    text = zeros(b, dims.text_len, dims.text_dim)
    audio = zeros(b, dims.audio_len, dims.audio_dim)
    visual = zeros(b, dims.visual_frames, dims.max_subjects, dims.visual_dim)
    text_mask = np.zeros((b, dims.text_len), dtype=bool)
    audio_mask = np.zeros((b, dims.audio_len), dtype=bool)
    present = np.zeros((b, dims.visual_frames, dims.max_subjects), dtype=bool)

    h_text = zeros(b, j, dims.text_len, dims.text_dim)
    h_audio = zeros(b, j, dims.audio_len, dims.audio_dim)
    h_visual = zeros(b, j, dims.visual_frames, dims.max_subjects, dims.visual_dim)
    h_text_mask = np.zeros((b, j, dims.text_len), dtype=bool)
    h_audio_mask = np.zeros((b, j, dims.audio_len), dtype=bool)
    h_present = np.zeros((b, j, dims.visual_frames, dims.max_subjects), dtype=bool)
    h_valid = np.zeros((b, j), dtype=bool)
    speakers = np.full((b, j + 1), -1, dtype=np.int64)

    labels = np.zeros(b, dtype=np.int64)
    valence = np.zeros((b, 3), dtype=np.float32)
    valence_present = np.zeros((b, 3), dtype=bool)

    for i, rec in enumerate(records):
        text[i] = rec.text_feats
        audio[i] = rec.audio_feats
        visual[i] = rec.visual_feats
        text_mask[i] = _length_mask(dims.text_len, rec.text_valid)
        audio_mask[i] = _length_mask(dims.audio_len, rec.audio_valid)
        present[i] = rec.visual_present
        labels[i] = rec.label
        if rec.valence is not None:
            ok = ~np.isnan(rec.valence)
            valence[i][ok] = rec.valence[ok]
            valence_present[i] = ok

        names: dict[str, int] = {}

        def speaker_id(name: str) -> int:
            return names.setdefault(name, len(names))

        turns = rec.history[-j:] if j else []
        pad = j - len(turns)
        for slot, turn in enumerate(turns, start=pad):
            h_text[i, slot] = turn.text_feats
            h_audio[i, slot] = turn.audio_feats
            h_visual[i, slot] = turn.visual_feats
            h_text_mask[i, slot] = _length_mask(dims.text_len, turn.text_valid)
            h_audio_mask[i, slot] = _length_mask(dims.audio_len, turn.audio_valid)
            h_present[i, slot] = turn.visual_present
            h_valid[i, slot] = True
            speakers[i, slot] = speaker_id(turn.speaker)
        speakers[i, j] = speaker_id(rec.speaker)

    def t(arr, kind=None):
        out = torch.from_numpy(arr)
        return out.to(dtype) if kind == "f" else out

    return Batch(
        text=t(text, "f"), text_mask=t(text_mask),
        audio=t(audio, "f"), audio_mask=t(audio_mask),
        visual=t(visual, "f"), visual_present=t(present),
        hist_text=t(h_text, "f"), hist_text_mask=t(h_text_mask),
        hist_audio=t(h_audio, "f"), hist_audio_mask=t(h_audio_mask),
        hist_visual=t(h_visual, "f"), hist_present=t(h_present),
        hist_valid=t(h_valid), speakers=t(speakers),
        labels=t(labels), valence=t(valence, "f"), valence_present=t(valence_present),
        ids=[r.id for r in records],
        conflict_modes=[r.conflict_mode for r in records],
    )


@dataclass
class ModelOutput:
    prediction: Prediction
    routing: Tensor              # [B, 2] canonical [a_mic, a_ctx]
    s_comp: Tensor               # [B, 2]
    z_incon: Tensor              # [B, d_z]
    probe_outputs: Tensor        # [B, 3] tanh-bounded valence estimates
    e_atomic: Tensor | None
    e_inter: Tensor | None
    atomic: AtomicOutput | None
    prior: CongruityPrior
    rgat: RgatOutput | None


class PCMNet(nn.Module):
    """Polarity-congruity network over precomputed multimodal features."""

    def __init__(self, cfg: ModelConfig, dims: Dims,
                 ablation: AblationConfig | None = None):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.dims = dims
        self.ablation = ablation or AblationConfig()
        abl = self.ablation
        modulated = not abl.no_polarity_modulation

        self.encoders = nn.ModuleDict({
            "T": ModalEncoder(dims.text_dim, cfg.d_enc, cfg.dropout, cfg.ln_eps),
            "A": ModalEncoder(dims.audio_dim, cfg.d_enc, cfg.dropout, cfg.ln_eps),
            "V": ModalEncoder(dims.visual_dim, cfg.d_enc, cfg.dropout, cfg.ln_eps),
        })
        self.ctx_encoders = None if cfg.share_context_encoder else nn.ModuleDict({
            "T": ModalEncoder(dims.text_dim, cfg.d_enc, cfg.dropout, cfg.ln_eps),
            "A": ModalEncoder(dims.audio_dim, cfg.d_enc, cfg.dropout, cfg.ln_eps),
            "V": ModalEncoder(dims.visual_dim, cfg.d_enc, cfg.dropout, cfg.ln_eps),
        })

        self.polarity = PolarityProjector(cfg.d_enc, cfg.d_pol_hidden, cfg.d_p,
                                          scope="atomic_shared")
        self.probes = nn.ModuleDict({m: ValenceProbe(cfg.d_p) for m in MODALITIES})

        self.atomic = None if abl.no_atomic else AtomicCongruity(
            cfg.d_enc, cfg.n_heads, cfg.alpha_mic_init, modulated)
        self.composition = CompositionCongruity(
            cfg.d_enc, cfg.d_z, cfg.l_mac, cfg.window, cfg.alpha_mac_init,
            modulated=modulated, tripartite=abl.tripartite_graph)

        if abl.no_contextual:
            self.history_attn = None
            self.target_builder = None
            self.prior_injection = None
            self.rgat = None
        else:
            self.history_attn = TextAnchoredAttention(cfg.d_enc, cfg.n_heads)
            self.target_builder = TargetNodeBuilder(cfg.d_enc)
            self.prior_injection = PriorInjection(cfg.d_enc, cfg.ln_eps)
            self.rgat = ContextualRgat(cfg.d_enc, cfg.d_pol_hidden, cfg.d_p,
                                       cfg.alpha_ctx_init, cfg.leaky_slope,
                                       cfg.k_gnn, modulated)

        self.fusion = FusionHead(
            cfg.d_enc, cfg.d_score, cfg.ln_eps,
            use_atomic=not abl.no_atomic,
            use_contextual=not abl.no_contextual,
            branch_comp_dim=4 * cfg.d_enc if abl.direct_fusion else 0)

    def encode_target(self, batch: Batch, train_mode: bool) -> dict[str, ModalSequence]:
        flat_v, flat_mask = flatten_visual(batch.visual, batch.visual_present)
        return {
            "T": self.encoders["T"](batch.text, batch.text_mask, "T", train_mode),
            "A": self.encoders["A"](batch.audio, batch.audio_mask, "A", train_mode),
            "V": self.encoders["V"](flat_v, flat_mask, "V", train_mode),
        }

    def _history_nodes(self, batch: Batch, train_mode: bool) -> Tensor:
        b, j = batch.hist_valid.shape
        text = batch.hist_text.flatten(0, 1)
        text_mask = batch.hist_text_mask.flatten(0, 1)
        audio = batch.hist_audio.flatten(0, 1)
        audio_mask = batch.hist_audio_mask.flatten(0, 1)
        visual, visual_mask = flatten_visual(
            batch.hist_visual.flatten(0, 1), batch.hist_present.flatten(0, 1))

        enc = self.ctx_encoders if self.ctx_encoders is not None else self.encoders
        seq_t = enc["T"](text, text_mask, "T", train_mode)
        seq_a = enc["A"](audio, audio_mask, "A", train_mode)
        seq_v = enc["V"](visual, visual_mask, "V", train_mode)

        anchor = pool_anchor(seq_t)                          # [B*J, d_enc]
        keys = torch.cat([seq_a.feats, seq_v.feats], dim=1)  # audio rows then visual
        key_mask = torch.cat([seq_a.mask, seq_v.mask], dim=1)
        nodes = self.history_attn(anchor, keys, key_mask,
                                  batch.hist_valid.flatten())
        return nodes.view(b, j, -1)

    def forward(self, batch: Batch, train_mode: bool = False,
                collect_diagnostics: bool = False) -> ModelOutput:
        target = self.encode_target(batch, train_mode)
        pol = {m: self.polarity(target[m]) for m in MODALITIES}
        probe_outputs = torch.stack(
            [self.probes[m](pol[m]) for m in MODALITIES], dim=-1)

        atomic_out = None
        e_atomic = None
        if self.atomic is not None:
            c_ta = contradiction_matrix(pol["T"], pol["A"])
            c_tv = contradiction_matrix(pol["T"], pol["V"])
            atomic_out = self.atomic(target["T"], target["A"], target["V"], c_ta, c_tv)
            e_atomic = atomic_out.e_atomic

        prior = self.composition(target["T"], target["A"], target["V"], self.polarity)

        rgat_out = None
        e_inter = None
        if self.rgat is not None:
            hist_nodes = self._history_nodes(batch, train_mode)
            h_tgt = self.target_builder(pool_anchor(target["T"]),
                                        pool_anchor(target["A"]),
                                        pool_anchor(target["V"]))
            tgt_node = self.prior_injection(h_tgt, prior.s_comp)
            nodes = torch.cat([hist_nodes, tgt_node.unsqueeze(1)], dim=1)
            masks = relation_masks(batch.hist_valid, batch.speakers)
            rgat_out = self.rgat(nodes, batch.hist_valid, masks, collect_diagnostics)
            e_inter = rgat_out.e_inter

        branch_feats = prior.branch_feats if self.fusion.proj_comp is not None else None
        prediction = self.fusion(e_atomic, e_inter, branch_feats)

        return ModelOutput(
            prediction=prediction,
            routing=self.fusion.routing_weights(prediction.a_fuse),
            s_comp=prior.s_comp,
            z_incon=prior.z_incon,
            probe_outputs=probe_outputs,
            e_atomic=e_atomic,
            e_inter=e_inter,
            atomic=atomic_out,
            prior=prior,
            rgat=rgat_out,
        )

"""Per-sample diagnostic exports: attention maps, routing weights, embeddings.

Three delimited/JSON files per run, with matplotlib renderings of the same
data written alongside. Samples whose visual track has no present subject
cannot run the visual attention branch; they are marked degenerate in the
attention file and skipped elsewhere instead of producing NaNs.
"""

import csv
import json
from pathlib import Path

import numpy as np
import torch

from . import figures
from .data import Dataset
from .network import PCMNet, collate

ATTENTION_FILE = "atomic_attention.csv"
ROUTING_FILE = "routing_weights.csv"
EMBEDDING_FILE = "embeddings.json"

EMBEDDING_SCHEMA = {
    "id": "record id",
    "label": "ground-truth sarcasm label, 0 or 1",
    "conflict_mode": "planted conflict mode for synthetic data, else null",
    "fused": "final fused vector entering the classifier",
    "z_incon": "unit-norm inconsistency representation",
    "s_comp": "[s_TA, s_TV] scalar congruity pair",
}


def _assert_finite(name: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"non-finite values in exported {name}")


def export_diagnostics(model: PCMNet, dataset: Dataset, out_dir: str | Path,
                       limit: int | None = None, render: bool = True) -> dict:
    """Run the model per record and write the three export files.

    Returns a dict with the written paths plus any rendered figures.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = dataset.records[:limit] if limit else dataset.records
    j = model.cfg.j_history
    model.eval()

    attn_rows = []
    routing_rows = []
    embed_samples = []
    by_mode: dict[str, list[float]] = {}
    heatmap_done = False
    figure_paths = []

    for rec in records:
        if model.atomic is not None and not rec.visual_present.any():
            attn_rows.append([rec.id, "visual", "", "", "", "", "", "", True])
            continue
        batch = collate([rec], dataset.dims, j)
        with torch.no_grad():
            out = model(batch, collect_diagnostics=True)

        if out.atomic is not None:
            text_n = int(batch.text_mask[0].sum())
            key_masks = {
                "audio": batch.audio_mask[0].numpy(),
                "visual": batch.visual_present[0].reshape(-1).numpy(),
            }
            for branch in ("audio", "visual"):
                attn = out.atomic.attention[branch][0].numpy()
                base = out.atomic.base_scores[branch][0].numpy()
                mod = out.atomic.mod_scores[branch][0].numpy()
                _assert_finite(f"{branch} attention", attn)
                valid_keys = np.flatnonzero(key_masks[branch])
                for h in range(attn.shape[0]):
                    for q in range(text_n):
                        for k in valid_keys:
                            attn_rows.append([rec.id, branch, h, q, int(k),
                                              f"{attn[h, q, k]:.8g}",
                                              f"{base[h, q, k]:.8g}",
                                              f"{mod[h, q, k]:.8g}", False])
                if render and not heatmap_done and branch == "audio":
                    path = figures.save_attention_heatmap(
                        base[0][:text_n][:, valid_keys],
                        mod[0][:text_n][:, valid_keys],
                        out_dir / "attention_heatmap.png", branch)
                    figure_paths.append(path)
                    heatmap_done = True

        routing = out.routing[0].numpy()
        prob = float(out.prediction.prob_sarcastic[0])
        pred = int(out.prediction.logits[0].argmax())
        _assert_finite("routing", routing)
        routing_rows.append([rec.id, rec.label, rec.conflict_mode or "",
                             f"{routing[0]:.8g}", f"{routing[1]:.8g}",
                             f"{prob:.8g}", pred])
        if rec.conflict_mode:
            by_mode.setdefault(rec.conflict_mode, []).append(float(routing[0]))

        fused = out.prediction.fused[0].numpy()
        z = out.z_incon[0].numpy()
        s = out.s_comp[0].numpy()
        for name, arr in (("fused", fused), ("z_incon", z), ("s_comp", s)):
            _assert_finite(name, arr)
        embed_samples.append({
            "id": rec.id, "label": rec.label, "conflict_mode": rec.conflict_mode,
            "fused": [float(v) for v in fused],
            "z_incon": [float(v) for v in z],
            "s_comp": [float(v) for v in s],
        })

    paths = {
        "attention": out_dir / ATTENTION_FILE,
        "routing": out_dir / ROUTING_FILE,
        "embeddings": out_dir / EMBEDDING_FILE,
    }
    with open(paths["attention"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "branch", "head", "query", "key",
                         "weight", "base_score", "modulated_score", "degenerate"])
        writer.writerows(attn_rows)
    with open(paths["routing"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label", "conflict_mode", "a_mic", "a_ctx",
                         "prob_sarcastic", "pred"])
        writer.writerows(routing_rows)
    with open(paths["embeddings"], "w", encoding="utf-8") as fh:
        json.dump({"schema": EMBEDDING_SCHEMA, "samples": embed_samples}, fh, indent=1)

    if render and by_mode:
        figure_paths.append(figures.save_routing_figure(
            by_mode, out_dir / "routing_weights.png"))
    paths["figures"] = figure_paths
    return paths

"""Versioned binary checkpoint container: JSON metadata + named float32 arrays.

Layout: magic ``PCMC``, u32 version, u32 metadata length, UTF-8 JSON
metadata, u32 array count, then per array a u16 name length, the name,
u8 rank, rank u32 dims, and the float32 payload. Values round-trip
bit-exactly because model parameters are float32 to begin with.
"""

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .config import AblationConfig, Config, ModelConfig, TrainingConfig
from .data import Dims
from .errors import ShapeMismatch
from .network import PCMNet

MAGIC = b"PCMC"
VERSION = 1


def _state_arrays(model: PCMNet, optimizer=None) -> dict[str, np.ndarray]:
    arrays = {f"model.{k}": v.detach().cpu().numpy().astype(np.float32, copy=False)
              for k, v in model.state_dict().items()}
    if optimizer is not None:
        name_of = {id(p): n for n, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                state = optimizer.state.get(p)
                if not state:
                    continue
                base = f"opt.{name_of[id(p)]}"
                for key in ("exp_avg", "exp_avg_sq"):
                    arrays[f"{base}.{key}"] = state[key].detach().numpy().astype(np.float32)
                step = state["step"]
                step = float(step) if not torch.is_tensor(step) else float(step.item())
                arrays[f"{base}.step"] = np.asarray(step, dtype=np.float32)
    return arrays


def save_checkpoint(path: str | Path, model: PCMNet, metadata: dict,
                    optimizer=None) -> None:
    meta = dict(metadata)
    meta.setdefault("format_version", VERSION)
    meta["model_config"] = asdict(model.cfg)
    meta["ablation"] = asdict(model.ablation)
    meta["dims"] = model.dims.to_dict()
    blob = json.dumps(meta).encode("utf-8")

    arrays = _state_arrays(model, optimizer)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", MAGIC, VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    magic, version, meta_len = struct.unpack_from("<4sII", raw)
    if magic != MAGIC:
        raise ShapeMismatch(f"{path}: bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise ShapeMismatch(f"{path}: unsupported checkpoint version {version}")
    offset = struct.calcsize("<4sII")
    metadata = json.loads(raw[offset:offset + meta_len].decode("utf-8"))
    offset += meta_len
    (n_arrays,) = struct.unpack_from("<I", raw, offset)
    offset += 4

    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        dims = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(
            raw, dtype="<f4", count=count, offset=offset).reshape(dims).copy()
        offset += 4 * count
    return metadata, arrays


def restore_model(path: str | Path) -> tuple[PCMNet, dict, dict[str, np.ndarray]]:
    """Rebuild the network from an embedded config and load its weights."""
    metadata, arrays = load_checkpoint(path)
    cfg = ModelConfig(**metadata["model_config"])
    ablation = AblationConfig(**metadata["ablation"])
    dims = Dims(**metadata["dims"])
    model = PCMNet(cfg, dims, ablation)
    state = {k[len("model."):]: torch.from_numpy(v)
             for k, v in arrays.items() if k.startswith("model.")}
    model.load_state_dict(state)
    return model, metadata, arrays


def restore_optimizer(model: PCMNet, optimizer, arrays: dict[str, np.ndarray]) -> None:
    """Load saved first/second moments back into a fresh AdamW instance."""
    by_name = dict(model.named_parameters())
    for name, param in by_name.items():
        base = f"opt.{name}"
        if f"{base}.exp_avg" not in arrays:
            continue
        optimizer.state[param] = {
            "step": torch.tensor(float(arrays[f"{base}.step"])),
            "exp_avg": torch.from_numpy(arrays[f"{base}.exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(arrays[f"{base}.exp_avg_sq"].copy()),
        }


def training_metadata(seed: int, stage: str, epoch: int, best_metric: float,
                      config: Config | None = None) -> dict:
    meta = {"seed": seed, "stage": stage, "epoch": epoch,
            "best_metric": best_metric}
    if config is not None:
        meta["training_config"] = asdict(config.training)
    return meta

"""On-disk dataset format: manifest + PCMF arrays, validation, fold splits.

A dataset is a UTF-8 JSON manifest next to one PCMF file per array. All
records share the padded dims declared once at the top of the manifest;
optional per-record ``lengths`` mark the valid prefix of the text/audio
sequences (rows past the length are padding). Visual validity is carried
explicitly by the 0/1 ``visual_present`` matrix.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingFile, ShapeMismatch
from .pcmf import read_array_checked, write_array

CONFLICT_MODES = ("modal", "contextual", "none")


@dataclass(frozen=True)
class Dims:
    """Padded shapes shared by every record in a dataset."""

    text_len: int
    audio_len: int
    visual_frames: int
    max_subjects: int
    text_dim: int
    audio_dim: int
    visual_dim: int

    def validate(self) -> None:
        for name, value in self.__dict__.items():
            if value <= 0:
                raise ValueError(f"dims.{name} must be positive, got {value}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class HistoryTurn:
    text_feats: np.ndarray      # [text_len, text_dim]
    audio_feats: np.ndarray     # [audio_len, audio_dim]
    visual_feats: np.ndarray    # [visual_frames, max_subjects, visual_dim]
    visual_present: np.ndarray  # bool [visual_frames, max_subjects]
    speaker: str
    text_valid: int
    audio_valid: int


@dataclass
class UtteranceRecord:
    id: str
    label: int
    speaker: str
    text_feats: np.ndarray
    audio_feats: np.ndarray
    visual_feats: np.ndarray
    visual_present: np.ndarray
    history: list[HistoryTurn]
    valence: np.ndarray | None = None   # [3] in [-1, 1], text/audio/visual order
    conflict_mode: str | None = None
    text_valid: int = 0
    audio_valid: int = 0


@dataclass
class Dataset:
    dims: Dims
    records: list[UtteranceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def subset(self, ids: list[str]) -> "Dataset":
        wanted = set(ids)
        return Dataset(self.dims, [r for r in self.records if r.id in wanted])


def _check_present_matrix(present: np.ndarray, feats: np.ndarray, where: str) -> np.ndarray:
    bad = ~np.isin(present, (0.0, 1.0))
    if bad.any():
        raise ValueError(f"{where}: visual_present entries must be 0 or 1")
    mask = present.astype(bool)
    if np.any(feats[~mask] != 0.0):
        raise ValueError(f"{where}: visual rows with visual_present=false must be all-zero")
    return mask


def _read_lengths(entry: dict, dims: Dims, where: str) -> tuple[int, int]:
    lengths = entry.get("lengths") or {}
    t = int(lengths.get("text", dims.text_len))
    a = int(lengths.get("audio", dims.audio_len))
    if not (1 <= t <= dims.text_len and 1 <= a <= dims.audio_len):
        raise ValueError(f"{where}: lengths out of range")
    return t, a


def _load_arrays(base: Path, files: dict, dims: Dims, where: str):
    for key in ("text", "audio", "visual", "visual_present"):
        if key not in files:
            raise MissingFile(f"{where}: manifest lists no '{key}' file")
    text = read_array_checked(base / files["text"], (dims.text_len, dims.text_dim))
    audio = read_array_checked(base / files["audio"], (dims.audio_len, dims.audio_dim))
    visual = read_array_checked(
        base / files["visual"], (dims.visual_frames, dims.max_subjects, dims.visual_dim))
    present_raw = read_array_checked(
        base / files["visual_present"], (dims.visual_frames, dims.max_subjects))
    present = _check_present_matrix(present_raw, visual, where)
    return text, audio, visual, present


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load and validate a dataset; every invariant is checked here."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFile(f"manifest not found: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = manifest_path.parent

    try:
        dims = Dims(**manifest["dims"])
    except (KeyError, TypeError) as exc:
        raise ShapeMismatch(f"manifest dims malformed: {exc}") from exc
    dims.validate()

    records = []
    for entry in manifest.get("records", []):
        rid = entry["id"]
        label = entry["label"]
        if label not in (0, 1):
            raise ValueError(f"record {rid}: label must be 0 or 1, got {label!r}")
        valence = entry.get("valence")
        if valence is not None:
            if len(valence) != 3:
                raise ShapeMismatch(f"record {rid}: valence must have 3 entries")
            # entries may be null individually (e.g. utterance-level valence
            # carried on the text slot only); absent entries become NaN
            valence = np.array([np.nan if v is None else float(v) for v in valence],
                               dtype=np.float32)
            known = valence[~np.isnan(valence)]
            if np.any(known < -1.0) or np.any(known > 1.0):
                raise ValueError(f"record {rid}: valence outside [-1, 1]")
        mode = entry.get("conflict_mode")
        if mode is not None and mode not in CONFLICT_MODES:
            raise ValueError(f"record {rid}: unknown conflict_mode {mode!r}")

        text, audio, visual, present = _load_arrays(base, entry["files"], dims, f"record {rid}")
        t_valid, a_valid = _read_lengths(entry, dims, f"record {rid}")

        history = []
        for j, turn in enumerate(entry.get("history", [])):
            where = f"record {rid} history[{j}]"
            h_text, h_audio, h_visual, h_present = _load_arrays(
                base, turn["files"], dims, where)
            ht, ha = _read_lengths(turn, dims, where)
            history.append(HistoryTurn(h_text, h_audio, h_visual, h_present,
                                       turn["speaker"], ht, ha))

        records.append(UtteranceRecord(
            id=rid, label=int(label), speaker=entry["speaker"],
            text_feats=text, audio_feats=audio,
            visual_feats=visual, visual_present=present,
            history=history, valence=valence, conflict_mode=mode,
            text_valid=t_valid, audio_valid=a_valid))
    return Dataset(dims, records)


def _write_turn_arrays(out_dir: Path, stem: str, text, audio, visual, present) -> dict:
    files = {
        "text": f"{stem}_text.pcmf",
        "audio": f"{stem}_audio.pcmf",
        "visual": f"{stem}_visual.pcmf",
        "visual_present": f"{stem}_present.pcmf",
    }
    write_array(out_dir / files["text"], text)
    write_array(out_dir / files["audio"], audio)
    write_array(out_dir / files["visual"], visual)
    write_array(out_dir / files["visual_present"], present.astype(np.float32))
    return files


def write_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write manifest.json plus one PCMF file per array; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in dataset.records:
        files = _write_turn_arrays(out_dir, rec.id, rec.text_feats, rec.audio_feats,
                                   rec.visual_feats, rec.visual_present)
        history = []
        for j, turn in enumerate(rec.history):
            turn_files = _write_turn_arrays(out_dir, f"{rec.id}_h{j}", turn.text_feats,
                                            turn.audio_feats, turn.visual_feats,
                                            turn.visual_present)
            history.append({
                "speaker": turn.speaker,
                "lengths": {"text": turn.text_valid, "audio": turn.audio_valid},
                "files": turn_files,
            })
        entry = {
            "id": rec.id,
            "label": rec.label,
            "speaker": rec.speaker,
            "valence": None if rec.valence is None else
                       [None if np.isnan(v) else float(v) for v in rec.valence],
            "lengths": {"text": rec.text_valid, "audio": rec.audio_valid},
            "files": files,
            "history": history,
        }
        if rec.conflict_mode is not None:
            entry["conflict_mode"] = rec.conflict_mode
        entries.append(entry)
    manifest = {"dims": dataset.dims.to_dict(), "records": entries}
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest_path


def make_folds(dataset: Dataset, k: int, seed: int) -> list[list[str]]:
    """Disjoint near-equal id partition; order-independent given the same ids."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    ids = sorted(dataset.ids())
    if k > len(ids):
        raise ValueError(f"k={k} exceeds dataset size {len(ids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n, rem = divmod(len(ids), k)
    folds, start = [], 0
    for i in range(k):
        size = n + (1 if i < rem else 0)
        folds.append(shuffled[start:start + size])
        start += size
    return folds

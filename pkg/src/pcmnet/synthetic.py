"""Seeded synthetic incongruity data for controlled end-to-end runs.

Each modality gets one planted unit direction drawn from the seed. A sample
either agrees with itself everywhere (label 0), carries a cross-modal
conflict (text along +direction, audio/visual along -direction, label 1), or
is internally consistent while anti-aligned with its own conversational
history (label 1). Per-modality valence annotations are the planted signs,
so at noise_std=0 every planted quantity is exactly recoverable.
"""

from dataclasses import dataclass

import numpy as np

from .data import CONFLICT_MODES, Dataset, Dims, HistoryTurn, UtteranceRecord
from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int
    conflict_modes: tuple[str, ...]   # one of modal/contextual/none per sample
    noise_std: float
    seed: int
    dims: Dims
    n_speakers: int = 4
    n_history: int = 3                # max history turns per sample

    def validate(self) -> None:
        self.dims.validate()
        if self.n_samples < 1 or len(self.conflict_modes) != self.n_samples:
            raise ConfigError("conflict_modes must list one mode per sample")
        bad = set(self.conflict_modes) - set(CONFLICT_MODES)
        if bad:
            raise ConfigError(f"unknown conflict modes: {sorted(bad)}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.n_speakers < 1:
            raise ConfigError("n_speakers must be >= 1")
        if self.n_history < 1 and "contextual" in self.conflict_modes:
            raise ConfigError("contextual conflicts need n_history >= 1")


def balanced_modes(n: int) -> tuple[str, ...]:
    """Cycle modal/contextual/none so all three modes appear evenly."""
    return tuple(CONFLICT_MODES[i % 3] for i in range(n))


def synth_config_from_dict(data: dict) -> SynthConfig:
    """Build a SynthConfig from a parsed [synth] TOML section."""
    data = dict(data)
    try:
        dims = Dims(**data.pop("dims"))
        n = int(data.pop("n_samples"))
        modes = data.pop("modes", "balanced")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad [synth] section: {exc}") from exc
    if modes == "balanced":
        modes = balanced_modes(n)
    cfg = SynthConfig(n_samples=n, conflict_modes=tuple(modes),
                      noise_std=float(data.pop("noise_std", 0.3)),
                      seed=int(data.pop("seed", 0)), dims=dims,
                      n_speakers=int(data.pop("n_speakers", 4)),
                      n_history=int(data.pop("n_history", 3)))
    if data:
        raise ConfigError(f"unknown keys in [synth]: {sorted(data)}")
    cfg.validate()
    return cfg


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def _sequence(rng, n_rows, valid, direction, sign, noise_std):
    rows = sign * direction[None, :] + noise_std * rng.standard_normal(
        (n_rows, direction.shape[0]))
    rows[valid:] = 0.0
    return rows.astype(np.float32)


def _visual_block(rng, dims: Dims, direction, sign, noise_std):
    present = rng.random((dims.visual_frames, dims.max_subjects)) < 0.85
    if not present.any():
        present[0, 0] = True
    feats = sign * direction[None, None, :] + noise_std * rng.standard_normal(
        (dims.visual_frames, dims.max_subjects, dims.visual_dim))
    feats[~present] = 0.0
    return feats.astype(np.float32), present


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Deterministic dataset from cfg; identical configs give identical bits."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    dims = cfg.dims
    g_text = _unit(rng, dims.text_dim)
    g_audio = _unit(rng, dims.audio_dim)
    g_visual = _unit(rng, dims.visual_dim)

    records = []
    for i, mode in enumerate(cfg.conflict_modes):
        if mode == "modal":
            s_text, s_audio, s_visual = 1.0, -1.0, -1.0
            s_hist, label = 1.0, 1
        elif mode == "contextual":
            s = 1.0 if rng.random() < 0.5 else -1.0
            s_text = s_audio = s_visual = s
            s_hist, label = -s, 1
        else:
            s = 1.0 if rng.random() < 0.5 else -1.0
            s_text = s_audio = s_visual = s
            s_hist, label = s, 0

        t_valid = int(rng.integers(max(1, dims.text_len - 2), dims.text_len + 1))
        a_valid = int(rng.integers(max(1, dims.audio_len - 2), dims.audio_len + 1))
        text = _sequence(rng, dims.text_len, t_valid, g_text, s_text, cfg.noise_std)
        audio = _sequence(rng, dims.audio_len, a_valid, g_audio, s_audio, cfg.noise_std)
        visual, present = _visual_block(rng, dims, g_visual, s_visual, cfg.noise_std)

        n_hist = int(rng.integers(1, cfg.n_history + 1))
        history = []
        for _ in range(n_hist):
            ht = int(rng.integers(max(1, dims.text_len - 2), dims.text_len + 1))
            ha = int(rng.integers(max(1, dims.audio_len - 2), dims.audio_len + 1))
            h_text = _sequence(rng, dims.text_len, ht, g_text, s_hist, cfg.noise_std)
            h_audio = _sequence(rng, dims.audio_len, ha, g_audio, s_hist, cfg.noise_std)
            h_visual, h_present = _visual_block(rng, dims, g_visual, s_hist, cfg.noise_std)
            speaker = f"spk{rng.integers(0, cfg.n_speakers)}"
            history.append(HistoryTurn(h_text, h_audio, h_visual, h_present,
                                       speaker, ht, ha))

        records.append(UtteranceRecord(
            id=f"synth{i:05d}", label=label,
            speaker=f"spk{rng.integers(0, cfg.n_speakers)}",
            text_feats=text, audio_feats=audio,
            visual_feats=visual, visual_present=present,
            history=history,
            valence=np.array([s_text, s_audio, s_visual], dtype=np.float32),
            conflict_mode=mode, text_valid=t_valid, audio_valid=a_valid))
    return Dataset(dims, records)

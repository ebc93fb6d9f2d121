"""Run configuration: model/training/ablation knobs and TOML loading."""

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class ModelConfig:
    """Architecture hyperparameters. Defaults follow the reference setup."""

    d_enc: int = 512            # shared semantic width
    d_p: int = 16               # polarity space width
    d_pol_hidden: int = 64      # hidden width of the polarity perceptrons
    d_z: int = 128              # inconsistency representation width
    d_score: int = 128          # fusion scorer hidden width
    n_heads: int = 4
    dropout: float = 0.1
    ln_eps: float = 1e-5
    alpha_mic_init: float = 0.5
    alpha_mac_init: float = 0.0
    alpha_ctx_init: float = 0.1
    leaky_slope: float = 0.2
    window: int = 3             # intra-modal sliding window in the pair graphs
    l_mac: int = 2              # pair-graph convolution depth
    k_gnn: int = 2              # conversation graph depth
    j_history: int = 3          # history turns per conversation graph
    share_context_encoder: bool = True

    def validate(self) -> None:
        if self.d_enc % self.n_heads != 0:
            raise ConfigError(f"d_enc={self.d_enc} not divisible by n_heads={self.n_heads}")
        for name in ("d_enc", "d_p", "d_pol_hidden", "d_z", "d_score", "n_heads",
                     "l_mac", "j_history", "window"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.k_gnn < 0:
            raise ConfigError("k_gnn must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.ln_eps <= 0:
            raise ConfigError("ln_eps must be > 0")


@dataclass
class AblationConfig:
    """Switches that remove one mechanism each; all off for the full model."""

    no_polarity_modulation: bool = False   # alpha_mic=0, alpha_ctx=0, unit cross edges
    no_atomic: bool = False                # drop the micro-conflict fusion branch
    no_contextual: bool = False            # drop the conversational fusion branch
    tripartite_graph: bool = False         # single merged T-A-V graph
    direct_fusion: bool = False            # feed pair-graph features into fusion
    no_valence_loss: bool = False
    no_contrastive: bool = False


@dataclass
class TrainingConfig:
    lr: float = 5e-5
    weight_decay: float = 0.01
    batch_size: int = 16
    max_epochs: int = 15
    e_warm: int = 5
    patience: int = 5
    early_stopping: bool = True
    tau: float = 0.07
    lambda_cls_warm: float = 1.0
    lambda_con_warm: float = 1.0
    lambda_val: float = 1.0
    lambda_cls: float = 0.2
    lambda_con: float = 0.8
    k_folds: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.max_epochs < 1 or self.e_warm < 0:
            raise ConfigError("max_epochs must be >= 1 and e_warm >= 0")
        for name in ("lambda_cls_warm", "lambda_con_warm", "lambda_val",
                     "lambda_cls", "lambda_con"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")


@dataclass
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> None:
        self.model.validate()
        self.training.validate()

    def to_dict(self) -> dict:
        return asdict(self)


def _build_section(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> Config:
    known = {"model", "training", "ablation", "synth"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    cfg = Config(
        model=_build_section(ModelConfig, data.get("model", {}), "model"),
        training=_build_section(TrainingConfig, data.get("training", {}), "training"),
        ablation=_build_section(AblationConfig, data.get("ablation", {}), "ablation"),
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> Config:
    """Read a TOML config file; missing keys fall back to defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(data)

"""Polarity-congruity multimodal sarcasm detection, desk-scale and verifiable."""

__version__ = "0.1.0"

from .config import AblationConfig, Config, ModelConfig, TrainingConfig, load_config
from .data import Dataset, Dims, load_dataset, make_folds, write_dataset
from .network import Batch, PCMNet, collate
from .synthetic import SynthConfig, balanced_modes, generate_synthetic

__all__ = [
    "AblationConfig", "Batch", "Config", "Dataset", "Dims", "ModelConfig",
    "PCMNet", "SynthConfig", "TrainingConfig", "balanced_modes", "collate",
    "generate_synthetic", "load_config", "load_dataset", "make_folds",
    "write_dataset",
]

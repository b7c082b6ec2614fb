"""Budgeted pair-verification annotation engine over embedding datasets."""

from . import kernels
from .dataset import EmbeddingDataset, LabelAccessError, load_dataset, write_dataset
from .engine import Engine, EngineConfig, replay_run, run_simulation
from .synth import make_synthetic

__version__ = "0.1.0"
__all__ = [
    "EmbeddingDataset",
    "Engine",
    "EngineConfig",
    "LabelAccessError",
    "kernels",
    "load_dataset",
    "make_synthetic",
    "replay_run",
    "run_simulation",
    "write_dataset",
]

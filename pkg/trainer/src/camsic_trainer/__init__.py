"""Toy-scale trainer producing codec weight containers and parity
fixtures."""

from .config import ModelSpec, TrainConfig
from .model import CodecModel
from .train import Trainer

__all__ = ["ModelSpec", "TrainConfig", "CodecModel", "Trainer"]
__version__ = "0.1.0"

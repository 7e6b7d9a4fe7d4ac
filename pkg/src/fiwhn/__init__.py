"""Lightweight hybrid CNN/transformer single-image super-resolution toolkit."""

from .config import (
    ConfigError,
    ETConfig,
    FIWHNConfig,
    PatchSpec,
    TOPOLOGIES,
    TrainConfig,
    WDIBConfig,
)
from .network import FIWHN, build_model
from .resize import bicubic_resize

__all__ = [
    "ConfigError",
    "ETConfig",
    "FIWHN",
    "FIWHNConfig",
    "PatchSpec",
    "TOPOLOGIES",
    "TrainConfig",
    "WDIBConfig",
    "bicubic_resize",
    "build_model",
]

"""Dataclass configuration records for the network, data pipeline, and training."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised when a configuration record is internally inconsistent."""


TOPOLOGIES = ("ct_series", "tc_series", "parallel", "interactive")

# short CLI aliases
TOPOLOGY_ALIASES = {
    "ct": "ct_series",
    "tc": "tc_series",
    "parallel": "parallel",
    "interactive": "interactive",
    "ct_series": "ct_series",
    "tc_series": "tc_series",
}


@dataclass
class WDIBConfig:
    """Hyperparameters of one wide-residual distillation interaction block.

    `use_wide`, `use_scf`, `use_distill_gate` and `use_adaptive` are ablation
    switches; the default configuration enables everything.
    """

    channels: int = 32
    distill_ratio: float = 0.5
    wide_channels: int = 120
    ccl_reduction: int = 4
    use_wide: bool = True
    use_scf: bool = True
    use_distill_gate: bool = True
    use_adaptive: bool = True

    def __post_init__(self):
        if self.channels < 2:
            raise ConfigError(f"need at least 2 channels, got {self.channels}")
        if not 0.0 < self.distill_ratio < 1.0:
            raise ConfigError(f"distill_ratio must be in (0, 1), got {self.distill_ratio}")
        if self.use_wide and self.wide_channels <= self.channels:
            raise ConfigError(
                f"wide_channels ({self.wide_channels}) must exceed channels ({self.channels})"
            )
        if self.ccl_reduction < 1:
            raise ConfigError("ccl_reduction must be >= 1")
        if self.distill_channels < 1 or self.remain_channels < 1:
            raise ConfigError(
                f"split of {self.channels} channels at ratio {self.distill_ratio} "
                "leaves an empty part"
            )

    @property
    def distill_channels(self) -> int:
        # round half toward the remain side so remain keeps the larger half
        return math.ceil(self.channels * self.distill_ratio - 0.5)

    @property
    def remain_channels(self) -> int:
        return self.channels - self.distill_channels


@dataclass
class ETConfig:
    """Hyperparameters of one efficient transformer block."""

    dim: int = 144
    heads: int = 4
    splits: int = 4
    mlp_ratio: float = 2.0

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim ({self.dim}) must be divisible by heads ({self.heads})")
        if self.splits < 1:
            raise ConfigError("splits must be >= 1")
        if self.mlp_ratio <= 0:
            raise ConfigError("mlp_ratio must be positive")

    @property
    def d_k(self) -> int:
        return self.dim // self.heads

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.dim * self.mlp_ratio))


@dataclass
class FIWHNConfig:
    """Full-model configuration: block counts, widths, and topology."""

    scale: int = 4
    cnn_channels: int = 32
    t_dim: int = 144
    n_fswg: int = 2
    wdibs_per_fswg: int = 3
    n_et: int = 2
    topology: str = "interactive"
    use_block_interaction: bool = True
    wdib: WDIBConfig = field(default_factory=WDIBConfig)
    et: ETConfig = field(default_factory=ETConfig)

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be one of 2, 3, 4, got {self.scale}")
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}, expected one of {TOPOLOGIES}")
        if self.n_fswg < 1 or self.wdibs_per_fswg < 1 or self.n_et < 1:
            raise ConfigError("n_fswg, wdibs_per_fswg and n_et must all be >= 1")
        if self.use_block_interaction and self.wdibs_per_fswg >= 2 and self.cnn_channels % 2:
            raise ConfigError(
                f"cnn_channels ({self.cnn_channels}) must be even: the group fusion "
                "uses two convolution groups"
            )
        if self.wdib.channels != self.cnn_channels:
            raise ConfigError(
                f"wdib.channels ({self.wdib.channels}) must equal cnn_channels ({self.cnn_channels})"
            )
        if self.et.dim != self.t_dim:
            raise ConfigError(f"et.dim ({self.et.dim}) must equal t_dim ({self.t_dim})")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FIWHNConfig":
        d = dict(d)
        d.pop("train", None)  # config files may carry a training section
        if "wdib" in d and isinstance(d["wdib"], dict):
            d["wdib"] = WDIBConfig(**d["wdib"])
        if "et" in d and isinstance(d["et"], dict):
            d["et"] = ETConfig(**d["et"])
        if "topology" in d:
            alias = TOPOLOGY_ALIASES.get(d["topology"])
            if alias is None:
                raise ConfigError(f"unknown topology {d['topology']!r}")
            d["topology"] = alias
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "FIWHNConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class PatchSpec:
    """Random crop/augmentation policy for training patches."""

    lr_patch: int = 48
    rotations: tuple = (0, 90, 180, 270)
    flips: tuple = ("none", "horizontal")
    seed: int = 0

    def __post_init__(self):
        if self.lr_patch < 1:
            raise ConfigError("lr_patch must be >= 1")
        bad = set(self.rotations) - {0, 90, 180, 270}
        if bad:
            raise ConfigError(f"unsupported rotations {sorted(bad)}")
        bad = set(self.flips) - {"none", "horizontal"}
        if bad:
            raise ConfigError(f"unsupported flips {sorted(bad)}")


@dataclass
class TrainConfig:
    """Optimizer and schedule settings.

    `epochs` / `steps_per_epoch` define the cosine horizon; the desk-scale
    default is step-based (steps_per_epoch=None derives it from corpus size).
    """

    lr0: float = 5e-4
    lr_min: float = 6.25e-6
    epochs: int = 1
    steps_per_epoch: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 16
    seed: int = 0
    checkpoint_every: int = 100
    lr_patch: int = 48
    grad_clip: float | None = None

    def __post_init__(self):
        if not 0 < self.lr_min < self.lr0:
            raise ConfigError("need 0 < lr_min < lr0")
        if self.epochs < 0 or self.batch < 1:
            raise ConfigError("epochs must be >= 0 and batch >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

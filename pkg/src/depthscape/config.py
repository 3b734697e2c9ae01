"""Model and run configuration objects.

A model is described by the resolution chain of its layers: the base latent
lives at base_latent_shape (default 64x8x8) and each layer doubles the
spatial size until output_resolution is reached.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path
from typing import Any

from .conditions import DEFAULT_LABEL_SET

MODES = ("s2d", "sd2i", "s2i")

# Per-layer latent/feature widths for the common resolutions; other
# resolutions fall back to 64-wide layers with a 32-wide final layer.
DEFAULT_CHANNELS = {
    64: (64, 64, 64, 32),
    256: (64, 64, 64, 64, 32, 16),
}


def default_channels(output_resolution: int, base_resolution: int = 8) -> tuple[int, ...]:
    if output_resolution in DEFAULT_CHANNELS and base_resolution == 8:
        return DEFAULT_CHANNELS[output_resolution]
    n = int(math.log2(output_resolution // base_resolution)) + 1
    if n == 1:
        return (64,)
    return (64,) * (n - 1) + (32,)


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    output_resolution: int = 256
    base_latent_shape: tuple[int, int, int] = (64, 8, 8)
    z_dim: int = 512
    channels: tuple[int, ...] = ()
    label_set: tuple[str, ...] = DEFAULT_LABEL_SET

    # Loss weights; r1_gamma is the gradient-penalty strength.
    adv_weight: float = 1.0
    r1_gamma: float = 10.0
    r1_interval: int = 16
    perceptual_weight: float = 1.0
    domain_weight: float = 1.0
    recon_weight: float = 1.0
    # Opt-in anti-collapse hinge (0 = off, the default loss set): penalizes
    # the perceptual spread between same-condition samples falling below the
    # floor; it never rewards spread beyond it, so realism keeps the upper
    # hand. Measured with the training feature extractor, i.e. the same
    # space the diversity metric reports.
    diversity_weight: float = 0.0
    diversity_floor: float = 0.03

    # Optimizer settings.
    adam_betas: tuple[float, float] = (0.0, 0.99)
    learning_rate: float = 0.002
    batch_size: int = 8

    def __post_init__(self):
        c0, h0, w0 = self.base_latent_shape
        if h0 != w0 or h0 & (h0 - 1) or h0 < 8:
            raise ValueError(f"base latent grid must be square power-of-two >= 8, got {h0}x{w0}")
        res = self.output_resolution
        if res < h0 or res & (res - 1):
            raise ValueError(f"output resolution must be a power of two >= {h0}, got {res}")
        channels = tuple(self.channels) or default_channels(res, h0)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "base_latent_shape", (c0, h0, w0))
        object.__setattr__(self, "label_set", tuple(self.label_set))
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))
        if len(channels) != self.num_layers:
            raise ValueError(
                f"{self.num_layers} layers ({h0}->{res}) need {self.num_layers} channel "
                f"widths, got {len(channels)}"
            )
        if channels[0] != c0:
            raise ValueError(
                f"first layer width must equal base latent channels ({c0}), got {channels[0]}"
            )

    @property
    def num_layers(self) -> int:
        return int(math.log2(self.output_resolution // self.base_latent_shape[1])) + 1

    @property
    def num_labels(self) -> int:
        return len(self.label_set)

    def layer_resolution(self, i: int) -> int:
        if not 0 <= i < self.num_layers:
            raise IndexError(f"layer index {i} out of range [0, {self.num_layers})")
        return self.base_latent_shape[1] * (2**i)

    def latent_shape(self, i: int) -> tuple[int, int, int]:
        r = self.layer_resolution(i)
        return (self.channels[i], r, r)

    def condition_channels(self, mode: str) -> int:
        check_mode(mode)
        return self.num_labels + (1 if mode == "sd2i" else 0)

    def output_channels(self, mode: str) -> int:
        check_mode(mode)
        return 1 if mode == "s2d" else 3

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("base_latent_shape", "channels", "label_set", "adam_betas"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """One training or evaluation run: mode + model + data + budget."""

    mode: str = "sd2i"
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    dataset_path: str = ""
    steps: int = 2000
    seed: int = 0
    out_dir: str = "runs/default"
    checkpoint_interval: int = 500
    log_interval: int = 10

    def __post_init__(self):
        check_mode(self.mode)
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["model"] = self.model.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        kwargs = dict(data)
        if "model" in kwargs:
            kwargs["model"] = ModelConfig.from_dict(kwargs["model"])
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig | ModelConfig) -> str:
    return hashlib.sha256(canonical_json(config.to_dict()).encode()).hexdigest()[:16]

"""Conditional generator with spatial latent codes.

Three cooperating stages: condition preparation (a mapping network for the
random spatial latent plus per-layer condition blocks), condition fusion
(element-wise addition of the running latent with each layer's condition
latent, followed by a convolution, growing 2x per layer), and synthesis
(per-pixel modulation of a feature pyramid by the fused latents, with
per-pixel noise for fine stochastic detail).

The same architecture serves two instantiations: seg+depth -> image ("sd2i",
3-channel output in [-1, 1]) and seg -> depth ("s2d", 1-channel output in
[0, 1]). The seg -> image ablation ("s2i") drops the depth channel.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .conditions import DepthMap, ImageTensor, SegmentationMap, validate_pair
from .config import ModelConfig, check_mode
from .layers import init_affine_, instance_norm, lrelu, seed_affine_modules_, upsample2

NOISE_STRENGTH_INIT = 0.1
MAPPING_HIDDEN = 512
MAPPING_DEPTH = 4


class MappingNetwork(nn.Module):
    """Maps a flat z vector to the base spatial latent (C0, H0, W0)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c0, h0, w0 = cfg.base_latent_shape
        self.out_shape = (c0, h0, w0)
        dims = [cfg.z_dim] + [MAPPING_HIDDEN] * MAPPING_DEPTH
        self.hidden = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims[:-1], dims[1:]))
        self.out = nn.Linear(MAPPING_HIDDEN, c0 * h0 * w0)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 2:
            raise ValueError(f"z must be (B, z_dim), got shape {tuple(z.shape)}")
        x = z
        for layer in self.hidden:
            x = lrelu(layer(x))
        return self.out(x).view(z.shape[0], *self.out_shape)


class ConditionStack(nn.Module):
    """Per-layer condition blocks: resize, concatenate, convolve.

    Layer i sees the conditions resized to its own resolution (labels with
    nearest-neighbor, depth with area averaging) and produces the condition
    latent for that layer with a single convolution.
    """

    def __init__(self, cfg: ModelConfig, mode: str):
        super().__init__()
        self.cfg = cfg
        self.mode = check_mode(mode)
        in_ch = cfg.condition_channels(mode)
        self.blocks = nn.ModuleList(
            nn.Conv2d(in_ch, cfg.channels[i], 3, padding=1) for i in range(cfg.num_layers)
        )

    def stacked_conditions(self, seg_onehot: torch.Tensor,
                           depth: torch.Tensor | None) -> torch.Tensor:
        if seg_onehot.ndim != 4 or seg_onehot.shape[1] != self.cfg.num_labels:
            raise ValueError(
                f"segmentation must be (B, {self.cfg.num_labels}, H, W), "
                f"got {tuple(seg_onehot.shape)}"
            )
        if self.mode == "sd2i":
            if depth is None:
                raise ValueError("sd2i conditioning requires a depth map")
            if depth.shape[2:] != seg_onehot.shape[2:]:
                raise ValueError("segmentation / depth resolution mismatch")
            return torch.cat([seg_onehot, depth], dim=1)
        if depth is not None:
            raise ValueError(f"{self.mode} conditioning takes no depth map")
        return seg_onehot

    def forward(self, seg_onehot: torch.Tensor, depth: torch.Tensor | None,
                layer_index: int) -> torch.Tensor:
        cond = self.stacked_conditions(seg_onehot, depth)
        return self.blocks[layer_index](self.resized(cond, layer_index))

    def resized(self, cond: torch.Tensor, layer_index: int) -> torch.Tensor:
        size = self.cfg.layer_resolution(layer_index)
        if cond.shape[2] == size:
            return cond
        labels = cond[:, : self.cfg.num_labels]
        rest = cond[:, self.cfg.num_labels:]
        labels = F.interpolate(labels, size=(size, size), mode="nearest")
        if rest.shape[1] == 0:
            return labels
        rest = F.adaptive_avg_pool2d(rest, (size, size))
        return torch.cat([labels, rest], dim=1)


class FusionStack(nn.Module):
    """Merges the running latent with each layer's condition latent.

    fuse(i): element-wise addition then a convolution, yielding the fused
    latent of layer i. advance(i): 2x upsampling plus a projection so the
    chain keeps doubling until it reaches the output resolution.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        ch = cfg.channels
        self.fuse_convs = nn.ModuleList(
            nn.Conv2d(c, c, 3, padding=1) for c in ch
        )
        self.advance_convs = nn.ModuleList(
            nn.Conv2d(ch[i], ch[i + 1], 3, padding=1) for i in range(len(ch) - 1)
        )

    def fuse(self, prev: torch.Tensor, cond_latent: torch.Tensor,
             layer_index: int) -> torch.Tensor:
        if prev.shape != cond_latent.shape:
            raise ValueError(
                f"fusion shape mismatch at layer {layer_index}: "
                f"{tuple(prev.shape)} vs {tuple(cond_latent.shape)}"
            )
        return lrelu(self.fuse_convs[layer_index](prev + cond_latent))

    def advance(self, fused: torch.Tensor, layer_index: int) -> torch.Tensor:
        return lrelu(self.advance_convs[layer_index](upsample2(fused)))


class SynthesisStack(nn.Module):
    """Feature pyramid modulated per pixel by the fused latents.

    Each layer derives a spatial (scale, bias) pair from its latent with a
    1x1 convolution, applies it to the normalized features, convolves, and
    adds scaled per-pixel noise. The head squashes to the output range.
    """

    def __init__(self, cfg: ModelConfig, out_channels: int, bounded_unit: bool):
        super().__init__()
        self.cfg = cfg
        self.bounded_unit = bounded_unit  # True: output in [0,1]; else [-1,1]
        ch = cfg.channels
        c0, h0, w0 = cfg.base_latent_shape
        self.const = nn.Parameter(torch.empty(c0, h0, w0))
        self.affines = nn.ModuleList(nn.Conv2d(c, 2 * c, 1) for c in ch)
        self.convs = nn.ModuleList(nn.Conv2d(c, c, 3, padding=1) for c in ch)
        self.noise_strength = nn.ParameterList(
            nn.Parameter(torch.tensor(NOISE_STRENGTH_INIT)) for _ in ch
        )
        self.up_convs = nn.ModuleList(
            nn.Conv2d(ch[i], ch[i + 1], 3, padding=1) for i in range(len(ch) - 1)
        )
        self.to_out = nn.Conv2d(ch[-1], out_channels, 1)

    def forward(self, latents: list[torch.Tensor],
                noise: list[torch.Tensor]) -> torch.Tensor:
        cfg = self.cfg
        if len(latents) != cfg.num_layers or len(noise) != cfg.num_layers:
            raise ValueError(
                f"need {cfg.num_layers} latents and noise grids, got "
                f"{len(latents)} / {len(noise)}"
            )
        batch = latents[0].shape[0]
        feat = self.const.unsqueeze(0).expand(batch, -1, -1, -1)
        for i, (latent, grain) in enumerate(zip(latents, noise)):
            expect = (batch, *cfg.latent_shape(i))
            if tuple(latent.shape) != expect:
                raise ValueError(f"latent {i} must be {expect}, got {tuple(latent.shape)}")
            if tuple(grain.shape) != (batch, 1, expect[2], expect[3]):
                raise ValueError(f"noise {i} has shape {tuple(grain.shape)}")
            scale, bias = self.affines[i](latent).chunk(2, dim=1)
            feat = instance_norm(feat) * (1.0 + scale) + bias
            feat = lrelu(self.convs[i](feat) + grain * self.noise_strength[i])
            if i + 1 < cfg.num_layers:
                feat = lrelu(self.up_convs[i](upsample2(feat)))
        out = torch.tanh(self.to_out(feat))
        return (out + 1.0) * 0.5 if self.bounded_unit else out


class LandscapeGenerator(nn.Module):
    """Full conditional generator for one translation mode."""

    def __init__(self, cfg: ModelConfig, mode: str, init_seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.mode = check_mode(mode)
        self.mapping = MappingNetwork(cfg)
        self.conditions = ConditionStack(cfg, mode)
        self.fusion = FusionStack(cfg)
        self.synthesis = SynthesisStack(
            cfg, cfg.output_channels(mode), bounded_unit=(mode == "s2d")
        )
        self.seed_parameters_(init_seed)

    def seed_parameters_(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        seed_affine_modules_(self, gen)
        with torch.no_grad():
            self.synthesis.const.copy_(
                torch.randn(self.synthesis.const.shape, generator=gen)
            )
            for strength in self.synthesis.noise_strength:
                strength.fill_(NOISE_STRENGTH_INIT)
            # Start modulation near identity and the head away from tanh
            # saturation.
            for affine in self.synthesis.affines:
                init_affine_(affine, gen, gain=0.1)
            init_affine_(self.synthesis.to_out, gen, gain=0.2)

    def map_latent(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.cfg.z_dim:
            raise ValueError(f"z must have {self.cfg.z_dim} entries, got {z.shape[-1]}")
        return self.mapping(z)

    def condition_latent(self, seg_onehot: torch.Tensor, depth: torch.Tensor | None,
                         layer_index: int) -> torch.Tensor:
        return self.conditions(seg_onehot, depth, layer_index)

    def intermediate_latents(self, z: torch.Tensor, seg_onehot: torch.Tensor,
                             depth: torch.Tensor | None) -> list[torch.Tensor]:
        """The fused latent of every layer, base resolution first."""
        running = self.map_latent(z)
        fused = []
        for i in range(self.cfg.num_layers):
            cond = self.condition_latent(seg_onehot, depth, i)
            running = self.fusion.fuse(running, cond, i)
            fused.append(running)
            if i + 1 < self.cfg.num_layers:
                running = self.fusion.advance(running, i)
        return fused

    def draw_noise(self, batch: int, seed: int) -> list[torch.Tensor]:
        gen = torch.Generator().manual_seed(seed)
        return [
            torch.randn(batch, 1, r, r, generator=gen)
            for r in (self.cfg.layer_resolution(i) for i in range(self.cfg.num_layers))
        ]

    def zero_noise(self, batch: int) -> list[torch.Tensor]:
        return [
            torch.zeros(batch, 1, r, r)
            for r in (self.cfg.layer_resolution(i) for i in range(self.cfg.num_layers))
        ]

    def forward(self, z: torch.Tensor, seg_onehot: torch.Tensor,
                depth: torch.Tensor | None,
                noise: list[torch.Tensor] | None = None) -> torch.Tensor:
        latents = self.intermediate_latents(z, seg_onehot, depth)
        if noise is None:
            noise = self.zero_noise(z.shape[0])
        return self.synthesis(latents, noise)


def to_condition_tensors(
    seg: SegmentationMap, depth: DepthMap | None
) -> tuple[torch.Tensor, torch.Tensor | None]:
    seg_t = torch.from_numpy(seg.one_hot()).unsqueeze(0)
    depth_t = None
    if depth is not None:
        validate_pair(seg, depth)
        depth_t = torch.from_numpy(np.array(depth.values)).unsqueeze(0)
    return seg_t, depth_t


def generate(
    generator: LandscapeGenerator,
    seg: SegmentationMap,
    depth: DepthMap | None,
    z: np.ndarray,
    noise_seed: int,
) -> ImageTensor | DepthMap:
    """Single-sample forward pass from domain types to a domain type.

    Pure in (seg, depth, z, noise_seed, weights): identical arguments yield
    bitwise-identical outputs.
    """
    cfg = generator.cfg
    if seg.height != cfg.output_resolution or seg.width != cfg.output_resolution:
        raise ValueError(
            f"segmentation is {seg.height}x{seg.width}, model expects "
            f"{cfg.output_resolution}x{cfg.output_resolution}"
        )
    if tuple(seg.label_set) != tuple(cfg.label_set):
        raise ValueError("segmentation label set does not match the model's label set")
    z_t = torch.from_numpy(np.asarray(z, dtype=np.float32)).reshape(1, -1)
    seg_t, depth_t = to_condition_tensors(seg, depth if generator.mode == "sd2i" else None)
    with torch.no_grad():
        out = generator(z_t, seg_t, depth_t, generator.draw_noise(1, noise_seed))
    arr = out[0].numpy()
    if generator.mode == "s2d":
        return DepthMap(arr)
    return ImageTensor(arr)

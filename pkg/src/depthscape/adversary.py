"""Discriminator and encoder, trained jointly with the generator.

The discriminator scores realness of a sample concatenated channel-wise with
its conditions. The encoder inverts a sample into one spatial latent per
generator layer, so reconstructions can be synthesized directly through the
synthesis stack.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig, check_mode
from .layers import lrelu, seed_affine_modules_

_DISC_BASE = 32
_DISC_MAX = 128
_ENC_WIDTH = 64


class Discriminator(nn.Module):
    """Strided conv stack mapping (sample, conditions) to a realness logit."""

    def __init__(self, cfg: ModelConfig, mode: str, init_seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.mode = check_mode(mode)
        in_ch = cfg.output_channels(mode) + cfg.condition_channels(mode)
        self.in_channels = in_ch
        self.stem = nn.Conv2d(in_ch, _DISC_BASE, 3, padding=1)
        downs = []
        ch, res = _DISC_BASE, cfg.output_resolution
        while res > 4:
            nxt = min(ch * 2, _DISC_MAX)
            downs.append(nn.Conv2d(ch, nxt, 3, stride=2, padding=1))
            ch, res = nxt, res // 2
        self.downs = nn.ModuleList(downs)
        self.head_conv = nn.Conv2d(ch, ch, 3, padding=1)
        self.head = nn.Linear(ch * res * res, 1)
        self.seed_parameters_(init_seed)

    def seed_parameters_(self, seed: int) -> None:
        seed_affine_modules_(self, torch.Generator().manual_seed(seed))

    def forward(self, x: torch.Tensor, seg_onehot: torch.Tensor,
                depth: torch.Tensor | None) -> torch.Tensor:
        """Realness logits, shape (B,)."""
        parts = [x, seg_onehot]
        if self.mode == "sd2i":
            if depth is None:
                raise ValueError("sd2i discriminator requires a depth channel")
            parts.append(depth)
        elif depth is not None:
            raise ValueError(f"{self.mode} discriminator takes no depth channel")
        inp = torch.cat(parts, dim=1)
        if inp.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {inp.shape[1]}")
        feat = lrelu(self.stem(inp))
        for down in self.downs:
            feat = lrelu(down(feat))
        feat = lrelu(self.head_conv(feat))
        return self.head(feat.flatten(1)).squeeze(1)


class Encoder(nn.Module):
    """Conv pyramid producing one latent per generator layer.

    Output shapes mirror the generator's fused-latent shapes exactly, base
    resolution first, so synthesis(encode(x)) is well-formed for any config.
    """

    def __init__(self, cfg: ModelConfig, mode: str, init_seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.mode = check_mode(mode)
        self.stem = nn.Conv2d(cfg.output_channels(mode), _ENC_WIDTH, 3, padding=1)
        n = cfg.num_layers
        self.downs = nn.ModuleList(
            nn.Conv2d(_ENC_WIDTH, _ENC_WIDTH, 3, stride=2, padding=1)
            for _ in range(n - 1)
        )
        # heads[i] emits the latent of layer i from the trunk feature at
        # layer i's resolution.
        self.heads = nn.ModuleList(
            nn.Conv2d(_ENC_WIDTH, cfg.channels[i], 3, padding=1) for i in range(n)
        )
        self.seed_parameters_(init_seed)

    def seed_parameters_(self, seed: int) -> None:
        seed_affine_modules_(self, torch.Generator().manual_seed(seed))

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        res = self.cfg.output_resolution
        if x.shape[2:] != (res, res):
            raise ValueError(f"encoder expects {res}x{res} inputs, got {tuple(x.shape[2:])}")
        feat = lrelu(self.stem(x))
        latents = [self.heads[self.cfg.num_layers - 1](feat)]
        for k, down in enumerate(self.downs):
            feat = lrelu(down(feat))
            latents.append(self.heads[self.cfg.num_layers - 2 - k](feat))
        latents.reverse()
        return latents

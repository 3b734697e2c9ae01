"""Deterministic feature extractors for perceptual distances and moment metrics.

The default extractor is an untrained convolutional pyramid whose weights are
drawn once from a documented seed, so every score in this repo is reproducible
without downloading pretrained networks. Relative comparisons (self-distance
zero, monotonicity under perturbation) survive the substitution; absolute
values are not comparable with scores computed under other feature spaces.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

DEFAULT_FEATURE_SEED = 77
_NORM_EPS = 1e-10


class FeatureStack(nn.Module):
    """Strided conv pyramid exposing per-layer feature maps and pooled vectors."""

    def __init__(self, in_channels: int, widths: tuple[int, ...] = (16, 32, 64),
                 seed: int = DEFAULT_FEATURE_SEED):
        super().__init__()
        self.extractor_id = f"seeded-conv-s{seed}-in{in_channels}-" + "x".join(map(str, widths))
        gen = torch.Generator().manual_seed(seed)
        convs = []
        prev = in_channels
        for width in widths:
            conv = nn.Conv2d(prev, width, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  * (prev * 9) ** -0.5)
                conv.bias.zero_()
            convs.append(conv)
            prev = width
        self.convs = nn.ModuleList(convs)
        self.feature_dim = sum(widths)
        for p in self.parameters():
            p.requires_grad_(False)

    def layer_features(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return feats

    def pooled(self, x: torch.Tensor) -> torch.Tensor:
        """(B, feature_dim) global-average-pooled concatenation of all layers."""
        return torch.cat([f.mean(dim=(2, 3)) for f in self.layer_features(x)], dim=1)


class ModuleFeatureAdapter(nn.Module):
    """Adapter slot for an external (e.g. pretrained) backbone.

    Wraps any module that maps an image batch to a list of feature maps so it
    can stand in for FeatureStack in perceptual distances and moment metrics.
    """

    def __init__(self, backbone: nn.Module, extractor_id: str, feature_dim: int):
        super().__init__()
        self.backbone = backbone
        self.extractor_id = extractor_id
        self.feature_dim = feature_dim

    def layer_features(self, x: torch.Tensor) -> list[torch.Tensor]:
        return self.backbone(x)

    def pooled(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat([f.mean(dim=(2, 3)) for f in self.layer_features(x)], dim=1)


def _unit_normalize(feat: torch.Tensor) -> torch.Tensor:
    # Unit channel norm at every spatial location.
    return feat / torch.sqrt((feat**2).sum(dim=1, keepdim=True) + _NORM_EPS)


def perceptual_distance(x: torch.Tensor, y: torch.Tensor, extractor) -> torch.Tensor:
    """Per-sample perceptual distance (B,) between same-shape batches.

    Mean over layers of the mean squared difference of unit-normalized
    feature maps.
    """
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    dists = None
    feats_x = extractor.layer_features(x)
    feats_y = extractor.layer_features(y)
    for fx, fy in zip(feats_x, feats_y):
        d = ((_unit_normalize(fx) - _unit_normalize(fy)) ** 2).mean(dim=(1, 2, 3))
        dists = d if dists is None else dists + d
    return dists / len(feats_x)


def perceptual_loss(x: torch.Tensor, y: torch.Tensor, extractor) -> torch.Tensor:
    """Scalar perceptual loss averaged over the batch."""
    return perceptual_distance(x, y, extractor).mean()

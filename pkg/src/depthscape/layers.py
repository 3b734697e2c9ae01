"""Small shared building blocks for the networks in this package."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

LRELU_SLOPE = 0.2


def lrelu(x: torch.Tensor) -> torch.Tensor:
    return F.leaky_relu(x, LRELU_SLOPE)


def init_affine_(module: nn.Module, gen: torch.Generator, gain: float = 1.0) -> None:
    """Fan-in scaled normal init for a Conv2d/Linear, bias zeroed."""
    with torch.no_grad():
        fan_in = module.weight[0].numel()
        module.weight.copy_(torch.randn(module.weight.shape, generator=gen)
                            * gain * fan_in**-0.5)
        if module.bias is not None:
            module.bias.zero_()


def seed_affine_modules_(root: nn.Module, gen: torch.Generator) -> None:
    """Re-draw every Conv2d/Linear parameter of root from gen, in module order."""
    for m in root.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            init_affine_(m, gen)


def upsample2(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="nearest")


def instance_norm(x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    mean = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
    return (x - mean) / torch.sqrt(var + eps)

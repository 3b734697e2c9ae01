"""Training losses: non-saturating adversarial pair, R1 gradient penalty,
perceptual and reconstruction terms, and the domain-guided term that keeps
encoder outputs inside the generator's domain."""

from __future__ import annotations

from typing import Callable

import torch
import torch.nn.functional as F

from .features import perceptual_loss


def adversarial_g_loss(fake_logit: torch.Tensor) -> torch.Tensor:
    return F.softplus(-fake_logit).mean()


def adversarial_d_loss(real_logit: torch.Tensor, fake_logit: torch.Tensor) -> torch.Tensor:
    return F.softplus(-real_logit).mean() + F.softplus(fake_logit).mean()


def adversarial_losses(real_logit: torch.Tensor,
                       fake_logit: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(generator loss, discriminator loss) for one batch of logits."""
    return adversarial_g_loss(fake_logit), adversarial_d_loss(real_logit, fake_logit)


def r1_penalty(discriminate: Callable[[torch.Tensor], torch.Tensor],
               real: torch.Tensor, gamma: float = 10.0) -> torch.Tensor:
    """(gamma/2) * E[ ||grad_x D(x)||^2 ] over a batch of real samples.

    The gradient is taken of the summed logits; for a per-sample
    discriminator this equals each sample's own logit gradient, and it stays
    well-defined when the discriminator couples the batch (stddev channel).
    """
    real = real.detach().requires_grad_(True)
    logits = discriminate(real)
    (grad,) = torch.autograd.grad(logits.sum(), real, create_graph=True)
    return 0.5 * gamma * grad.flatten(1).pow(2).sum(dim=1).mean()


def domain_guided_loss(synthesize: Callable[[list[torch.Tensor]], torch.Tensor],
                       encode: Callable[[torch.Tensor], list[torch.Tensor]],
                       discriminate: Callable[[torch.Tensor], torch.Tensor],
                       real: torch.Tensor) -> torch.Tensor:
    """Generator-side adversarial loss on the reconstruction of real samples."""
    recon = synthesize(encode(real))
    return adversarial_g_loss(discriminate(recon))


def reconstruction_loss(x: torch.Tensor, x_rec: torch.Tensor, extractor) -> torch.Tensor:
    """Mean absolute error plus perceptual distance between x and x_rec."""
    if x.shape != x_rec.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_rec.shape)}")
    return (x - x_rec).abs().mean() + perceptual_loss(x, x_rec, extractor)

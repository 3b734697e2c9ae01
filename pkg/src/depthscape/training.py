"""Joint training of generator, encoder and discriminator.

One step alternates a discriminator update (non-saturating loss plus lazy R1
on real samples) with a generator+encoder update (adversarial, perceptual,
domain-guided and reconstruction terms). Every step is deterministic given
the state's RNG, and every loss value is checked finite before the update is
applied.
"""

from __future__ import annotations

import csv
import dataclasses
import time
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .adversary import Discriminator, Encoder
from .config import ModelConfig, RunConfig, check_mode
from .data import Dataset, Triplet
from .features import FeatureStack, perceptual_distance, perceptual_loss
from .generator import LandscapeGenerator
from .losses import adversarial_d_loss, adversarial_g_loss, r1_penalty

CHECKPOINT_FORMAT_VERSION = 1

LOSS_FIELDS = (
    "adv_g", "adv_d", "r1", "perceptual", "domain_guided",
    "reconstruction", "recon_l1", "diversity", "total_g", "total_d",
)


class NonFiniteLossError(RuntimeError):
    def __init__(self, term: str, value: float, step: int):
        self.term = term
        super().__init__(f"non-finite loss term {term!r} ({value}) at step {step}")


@dataclasses.dataclass(frozen=True)
class LossReport:
    step: int
    adv_g: float
    adv_d: float
    r1: float
    perceptual: float
    domain_guided: float
    reconstruction: float
    recon_l1: float
    diversity: float
    total_g: float
    total_d: float


@dataclasses.dataclass
class Batch:
    target: torch.Tensor                 # images (B,3,H,W) or depths (B,1,H,W)
    seg: torch.Tensor                    # one-hot (B,L,H,W)
    depth_cond: torch.Tensor | None      # (B,1,H,W) for sd2i, else None


def make_batch(triplets: Sequence[Triplet], mode: str) -> Batch:
    check_mode(mode)
    seg = torch.from_numpy(np.stack([t.seg.one_hot() for t in triplets]))
    depth = torch.from_numpy(np.stack([np.array(t.depth.values) for t in triplets]))
    if mode == "s2d":
        return Batch(target=depth, seg=seg, depth_cond=None)
    images = torch.from_numpy(np.stack([np.array(t.image.values) for t in triplets]))
    return Batch(target=images, seg=seg, depth_cond=depth if mode == "sd2i" else None)


class TrainState:
    """Mutable training state: networks, optimizers, RNG, step counter."""

    def __init__(self, cfg: ModelConfig, mode: str, generator: LandscapeGenerator,
                 discriminator: Discriminator, encoder: Encoder,
                 extractor: FeatureStack, rng: torch.Generator, step: int = 0):
        self.cfg = cfg
        self.mode = check_mode(mode)
        self.generator = generator
        self.discriminator = discriminator
        self.encoder = encoder
        self.extractor = extractor
        self.rng = rng
        self.step = step
        ge_params = list(generator.parameters()) + list(encoder.parameters())
        self.opt_ge = torch.optim.Adam(ge_params, lr=cfg.learning_rate, betas=cfg.adam_betas)
        self.opt_d = torch.optim.Adam(discriminator.parameters(), lr=cfg.learning_rate,
                                      betas=cfg.adam_betas)

    @classmethod
    def from_config(cls, cfg: ModelConfig, mode: str, seed: int = 0) -> "TrainState":
        out_ch = cfg.output_channels(mode)
        return cls(
            cfg, mode,
            generator=LandscapeGenerator(cfg, mode, init_seed=seed),
            discriminator=Discriminator(cfg, mode, init_seed=seed + 1),
            encoder=Encoder(cfg, mode, init_seed=seed + 2),
            extractor=FeatureStack(out_ch),
            rng=torch.Generator().manual_seed(seed + 3),
        )

    def reconstruct(self, target: torch.Tensor) -> torch.Tensor:
        """Noise-free synthesis from encoder latents, the G(E(x)) path."""
        latents = self.encoder(target)
        return self.generator.synthesis(latents, self.generator.zero_noise(target.shape[0]))

    def _randn(self, *shape: int) -> torch.Tensor:
        return torch.randn(*shape, generator=self.rng)

    def _draw_noise(self, batch: int) -> list[torch.Tensor]:
        return [
            self._randn(batch, 1, r, r)
            for r in (self.cfg.layer_resolution(i) for i in range(self.cfg.num_layers))
        ]


def _finite(term: str, value: torch.Tensor, step: int) -> float:
    scalar = float(value.detach())
    if not np.isfinite(scalar):
        raise NonFiniteLossError(term, scalar, step)
    return scalar


def train_step(state: TrainState, batch: Batch) -> tuple[TrainState, LossReport]:
    cfg = state.cfg
    gen, disc, enc = state.generator, state.discriminator, state.encoder
    x, seg, depth_cond = batch.target, batch.seg, batch.depth_cond
    b = x.shape[0]

    # Discriminator update. Reconstructions count as fakes too; without that
    # pressure the domain-guided term is trivially satisfiable off-manifold.
    z = state._randn(b, cfg.z_dim)
    noise = state._draw_noise(b)
    with torch.no_grad():
        fake = gen(z, seg, depth_cond, noise)
        rec = state.reconstruct(x)
    real_logit = disc(x, seg, depth_cond)
    fake_logit = disc(fake, seg, depth_cond)
    rec_logit = disc(rec, seg, depth_cond)
    d_adv = adversarial_d_loss(real_logit, fake_logit) / 2 \
        + adversarial_d_loss(real_logit, rec_logit) / 2
    d_adv_v = _finite("adv_d", d_adv, state.step)
    d_total = d_adv
    r1_v = 0.0
    if state.step % cfg.r1_interval == 0:
        penalty = r1_penalty(lambda v: disc(v, seg, depth_cond), x, cfg.r1_gamma)
        r1_v = _finite("r1", penalty, state.step)
        # Lazy regularization: scale by the interval to keep the effective
        # strength of the penalty unchanged.
        d_total = d_total + penalty * cfg.r1_interval
    state.opt_d.zero_grad(set_to_none=True)
    d_total.backward()
    state.opt_d.step()

    # Generator + encoder update.
    z2 = state._randn(b, cfg.z_dim)
    fake2 = gen(z2, seg, depth_cond, state._draw_noise(b))
    adv_g = adversarial_g_loss(disc(fake2, seg, depth_cond))
    x_rec = state.reconstruct(x)
    domain = adversarial_g_loss(disc(x_rec, seg, depth_cond))
    percep = perceptual_loss(x, x_rec, state.extractor)
    l1 = (x - x_rec).abs().mean()
    recon = l1 + percep
    g_total = (cfg.adv_weight * adv_g + cfg.perceptual_weight * percep
               + cfg.domain_weight * domain + cfg.recon_weight * recon)
    spread = torch.zeros(())
    if cfg.diversity_weight > 0:
        z3 = state._randn(b, cfg.z_dim)
        fake3 = gen(z3, seg, depth_cond, state._draw_noise(b))
        spread = perceptual_distance(fake2, fake3, state.extractor).mean()
        g_total = g_total + cfg.diversity_weight * torch.relu(
            cfg.diversity_floor - spread)
    report = LossReport(
        step=state.step,
        adv_g=_finite("adv_g", adv_g, state.step),
        adv_d=d_adv_v,
        r1=r1_v,
        perceptual=_finite("perceptual", percep, state.step),
        domain_guided=_finite("domain_guided", domain, state.step),
        reconstruction=_finite("reconstruction", recon, state.step),
        recon_l1=_finite("recon_l1", l1, state.step),
        diversity=_finite("diversity", spread, state.step),
        total_g=_finite("total_g", g_total, state.step),
        total_d=_finite("total_d", d_total, state.step),
    )
    state.opt_ge.zero_grad(set_to_none=True)
    g_total.backward()
    state.opt_ge.step()
    state.step += 1
    return state, report


def evaluate_reconstruction_l1(state: TrainState, dataset: Dataset,
                               max_items: int | None = None) -> float:
    """Mean absolute reconstruction error of the noise-free G(E(x)) path."""
    items = dataset.triplets[:max_items] if max_items else dataset.triplets
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(items), state.cfg.batch_size):
            chunk = items[start:start + state.cfg.batch_size]
            batch = make_batch(chunk, state.mode)
            rec = state.reconstruct(batch.target)
            total += float((batch.target - rec).abs().mean()) * len(chunk)
            count += len(chunk)
    return total / count


class LossLog:
    """Appends one CSV row per step: step, each loss, wall-time."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._start = time.monotonic()
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh).writerow(("step",) + LOSS_FIELDS + ("wall_time",))

    def append(self, report: LossReport) -> None:
        row = [report.step]
        row += [f"{getattr(report, name):.6f}" for name in LOSS_FIELDS]
        row.append(f"{time.monotonic() - self._start:.3f}")
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(row)


def fit(run: RunConfig, dataset: Dataset, state: TrainState | None = None,
        log_path: str | Path | None = None,
        checkpoint_path: str | Path | None = None,
        stop_when: "callable | None" = None) -> tuple[TrainState, list[LossReport]]:
    """Run the training loop for run.steps steps (or until stop_when(state)).

    stop_when, if given, is polled every 25 steps.
    """
    cfg = run.model
    if state is None:
        state = TrainState.from_config(cfg, run.mode, run.seed)
    log = LossLog(log_path) if log_path else None
    stream = dataset.shuffled_indices(run.seed)
    reports = []
    for _ in range(run.steps):
        triplets = [dataset[next(stream)] for _ in range(cfg.batch_size)]
        state, report = train_step(state, make_batch(triplets, run.mode))
        reports.append(report)
        if log:
            log.append(report)
        if checkpoint_path and state.step % run.checkpoint_interval == 0:
            save_checkpoint(state, checkpoint_path)
        if stop_when and state.step % 25 == 0 and stop_when(state):
            break
    if checkpoint_path:
        save_checkpoint(state, checkpoint_path)
    return state, reports


# ---------------------------------------------------------------------------
# Checkpoint container: a versioned dict with the model config and named
# parameter blobs for all three networks plus optimizer and RNG state.
# ---------------------------------------------------------------------------


def save_checkpoint(state: TrainState, path: str | Path) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "mode": state.mode,
        "model_config": state.cfg.to_dict(),
        "step": state.step,
        "generator": state.generator.state_dict(),
        "discriminator": state.discriminator.state_dict(),
        "encoder": state.encoder.state_dict(),
        "opt_ge": state.opt_ge.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "rng_state": state.rng.get_state(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def _load_payload(path: str | Path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    return payload


def load_checkpoint(path: str | Path) -> TrainState:
    payload = _load_payload(path)
    cfg = ModelConfig.from_dict(payload["model_config"])
    mode = payload["mode"]
    state = TrainState.from_config(cfg, mode)
    state.generator.load_state_dict(payload["generator"])
    state.discriminator.load_state_dict(payload["discriminator"])
    state.encoder.load_state_dict(payload["encoder"])
    state.opt_ge.load_state_dict(payload["opt_ge"])
    state.opt_d.load_state_dict(payload["opt_d"])
    state.rng.set_state(payload["rng_state"])
    state.step = payload["step"]
    return state


@dataclasses.dataclass
class InferenceBundle:
    """A generator ready for inference, as loaded from a checkpoint."""

    generator: LandscapeGenerator
    cfg: ModelConfig
    mode: str
    step: int = 0

    @classmethod
    def from_checkpoint(cls, path: str | Path) -> "InferenceBundle":
        payload = _load_payload(path)
        cfg = ModelConfig.from_dict(payload["model_config"])
        mode = payload["mode"]
        generator = LandscapeGenerator(cfg, mode)
        generator.load_state_dict(payload["generator"])
        generator.eval()
        return cls(generator=generator, cfg=cfg, mode=mode, step=payload["step"])

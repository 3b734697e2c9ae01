"""Evaluation harness: feature-moment distance, sample diversity, depth accuracy.

Scores are computed in the feature space of a deterministic extractor (see
features.py); published absolute values from pretrained feature spaces are
not comparable and are not targets here. All metrics are deterministic given
seeds and the extractor id.
"""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .conditions import DepthMap, ImageTensor, SegmentationMap
from .data import Dataset, Triplet, estimate_depth_from_image
from .depth_edit import segment_mean_depth
from .features import FeatureStack, perceptual_distance
from .generator import LandscapeGenerator
from .training import InferenceBundle, make_batch

_COV_TOL = 1e-8


def _psd_sqrt(mat: np.ndarray, tol: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    floor = -tol * max(1.0, float(np.abs(vals).max()))
    if vals.min() < floor:
        raise ValueError(
            f"matrix is not positive semi-definite within tolerance "
            f"(min eigenvalue {vals.min():.3e})"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(mu1: np.ndarray, cov1: np.ndarray,
                     mu2: np.ndarray, cov2: np.ndarray) -> float:
    """Squared Frechet distance between two Gaussians.

    ||mu1 - mu2||^2 + Tr(cov1 + cov2 - 2 (cov1 cov2)^(1/2)), with the matrix
    square root taken by eigendecomposition; eigenvalues within -1e-8 of zero
    are clipped, anything more negative is an error.
    """
    mu1, mu2 = np.asarray(mu1, float).ravel(), np.asarray(mu2, float).ravel()
    cov1, cov2 = np.atleast_2d(np.asarray(cov1, float)), np.atleast_2d(np.asarray(cov2, float))
    for cov in (cov1, cov2):
        if not np.allclose(cov, cov.T, atol=1e-8):
            raise ValueError("covariance matrix is not symmetric")
    cov1 = (cov1 + cov1.T) / 2
    cov2 = (cov2 + cov2.T) / 2
    root1 = _psd_sqrt(cov1, _COV_TOL)
    # Tr((cov1 cov2)^(1/2)) computed via the symmetric similar form.
    inner = root1 @ cov2 @ root1
    inner = (inner + inner.T) / 2
    cross = np.trace(_psd_sqrt(inner, 1e-5))
    dist = float(np.sum((mu1 - mu2) ** 2) + np.trace(cov1) + np.trace(cov2) - 2 * cross)
    return max(dist, 0.0)


def _as_batch(samples) -> torch.Tensor:
    if isinstance(samples, torch.Tensor):
        return samples
    arrays = []
    for s in samples:
        if isinstance(s, (ImageTensor, DepthMap)):
            arrays.append(np.array(s.values))
        else:
            arrays.append(np.asarray(s, dtype=np.float32))
    return torch.from_numpy(np.stack(arrays))


def feature_moments(samples, extractor) -> tuple[np.ndarray, np.ndarray]:
    batch = _as_batch(samples)
    with torch.no_grad():
        feats = extractor.pooled(batch).numpy().astype(np.float64)
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    if feats.shape[0] <= feats.shape[1]:
        # Diagonal loading keeps small-set covariances usable; applied to
        # both sides of every comparison.
        cov = cov + 1e-6 * np.eye(feats.shape[1])
    return mu, cov


def fid(real_samples, fake_samples, extractor) -> float:
    """Frechet distance between feature-moment fits of two sample sets."""
    mu_r, cov_r = feature_moments(real_samples, extractor)
    mu_f, cov_f = feature_moments(fake_samples, extractor)
    return frechet_distance(mu_r, cov_r, mu_f, cov_f)


def sample_outputs(generator: LandscapeGenerator, seg: SegmentationMap,
                   depth: DepthMap | None, count: int, seed: int) -> torch.Tensor:
    """count outputs for fixed conditions, distinct (z, noise) per sample."""
    gen = torch.Generator().manual_seed(seed)
    seg_t = torch.from_numpy(seg.one_hot()).unsqueeze(0).expand(count, -1, -1, -1)
    depth_t = None
    if generator.mode == "sd2i":
        if depth is None:
            raise ValueError("sd2i sampling requires a depth map")
        depth_t = (torch.from_numpy(np.array(depth.values)).unsqueeze(0)
                   .expand(count, -1, -1, -1))
    z = torch.randn(count, generator.cfg.z_dim, generator=gen)
    noise = [
        torch.randn(count, 1, r, r, generator=gen)
        for r in (generator.cfg.layer_resolution(i)
                  for i in range(generator.cfg.num_layers))
    ]
    with torch.no_grad():
        return generator(z, seg_t, depth_t, noise)


def diversity_lpips(generator: LandscapeGenerator, seg: SegmentationMap,
                    depth: DepthMap | None, k: int, seed: int, extractor) -> float:
    """Mean perceptual distance over all k(k-1)/2 unordered sample pairs."""
    if k < 2:
        raise ValueError("diversity needs k >= 2 samples")
    samples = sample_outputs(generator, seg, depth, k, seed)
    ii, jj = np.triu_indices(k, 1)
    with torch.no_grad():
        dists = perceptual_distance(samples[ii], samples[jj], extractor)
    return float(dists.mean())


def depth_rmse(ref: DepthMap | np.ndarray, est: DepthMap | np.ndarray) -> float:
    """Root-mean-square depth error on the 0-255 scale."""
    a = ref.values if isinstance(ref, DepthMap) else np.asarray(ref)
    b = est.values if isinstance(est, DepthMap) else np.asarray(est)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)) * 255.0)


def rank_agreement(ref_depth: DepthMap, est_depth: DepthMap, seg: SegmentationMap) -> float:
    """Fraction of present-label pairs whose mean-depth order matches."""
    ref_means = segment_mean_depth(ref_depth, seg)
    est_means = segment_mean_depth(est_depth, seg)
    labels = sorted(ref_means)
    if len(labels) < 2:
        return 1.0
    agree, total = 0, 0
    for idx, a in enumerate(labels):
        for b in labels[idx + 1:]:
            total += 1
            if (ref_means[a] - ref_means[b]) * (est_means[a] - est_means[b]) >= 0:
                agree += 1
    return agree / total


@dataclasses.dataclass(frozen=True)
class EvalReport:
    model: str
    mode: str
    fid: float
    lpips_diversity: float
    depth_rmse: float
    depth_order_agreement: float
    extractor_id: str
    seed: int
    n_items: int

    def row(self) -> list:
        return [
            self.model, self.mode, f"{self.fid:.4f}", f"{self.lpips_diversity:.5f}",
            f"{self.depth_rmse:.4f}", f"{self.depth_order_agreement:.4f}",
            self.extractor_id, self.seed, self.n_items,
        ]


EVAL_CSV_HEADER = [
    "model", "mode", "fid", "lpips_diversity", "depth_rmse",
    "depth_order_agreement", "extractor_id", "seed", "n_items",
]


def write_eval_csv(reports: Sequence[EvalReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVAL_CSV_HEADER)
        for report in reports:
            writer.writerow(report.row())


def generate_for_triplet(bundle: InferenceBundle, triplet: Triplet,
                         seed: int) -> torch.Tensor:
    depth = triplet.depth if bundle.mode == "sd2i" else None
    return sample_outputs(bundle.generator, triplet.seg, depth, 1, seed)[0]


def evaluate_model(bundle: InferenceBundle, test_set: Dataset, extractor,
                   seed: int = 0, diversity_k: int = 10,
                   diversity_conditions: int = 8,
                   model_name: str = "model") -> EvalReport:
    """Full evaluation: FID, sample diversity, depth RMSE, depth-order agreement.

    Depth accuracy compares against the dataset's analytic depth; for image
    models the depth of a synthesized image is read back through the haze
    model (see data.estimate_depth_from_image).
    """
    if len(test_set) == 0:
        raise ValueError("test set is empty")
    mode = bundle.mode
    fakes, rmses, agreements = [], [], []
    for idx, triplet in enumerate(test_set):
        out = generate_for_triplet(bundle, triplet, seed + idx)
        fakes.append(out)
        if mode == "s2d":
            est = DepthMap(out.numpy())
        else:
            est = estimate_depth_from_image(out.numpy())
        rmses.append(depth_rmse(triplet.depth, est))
        agreements.append(rank_agreement(triplet.depth, est, triplet.seg))
    real_batch = make_batch(test_set.triplets, "s2d" if mode == "s2d" else "s2i").target
    fid_value = fid(real_batch, torch.stack(fakes), extractor)

    diversities = []
    for idx, triplet in enumerate(test_set.triplets[:diversity_conditions]):
        depth = triplet.depth if mode == "sd2i" else None
        diversities.append(
            diversity_lpips(bundle.generator, triplet.seg, depth,
                            diversity_k, seed + 10_000 + idx, extractor)
        )
    return EvalReport(
        model=model_name,
        mode=mode,
        fid=fid_value,
        lpips_diversity=float(np.mean(diversities)),
        depth_rmse=float(np.mean(rmses)),
        depth_order_agreement=float(np.mean(agreements)),
        extractor_id=extractor.extractor_id,
        seed=seed,
        n_items=len(test_set),
    )


def default_extractor(mode: str) -> FeatureStack:
    return FeatureStack(in_channels=1 if mode == "s2d" else 3)

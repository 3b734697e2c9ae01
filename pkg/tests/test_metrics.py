import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from depthscape.conditions import DepthMap
from depthscape.config import ModelConfig
from depthscape.features import FeatureStack
from depthscape.generator import LandscapeGenerator
from depthscape.metrics import (
    EVAL_CSV_HEADER,
    depth_rmse,
    diversity_lpips,
    evaluate_model,
    fid,
    frechet_distance,
    rank_agreement,
    sample_outputs,
    write_eval_csv,
)
from depthscape.training import InferenceBundle


class TestFrechetDistance:
    def test_identical_gaussians_zero(self):
        mu = np.array([1.0, -2.0])
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert frechet_distance(mu, cov, mu, cov) == pytest.approx(0.0, abs=1e-9)

    def test_unit_gaussians_shifted_by_one(self):
        assert frechet_distance([0.0], [[1.0]], [1.0], [[1.0]]) == \
            pytest.approx(1.0, abs=1e-9)

    def test_2d_mean_shift(self):
        eye = np.eye(2)
        value = frechet_distance([0.0, 0.0], eye, [3.0, 4.0], eye)
        assert value == pytest.approx(25.0, abs=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(20, 3))
        b = rng.normal(size=(30, 3)) + 0.5
        args_a = a.mean(0), np.cov(a, rowvar=False)
        args_b = b.mean(0), np.cov(b, rowvar=False)
        assert frechet_distance(*args_a, *args_b) == \
            pytest.approx(frechet_distance(*args_b, *args_a), rel=1e-9)

    def test_non_psd_rejected(self):
        with pytest.raises(ValueError, match="positive semi-definite"):
            frechet_distance([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]],
                             [0.0, 0.0], np.eye(2))

    def test_asymmetric_matrix_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            frechet_distance([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]],
                             [0.0, 0.0], np.eye(2))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_nonnegative_for_sampled_moments(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(12, 4))
        b = rng.normal(size=(12, 4))
        value = frechet_distance(a.mean(0), np.cov(a, rowvar=False) + 1e-6 * np.eye(4),
                                 b.mean(0), np.cov(b, rowvar=False) + 1e-6 * np.eye(4))
        assert value >= 0.0


class TestFid:
    def test_self_fid_below_1e6(self, rng):
        extractor = FeatureStack(3)
        x = torch.from_numpy(rng.uniform(-1, 1, (24, 3, 16, 16)).astype(np.float32))
        assert fid(x, x, extractor) < 1e-6

    def test_strictly_monotone_in_constant_offset(self, rng):
        extractor = FeatureStack(3)
        x = torch.from_numpy(rng.uniform(-0.8, 0.6, (32, 3, 16, 16)).astype(np.float32))
        values = [fid(x, torch.clamp(x + c, -1, 1), extractor)
                  for c in (0.05, 0.1, 0.2)]
        assert values[0] < values[1] < values[2]


class TestDepthRmse:
    def test_identical_zero(self, rng):
        d = rng.uniform(0, 1, (1, 16, 16)).astype(np.float32)
        assert depth_rmse(d, d) == 0.0

    def test_constant_offset_on_255_scale(self):
        a = np.full((1, 16, 16), 0.2, np.float32)
        assert depth_rmse(a, a + 0.1) == pytest.approx(25.5, abs=1e-4)

    def test_symmetric_and_nonnegative(self, rng):
        a = rng.uniform(0, 1, (1, 8, 8))
        b = rng.uniform(0, 1, (1, 8, 8))
        assert depth_rmse(a, b) == pytest.approx(depth_rmse(b, a), rel=1e-12)
        assert depth_rmse(a, b) >= 0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            depth_rmse(np.zeros((1, 8, 8)), np.zeros((1, 16, 16)))


class _ConstantGenerator:
    """Duck-typed generator stub that collapses to a single output."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.mode = "s2i"

    def __call__(self, z, seg, depth, noise):
        return torch.zeros(z.shape[0], 3, self.cfg.output_resolution,
                           self.cfg.output_resolution)


class TestDiversity:
    def test_collapsed_generator_scores_zero(self, tiny_cfg, scene_triplets):
        small = ModelConfig(output_resolution=64, z_dim=16)
        gen = _ConstantGenerator(small)
        extractor = FeatureStack(3)
        seg = scene_triplets[0].seg
        assert diversity_lpips(gen, seg, None, k=4, seed=0, extractor=extractor) == 0.0

    def test_k2_equals_single_pairwise_distance(self, desk_cfg, scene_triplets):
        gen = LandscapeGenerator(desk_cfg, "s2i", init_seed=4)
        extractor = FeatureStack(3)
        seg = scene_triplets[0].seg
        value = diversity_lpips(gen, seg, None, k=2, seed=9, extractor=extractor)
        samples = sample_outputs(gen, seg, None, 2, 9)
        from depthscape.features import perceptual_distance
        direct = float(perceptual_distance(samples[0:1], samples[1:2], extractor))
        assert value == pytest.approx(direct, rel=1e-6)

    def test_k_below_two_rejected(self, desk_cfg, scene_triplets):
        gen = LandscapeGenerator(desk_cfg, "s2i")
        with pytest.raises(ValueError, match="k >= 2"):
            diversity_lpips(gen, scene_triplets[0].seg, None, 1, 0, FeatureStack(3))

    def test_sample_outputs_deterministic(self, desk_cfg, scene_triplets):
        gen = LandscapeGenerator(desk_cfg, "sd2i")
        t = scene_triplets[0]
        a = sample_outputs(gen, t.seg, t.depth, 3, 5)
        b = sample_outputs(gen, t.seg, t.depth, 3, 5)
        assert torch.equal(a, b)


class TestRankAgreement:
    def test_identical_depths_agree_fully(self, scene_triplets):
        t = scene_triplets[0]
        assert rank_agreement(t.depth, t.depth, t.seg) == 1.0

    def test_inverted_depth_disagrees(self, scene_triplets):
        t = scene_triplets[0]
        inverted = DepthMap(1.0 - t.depth.values)
        assert rank_agreement(t.depth, inverted, t.seg) == 0.0


class TestEvaluateModel:
    def test_report_structure_and_csv(self, desk_cfg, scene_dataset, tmp_path):
        state_gen = LandscapeGenerator(desk_cfg, "sd2i", init_seed=1)
        bundle = InferenceBundle(generator=state_gen.eval(), cfg=desk_cfg, mode="sd2i")
        extractor = FeatureStack(3)
        report = evaluate_model(bundle, scene_dataset, extractor, seed=0,
                                diversity_k=2, diversity_conditions=2)
        assert np.isfinite(report.fid)
        assert np.isfinite(report.lpips_diversity)
        assert report.n_items == len(scene_dataset)
        assert report.extractor_id == extractor.extractor_id
        path = tmp_path / "eval.csv"
        write_eval_csv([report], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ",".join(EVAL_CSV_HEADER)
        assert len(lines) == 2

    def test_deterministic(self, desk_cfg, scene_dataset):
        gen = LandscapeGenerator(desk_cfg, "sd2i", init_seed=2).eval()
        bundle = InferenceBundle(generator=gen, cfg=desk_cfg, mode="sd2i")
        extractor = FeatureStack(3)
        a = evaluate_model(bundle, scene_dataset, extractor, seed=3,
                           diversity_k=2, diversity_conditions=1)
        b = evaluate_model(bundle, scene_dataset, extractor, seed=3,
                           diversity_k=2, diversity_conditions=1)
        assert a == b

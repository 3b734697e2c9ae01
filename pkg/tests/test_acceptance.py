"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with -s to see them inline).

The trained-model criteria share session fixtures: an 8-image overfit run,
an s2d desk run on 48 scenes, and a paired s2i/sd2i run differing only in
the depth channel. Thresholds are fixed here, not tuned per run.
"""

import json

import numpy as np
import pytest
import torch
from scipy.stats import wasserstein_distance

from depthscape.adversary import Discriminator, Encoder
from depthscape.cli import main
from depthscape.conditions import DEPTH_LEVELS, DepthMap, save_segmentation_png
from depthscape.config import ModelConfig, RunConfig
from depthscape.data import (
    DEFAULT_LABEL_SET,
    Dataset,
    SceneParams,
    estimate_depth_from_image,
    generate_scene,
)
from depthscape.depth_edit import DepthOrderError, segment_mean_depth, shift_segment_depth
from depthscape.features import FeatureStack
from depthscape.generator import LandscapeGenerator
from depthscape.losses import r1_penalty
from depthscape.metrics import (
    depth_rmse,
    diversity_lpips,
    fid,
    frechet_distance,
    sample_outputs,
)
from depthscape.training import (
    InferenceBundle,
    TrainState,
    evaluate_reconstruction_l1,
    fit,
    make_batch,
    save_checkpoint,
)

from helpers import cond_tensors
from test_depth_edit import grid_aligned_depth, quadrant_pair

OVERFIT_MAX_STEPS = 2000
OVERFIT_L1_LIMIT = 0.08
S2D_STEPS = 400
PAIRED_STEPS = 600
HOLDOUT_COUNT = 32

SKY, MOUNTAIN, ROCK = 0, 1, 6
FOREGROUND = (2, 3, 4, 5)  # tree, grass, earth, water


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[ACCEPTANCE] {name}: {status} {detail}".rstrip())
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def desk_dataset():
    triplets = [generate_scene(SceneParams.sample(0, i), 64) for i in range(48)]
    return Dataset(root=None, label_set=DEFAULT_LABEL_SET, triplets=triplets)


@pytest.fixture(scope="session")
def holdout_triplets():
    return [generate_scene(SceneParams.sample(0, 1000 + i), 64)
            for i in range(HOLDOUT_COUNT)]


@pytest.fixture(scope="session")
def overfit_run(scene_dataset):
    cfg = ModelConfig(output_resolution=64)
    run = RunConfig(mode="sd2i", model=cfg, steps=OVERFIT_MAX_STEPS, seed=0,
                    dataset_path="-")
    state, reports = fit(
        run, scene_dataset,
        stop_when=lambda s: evaluate_reconstruction_l1(s, scene_dataset) < 0.06,
    )
    return state, reports


@pytest.fixture(scope="session")
def s2d_run(desk_dataset):
    cfg = ModelConfig(output_resolution=64)
    run = RunConfig(mode="s2d", model=cfg, steps=S2D_STEPS, seed=0, dataset_path="-")
    state, _ = fit(run, desk_dataset)
    return state


@pytest.fixture(scope="session")
def paired_runs(desk_dataset):
    # Identical configs differing only in the depth channel; the
    # anti-collapse hinge is on for both so diversity stays measurable.
    cfg = ModelConfig(output_resolution=64, diversity_weight=1.0)
    states = {}
    for mode in ("s2i", "sd2i"):
        run = RunConfig(mode=mode, model=cfg, steps=PAIRED_STEPS, seed=0,
                        dataset_path="-")
        states[mode], _ = fit(run, desk_dataset)
    return states


class TestShapeSuite:
    @pytest.mark.parametrize("resolution", [64, 256])
    def test_forward_shape_chain(self, resolution):
        cfg = ModelConfig(output_resolution=resolution)
        gen = LandscapeGenerator(cfg, "sd2i")
        seg, depth = cond_tensors(cfg, batch=1, seed=0)
        z = torch.zeros(1, cfg.z_dim)
        base = gen.map_latent(z)
        ok = tuple(base.shape) == (1, 64, 8, 8)
        latents = gen.intermediate_latents(z, seg, depth)
        expected = [(cfg.channels[i], 8 * 2**i, 8 * 2**i) for i in range(cfg.num_layers)]
        ok &= [tuple(l.shape)[1:] for l in latents] == expected
        out = gen(z, seg, depth)
        ok &= tuple(out.shape) == (1, 3, resolution, resolution)
        s2d = LandscapeGenerator(cfg, "s2d")
        seg_only, _ = cond_tensors(cfg, with_depth=False)
        depth_out = s2d(z, seg_only, None)
        ok &= tuple(depth_out.shape) == (1, 1, resolution, resolution)
        ok &= bool(depth_out.min() >= 0 and depth_out.max() <= 1)
        enc = Encoder(cfg, "sd2i")
        enc_shapes = [tuple(l.shape)[1:] for l in enc(out)]
        ok &= enc_shapes == expected
        report(f"shape-suite-{resolution}", bool(ok),
               f"latent chain {expected}, output {tuple(out.shape)[1:]}")


class TestGradientSuite:
    def test_r1_matches_finite_differences(self):
        cfg = ModelConfig(output_resolution=16, z_dim=32, channels=(64, 32))
        disc = Discriminator(cfg, "sd2i", init_seed=13).double()
        seg, depth = cond_tensors(cfg, batch=2, seed=1)
        seg, depth = seg.double(), depth.double()
        x = torch.randn(2, 3, 16, 16, dtype=torch.float64,
                        generator=torch.Generator().manual_seed(0))
        fn = lambda v: disc(v, seg, depth)
        penalty = float(r1_penalty(fn, x, gamma=2.0).detach())
        h = 1e-4
        sq_norms = []
        with torch.no_grad():
            for b in range(2):
                grads = []
                flat = x[b].flatten()
                for idx in range(flat.numel()):
                    bumped = x.clone()
                    bumped[b].flatten()[idx] += h
                    plus = float(fn(bumped).sum())
                    bumped[b].flatten()[idx] -= 2 * h
                    grads.append((plus - float(fn(bumped).sum())) / (2 * h))
                sq_norms.append(float(np.sum(np.square(grads))))
        expected = float(np.mean(sq_norms))
        rel = abs(penalty - expected) / max(abs(expected), 1e-12)
        report("gradient-suite-r1", rel < 1e-3, f"rel err {rel:.2e}")

    def test_discriminator_input_gradients_match_finite_differences(self):
        cfg = ModelConfig(output_resolution=16, z_dim=32, channels=(64, 32))
        disc = Discriminator(cfg, "sd2i", init_seed=17).double()
        seg, depth = cond_tensors(cfg, seed=2)
        seg, depth = seg.double(), depth.double()
        x = torch.randn(1, 3, 16, 16, dtype=torch.float64,
                        generator=torch.Generator().manual_seed(3)).requires_grad_(True)
        (grad,) = torch.autograd.grad(disc(x, seg, depth).sum(), x)
        h = 1e-4
        worst = 0.0
        rng = np.random.default_rng(0)
        flat = x.detach().flatten()
        with torch.no_grad():
            for idx in rng.choice(flat.numel(), size=64, replace=False):
                bumped = flat.clone()
                bumped[idx] += h
                plus = float(disc(bumped.view(x.shape), seg, depth).sum())
                bumped[idx] -= 2 * h
                minus = float(disc(bumped.view(x.shape), seg, depth).sum())
                fd = (plus - minus) / (2 * h)
                ag = float(grad.flatten()[idx])
                worst = max(worst, abs(fd - ag) / max(abs(fd), abs(ag), 1e-12))
        report("gradient-suite-disc", worst < 1e-3, f"worst rel err {worst:.2e}")


class TestOverfit:
    def test_reconstruction_l1_under_limit(self, overfit_run, scene_dataset):
        state, reports = overfit_run
        l1 = evaluate_reconstruction_l1(state, scene_dataset)
        finite = all(
            np.isfinite([r.adv_g, r.adv_d, r.r1, r.perceptual, r.domain_guided,
                         r.reconstruction, r.total_g, r.total_d]).all()
            for r in reports
        )
        report("overfit-recon-l1",
               l1 < OVERFIT_L1_LIMIT and state.step <= OVERFIT_MAX_STEPS and finite,
               f"L1={l1:.4f} after {state.step} steps, all losses finite={finite}")

    def test_trained_noise_perturbs_less_than_z(self, overfit_run, scene_dataset):
        state, _ = overfit_run
        gen = state.generator
        batch = make_batch(scene_dataset.triplets[:1], "sd2i")
        z_a = torch.randn(1, state.cfg.z_dim, generator=torch.Generator().manual_seed(0))
        z_b = torch.randn(1, state.cfg.z_dim, generator=torch.Generator().manual_seed(1))
        with torch.no_grad():
            noise_gap = float((gen(z_a, batch.seg, batch.depth_cond, gen.draw_noise(1, 5))
                               - gen(z_a, batch.seg, batch.depth_cond,
                                     gen.draw_noise(1, 6))).abs().mean())
            z_gap = float((gen(z_a, batch.seg, batch.depth_cond)
                           - gen(z_b, batch.seg, batch.depth_cond)).abs().mean())
        report("overfit-noise-vs-z", 0 < noise_gap < z_gap,
               f"noise gap {noise_gap:.4f} < z gap {z_gap:.4f}")


class TestMetricOracles:
    def test_frechet_analytic_cases(self):
        ok = abs(frechet_distance([0.5], [[2.0]], [0.5], [[2.0]])) < 1e-9
        ok &= abs(frechet_distance([0.0], [[1.0]], [1.0], [[1.0]]) - 1.0) < 1e-9
        ok &= abs(frechet_distance([0, 0], np.eye(2), [3, 4], np.eye(2)) - 25.0) < 1e-9
        report("metric-frechet-analytic", bool(ok))

    def test_fid_self_and_monotone(self, rng):
        extractor = FeatureStack(3)
        x = torch.from_numpy(rng.uniform(-0.8, 0.6, (32, 3, 16, 16)).astype(np.float32))
        self_fid = fid(x, x, extractor)
        offsets = [fid(x, torch.clamp(x + c, -1, 1), extractor)
                   for c in (0.05, 0.1, 0.2)]
        ok = self_fid < 1e-6 and offsets[0] < offsets[1] < offsets[2]
        report("metric-fid", ok,
               f"self={self_fid:.2e}, offsets={[round(v, 4) for v in offsets]}")

    def test_depth_rmse_constant_offset_exact(self):
        a = np.full((1, 16, 16), 0.2, np.float64)
        value = depth_rmse(a, a + 0.1)
        report("metric-depth-rmse", abs(value - 25.5) < 1e-9, f"value {value!r}")


class TestDepthEditingSuite:
    def test_hand_examples(self):
        seg, depth = quadrant_pair()
        identity = shift_segment_depth(depth, seg, 0, 0.0)
        ok = np.array_equal(identity.values, depth.values)
        accepted = shift_segment_depth(depth, seg, 0, 0.1)
        means = segment_mean_depth(accepted, seg)
        ok &= abs(means[0] - 0.4) < 1e-4 and abs(means[1] - 0.7) < 1e-4
        try:
            shift_segment_depth(depth, seg, 0, 0.5)
            flipped = None
        except DepthOrderError as err:
            flipped = err.flipped_pair
        ok &= flipped == (0, 1)
        report("depth-edit-hand-examples", bool(ok),
               f"means after +0.1: {means[0]:.5f}/{means[1]:.5f}, flip pair {flipped}")

    def test_thousand_shift_revert_round_trips(self):
        seg, _ = quadrant_pair()
        rng = np.random.default_rng(2024)
        restored, attempted = 0, 0
        while attempted < 1000:
            depth = grid_aligned_depth(rng)
            label = int(rng.integers(0, 2))
            delta = float(rng.uniform(-0.25, 0.25))
            step = round(delta * DEPTH_LEVELS)
            units = np.round(
                depth.values[0][seg.labels == label].astype(np.float64) * DEPTH_LEVELS)
            if step == 0 or (units + step).min() < 0 or (units + step).max() > DEPTH_LEVELS:
                continue  # clamped or null edit: outside the criterion
            try:
                shifted = shift_segment_depth(depth, seg, label, delta)
                back = shift_segment_depth(shifted, seg, label, -delta)
            except DepthOrderError:
                continue
            attempted += 1
            if np.array_equal(back.values, depth.values):
                restored += 1
        report("depth-edit-round-trips", restored == 1000, f"{restored}/1000 bitwise")


class TestS2DDistribution:
    def test_holdout_ordering_and_wasserstein(self, s2d_run, holdout_triplets):
        state = s2d_run
        ordered = 0
        gen_means = {i: [] for i in range(7)}
        gt_means = {i: [] for i in range(7)}
        for idx, triplet in enumerate(holdout_triplets):
            out = sample_outputs(state.generator, triplet.seg, None, 1, 9000 + idx)[0]
            generated = DepthMap(out.numpy())
            means = segment_mean_depth(generated, triplet.seg)
            for label, value in means.items():
                gen_means[label].append(value)
            for label, value in segment_mean_depth(triplet.depth, triplet.seg).items():
                gt_means[label].append(value)
            mountain = np.mean([means[k] for k in (MOUNTAIN, ROCK) if k in means])
            fg = np.mean([means[k] for k in FOREGROUND if k in means])
            if means.get(SKY, -1.0) > mountain > fg:
                ordered += 1
        rate = ordered / len(holdout_triplets)
        w1 = {
            label: wasserstein_distance(gen_means[label], gt_means[label])
            for label in range(7) if len(gen_means[label]) >= 5
        }
        worst = max(w1.values())
        detail = (f"ordering {rate:.0%}, W1 " +
                  ", ".join(f"{DEFAULT_LABEL_SET[k]}={v:.3f}" for k, v in w1.items()))
        report("s2d-distribution", rate >= 0.90 and worst < 0.15, detail)


class TestDirectionCheck:
    def test_depth_guidance_restricts_randomness(self, paired_runs, holdout_triplets):
        extractor = FeatureStack(3)
        scores = {}
        for mode, state in paired_runs.items():
            gen = state.generator.eval()
            divs, rmses = [], []
            for idx, triplet in enumerate(holdout_triplets[:8]):
                depth = triplet.depth if mode == "sd2i" else None
                divs.append(diversity_lpips(gen, triplet.seg, depth, k=10,
                                            seed=777 + idx, extractor=extractor))
                sample = sample_outputs(gen, triplet.seg, depth, 1, 555 + idx)[0]
                rmses.append(depth_rmse(triplet.depth,
                                        estimate_depth_from_image(sample.numpy())))
            scores[mode] = (float(np.mean(divs)), float(np.mean(rmses)))
        (s2i_div, s2i_rmse), (sd2i_div, sd2i_rmse) = scores["s2i"], scores["sd2i"]
        ok = sd2i_div <= s2i_div and sd2i_rmse <= s2i_rmse and sd2i_div > 0.01
        report("s2i-vs-sd2i-direction", ok,
               f"diversity {sd2i_div:.4f} <= {s2i_div:.4f}, "
               f"rmse {sd2i_rmse:.2f} <= {s2i_rmse:.2f}")


class TestCliDeterminism:
    def test_all_subcommands_bitwise_reproducible(self, tmp_path, s2d_run, paired_runs):
        root = tmp_path
        s2d_ckpt = root / "s2d.pt"
        sd2i_ckpt = root / "sd2i.pt"
        save_checkpoint(s2d_run, s2d_ckpt)
        save_checkpoint(paired_runs["sd2i"], sd2i_ckpt)

        def tree(dir_path, skip_wall_time=False):
            out = {}
            for p in sorted(dir_path.rglob("*")):
                if not p.is_file():
                    continue
                blob = p.read_bytes()
                if skip_wall_time and p.name == "losses.csv":
                    rows = [",".join(line.split(",")[:-1])
                            for line in blob.decode().splitlines()]
                    blob = "\n".join(rows).encode()
                out[str(p.relative_to(dir_path))] = blob
            return out

        results = {}
        seg_png = root / "seg.png"
        save_segmentation_png(generate_scene(SceneParams.sample(0, 2000), 64).seg,
                              seg_png)
        data_args = ["dataset", "build", "--seed", "11", "--count", "3",
                     "--resolution", "32", "--out"]
        small_model = json.dumps({
            "mode": "s2d",
            "model": {"output_resolution": 32, "z_dim": 64,
                      "channels": [64, 64, 32], "batch_size": 2},
            "steps": 4, "seed": 1,
        })
        config_path = root / "train.json"
        config_path.write_text(small_model)
        for attempt in ("a", "b"):
            base = root / attempt
            assert main(data_args + [str(base / "data")]) == 0
            assert main(["train", "--config", str(config_path),
                         "--dataset", str(base / "data"),
                         "--out", str(base / "train")]) == 0
            assert main(["infer", "--seg", str(seg_png), "--s2d", str(s2d_ckpt),
                         "--sd2i", str(sd2i_ckpt), "--shift", "sky:+0.02",
                         "--seed", "4", "--out", str(base / "infer")]) == 0
            assert main(["eval", "--checkpoint", str(sd2i_ckpt),
                         "--dataset", str(base / "data"), "--diversity-k", "2",
                         "--out", str(base / "eval")]) == 0
            assert main(["analyze-depth", "--dataset", str(base / "data"),
                         "--checkpoint", str(s2d_ckpt),
                         "--out", str(base / "analyze")]) == 0
            results[attempt] = {
                "dataset": tree(base / "data"),
                "train": tree(base / "train", skip_wall_time=True),
                "infer": tree(base / "infer"),
                "eval": tree(base / "eval"),
                "analyze": tree(base / "analyze"),
            }
        mismatches = []
        for sub in results["a"]:
            if sub == "train":
                # Checkpoints hold optimizer wall-clock-free state; compare
                # tensors, and the CSV without its wall-time column.
                csv_a = results["a"][sub].get("losses.csv")
                csv_b = results["b"][sub].get("losses.csv")
                if csv_a != csv_b:
                    mismatches.append("train/losses.csv")
                state_a = torch.load(root / "a/train/checkpoint.pt",
                                     weights_only=False)
                state_b = torch.load(root / "b/train/checkpoint.pt",
                                     weights_only=False)
                for key in state_a["generator"]:
                    if not torch.equal(state_a["generator"][key],
                                       state_b["generator"][key]):
                        mismatches.append(f"train/checkpoint:{key}")
                continue
            if results["a"][sub] != results["b"][sub]:
                mismatches.append(sub)
        report("cli-determinism", not mismatches, f"mismatches: {mismatches or 'none'}")

import json

import numpy as np
import pytest

from depthscape.conditions import validate_pair
from depthscape.data import (
    DEFAULT_LABEL_SET,
    EARTH,
    GRASS,
    MOUNTAIN,
    ROCK,
    SKY,
    SceneParams,
    build_dataset,
    estimate_depth_from_image,
    generate_scene,
    load_dataset,
)
from depthscape.depth_edit import segment_mean_depth
from depthscape.metrics import depth_rmse


class TestSceneParams:
    def test_fully_determined_by_seed_and_index(self):
        assert SceneParams.sample(4, 9) == SceneParams.sample(4, 9)
        assert SceneParams.sample(4, 9) != SceneParams.sample(4, 10)

    def test_ranges(self):
        for i in range(20):
            p = SceneParams.sample(0, i)
            assert 0.30 <= p.horizon <= 0.42
            assert 0.68 <= p.ground_base <= 0.76
            assert all(0.9 <= m <= 1.1 for m in p.haze_multipliers)


class TestGenerateScene:
    def test_sky_depth_exactly_one(self):
        t = generate_scene(SceneParams.sample(0, 1), 64)
        sky = t.seg.labels == SKY
        assert sky.any()
        assert (t.depth.grid()[sky] == 1.0).all()

    def test_layer_mean_depth_ordering(self):
        # far ridge (mountain) > near ridge (rock) > foreground, sky farthest.
        for i in range(6):
            t = generate_scene(SceneParams.sample(1, i), 64)
            means = segment_mean_depth(t.depth, t.seg)
            assert means[SKY] == 1.0
            assert means[SKY] > means[MOUNTAIN]
            if ROCK in means:
                assert means[MOUNTAIN] > means[ROCK]
                fg = [means[k] for k in (GRASS, EARTH) if k in means]
                assert all(means[ROCK] > v for v in fg)

    def test_bitwise_deterministic(self):
        a = generate_scene(SceneParams.sample(2, 3), 32)
        b = generate_scene(SceneParams.sample(2, 3), 32)
        assert np.array_equal(a.image.values, b.image.values)
        assert np.array_equal(a.seg.labels, b.seg.labels)
        assert np.array_equal(a.depth.values, b.depth.values)

    def test_valid_triplet(self):
        t = generate_scene(SceneParams.sample(5, 0), 32)
        validate_pair(t.seg, t.depth)
        assert t.image.values.shape == (3, 32, 32)

    def test_depth_readback_tracks_analytic_depth(self):
        rmses = [
            depth_rmse(t.depth, estimate_depth_from_image(t.image)) / 255.0
            for t in (generate_scene(SceneParams.sample(6, i), 64) for i in range(6))
        ]
        assert float(np.mean(rmses)) < 0.08


class TestBuildDataset:
    def test_file_counts_and_manifest(self, tmp_path):
        manifest = build_dataset(seed=0, count=8, resolution=32, out_dir=tmp_path)
        pngs = list(tmp_path.rglob("*.png"))
        assert len(pngs) == 24
        assert manifest["label_set"] == list(DEFAULT_LABEL_SET)
        assert len(manifest["ids"]) == 8

    def test_idempotent_byte_for_byte(self, tmp_path):
        build_dataset(seed=1, count=3, resolution=16, out_dir=tmp_path)
        before = {p: p.read_bytes() for p in sorted(tmp_path.rglob("*"))if p.is_file()}
        build_dataset(seed=1, count=3, resolution=16, out_dir=tmp_path)
        after = {p: p.read_bytes() for p in sorted(tmp_path.rglob("*")) if p.is_file()}
        assert before == after

    def test_zero_count_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="count"):
            build_dataset(seed=0, count=0, resolution=16, out_dir=tmp_path)

    def test_desk_dataset_builds_under_a_minute(self, tmp_path):
        import time

        start = time.monotonic()
        build_dataset(seed=9, count=48, resolution=64, out_dir=tmp_path)
        assert time.monotonic() - start < 60.0


class TestLoadDataset:
    def test_round_trip_within_quantization(self, tmp_path):
        build_dataset(seed=2, count=4, resolution=32, out_dir=tmp_path)
        dataset = load_dataset(tmp_path)
        assert len(dataset) == 4
        for triplet, index in zip(dataset, range(4)):
            reference = generate_scene(SceneParams.sample(2, index), 32)
            assert np.array_equal(triplet.seg.labels, reference.seg.labels)
            assert np.abs(triplet.depth.values - reference.depth.values).max() \
                <= 1.0 / 65535
            assert np.abs(triplet.image.values - reference.image.values).max() \
                <= 1.0 / 255
            validate_pair(triplet.seg, triplet.depth)

    def test_missing_manifest_reported(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="manifest"):
            load_dataset(tmp_path)

    def test_missing_file_named(self, tmp_path):
        build_dataset(seed=3, count=2, resolution=16, out_dir=tmp_path)
        victim = next((tmp_path / "depth").glob("*.png"))
        victim.unlink()
        with pytest.raises(FileNotFoundError, match="depth"):
            load_dataset(tmp_path)

    def test_corrupt_manifest_id(self, tmp_path):
        build_dataset(seed=4, count=2, resolution=16, out_dir=tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        manifest["ids"].append("ghost")
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(FileNotFoundError, match="ghost"):
            load_dataset(tmp_path)

    def test_shuffled_indices_reproducible(self, tmp_path):
        build_dataset(seed=5, count=4, resolution=16, out_dir=tmp_path)
        dataset = load_dataset(tmp_path)
        stream_a = dataset.shuffled_indices(7)
        stream_b = dataset.shuffled_indices(7)
        a = [next(stream_a) for _ in range(12)]
        b = [next(stream_b) for _ in range(12)]
        assert a == b
        assert sorted(a[:4]) == [0, 1, 2, 3]

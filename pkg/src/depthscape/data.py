"""Procedural landscape triplets (image, segmentation, depth) and dataset I/O.

Scenes are rendered back-to-front (sky, far ridge, optional near ridge,
foreground with grass/earth/trees and an optional water band). Depth is
assigned analytically per layer with sky pinned at 1.0, and the image is the
shaded layer colors blended toward a fixed atmosphere color in proportion to
depth. Because the haze model is known, an approximate depth can be read back
from any rendered (or synthesized) image by inverting the luminance blend;
that inverse is the desk-scale stand-in for a learned depth estimator.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Iterator

import numpy as np

from .conditions import (
    DEFAULT_LABEL_SET,
    DepthMap,
    ImageTensor,
    SegmentationMap,
    ValidationError,
    load_depth_png,
    load_image_png,
    load_segmentation_png,
    save_depth_png,
    save_image_png,
    save_segmentation_png,
    validate_pair,
)

SKY, MOUNTAIN, TREE, GRASS, EARTH, WATER, ROCK = range(7)

# Haze model shared by the renderer and the analytic depth read-back.
ATMOSPHERE = np.array([0.84, 0.88, 0.95], dtype=np.float64)
HAZE_STRENGTH = 0.84
BASE_LUMINANCE = 0.30
SKY_LUMINANCE = 0.88
LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)

_BASE_COLORS = {
    MOUNTAIN: (0.45, 0.42, 0.52),
    TREE: (0.10, 0.32, 0.14),
    GRASS: (0.36, 0.50, 0.20),
    EARTH: (0.48, 0.34, 0.20),
    WATER: (0.22, 0.34, 0.52),
    ROCK: (0.44, 0.40, 0.34),
}

MANIFEST_NAME = "manifest.json"
DATASET_FORMAT_VERSION = 1


@dataclasses.dataclass(frozen=True)
class Triplet:
    image: ImageTensor
    seg: SegmentationMap
    depth: DepthMap
    id: str

    def __post_init__(self):
        validate_pair(self.seg, self.depth)
        if (self.image.height, self.image.width) != (self.seg.height, self.seg.width):
            raise ValidationError(f"triplet {self.id}: image/condition resolution mismatch")


@dataclasses.dataclass(frozen=True)
class SceneParams:
    """Parameters of one procedural scene, fully determined by (seed, index).

    The depth anchors (far_top, drops and gaps) set how far each layer sits;
    they are sampled independently of the layout, so a segmentation map alone
    never reveals the scene's absolute depths. Ordering is preserved by
    construction: sky (1.0) > far ridge > near ridge > foreground.
    """

    seed: int
    index: int
    horizon: float            # far-ridge baseline, fraction of height
    far_amplitude: float
    near_ridge: bool          # second, closer ridge present
    near_base: float
    near_amplitude: float
    ground_base: float
    far_top: float            # depth at the far-ridge crest
    far_drop: float           # depth span of the far-ridge band
    rock_gap: float           # depth gap between far and near ridge bands
    rock_drop: float
    fg_gap: float
    fg_near: float            # depth at the image bottom
    sky_top: tuple[float, float, float]
    sky_horizon: tuple[float, float, float]
    haze_multipliers: tuple[float, ...]   # per label, close to 1
    water: bool
    water_start: float
    water_width: float
    tree_cover: float         # 0 disables trees
    earth_cover: float
    color_jitter: tuple[tuple[float, float, float], ...]

    @classmethod
    def sample(cls, seed: int, index: int) -> "SceneParams":
        rng = np.random.default_rng((seed, index, 7))
        sky_hue = rng.uniform(0.75, 1.0, size=(2, 3))
        return cls(
            seed=seed,
            index=index,
            horizon=float(rng.uniform(0.30, 0.42)),
            far_amplitude=float(rng.uniform(0.05, 0.11)),
            near_ridge=bool(rng.uniform() < 0.65),
            near_base=float(rng.uniform(0.52, 0.62)),
            near_amplitude=float(rng.uniform(0.06, 0.13)),
            ground_base=float(rng.uniform(0.68, 0.76)),
            far_top=float(rng.uniform(0.80, 0.95)),
            far_drop=float(rng.uniform(0.18, 0.30)),
            rock_gap=float(rng.uniform(0.02, 0.06)),
            rock_drop=float(rng.uniform(0.12, 0.22)),
            fg_gap=float(rng.uniform(0.02, 0.05)),
            fg_near=float(rng.uniform(0.02, 0.08)),
            sky_top=tuple(sky_hue[0]),
            sky_horizon=tuple(sky_hue[1]),
            haze_multipliers=tuple(rng.uniform(0.97, 1.03, size=len(DEFAULT_LABEL_SET))),
            water=bool(rng.uniform() < 0.4),
            water_start=float(rng.uniform(0.04, 0.10)),
            water_width=float(rng.uniform(0.05, 0.10)),
            tree_cover=float(rng.uniform(0.0, 0.5) if rng.uniform() < 0.7 else 0.0),
            earth_cover=float(rng.uniform(0.1, 0.35)),
            color_jitter=tuple(
                tuple(rng.uniform(0.85, 1.15, size=3)) for _ in DEFAULT_LABEL_SET
            ),
        )


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def _value_noise_1d(rng: np.random.Generator, n: int, octaves: int = 3,
                    base_freq: int = 4) -> np.ndarray:
    x = (np.arange(n) + 0.5) / n
    out = np.zeros(n)
    amp, total = 1.0, 0.0
    for octave in range(octaves):
        k = base_freq * 2**octave
        vals = rng.uniform(-1.0, 1.0, k + 1)
        pos = x * k
        i0 = np.minimum(pos.astype(np.int64), k - 1)
        t = _smoothstep(pos - i0)
        out += amp * (vals[i0] * (1 - t) + vals[i0 + 1] * t)
        total += amp
        amp *= 0.5
    return out / total


def _value_noise_2d(rng: np.random.Generator, h: int, w: int, freq: int = 6) -> np.ndarray:
    vals = rng.uniform(0.0, 1.0, (freq + 1, freq + 1))
    ys = (np.arange(h) + 0.5) / h * freq
    xs = (np.arange(w) + 0.5) / w * freq
    i0 = np.minimum(ys.astype(np.int64), freq - 1)
    j0 = np.minimum(xs.astype(np.int64), freq - 1)
    ty = _smoothstep(ys - i0)[:, None]
    tx = _smoothstep(xs - j0)[None, :]
    v00 = vals[np.ix_(i0, j0)]
    v01 = vals[np.ix_(i0, j0 + 1)]
    v10 = vals[np.ix_(i0 + 1, j0)]
    v11 = vals[np.ix_(i0 + 1, j0 + 1)]
    top = v00 * (1 - tx) + v01 * tx
    bot = v10 * (1 - tx) + v11 * tx
    return top * (1 - ty) + bot * ty


def _fix_luminance(color: np.ndarray, target: float) -> np.ndarray:
    lum = float(color @ LUMA)
    return np.clip(color * (target / max(lum, 1e-6)), 0.0, 1.0)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Luma of an (3, H, W) array in [0, 1]."""
    return np.tensordot(LUMA, rgb, axes=1)


def generate_scene(params: SceneParams, resolution: int = 64) -> Triplet:
    """Render one deterministic (image, segmentation, depth) triplet."""
    h = w = resolution
    rng = np.random.default_rng((params.seed, params.index, 101))
    ys = ((np.arange(h) + 0.5) / h)[:, None]

    far_line = np.clip(
        params.horizon + params.far_amplitude * _value_noise_1d(rng, w), 0.06, 0.55
    )
    near_line = np.clip(
        params.near_base + params.near_amplitude * _value_noise_1d(rng, w, base_freq=5),
        far_line + 0.04, 0.70,
    )
    ground_line = np.clip(
        params.ground_base + 0.015 * _value_noise_1d(rng, w, octaves=2),
        near_line + 0.03, 0.90,
    )
    if not params.near_ridge:
        near_line = ground_line  # collapse the rock band

    labels = np.full((h, w), GRASS, dtype=np.int64)
    sky_mask = ys < far_line
    mountain_mask = (ys >= far_line) & (ys < near_line)
    rock_mask = (ys >= near_line) & (ys < ground_line)
    labels[sky_mask] = SKY
    labels[mountain_mask] = MOUNTAIN
    labels[rock_mask] = ROCK
    fg_mask = ys >= ground_line

    earth_noise = _value_noise_2d(rng, h, w, freq=5)
    labels[fg_mask & (earth_noise > 1.0 - params.earth_cover)] = EARTH
    tree_noise = _value_noise_2d(rng, h, w, freq=8)
    if params.tree_cover > 0:
        tree_band = fg_mask & (ys < ground_line + 0.10)
        labels[tree_band & (tree_noise > 1.0 - params.tree_cover)] = TREE
    if params.water:
        w0 = ground_line + params.water_start
        water_band = (ys >= w0) & (ys < w0 + params.water_width) & fg_mask
        labels[water_band] = WATER

    # Analytic per-layer depth from the scene's sampled anchors; profiles
    # deliberately keep denominators > 0.
    far_base = params.far_top - params.far_drop
    rock_top = far_base - params.rock_gap
    rock_base = rock_top - params.rock_drop
    fg_top = (rock_base if params.near_ridge else far_base) - params.fg_gap
    depth = np.ones((h, w), dtype=np.float64)
    t_mnt = (ys - far_line) / np.maximum(near_line - far_line, 1e-3)
    depth = np.where(mountain_mask,
                     params.far_top - params.far_drop * np.clip(t_mnt, 0, 1), depth)
    t_rock = (ys - near_line) / np.maximum(ground_line - near_line, 1e-3)
    depth = np.where(rock_mask, rock_top - params.rock_drop * np.clip(t_rock, 0, 1),
                     depth)
    t_fg = (ys - ground_line) / np.maximum(1.0 - ground_line, 1e-3)
    depth = np.where(fg_mask,
                     fg_top - (fg_top - params.fg_near) * np.clip(t_fg, 0, 1), depth)

    # Base colors, luminance-pinned so haze dominates the brightness axis.
    base = np.zeros((3, h, w))
    sky_top = _fix_luminance(np.array(params.sky_top), SKY_LUMINANCE)
    sky_bot = _fix_luminance(np.array(params.sky_horizon), SKY_LUMINANCE)
    sky_t = np.clip(ys / np.maximum(far_line, 1e-3), 0, 1)
    for c in range(3):
        base[c] = sky_top[c] * (1 - sky_t) + sky_bot[c] * sky_t
    shade_1d = np.gradient(far_line)
    shade = 1.0 + 0.22 * np.tanh(np.broadcast_to(shade_1d, (h, w)) * w / 3.0)
    grass_shade = 1.0 + 0.10 * (2.0 * _value_noise_2d(rng, h, w, freq=10) - 1.0)
    for label, color in _BASE_COLORS.items():
        col = _fix_luminance(np.array(color) * np.array(params.color_jitter[label]),
                             BASE_LUMINANCE)
        mask = labels == label
        mult = shade if label in (MOUNTAIN, ROCK) else grass_shade
        for c in range(3):
            base[c] = np.where(mask, np.clip(col[c] * mult, 0, 1), base[c])

    haze_mult = np.asarray(params.haze_multipliers)[labels]
    haze = np.clip(HAZE_STRENGTH * haze_mult * depth, 0.0, 1.0)
    image = base * (1 - haze) + ATMOSPHERE[:, None, None] * haze

    return Triplet(
        image=ImageTensor(np.clip(image, 0, 1) * 2.0 - 1.0),
        seg=SegmentationMap(labels, DEFAULT_LABEL_SET),
        depth=DepthMap(depth[None].astype(np.float32)),
        id=f"scene_{params.seed:08d}_{params.index:05d}",
    )


def estimate_depth_from_image(image: ImageTensor | np.ndarray) -> DepthMap:
    """Approximate depth read back from an image via the haze model.

    Inverts the luminance blend toward the atmosphere color assuming the
    renderer's base luminance; exact for flat-shaded pixels, off by the
    shading amplitude elsewhere. Works on any image, including synthesized
    ones, which is what makes depth accuracy measurable without a learned
    estimator.
    """
    values = image.values if isinstance(image, ImageTensor) else np.asarray(image)
    rgb = (values.astype(np.float64) + 1.0) * 0.5
    atm_lum = float(ATMOSPHERE @ LUMA)
    scale = HAZE_STRENGTH * (atm_lum - BASE_LUMINANCE)
    est = (luminance(rgb) - BASE_LUMINANCE) / scale
    return DepthMap(np.clip(est, 0.0, 1.0)[None].astype(np.float32))


# ---------------------------------------------------------------------------
# On-disk layout: <root>/images/<id>.png, <root>/seg/<id>.png (8-bit indexed),
# <root>/depth/<id>.png (16-bit gray), <root>/manifest.json.
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class Dataset:
    root: Path
    label_set: tuple[str, ...]
    triplets: list[Triplet]

    def __len__(self) -> int:
        return len(self.triplets)

    def __iter__(self) -> Iterator[Triplet]:
        return iter(self.triplets)

    def __getitem__(self, i: int) -> Triplet:
        return self.triplets[i]

    def shuffled_indices(self, seed: int) -> Iterator[int]:
        """Endless reproducible stream of indices, reshuffled each epoch."""
        rng = np.random.default_rng(seed)
        while True:
            for i in rng.permutation(len(self.triplets)):
                yield int(i)


def build_dataset(seed: int, count: int, resolution: int, out_dir: str | Path,
                  start_index: int = 0) -> dict:
    """Write count procedural triplets plus a manifest; deterministic and
    idempotent (re-running rewrites identical bytes)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    root = Path(out_dir)
    for sub in ("images", "seg", "depth"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    ids = []
    for index in range(start_index, start_index + count):
        triplet = generate_scene(SceneParams.sample(seed, index), resolution)
        save_image_png(triplet.image, root / "images" / f"{triplet.id}.png")
        save_segmentation_png(triplet.seg, root / "seg" / f"{triplet.id}.png")
        save_depth_png(triplet.depth, root / "depth" / f"{triplet.id}.png")
        ids.append(triplet.id)
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "seed": seed,
        "start_index": start_index,
        "count": count,
        "resolution": resolution,
        "label_set": list(DEFAULT_LABEL_SET),
        "ids": ids,
    }
    with open(root / MANIFEST_NAME, "w") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"dataset manifest missing: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    label_set = tuple(manifest["label_set"])
    triplets = []
    for item_id in manifest["ids"]:
        paths = {
            "image": root / "images" / f"{item_id}.png",
            "seg": root / "seg" / f"{item_id}.png",
            "depth": root / "depth" / f"{item_id}.png",
        }
        for kind, path in paths.items():
            if not path.exists():
                raise FileNotFoundError(f"dataset item {item_id}: missing {kind} file {path}")
        try:
            triplets.append(
                Triplet(
                    image=load_image_png(paths["image"]),
                    seg=load_segmentation_png(paths["seg"], label_set),
                    depth=load_depth_png(paths["depth"]),
                    id=item_id,
                )
            )
        except ValidationError as err:
            raise ValidationError(f"dataset item {item_id}: {err}") from err
    return Dataset(root=root, label_set=label_set, triplets=triplets)

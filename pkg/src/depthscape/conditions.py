"""Condition maps, image and latent value types shared across the package.

Conventions: depth is a scalar field in [0, 1] with 0 = near and 1 = far;
images live in [-1, 1]; segmentation is a dense integer label grid backed
by an ordered label set. All value types are immutable after construction.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
from PIL import Image

DEPTH_NEAR = 0.0
DEPTH_FAR = 1.0
# Quantization step of the 16-bit depth storage format.
DEPTH_LEVELS = 65535

DEFAULT_LABEL_SET = ("sky", "mountain", "tree", "grass", "earth", "water", "rock")

# Fixed display palette for indexed segmentation PNGs, index = label id.
LABEL_COLORS = (
    (134, 193, 234),  # sky
    (110, 106, 118),  # mountain
    (32, 84, 44),     # tree
    (96, 147, 62),    # grass
    (121, 92, 53),    # earth
    (62, 107, 145),   # water
    (87, 82, 73),     # rock
)


class ValidationError(ValueError):
    """A condition map or pair violates a structural invariant."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check_grid_size(h: int, w: int) -> None:
    if not (_is_pow2(h) and _is_pow2(w) and h >= 8 and w >= 8):
        raise ValidationError(f"grid must be a power of two >= 8, got {h}x{w}")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclasses.dataclass(frozen=True)
class SegmentationMap:
    """Dense per-pixel label grid over an ordered label set."""

    labels: np.ndarray  # (H, W) int64, values in [0, num_labels)
    label_set: tuple[str, ...] = DEFAULT_LABEL_SET

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValidationError(f"labels must be 2-D, got shape {labels.shape}")
        _check_grid_size(*labels.shape)
        if len(self.label_set) < 2:
            raise ValidationError("label set must contain at least 2 labels")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValidationError(f"labels must be integers, got {labels.dtype}")
        if labels.min() < 0 or labels.max() >= len(self.label_set):
            raise ValidationError(
                f"label ids must lie in [0, {len(self.label_set)}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", _freeze(labels.astype(np.int64)))
        object.__setattr__(self, "label_set", tuple(self.label_set))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def num_labels(self) -> int:
        return len(self.label_set)

    def one_hot(self) -> np.ndarray:
        """Binary (num_labels, H, W) encoding; channel sum is 1 everywhere."""
        eye = np.eye(self.num_labels, dtype=np.float32)
        return np.transpose(eye[self.labels], (2, 0, 1))

    def present_labels(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self.labels))

    def label_id(self, name: str) -> int:
        try:
            return self.label_set.index(name)
        except ValueError:
            raise KeyError(f"unknown label {name!r}; known: {self.label_set}") from None


@dataclasses.dataclass(frozen=True)
class DepthMap:
    """Scalar depth field, (1, H, W) in [0, 1] with 0 = near and 1 = far."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3 or values.shape[0] != 1:
            raise ValidationError(f"depth must be (1, H, W), got shape {values.shape}")
        _check_grid_size(*values.shape[1:])
        if not np.isfinite(values).all():
            raise ValidationError("depth contains non-finite values")
        if values.min() < DEPTH_NEAR or values.max() > DEPTH_FAR:
            raise ValidationError(
                f"depth values must lie in [0, 1], got range "
                f"[{values.min():.4f}, {values.max():.4f}]"
            )
        object.__setattr__(self, "values", _freeze(values))

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def grid(self) -> np.ndarray:
        """(H, W) view of the depth field."""
        return self.values[0]


@dataclasses.dataclass(frozen=True)
class ImageTensor:
    """RGB raster, (3, H, W) in [-1, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 3 or values.shape[0] != 3:
            raise ValidationError(f"image must be (3, H, W), got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValidationError("image contains non-finite values")
        if values.min() < -1.0 or values.max() > 1.0:
            raise ValidationError("image values must lie in [-1, 1]")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclasses.dataclass(frozen=True)
class SpatialLatent:
    """A latent code with spatial extent, attached to one generator layer."""

    values: np.ndarray  # (C, h, w) float32
    layer_index: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 3:
            raise ValidationError(f"latent must be (C, h, w), got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValidationError("latent contains non-finite values")
        if self.layer_index < 0:
            raise ValidationError("layer_index must be >= 0")
        object.__setattr__(self, "values", _freeze(values))


def validate_pair(seg: SegmentationMap, depth: DepthMap) -> None:
    """Raise ValidationError unless (seg, depth) form a consistent condition pair."""
    if not isinstance(seg, SegmentationMap) or not isinstance(depth, DepthMap):
        raise ValidationError("expected a SegmentationMap and a DepthMap")
    if (seg.height, seg.width) != (depth.height, depth.width):
        raise ValidationError(
            f"shape mismatch: segmentation {seg.height}x{seg.width} vs "
            f"depth {depth.height}x{depth.width}"
        )
    one_hot = seg.one_hot()
    if not np.array_equal(one_hot.sum(axis=0), np.ones_like(one_hot[0])):
        raise ValidationError("segmentation one-hot channel sum is not 1 everywhere")


def _nearest_indices(src: int, dst: int) -> np.ndarray:
    return np.floor(np.arange(dst) * (src / dst)).astype(np.int64)


def resize_labels(labels: np.ndarray, target: int) -> np.ndarray:
    """Nearest-neighbor resize of an integer label grid to target x target."""
    ri = _nearest_indices(labels.shape[0], target)
    ci = _nearest_indices(labels.shape[1], target)
    return labels[np.ix_(ri, ci)]


def resize_depth_values(values: np.ndarray, target: int) -> np.ndarray:
    """Area-average resize of a (1, H, W) depth grid to target x target."""
    _, h, w = values.shape
    if target <= h:
        fh, fw = h // target, w // target
        out = values.reshape(1, target, fh, target, fw).mean(axis=(2, 4))
    else:
        fh, fw = target // h, target // w
        out = np.repeat(np.repeat(values, fh, axis=1), fw, axis=2)
    return out.astype(np.float32)


def resize_condition(
    seg: SegmentationMap,
    depth: DepthMap | None,
    target: int,
) -> tuple[SegmentationMap, DepthMap | None]:
    """Resize a condition pair to target resolution.

    Labels are resized with nearest-neighbor sampling (stays one-hot), depth
    with area averaging (stays within the input's value range).
    """
    if not _is_pow2(target) or target < 8:
        raise ValidationError(f"target resolution must be a power of two >= 8, got {target}")
    if depth is not None:
        validate_pair(seg, depth)
    if target == seg.height == seg.width:
        return seg, depth
    seg_out = SegmentationMap(resize_labels(seg.labels, target), seg.label_set)
    depth_out = None
    if depth is not None:
        depth_out = DepthMap(resize_depth_values(depth.values, target))
    return seg_out, depth_out


# ---------------------------------------------------------------------------
# PNG storage. Segmentation: 8-bit indexed (index = label id). Depth: 16-bit
# grayscale, 0 = near, 65535 = far. Images: 8-bit RGB.
# ---------------------------------------------------------------------------


def _palette_bytes(num_labels: int) -> bytes:
    table = []
    for i in range(256):
        color = LABEL_COLORS[i % len(LABEL_COLORS)] if i < num_labels else (0, 0, 0)
        table.extend(color)
    return bytes(table)


def save_segmentation_png(seg: SegmentationMap, path: str | Path) -> None:
    img = Image.fromarray(seg.labels.astype(np.uint8), mode="P")
    img.putpalette(_palette_bytes(seg.num_labels))
    img.save(path, format="PNG")


def load_segmentation_png(path: str | Path, label_set: tuple[str, ...]) -> SegmentationMap:
    with Image.open(path) as img:
        if img.mode != "P":
            raise ValidationError(f"segmentation PNG must be indexed, got mode {img.mode}")
        labels = np.asarray(img, dtype=np.int64)
    return SegmentationMap(labels, label_set)


def depth_to_units(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] depth to integer storage units in [0, DEPTH_LEVELS]."""
    return np.round(np.asarray(values, dtype=np.float64) * DEPTH_LEVELS).astype(np.int64)


def depth_from_units(units: np.ndarray) -> np.ndarray:
    return (units.astype(np.float32) / np.float32(DEPTH_LEVELS)).astype(np.float32)


def save_depth_png(depth: DepthMap, path: str | Path) -> None:
    units = np.ascontiguousarray(depth_to_units(depth.grid()).astype("<u2"))
    img = Image.frombytes("I;16", (units.shape[1], units.shape[0]), units.tobytes())
    img.save(path, format="PNG")


def load_depth_png(path: str | Path) -> DepthMap:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.dtype not in (np.uint16, np.int32):
        raise ValidationError(f"depth PNG must be 16-bit grayscale, got dtype {arr.dtype}")
    return DepthMap(depth_from_units(arr.astype(np.int64))[None])


def save_image_png(image: ImageTensor, path: str | Path) -> None:
    u8 = np.round((image.values.transpose(1, 2, 0) + 1.0) * 0.5 * 255.0)
    Image.fromarray(u8.astype(np.uint8), mode="RGB").save(path, format="PNG")


def load_image_png(path: str | Path) -> ImageTensor:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return ImageTensor((arr.transpose(2, 0, 1) / 255.0) * 2.0 - 1.0)

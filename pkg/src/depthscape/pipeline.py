"""Two-phase inference: structure selection, then style selection.

Phase 1 samples candidate depth maps from a segmentation map alone; the user
(or caller) picks one and optionally shifts individual segments. Phase 2
samples images conditioned on the segmentation plus the chosen depth. Both
phases are deterministic given their seeds.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .conditions import (
    DepthMap,
    ImageTensor,
    SegmentationMap,
    depth_from_units,
    depth_to_units,
    save_depth_png,
    save_image_png,
    validate_pair,
)
from .depth_edit import DepthOrderError, shift_segment_depth
from .metrics import sample_outputs
from .training import InferenceBundle


class EditRejectedError(ValueError):
    """An edit in a two-phase edit list flipped the segment depth order."""

    def __init__(self, edit_index: int, cause: DepthOrderError):
        self.edit_index = edit_index
        self.cause = cause
        super().__init__(f"edit {edit_index} rejected: {cause}")


def _snap_to_grid(depth_values: np.ndarray) -> DepthMap:
    # Candidates are quantized to the 16-bit storage grid at birth so the
    # in-memory map, its PNG, and subsequent edits all agree exactly.
    return DepthMap(depth_from_units(depth_to_units(depth_values)))


def phase1_sample_depths(seg: SegmentationMap, n: int, seed: int,
                         s2d: InferenceBundle) -> list[DepthMap]:
    if n < 1:
        raise ValueError("n must be >= 1")
    if s2d.mode != "s2d":
        raise ValueError(f"phase 1 needs an s2d model, got mode {s2d.mode!r}")
    outputs = sample_outputs(s2d.generator, seg, None, n, seed)
    return [_snap_to_grid(out.numpy()) for out in outputs]


def phase2_sample_images(seg: SegmentationMap, depth: DepthMap, n: int, seed: int,
                         sd2i: InferenceBundle) -> list[ImageTensor]:
    if n < 1:
        raise ValueError("n must be >= 1")
    if sd2i.mode != "sd2i":
        raise ValueError(f"phase 2 needs an sd2i model, got mode {sd2i.mode!r}")
    validate_pair(seg, depth)
    outputs = sample_outputs(sd2i.generator, seg, depth, n, seed)
    return [ImageTensor(out.numpy()) for out in outputs]


def apply_edits(depth: DepthMap, seg: SegmentationMap,
                edits: list[tuple[int | str, float]]) -> DepthMap:
    """Apply shifts sequentially; abort with the offending index on rejection."""
    for idx, (label, delta) in enumerate(edits):
        label_id = seg.label_id(label) if isinstance(label, str) else int(label)
        try:
            depth = shift_segment_depth(depth, seg, label_id, delta)
        except DepthOrderError as err:
            raise EditRejectedError(idx, err) from err
    return depth


def two_phase(seg: SegmentationMap, depth_choice_index: int,
              edits: list[tuple[int | str, float]], n_images: int, seed: int,
              s2d: InferenceBundle, sd2i: InferenceBundle,
              n_depths: int = 4) -> tuple[DepthMap, list[ImageTensor]]:
    """Structure selection then style selection in one call.

    Phase 1 uses seed, phase 2 uses seed + 1; the chosen candidate is edited
    in list order before phase 2 runs.
    """
    candidates = phase1_sample_depths(seg, n_depths, seed, s2d)
    if not 0 <= depth_choice_index < len(candidates):
        raise IndexError(
            f"depth choice {depth_choice_index} out of range [0, {len(candidates)})"
        )
    chosen = apply_edits(candidates[depth_choice_index], seg, edits)
    images = phase2_sample_images(seg, chosen, n_images, seed + 1, sd2i)
    return chosen, images


@dataclasses.dataclass(frozen=True)
class InferenceArtifacts:
    out_dir: Path
    depth_paths: list[Path]
    final_depth_path: Path
    image_paths: list[Path]
    manifest_path: Path


def run_inference(seg: SegmentationMap, s2d: InferenceBundle, sd2i: InferenceBundle,
                  out_dir: str | Path, n_depths: int = 4, pick: int = 0,
                  shifts: list[tuple[str, float]] | None = None,
                  n_images: int = 4, seed: int = 0) -> InferenceArtifacts:
    """Full pipeline with artifacts on disk: candidate depths, the final
    (picked + edited) depth, images, and a JSON manifest of every choice."""
    shifts = shifts or []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    candidates = phase1_sample_depths(seg, n_depths, seed, s2d)
    if not 0 <= pick < n_depths:
        raise IndexError(f"--pick {pick} out of range [0, {n_depths})")
    final_depth = apply_edits(candidates[pick], seg, shifts)
    images = phase2_sample_images(seg, final_depth, n_images, seed + 1, sd2i)

    depth_paths = []
    for i, cand in enumerate(candidates):
        path = out / f"depth_{i:02d}.png"
        save_depth_png(cand, path)
        depth_paths.append(path)
    final_path = out / "depth_final.png"
    save_depth_png(final_depth, final_path)
    image_paths = []
    for i, image in enumerate(images):
        path = out / f"image_{i:02d}.png"
        save_image_png(image, path)
        image_paths.append(path)

    manifest = {
        "subcommand": "infer",
        "seed": seed,
        "depth_seed": seed,
        "image_seed": seed + 1,
        "n_depths": n_depths,
        "pick": pick,
        "shifts": [[label, delta] for label, delta in shifts],
        "n_images": n_images,
        "depth_files": [p.name for p in depth_paths],
        "final_depth_file": final_path.name,
        "image_files": [p.name for p in image_paths],
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return InferenceArtifacts(out, depth_paths, final_path, image_paths, manifest_path)

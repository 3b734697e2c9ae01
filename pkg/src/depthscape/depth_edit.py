"""Segment-wise depth analysis and editing.

The editing rule: a segment's depth may be shifted by a constant only while
the ranking of per-segment mean depths over all present labels stays exactly
what it was before the edit (ties broken by label id). Edits are applied in
units of the 16-bit storage grid (1/65535), which makes an accepted shift
exactly revertible when no clamping occurred.
"""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path
from typing import Iterable

import numpy as np

from .conditions import (
    DEPTH_LEVELS,
    DepthMap,
    SegmentationMap,
    depth_from_units,
    depth_to_units,
    validate_pair,
)


class DepthOrderError(ValueError):
    """An edit would flip the relative depth order of two segments."""

    def __init__(self, label_a: int, label_b: int, label_set: tuple[str, ...]):
        self.flipped_pair = (label_a, label_b)
        self.flipped_names = (label_set[label_a], label_set[label_b])
        super().__init__(
            f"depth shift rejected: segments {self.flipped_names[0]!r} (id {label_a}) and "
            f"{self.flipped_names[1]!r} (id {label_b}) would swap depth order"
        )


def segment_mean_depth(depth: DepthMap, seg: SegmentationMap) -> dict[int, float]:
    """Mean depth of every label present in seg; absent labels are omitted."""
    validate_pair(seg, depth)
    grid = depth.grid().astype(np.float64)
    return {
        label: float(grid[seg.labels == label].mean())
        for label in seg.present_labels()
    }


def depth_order(depth: DepthMap, seg: SegmentationMap) -> list[int]:
    """Present labels sorted near-to-far by segment mean depth, ties by id."""
    means = segment_mean_depth(depth, seg)
    return sorted(means, key=lambda label: (means[label], label))


def _first_order_flip(before: list[int], after: list[int]) -> tuple[int, int]:
    position = {label: i for i, label in enumerate(before)}
    for i, label in enumerate(after):
        if label != before[i]:
            return tuple(sorted((before[i], label), key=position.get))
    raise AssertionError("rankings are equal")


def shift_segment_depth(depth: DepthMap, seg: SegmentationMap, label: int,
                        delta: float) -> DepthMap:
    """Add delta to one segment's depth, clamped to [0, 1].

    The shifted map is returned only if the per-segment mean-depth ranking is
    unchanged; otherwise a DepthOrderError naming the flipped pair is raised
    and the input is left untouched.
    """
    validate_pair(seg, depth)
    if label not in seg.present_labels():
        raise ValueError(f"label id {label} is not present in the segmentation")
    step = int(np.round(float(delta) * DEPTH_LEVELS))
    if step == 0:
        return depth
    mask = seg.labels == label
    values = np.array(depth.values)
    units = depth_to_units(values[0][mask])
    values[0][mask] = depth_from_units(np.clip(units + step, 0, DEPTH_LEVELS))
    shifted = DepthMap(values)
    before = depth_order(depth, seg)
    after = depth_order(shifted, seg)
    if before != after:
        raise DepthOrderError(*_first_order_flip(before, after), seg.label_set)
    return shifted


@dataclasses.dataclass(frozen=True)
class LabelHistogram:
    label: int
    name: str
    counts: np.ndarray
    bin_edges: np.ndarray


def depth_distribution(pairs: Iterable[tuple[SegmentationMap, DepthMap]],
                       label_set: tuple[str, ...],
                       bins: int = 20) -> dict[int, LabelHistogram]:
    """Per-label histogram of per-image segment mean depths.

    Each image contributes one count to the histogram of every label it
    contains; counts therefore sum to the number of contributing images.
    """
    per_label: dict[int, list[float]] = {i: [] for i in range(len(label_set))}
    n_pairs = 0
    for seg, depth in pairs:
        n_pairs += 1
        for label, mean in segment_mean_depth(depth, seg).items():
            per_label[label].append(mean)
    if n_pairs == 0:
        raise ValueError("depth_distribution needs a non-empty dataset")
    edges = np.linspace(0.0, 1.0, bins + 1)
    out = {}
    for label, means in per_label.items():
        if not means:
            continue
        counts, _ = np.histogram(means, bins=edges)
        out[label] = LabelHistogram(label, label_set[label], counts, edges)
    return out


def write_distribution_csv(histograms: dict[int, LabelHistogram], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "bin_lo", "bin_hi", "count"])
        for label in sorted(histograms):
            hist = histograms[label]
            for lo, hi, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
                writer.writerow([hist.name, f"{lo:.6f}", f"{hi:.6f}", int(count)])


def plot_distribution(histograms: dict[int, LabelHistogram], path: str | Path,
                      reference: dict[int, LabelHistogram] | None = None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = sorted(histograms)
    fig, axes = plt.subplots(1, len(labels), figsize=(3 * len(labels), 2.6), squeeze=False)
    for ax, label in zip(axes[0], labels):
        hist = histograms[label]
        centers = 0.5 * (hist.bin_edges[:-1] + hist.bin_edges[1:])
        width = hist.bin_edges[1] - hist.bin_edges[0]
        ax.bar(centers, hist.counts, width=width, alpha=0.6, label="generated")
        if reference and label in reference:
            ax.bar(centers, reference[label].counts, width=width, alpha=0.4,
                   label="ground truth")
        ax.set_title(hist.name)
        ax.set_xlabel("mean depth")
    axes[0][0].set_ylabel("images")
    axes[0][-1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)

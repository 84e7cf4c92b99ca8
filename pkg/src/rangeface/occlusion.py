"""Occlusion detection on registered depth images.

The candidate face is compared pixelwise against a mean face; large absolute
depth differences betray an occluding object.  Thresholds are column-wise by
default: each column is judged against a tolerance fraction of its own
maximum difference, which adapts to however vivid the occlusion is in that
column.  A fraction of 1 degenerates to marking only the exact column
maxima; the default 0.85 marks the surrounding region.  A global-quantile
mode is available for flat difference maps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import OcclusionMask, RangeImage
from .errors import EmptyInputError, ValidationError


class ThresholdMode(str, Enum):
    PER_COLUMN = "per_column"
    GLOBAL_QUANTILE = "global_quantile"


@dataclass(frozen=True)
class DifferenceMap:
    """Absolute candidate-vs-mean depth differences with a validity grid."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape != valid.shape:
            raise ValidationError(
                f"values/valid must be matching 2-d grids, got {values.shape} "
                f"and {valid.shape}"
            )
        if values[valid].size and (
            not np.isfinite(values[valid]).all() or (values[valid] < 0).any()
        ):
            raise ValidationError("valid difference values must be finite and >= 0")
        values = np.where(valid, values, 0.0)
        values.setflags(write=False)
        valid = valid.copy()
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())


@dataclass(frozen=True)
class ThresholdProfile:
    """Per-column maxima plus the thresholding mode they feed.

    ``per_column_max[j]`` is the maximum difference over the valid pixels of
    column j, or 0.0 for a column with no valid pixel (such a column never
    produces occlusion marks).
    """

    per_column_max: np.ndarray
    global_threshold_mode: ThresholdMode = ThresholdMode.PER_COLUMN
    quantile: float = 0.95

    def __post_init__(self):
        maxima = np.asarray(self.per_column_max, dtype=np.float64)
        if maxima.ndim != 1:
            raise ValidationError("per_column_max must be a 1-d vector")
        if not np.isfinite(maxima).all() or (maxima < 0).any():
            raise ValidationError("per_column_max entries must be finite and >= 0")
        if not 0.0 < self.quantile <= 1.0:
            raise ValidationError(f"quantile must lie in (0, 1], got {self.quantile}")
        mode = ThresholdMode(self.global_threshold_mode)
        maxima = maxima.copy()
        maxima.setflags(write=False)
        object.__setattr__(self, "per_column_max", maxima)
        object.__setattr__(self, "global_threshold_mode", mode)

    @classmethod
    def from_difference_map(
        cls,
        diff: DifferenceMap,
        mode: ThresholdMode = ThresholdMode.PER_COLUMN,
        quantile: float = 0.95,
    ) -> "ThresholdProfile":
        masked = np.where(diff.valid, diff.values, 0.0)
        return cls(masked.max(axis=0), mode, quantile)


@dataclass(frozen=True)
class EdgeAnalysis:
    """Connected components of the clear region and their occlusion edges.

    ``component_labels`` is 0 at occluded pixels and 1..n_components on the
    clear region, labelled in row-major discovery order.  ``boundary`` marks
    clear pixels with at least one occluded or out-of-bounds 4-neighbour;
    ``boundary_indices`` are their row-major linear indices (ascending), and
    ``boundary_values`` the difference-map entries at those pixels.
    """

    component_labels: np.ndarray
    n_components: int
    boundary: np.ndarray
    boundary_indices: np.ndarray
    boundary_values: np.ndarray

    def boundary_of(self, component: int) -> np.ndarray:
        """Boolean grid of the boundary pixels of one component."""
        if not 1 <= component <= self.n_components:
            raise ValidationError(
                f"component must lie in [1, {self.n_components}], got {component}"
            )
        return self.boundary & (self.component_labels == component)


def difference_map(candidate: RangeImage, mean: RangeImage) -> DifferenceMap:
    """Pixelwise ``|candidate - mean|``, valid where both inputs are."""
    if (candidate.height, candidate.width) != (mean.height, mean.width):
        raise ValidationError(
            f"candidate {candidate.height}x{candidate.width} and mean "
            f"{mean.height}x{mean.width} dimensions differ"
        )
    both = candidate.valid & mean.valid
    values = np.abs(candidate.depth - mean.depth)
    return DifferenceMap(np.where(both, values, 0.0), both)


def find_threshold_mask(
    diff: DifferenceMap,
    cfg: ThresholdProfile,
    tolerance_fraction: float = 0.85,
) -> OcclusionMask:
    """Mark pixels whose difference reaches the threshold for their column.

    In per-column mode a pixel is occluded iff its column's maximum is
    positive and the value is at least ``tolerance_fraction`` times that
    maximum; at a fraction of exactly 1 only the literal column maxima are
    marked.  In global-quantile mode the threshold is the configured
    quantile of all valid difference values.  Invalid pixels are never
    marked.
    """
    if not 0.0 < tolerance_fraction <= 1.0:
        raise ValidationError(
            f"tolerance_fraction must lie in (0, 1], got {tolerance_fraction}"
        )
    if diff.valid_count == 0:
        raise EmptyInputError("difference map has no valid pixels")
    if cfg.per_column_max.shape[0] != diff.width:
        raise ValidationError(
            f"profile covers {cfg.per_column_max.shape[0]} columns, "
            f"difference map has {diff.width}"
        )
    if cfg.global_threshold_mode is ThresholdMode.PER_COLUMN:
        column_max = cfg.per_column_max[None, :]
        marked = (column_max > 0) & (diff.values >= tolerance_fraction * column_max)
    else:
        threshold = float(np.quantile(diff.values[diff.valid], cfg.quantile))
        marked = diff.values >= threshold
    return OcclusionMask(marked & diff.valid)


def find_edges(mask: OcclusionMask, diff: DifferenceMap) -> EdgeAnalysis:
    """Components of the clear (non-occluded) region and their edge pixels.

    Components use 4-connectivity.  A boundary pixel is a clear pixel with
    at least one occluded or out-of-bounds 4-neighbour, so the outer image
    border always belongs to the boundary of its component.
    """
    if (mask.height, mask.width) != (diff.height, diff.width):
        raise ValidationError(
            f"mask {mask.height}x{mask.width} and difference map "
            f"{diff.height}x{diff.width} dimensions differ"
        )
    occluded = mask.bits
    h, w = occluded.shape
    labels = np.zeros((h, w), dtype=np.int64)
    n_components = 0
    # Flood fill in row-major discovery order keeps labels deterministic.
    for row in range(h):
        for col in range(w):
            if occluded[row, col] or labels[row, col]:
                continue
            n_components += 1
            queue = deque([(row, col)])
            labels[row, col] = n_components
            while queue:
                r, c = queue.popleft()
                for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= rr < h and 0 <= cc < w:
                        if not occluded[rr, cc] and not labels[rr, cc]:
                            labels[rr, cc] = n_components
                            queue.append((rr, cc))

    # A clear pixel is on the boundary when any 4-neighbour (padding counts
    # as occluded) is occluded.
    padded = np.pad(occluded, 1, constant_values=True)
    neighbour_occluded = (
        padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:]
    )
    boundary = ~occluded & neighbour_occluded
    indices = np.flatnonzero(boundary.ravel())
    return EdgeAnalysis(
        component_labels=labels,
        n_components=n_components,
        boundary=boundary,
        boundary_indices=indices,
        boundary_values=diff.values.ravel()[indices],
    )


def apply_mask(img: RangeImage, mask: OcclusionMask) -> RangeImage:
    """Invalidate the occluded pixels of ``img``."""
    if (mask.height, mask.width) != (img.height, img.width):
        raise ValidationError(
            f"mask {mask.height}x{mask.width} and image "
            f"{img.height}x{img.width} dimensions differ"
        )
    return RangeImage(img.depth, img.valid & ~mask.bits)

"""Weighted-median smoothing of range images.

Each valid pixel is replaced by the weighted median of the valid pixels in
a square window centred on it: a neighbour with integer weight w enters the
pool w times, the pool is sorted, and with an even pool the lower of the two
middle values is taken.  Windows are truncated at the image border, invalid
neighbours never enter the pool, and invalid pixels pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RangeImage
from .errors import ValidationError


@dataclass(frozen=True)
class MedianFilterConfig:
    """Window radius and per-offset weights for the filter.

    ``weights`` must be a ``(2 * radius + 1)`` square grid of non-negative
    integers with at least one positive entry; the centre entry weighs the
    pixel itself.  When omitted, every weight in the window is 1.
    """

    radius: int = 1
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.radius < 1:
            raise ValidationError(f"radius must be >= 1, got {self.radius}")
        side = 2 * self.radius + 1
        if self.weights is None:
            object.__setattr__(self, "weights", np.ones((side, side), dtype=np.int64))
        weights = np.asarray(self.weights)
        if weights.shape != (side, side):
            raise ValidationError(
                f"weights must be {side}x{side} for radius {self.radius}, "
                f"got {weights.shape}"
            )
        if not np.issubdtype(weights.dtype, np.integer):
            raise ValidationError("weights must be integers")
        if (weights < 0).any():
            raise ValidationError("weights must be non-negative")
        if not (weights > 0).any():
            raise ValidationError("at least one weight must be positive")
        frozen = np.array(weights, dtype=np.int64)
        frozen.setflags(write=False)
        object.__setattr__(self, "weights", frozen)


@dataclass(frozen=True)
class FilterDiagnostics:
    """Counts gathered while filtering."""

    changed_pixels: int
    empty_window_pixels: int


def weighted_median_filter(
    image: RangeImage,
    config: MedianFilterConfig | None = None,
    return_diagnostics: bool = False,
):
    """Smooth ``image``; returns the filtered image.

    With ``return_diagnostics=True`` a ``(RangeImage, FilterDiagnostics)``
    pair is returned instead; the diagnostics count pixels whose window held
    no valid weighted neighbour (those pass through unchanged).
    """
    config = config or MedianFilterConfig()
    side = 2 * config.radius + 1
    if side > min(image.height, image.width):
        raise ValidationError(
            f"window side {side} exceeds image extent "
            f"{image.height}x{image.width}"
        )

    h, w, r = image.height, image.width, config.radius
    # Pad with invalid pixels so border windows truncate naturally, then
    # build one shifted layer per unit of weight.  Weights are small ints,
    # so the stack stays modest (sum of weights layers).
    depth_pad = np.zeros((h + 2 * r, w + 2 * r))
    valid_pad = np.zeros((h + 2 * r, w + 2 * r), dtype=bool)
    depth_pad[r : r + h, r : r + w] = image.depth
    valid_pad[r : r + h, r : r + w] = image.valid

    layers = []
    layer_valid = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            weight = int(config.weights[dy + r, dx + r])
            if weight == 0:
                continue
            block = depth_pad[r + dy : r + dy + h, r + dx : r + dx + w]
            block_ok = valid_pad[r + dy : r + dy + h, r + dx : r + dx + w]
            layers.extend([block] * weight)
            layer_valid.extend([block_ok] * weight)

    pool = np.stack(layers)  # (k, h, w)
    pool_ok = np.stack(layer_valid)
    counts = pool_ok.sum(axis=0)
    # Invalid entries sort to the end; the lower median of a pool of n
    # samples sits at sorted index (n - 1) // 2.
    pool = np.where(pool_ok, pool, np.inf)
    pool.sort(axis=0)
    median_idx = np.maximum(counts - 1, 0) // 2
    medians = np.take_along_axis(pool, median_idx[None], axis=0)[0]

    usable = image.valid & (counts > 0)
    out_depth = np.where(usable, medians, image.depth)
    result = RangeImage(out_depth, image.valid)
    if not return_diagnostics:
        return result
    diagnostics = FilterDiagnostics(
        changed_pixels=int((result.depth[image.valid] != image.depth[image.valid]).sum()),
        empty_window_pixels=int((image.valid & (counts == 0)).sum()),
    )
    return result, diagnostics

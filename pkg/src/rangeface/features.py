"""Surface-normal feature extraction from range images.

Normals are estimated from the depth grid: the tangent along columns is
(spacing, 0, dz/dcol) and along rows (0, spacing, dz/drow), both obtained
with central differences in the interior and one-sided differences at the
borders.  Their cross product is normalized and oriented so the z component
points toward the sensor (nz >= 0).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .core import RangeImage, _frozen
from .errors import EmptyInputError, ValidationError
from .restoration import PcaBasis, gappy_fit

_UNIT_NORM_TOL = 1e-9
_DEGENERATE_NORM = 1e-12

DEFAULT_DOWNSAMPLE_FACTOR = 4


@dataclasses.dataclass(frozen=True)
class NormalMap:
    """Per-pixel unit surface normals with a validity grid."""

    normals: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        normals = np.asarray(self.normals, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if normals.ndim != 3 or normals.shape[2] != 3:
            raise ValidationError(
                f"normals must have shape (rows, cols, 3), got {normals.shape}"
            )
        if valid.shape != normals.shape[:2]:
            raise ValidationError(
                f"valid grid shape {valid.shape} does not match "
                f"normal grid {normals.shape[:2]}"
            )
        if not np.isfinite(normals).all():
            raise ValidationError("normal map contains non-finite entries")
        if (normals[..., 2] < 0).any():
            raise ValidationError("normals must be oriented with nz >= 0")
        lengths = np.linalg.norm(normals[valid], axis=-1)
        if lengths.size and np.abs(lengths - 1.0).max() > _UNIT_NORM_TOL:
            raise ValidationError("valid normals must have unit length")
        object.__setattr__(self, "normals", _frozen(normals))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def height(self) -> int:
        return self.normals.shape[0]

    @property
    def width(self) -> int:
        return self.normals.shape[1]


def surface_normals(img: RangeImage, pixel_spacing: float = 1.0) -> NormalMap:
    """Estimate oriented unit normals for every pixel of a range image.

    Invalid pixels receive the straight-up normal (0, 0, 1) and stay flagged
    invalid; images fed through restoration are hole-free so this is only a
    defensive path.
    """
    if pixel_spacing <= 0:
        raise ValidationError(f"pixel_spacing must be positive, got {pixel_spacing}")

    # A single-row or single-column image has no slope along that axis.
    if img.height >= 2:
        dz_drow = np.gradient(img.depth, pixel_spacing, axis=0)
    else:
        dz_drow = np.zeros_like(img.depth)
    if img.width >= 2:
        dz_dcol = np.gradient(img.depth, pixel_spacing, axis=1)
    else:
        dz_dcol = np.zeros_like(img.depth)
    ones = np.ones_like(img.depth)
    zeros = np.zeros_like(img.depth)
    tangent_col = np.stack([ones, zeros, dz_dcol], axis=-1)
    tangent_row = np.stack([zeros, ones, dz_drow], axis=-1)
    normals = np.cross(tangent_col, tangent_row)

    lengths = np.linalg.norm(normals, axis=-1)
    degenerate = lengths < _DEGENERATE_NORM
    lengths[degenerate] = 1.0
    normals /= lengths[..., None]
    normals[degenerate] = (0.0, 0.0, 1.0)
    flip = normals[..., 2] < 0
    normals[flip] *= -1.0
    normals[~img.valid] = (0.0, 0.0, 1.0)
    return NormalMap(normals, img.valid)


def feature_vector(
    nm: NormalMap, downsample_factor: int = DEFAULT_DOWNSAMPLE_FACTOR
) -> np.ndarray:
    """Flatten a regular subgrid of normals into one feature vector.

    The grid is sampled every ``downsample_factor`` pixels starting at the
    top-left corner (truncating partial strides), and the (nx, ny, nz)
    triples are concatenated row-major.  The result has length
    3 * ceil(w / f) * ceil(h / f).
    """
    factor = int(downsample_factor)
    if factor != downsample_factor or factor < 1:
        raise ValidationError(
            f"downsample_factor must be a positive integer, got {downsample_factor}"
        )
    return nm.normals[::factor, ::factor].reshape(-1).copy()


def pca_coefficient_vector(img: RangeImage, basis: PcaBasis) -> np.ndarray:
    """Project a range image onto a PCA basis and return the coefficients.

    This is the alternative feature representation for recognition: instead
    of surface normals, each face is summarized by its gappy least-squares
    coefficients in the restoration basis.
    """
    if img.valid_count == 0:
        raise EmptyInputError("cannot extract PCA coefficients from an empty image")
    return gappy_fit(img, basis).beta.copy()

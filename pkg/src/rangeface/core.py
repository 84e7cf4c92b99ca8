"""Core value types: point clouds, range images, rigid transforms, masks.

Conventions used throughout the package:

* Grids are row-major numpy arrays indexed ``[row, col]``.  A pixel at
  ``(row, col)`` sits at physical position ``x = col * pixel_spacing``,
  ``y = row * pixel_spacing``; the stored depth is its z coordinate.
* Validity is a separate boolean grid, never a magic depth value.  Depth
  entries at invalid pixels are normalised to 0.0 and excluded from every
  statistic.
* Rotations are built from three axis angles as ``R = Rx @ Ry @ Rz``: the
  z rotation hits a point first, then y, then x.

All types are immutable after construction; their arrays are frozen.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ValidationError

logger = logging.getLogger(__name__)

#: Tolerance for rotation-matrix orthonormality and determinant checks.
ORTHONORMAL_TOL = 1e-9


def _frozen(values: np.ndarray) -> np.ndarray:
    out = np.array(values, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PointCloud:
    """An unordered set of 3D points stored as an ``(n, 3)`` float64 array.

    Points must be finite; the constructor names the first offending index
    otherwise.  An empty cloud (n = 0) is permitted — operations that cannot
    accept one reject it themselves.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError(
                f"points must have shape (n, 3), got {pts.shape}"
            )
        finite = np.isfinite(pts).all(axis=1)
        if not finite.all():
            idx = int(np.flatnonzero(~finite)[0])
            raise ValidationError(f"point {idx} has a non-finite coordinate")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return self.points.shape[0]

    def centroid(self) -> np.ndarray:
        if len(self) == 0:
            raise EmptyInputError("centroid of an empty cloud is undefined")
        return self.points.mean(axis=0)

    def extent(self) -> float:
        """Length of the diagonal of the axis-aligned bounding box."""
        if len(self) == 0:
            raise EmptyInputError("extent of an empty cloud is undefined")
        span = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.linalg.norm(span))


@dataclass(frozen=True)
class RangeImage:
    """A depth grid plus a validity grid of identical shape."""

    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if depth.ndim != 2 or depth.shape[0] < 1 or depth.shape[1] < 1:
            raise ValidationError(
                f"depth must be a non-empty 2-d grid, got shape {depth.shape}"
            )
        if valid.shape != depth.shape:
            raise ValidationError(
                f"valid grid shape {valid.shape} != depth shape {depth.shape}"
            )
        if not np.isfinite(depth[valid]).all():
            raise ValidationError("valid pixels must hold finite depths")
        # Normalise invalid entries so equal images compare equal bytewise.
        depth = np.where(valid, depth, 0.0)
        object.__setattr__(self, "depth", _frozen(depth))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def full(cls, depth: np.ndarray) -> "RangeImage":
        """Wrap a depth grid with every pixel valid."""
        depth = np.asarray(depth, dtype=np.float64)
        return cls(depth, np.ones(depth.shape, dtype=bool))

    @classmethod
    def all_invalid(cls, height: int, width: int) -> "RangeImage":
        return cls(np.zeros((height, width)), np.zeros((height, width), bool))

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())

    def valid_depths(self) -> np.ndarray:
        """The depths of valid pixels, in row-major pixel order."""
        return self.depth[self.valid]


@dataclass(frozen=True)
class OcclusionMask:
    """Boolean grid where True marks a pixel judged occluded."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValidationError(
                f"mask must be a non-empty 2-d grid, got shape {bits.shape}"
            )
        object.__setattr__(self, "bits", _frozen(bits))

    @classmethod
    def clear(cls, height: int, width: int) -> "OcclusionMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def occluded_count(self) -> int:
        return int(self.bits.sum())


def _check_same_shape(image: RangeImage, mask: OcclusionMask) -> None:
    if (mask.height, mask.width) != (image.height, image.width):
        raise ValidationError(
            f"mask shape {(mask.height, mask.width)} does not match image "
            f"shape {(image.height, image.width)}"
        )


def _rotation_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rotation_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rotation_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidTransform:
    """A proper rigid motion ``p -> R @ p + t``.

    The rotation must be orthonormal with determinant +1 within
    ``ORTHONORMAL_TOL``; reflections are rejected at construction.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if rot.shape != (3, 3):
            raise ValidationError(f"rotation must be 3x3, got {rot.shape}")
        if trans.shape != (3,):
            raise ValidationError(
                f"translation must have 3 components, got {trans.shape}"
            )
        if not (np.isfinite(rot).all() and np.isfinite(trans).all()):
            raise ValidationError("transform entries must be finite")
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise ValidationError(
                f"rotation is not orthonormal (max deviation {err:.3e})"
            )
        det = float(np.linalg.det(rot))
        if abs(det - 1.0) > ORTHONORMAL_TOL:
            raise ValidationError(
                f"rotation determinant must be +1, got {det!r}"
            )
        object.__setattr__(self, "rotation", _frozen(rot))
        object.__setattr__(self, "translation", _frozen(trans))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_angles(
        cls,
        angle_x: float,
        angle_y: float,
        angle_z: float,
        translation=(0.0, 0.0, 0.0),
    ) -> "RigidTransform":
        """Build ``R = Rx @ Ry @ Rz`` from axis angles in radians."""
        rot = _rotation_x(angle_x) @ _rotation_y(angle_y) @ _rotation_z(angle_z)
        return cls(rot, np.asarray(translation, dtype=np.float64))

    def angles(self) -> tuple[float, float, float]:
        """Recover ``(angle_x, angle_y, angle_z)`` from the rotation.

        Inverts the ``Rx @ Ry @ Rz`` factorisation.  Near gimbal lock
        (|angle_y| = pi/2) the x/z split is not unique; angle_x is then
        reported as 0 and the remaining turn folded into angle_z.
        """
        rot = self.rotation
        sy = float(np.clip(rot[0, 2], -1.0, 1.0))
        angle_y = math.asin(sy)
        if abs(sy) < 1.0 - 1e-12:
            angle_x = math.atan2(-rot[1, 2], rot[2, 2])
            angle_z = math.atan2(-rot[0, 1], rot[0, 0])
        else:
            angle_x = 0.0
            angle_z = math.atan2(rot[1, 0], rot[1, 1])
        return (angle_x, angle_y, angle_z)

    def rotation_angle(self) -> float:
        """Total rotation angle in radians, from the matrix trace."""
        c = (float(np.trace(self.rotation)) - 1.0) / 2.0
        return math.acos(min(1.0, max(-1.0, c)))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an ``(n, 3)`` array of points (raw-array helper)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """The transform equivalent to applying ``other`` first, then self."""
        rot = self.rotation @ other.rotation
        trans = self.rotation @ other.translation + self.translation
        return RigidTransform(rot, trans)

    def inverse(self) -> "RigidTransform":
        rot = self.rotation.T
        return RigidTransform(rot, -(rot @ self.translation))


def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    """Return a new cloud with every point moved by ``transform``."""
    if len(cloud) == 0:
        raise EmptyInputError("cannot transform an empty cloud")
    return PointCloud(transform.apply(cloud.points))


def range_image_to_cloud(image: RangeImage, pixel_spacing: float) -> PointCloud:
    """Lift every valid pixel to ``(col * s, row * s, depth)``.

    Points come out in row-major pixel order.  At least one valid pixel is
    required; ``pixel_spacing`` must be positive.
    """
    if not pixel_spacing > 0:
        raise ValidationError(f"pixel_spacing must be > 0, got {pixel_spacing}")
    if image.valid_count == 0:
        raise EmptyInputError("image has no valid pixels to lift")
    rows, cols = np.nonzero(image.valid)
    pts = np.column_stack(
        (cols * pixel_spacing, rows * pixel_spacing, image.depth[rows, cols])
    )
    return PointCloud(pts)


def cloud_to_range_image(
    cloud: PointCloud, width: int, height: int, pixel_spacing: float
) -> RangeImage:
    """Project points onto a ``height x width`` grid.

    Each point lands in the nearest pixel cell; when several points share a
    cell the largest depth (nearest to the sensor) wins.  Cells nobody hits
    are invalid.  Out-of-bounds points are dropped silently; the count is
    reported through the module logger.
    """
    if width < 1 or height < 1:
        raise ValidationError(f"grid must be at least 1x1, got {height}x{width}")
    if not pixel_spacing > 0:
        raise ValidationError(f"pixel_spacing must be > 0, got {pixel_spacing}")
    depth = np.zeros((height, width))
    valid = np.zeros((height, width), dtype=bool)
    if len(cloud) > 0:
        pts = cloud.points
        cols = np.rint(pts[:, 0] / pixel_spacing).astype(np.int64)
        rows = np.rint(pts[:, 1] / pixel_spacing).astype(np.int64)
        inside = (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
        dropped = int((~inside).sum())
        if dropped:
            logger.debug("cloud_to_range_image dropped %d out-of-bounds points", dropped)
        rows, cols, z = rows[inside], cols[inside], pts[inside, 2]
        best = np.full((height, width), -np.inf)
        np.maximum.at(best, (rows, cols), z)
        valid[rows, cols] = True
        depth[valid] = best[valid]
    return RangeImage(depth, valid)

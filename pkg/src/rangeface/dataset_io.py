"""Dataset I/O and synthetic scan generation.

File formats
------------
* Point clouds: whitespace-separated ``x y z`` text, one point per line;
  blank lines and lines starting with ``#`` are ignored.
* Range images: binary 16-bit PGM (magic ``P5``, maxval 65535) plus a JSON
  sidecar (``<file>.json``) holding the depth scale.  Valid depths map to
  codes 1..65535 linearly over ``[depth_min, depth_max]``; code 0 is the
  invalid-pixel sentinel.
* Datasets: a directory of ``s<subject>_<kind>.xyz`` scans plus a
  ``manifest.json`` carrying every scan's ground truth (rigid transform,
  occlusion footprint, noise level), sufficient to score registration and
  detection without re-generating anything.

Synthetic faces
---------------
A face is a smooth height field over the square ``[0, FACE_SIZE]^2``: a sum
of Gaussian bumps shaping a dome, nose, brows, cheeks and chin, jittered per
subject.  Occlusions raise the surface inside an elliptical footprint by a
fixed offset.  Neutral scans sample the exact pixel grid (so they project to
fully valid range images); occluded scans sample scattered random surface
sites, like a real scanner, which also avoids the lattice-commensurate ICP
stalls that exact-grid probes can cause.  All generation is a pure function
of the seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import re
import tempfile
from typing import Optional

import numpy as np

from .core import (
    PointCloud,
    RangeImage,
    OcclusionMask,
    RigidTransform,
    range_image_to_cloud,
)
from .errors import (
    DatasetError,
    EmptyInputError,
    PointCloudParseError,
    ValidationError,
)
from .recognition import OcclusionKind

FACE_SIZE = 2.0
MANIFEST_FORMAT_VERSION = 1
_SIDECAR_FORMAT_VERSION = 1
_PGM_MAXVAL = 65535

_FILENAME_RE = re.compile(r"^s(\d+)_([a-z]+?)(\d*)\.xyz$")


# ---------------------------------------------------------------------------
# low-level file helpers


def _atomic_write_bytes(path, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# point cloud text format


def load_point_cloud(path) -> PointCloud:
    """Parse an ``x y z`` text file into a point cloud.

    Blank lines and ``#`` comments are skipped.  A malformed or non-finite
    line raises :class:`PointCloudParseError` naming the line number; a file
    with no data lines raises :class:`EmptyInputError`.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise DatasetError(f"cannot read point cloud {path}: {exc}") from exc

    rows = []
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise PointCloudParseError(
                path, number, f"expected 3 values, got {len(parts)}"
            )
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise PointCloudParseError(path, number, str(exc)) from exc
        if not all(math.isfinite(v) for v in values):
            raise PointCloudParseError(path, number, "non-finite coordinate")
        rows.append(values)
    if not rows:
        raise EmptyInputError(f"no points found in {path}")
    return PointCloud(np.asarray(rows, dtype=np.float64))


def save_point_cloud(path, cloud: PointCloud) -> None:
    """Write a cloud as full-precision ``x y z`` lines (atomic)."""
    if len(cloud) == 0:
        raise EmptyInputError("refusing to save an empty point cloud")
    lines = [
        "%.17g %.17g %.17g" % (x, y, z) for x, y, z in cloud.points
    ]
    _atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# range image PGM + sidecar


def _quantize(img: RangeImage, depth_range):
    if depth_range is not None:
        lo, hi = float(depth_range[0]), float(depth_range[1])
        if not hi >= lo:
            raise ValidationError(
                f"depth_range must be (low, high) with high >= low, got {depth_range}"
            )
    elif img.valid_count == 0:
        lo = hi = 0.0
    else:
        depths = img.valid_depths()
        lo, hi = float(depths.min()), float(depths.max())

    codes = np.zeros((img.height, img.width), dtype=np.uint16)
    if img.valid_count:
        if hi > lo:
            scaled = (img.depth - lo) / (hi - lo) * (_PGM_MAXVAL - 1)
            codes_valid = 1 + np.rint(scaled).astype(np.int64)
        else:
            codes_valid = np.ones(img.depth.shape, dtype=np.int64)
        codes_valid = np.clip(codes_valid, 1, _PGM_MAXVAL)
        codes[img.valid] = codes_valid[img.valid].astype(np.uint16)
    return codes, lo, hi


def save_range_image(path, img: RangeImage, depth_range=None) -> None:
    """Write a 16-bit PGM plus a ``<path>.json`` sidecar (both atomic).

    Valid depths are quantized linearly onto codes 1..65535 over
    ``[depth_min, depth_max]`` (data range by default, or the explicit
    ``depth_range``, values outside it clipped); code 0 marks invalid pixels.
    The sidecar records the scale so loading is exact up to half a
    quantization step.
    """
    path = os.fspath(path)
    codes, lo, hi = _quantize(img, depth_range)
    header = f"P5\n{img.width} {img.height}\n{_PGM_MAXVAL}\n"
    _atomic_write_bytes(path, header.encode("ascii") + codes.astype(">u2").tobytes())
    sidecar = {
        "format_version": _SIDECAR_FORMAT_VERSION,
        "width": img.width,
        "height": img.height,
        "depth_min": lo,
        "depth_max": hi,
        "quantization_step": (hi - lo) / (_PGM_MAXVAL - 1),
        "invalid_sentinel": 0,
        "all_invalid": img.valid_count == 0,
    }
    _atomic_write_text(path + ".json", json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def _read_pgm_tokens(data: bytes, count: int):
    """Read whitespace/comment-separated ASCII header tokens from a PGM."""
    tokens = []
    position = 0
    while len(tokens) < count:
        if position >= len(data):
            raise DatasetError("truncated PGM header")
        byte = data[position : position + 1]
        if byte == b"#":
            while position < len(data) and data[position : position + 1] != b"\n":
                position += 1
        elif byte.isspace():
            position += 1
        else:
            start = position
            while position < len(data) and not data[position : position + 1].isspace():
                position += 1
            tokens.append(data[start:position].decode("ascii"))
    return tokens, position + 1  # skip the single whitespace after maxval


def load_range_image(path) -> RangeImage:
    """Load a 16-bit PGM written by :func:`save_range_image`."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as handle:
            data = handle.read()
    except OSError as exc:
        raise DatasetError(f"cannot read range image {path}: {exc}") from exc

    tokens, offset = _read_pgm_tokens(data, 4)
    magic, width_s, height_s, maxval_s = tokens
    if magic != "P5":
        raise DatasetError(f"{path}: wrong magic {magic!r}, expected 'P5'")
    width, height, maxval = int(width_s), int(height_s), int(maxval_s)
    if maxval != _PGM_MAXVAL:
        raise DatasetError(f"{path}: maxval {maxval}, expected {_PGM_MAXVAL}")
    expected = width * height * 2
    raster = data[offset : offset + expected]
    if len(raster) != expected:
        raise DatasetError(f"{path}: raster has {len(raster)} bytes, expected {expected}")
    codes = np.frombuffer(raster, dtype=">u2").reshape(height, width).astype(np.int64)

    sidecar_path = path + ".json"
    try:
        with open(sidecar_path, "r", encoding="utf-8") as handle:
            sidecar = json.load(handle)
    except OSError as exc:
        raise DatasetError(f"missing sidecar {sidecar_path}: {exc}") from exc
    if sidecar.get("format_version") != _SIDECAR_FORMAT_VERSION:
        raise DatasetError(
            f"{sidecar_path}: unsupported format_version {sidecar.get('format_version')}"
        )
    if (sidecar["width"], sidecar["height"]) != (width, height):
        raise DatasetError(
            f"{path}: size {width}x{height} does not match sidecar "
            f"{sidecar['width']}x{sidecar['height']}"
        )

    lo, hi = float(sidecar["depth_min"]), float(sidecar["depth_max"])
    step = (hi - lo) / (_PGM_MAXVAL - 1)
    valid = codes > 0
    depth = np.where(valid, lo + (codes - 1) * step, 0.0)
    return RangeImage(depth, valid)


def save_mask(path, mask: OcclusionMask) -> None:
    """Write an occlusion mask as an 8-bit PGM (occluded = 255)."""
    header = f"P5\n{mask.width} {mask.height}\n255\n"
    raster = np.where(mask.bits, 255, 0).astype(np.uint8).tobytes()
    _atomic_write_bytes(path, header.encode("ascii") + raster)


def load_mask(path) -> OcclusionMask:
    try:
        with open(path, "rb") as handle:
            data = handle.read()
    except OSError as exc:
        raise DatasetError(f"cannot read mask {path}: {exc}") from exc
    tokens, offset = _read_pgm_tokens(data, 4)
    if tokens[0] != "P5" or int(tokens[3]) != 255:
        raise DatasetError(f"{path}: not an 8-bit P5 mask")
    width, height = int(tokens[1]), int(tokens[2])
    raster = np.frombuffer(data[offset : offset + width * height], dtype=np.uint8)
    if raster.size != width * height:
        raise DatasetError(f"{path}: truncated mask raster")
    return OcclusionMask(raster.reshape(height, width) > 127)


# ---------------------------------------------------------------------------
# synthetic faces


@dataclasses.dataclass(frozen=True)
class GaussianBump:
    """One smooth radial bump of the synthetic face height field."""

    amplitude: float
    center_x: float
    center_y: float
    sigma_x: float
    sigma_y: float

    def __post_init__(self):
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ValidationError("bump widths must be positive")

    def evaluate(self, x, y):
        return self.amplitude * np.exp(
            -(
                (x - self.center_x) ** 2 / (2 * self.sigma_x**2)
                + (y - self.center_y) ** 2 / (2 * self.sigma_y**2)
            )
        )


def face_height(bumps, x, y):
    """Evaluate the face height field (sum of bumps) at x, y arrays."""
    total = np.zeros_like(np.asarray(x, dtype=np.float64))
    for bump in bumps:
        total = total + bump.evaluate(x, y)
    return total


@dataclasses.dataclass(frozen=True)
class EllipseFootprint:
    """Axis-aligned elliptical occluder footprint in face coordinates."""

    center_x: float
    center_y: float
    radius_x: float
    radius_y: float

    def __post_init__(self):
        if self.radius_x <= 0 or self.radius_y <= 0:
            raise ValidationError("ellipse radii must be positive")

    def contains(self, x, y):
        return ((x - self.center_x) / self.radius_x) ** 2 + (
            (y - self.center_y) / self.radius_y
        ) ** 2 <= 1.0

    def rasterize(self, grid_size: int, pixel_spacing: float) -> OcclusionMask:
        """Mark the pixels whose centers fall inside the footprint."""
        rows, cols = np.mgrid[0:grid_size, 0:grid_size].astype(np.float64)
        return OcclusionMask(self.contains(cols * pixel_spacing, rows * pixel_spacing))


@dataclasses.dataclass(frozen=True)
class OcclusionSpec:
    kind: OcclusionKind
    footprint: EllipseFootprint
    height_offset: float

    def __post_init__(self):
        object.__setattr__(self, "kind", OcclusionKind(self.kind))
        if self.height_offset <= 0:
            raise ValidationError("occlusion height_offset must be positive")


@dataclasses.dataclass(frozen=True)
class SyntheticFaceSpec:
    """Everything needed to regenerate one scan deterministically."""

    subject_id: int
    scan_seed: int
    bumps: tuple
    transform: RigidTransform
    occlusion: Optional[OcclusionSpec]
    noise_sigma: float
    n_points: int

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")
        if self.n_points < 1:
            raise ValidationError("n_points must be positive")
        object.__setattr__(self, "bumps", tuple(self.bumps))


# Template face; per-subject parameters are jittered around these bumps.
_TEMPLATE = (
    GaussianBump(0.80, 1.00, 1.00, 0.55, 0.75),  # skull dome
    GaussianBump(0.35, 1.00, 0.95, 0.10, 0.16),  # nose ridge
    GaussianBump(0.10, 0.70, 1.28, 0.16, 0.09),  # left brow
    GaussianBump(0.10, 1.30, 1.28, 0.16, 0.09),  # right brow
    GaussianBump(0.12, 1.00, 0.42, 0.26, 0.12),  # chin
    GaussianBump(0.08, 0.62, 0.78, 0.18, 0.16),  # left cheek
    GaussianBump(0.08, 1.38, 0.78, 0.18, 0.16),  # right cheek
)

_FOOTPRINT_TEMPLATES = {
    OcclusionKind.EYE: EllipseFootprint(0.70, 1.30, 0.26, 0.16),
    OcclusionKind.MOUTH: EllipseFootprint(1.00, 0.55, 0.30, 0.17),
    OcclusionKind.GLASSES: EllipseFootprint(1.00, 1.30, 0.55, 0.15),
    OcclusionKind.HAIR: EllipseFootprint(1.00, 1.70, 0.60, 0.26),
}

_OCCLUDED_KINDS = (
    OcclusionKind.EYE,
    OcclusionKind.MOUTH,
    OcclusionKind.GLASSES,
    OcclusionKind.HAIR,
)


def subject_bumps(rng) -> tuple:
    """Draw one subject's face as a jittered copy of the template."""
    bumps = []
    for bump in _TEMPLATE:
        bumps.append(
            GaussianBump(
                amplitude=bump.amplitude * (1.0 + rng.uniform(-0.2, 0.2)),
                center_x=bump.center_x + rng.uniform(-0.06, 0.06),
                center_y=bump.center_y + rng.uniform(-0.06, 0.06),
                sigma_x=bump.sigma_x * (1.0 + rng.uniform(-0.2, 0.2)),
                sigma_y=bump.sigma_y * (1.0 + rng.uniform(-0.2, 0.2)),
            )
        )
    return tuple(bumps)


def random_pose(rng, max_rotation_deg: float, max_translation: float) -> RigidTransform:
    """Draw a rigid transform with per-axis angles and offsets in the given bounds."""
    limit = math.radians(max_rotation_deg)
    angles = rng.uniform(-limit, limit, size=3)
    translation = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform.from_angles(*angles, translation=translation)


def neutral_range_image(bumps, grid_size: int) -> RangeImage:
    """Sample a face on the exact pixel grid; fully valid by construction."""
    if grid_size < 2:
        raise ValidationError("grid_size must be at least 2")
    spacing = FACE_SIZE / (grid_size - 1)
    rows, cols = np.mgrid[0:grid_size, 0:grid_size].astype(np.float64)
    return RangeImage.full(face_height(bumps, cols * spacing, rows * spacing))


def sample_scan_cloud(spec: SyntheticFaceSpec) -> PointCloud:
    """Simulate one scan: scattered surface sites, occluder, noise, pose.

    Sites are uniform over the face square; the occluder (if any) raises the
    surface inside its footprint; Gaussian depth noise is added along z in
    face coordinates; finally the ground-truth pose is applied.
    """
    rng = np.random.default_rng(spec.scan_seed)
    x = rng.uniform(0.0, FACE_SIZE, size=spec.n_points)
    y = rng.uniform(0.0, FACE_SIZE, size=spec.n_points)
    z = face_height(spec.bumps, x, y)
    if spec.occlusion is not None:
        inside = spec.occlusion.footprint.contains(x, y)
        z = np.where(inside, z + spec.occlusion.height_offset, z)
    if spec.noise_sigma > 0:
        z = z + rng.normal(scale=spec.noise_sigma, size=spec.n_points)
    points = np.column_stack([x, y, z])
    return PointCloud(spec.transform.apply(points))


@dataclasses.dataclass(frozen=True)
class ScanRecord:
    """One generated scan: its file name, labels, spec, and point cloud."""

    file_name: str
    subject_id: int
    kind: OcclusionKind
    grid_sampled: bool
    spec: SyntheticFaceSpec
    cloud: PointCloud


def _scan_file_name(subject_id: int, kind: OcclusionKind, repeat: int) -> str:
    suffix = "" if repeat == 0 else str(repeat + 1)
    return f"s{subject_id:03d}_{kind.value}{suffix}.xyz"


def generate_scan_records(
    n_subjects: int,
    occlusions_per_subject: int,
    seed: int,
    grid_size: int = 32,
    n_points: int = 4000,
    noise_sigma: float = 0.002,
    max_rotation_deg: float = 12.0,
    max_translation: float = 0.15,
    occlusion_height: float = 0.5,
) -> list:
    """Generate the in-memory dataset: one neutral plus the occluded scans per subject."""
    if n_subjects < 2:
        raise ValidationError("n_subjects must be at least 2")
    if occlusions_per_subject < 0:
        raise ValidationError("occlusions_per_subject must be non-negative")

    spacing = FACE_SIZE / (grid_size - 1)
    subject_seeds = np.random.SeedSequence(seed).spawn(n_subjects)
    records = []
    for subject_id in range(n_subjects):
        rng = np.random.default_rng(subject_seeds[subject_id])
        bumps = subject_bumps(rng)

        neutral = neutral_range_image(bumps, grid_size)
        neutral_spec = SyntheticFaceSpec(
            subject_id=subject_id,
            scan_seed=int(rng.integers(0, 2**63 - 1)),
            bumps=bumps,
            transform=RigidTransform.identity(),
            occlusion=None,
            noise_sigma=0.0,
            n_points=grid_size * grid_size,
        )
        records.append(
            ScanRecord(
                file_name=_scan_file_name(subject_id, OcclusionKind.NONE, 0),
                subject_id=subject_id,
                kind=OcclusionKind.NONE,
                grid_sampled=True,
                spec=neutral_spec,
                cloud=range_image_to_cloud(neutral, spacing),
            )
        )

        for index in range(occlusions_per_subject):
            kind = _OCCLUDED_KINDS[index % len(_OCCLUDED_KINDS)]
            base = _FOOTPRINT_TEMPLATES[kind]
            footprint = EllipseFootprint(
                center_x=base.center_x + rng.uniform(-0.05, 0.05),
                center_y=base.center_y + rng.uniform(-0.05, 0.05),
                radius_x=base.radius_x * (1.0 + rng.uniform(-0.1, 0.1)),
                radius_y=base.radius_y * (1.0 + rng.uniform(-0.1, 0.1)),
            )
            occlusion = OcclusionSpec(
                kind=kind,
                footprint=footprint,
                height_offset=occlusion_height + rng.uniform(0.0, 0.1),
            )
            spec = SyntheticFaceSpec(
                subject_id=subject_id,
                scan_seed=int(rng.integers(0, 2**63 - 1)),
                bumps=bumps,
                transform=random_pose(rng, max_rotation_deg, max_translation),
                occlusion=occlusion,
                noise_sigma=noise_sigma,
                n_points=n_points,
            )
            records.append(
                ScanRecord(
                    file_name=_scan_file_name(
                        subject_id, kind, index // len(_OCCLUDED_KINDS)
                    ),
                    subject_id=subject_id,
                    kind=kind,
                    grid_sampled=False,
                    spec=spec,
                    cloud=sample_scan_cloud(spec),
                )
            )
    return records


def _transform_to_json(transform: RigidTransform) -> dict:
    return {
        "rotation": [[float(v) for v in row] for row in transform.rotation],
        "translation": [float(v) for v in transform.translation],
    }


def _transform_from_json(data: dict) -> RigidTransform:
    return RigidTransform(
        np.asarray(data["rotation"], dtype=np.float64),
        np.asarray(data["translation"], dtype=np.float64),
    )


def _occlusion_to_json(occlusion: Optional[OcclusionSpec]):
    if occlusion is None:
        return None
    footprint = occlusion.footprint
    return {
        "kind": occlusion.kind.value,
        "height_offset": float(occlusion.height_offset),
        "ellipse": {
            "center_x": float(footprint.center_x),
            "center_y": float(footprint.center_y),
            "radius_x": float(footprint.radius_x),
            "radius_y": float(footprint.radius_y),
        },
    }


def _occlusion_from_json(data) -> Optional[OcclusionSpec]:
    if data is None:
        return None
    ellipse = data["ellipse"]
    return OcclusionSpec(
        kind=OcclusionKind(data["kind"]),
        footprint=EllipseFootprint(
            center_x=ellipse["center_x"],
            center_y=ellipse["center_y"],
            radius_x=ellipse["radius_x"],
            radius_y=ellipse["radius_y"],
        ),
        height_offset=data["height_offset"],
    )


def build_manifest(records, seed, grid_size, noise_sigma, max_rotation_deg,
                   max_translation) -> dict:
    scans = []
    for record in records:
        scans.append(
            {
                "file": record.file_name,
                "subject_id": record.subject_id,
                "kind": record.kind.value,
                "grid_sampled": record.grid_sampled,
                "scan_seed": record.spec.scan_seed,
                "n_points": record.spec.n_points,
                "noise_sigma": float(record.spec.noise_sigma),
                "transform": _transform_to_json(record.spec.transform),
                "occlusion": _occlusion_to_json(record.spec.occlusion),
            }
        )
    scans.sort(key=lambda entry: entry["file"])
    return {
        "format_version": MANIFEST_FORMAT_VERSION,
        "seed": seed,
        "n_subjects": len({r.subject_id for r in records}),
        "occlusions_per_subject": sum(
            1 for r in records if r.kind is not OcclusionKind.NONE
        )
        // max(len({r.subject_id for r in records}), 1),
        "face_size": FACE_SIZE,
        "grid_size": grid_size,
        "pixel_spacing": FACE_SIZE / (grid_size - 1),
        "noise_sigma": noise_sigma,
        "max_rotation_deg": max_rotation_deg,
        "max_translation": max_translation,
        "scans": scans,
    }


def generate_synthetic_dataset(
    out_dir,
    n_subjects: int,
    occlusions_per_subject: int,
    seed: int,
    grid_size: int = 32,
    n_points: int = 4000,
    noise_sigma: float = 0.002,
    max_rotation_deg: float = 12.0,
    max_translation: float = 0.15,
    occlusion_height: float = 0.5,
) -> dict:
    """Write a synthetic dataset (scan files + manifest.json); returns the manifest."""
    records = generate_scan_records(
        n_subjects,
        occlusions_per_subject,
        seed,
        grid_size=grid_size,
        n_points=n_points,
        noise_sigma=noise_sigma,
        max_rotation_deg=max_rotation_deg,
        max_translation=max_translation,
        occlusion_height=occlusion_height,
    )
    os.makedirs(out_dir, exist_ok=True)
    for record in records:
        save_point_cloud(os.path.join(out_dir, record.file_name), record.cloud)
    manifest = build_manifest(
        records, seed, grid_size, noise_sigma, max_rotation_deg, max_translation
    )
    _atomic_write_text(
        os.path.join(out_dir, "manifest.json"),
        json.dumps(manifest, sort_keys=True, indent=2) + "\n",
    )
    return manifest


# ---------------------------------------------------------------------------
# dataset loading


@dataclasses.dataclass(frozen=True)
class LoadedScan:
    """A scan file read back with its manifest ground truth (when present)."""

    file_name: str
    subject_id: int
    kind: OcclusionKind
    cloud: PointCloud
    transform: Optional[RigidTransform] = None
    occlusion: Optional[OcclusionSpec] = None
    noise_sigma: float = 0.0
    grid_sampled: bool = False


def load_manifest(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
    except OSError as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"manifest {path} is not valid JSON: {exc}") from exc
    if manifest.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise DatasetError(
            f"{path}: unsupported manifest format_version "
            f"{manifest.get('format_version')!r}"
        )
    return manifest


def load_dataset(directory) -> tuple:
    """Load every scan listed in a dataset directory's manifest.

    Returns ``(manifest, scans)`` where each scan carries its ground-truth
    transform and occlusion spec straight from the manifest.
    """
    manifest = load_manifest(os.path.join(directory, "manifest.json"))
    scans = []
    for entry in manifest["scans"]:
        cloud = load_point_cloud(os.path.join(directory, entry["file"]))
        scans.append(
            LoadedScan(
                file_name=entry["file"],
                subject_id=int(entry["subject_id"]),
                kind=OcclusionKind(entry["kind"]),
                cloud=cloud,
                transform=_transform_from_json(entry["transform"]),
                occlusion=_occlusion_from_json(entry["occlusion"]),
                noise_sigma=float(entry["noise_sigma"]),
                grid_sampled=bool(entry["grid_sampled"]),
            )
        )
    return manifest, scans


def parse_scan_filename(name: str) -> tuple:
    """Decode ``s<subject>_<kind>[repeat].xyz`` into (subject_id, kind)."""
    match = _FILENAME_RE.match(name)
    if not match:
        raise DatasetError(
            f"file name {name!r} does not follow s<subject>_<kind>.xyz"
        )
    subject_id = int(match.group(1))
    try:
        kind = OcclusionKind(match.group(2))
    except ValueError as exc:
        raise DatasetError(
            f"file name {name!r} has unknown occlusion kind {match.group(2)!r}"
        ) from exc
    return subject_id, kind


def load_scan_directory(directory) -> list:
    """Load a bare directory of ``s<subject>_<kind>.xyz`` scans (no manifest).

    This is the compatibility path for externally supplied corpora: only the
    file-name labels are available, no ground-truth transforms or masks.
    """
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise DatasetError(f"cannot list {directory}: {exc}") from exc
    scans = []
    for name in names:
        if not name.endswith(".xyz"):
            continue
        subject_id, kind = parse_scan_filename(name)
        cloud = load_point_cloud(os.path.join(directory, name))
        scans.append(
            LoadedScan(
                file_name=name, subject_id=subject_id, kind=kind, cloud=cloud
            )
        )
    if not scans:
        raise DatasetError(f"no .xyz scans found in {directory}")
    return scans

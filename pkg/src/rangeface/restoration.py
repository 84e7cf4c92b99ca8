"""Subspace restoration of occluded faces.

A PCA basis is trained on fully valid, registered, non-occluded faces.  An
occluded face is then fit to that basis using only its observed pixels (a
least-squares "gappy" fit), and the reconstruction — which has no gaps,
since the eigenvectors are complete — supplies depth values for the holes.
Observed pixels always pass through unchanged.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import OcclusionMask, RangeImage
from .errors import (
    DatasetError,
    RankDeficiencyError,
    UnderdeterminedFitError,
    ValidationError,
)
from .occlusion import apply_mask

_BASIS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PcaBasis:
    """Mean face plus the top principal directions of a training set.

    ``eigenvectors`` has one unit row per retained component, orthonormal
    within 1e-9 and ordered by non-increasing eigenvalue; ``mean`` is the
    pixelwise average, flattened row-major over the source grid.
    """

    mean: np.ndarray
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        vectors = np.asarray(self.eigenvectors, dtype=np.float64)
        values = np.asarray(self.eigenvalues, dtype=np.float64).reshape(-1)
        pixels = self.width * self.height
        if self.width < 1 or self.height < 1:
            raise ValidationError("basis dimensions must be positive")
        if mean.shape[0] != pixels:
            raise ValidationError(
                f"mean length {mean.shape[0]} != width*height {pixels}"
            )
        if vectors.ndim != 2 or vectors.shape[1] != pixels:
            raise ValidationError(
                f"eigenvectors must be (M, {pixels}), got {vectors.shape}"
            )
        if values.shape[0] != vectors.shape[0]:
            raise ValidationError("one eigenvalue required per eigenvector")
        if (values < 0).any() or (np.diff(values) > 1e-12).any():
            raise ValidationError("eigenvalues must be >= 0 and non-increasing")
        gram = vectors @ vectors.T
        if np.abs(gram - np.eye(vectors.shape[0])).max() > 1e-9:
            raise ValidationError("eigenvectors must be orthonormal within 1e-9")
        for arr, name in ((mean, "mean"), (vectors, "eigenvectors"), (values, "eigenvalues")):
            if not np.isfinite(arr).all():
                raise ValidationError(f"{name} must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "eigenvectors", vectors)
        object.__setattr__(self, "eigenvalues", values)

    @property
    def n_components(self) -> int:
        return self.eigenvectors.shape[0]


@dataclass(frozen=True)
class GappyCoefficients:
    """Least-squares coefficients of an incomplete face in a basis."""

    beta: np.ndarray
    observed_count: int
    residual_on_observed: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)


def train_pca(faces: list[RangeImage], n_components: int | None = None) -> PcaBasis:
    """Fit a PCA basis to fully valid faces of identical dimensions.

    ``n_components`` (the M of the basis) must lie in [1, N-1] for N faces;
    when omitted, the smallest count capturing at least 95% of the total
    eigenvalue mass is retained.  Eigenvector signs follow a fixed
    convention (first non-negligible entry positive) so training is
    deterministic.
    """
    if len(faces) < 2:
        raise ValidationError(f"need at least 2 training faces, got {len(faces)}")
    height, width = faces[0].height, faces[0].width
    for i, face in enumerate(faces):
        if (face.height, face.width) != (height, width):
            raise ValidationError(
                f"face {i} is {face.height}x{face.width}, expected {height}x{width}"
            )
        if not face.valid.all():
            raise ValidationError(f"face {i} has invalid pixels; training requires fully valid faces")
    n = len(faces)
    if n_components is not None and not 1 <= n_components <= n - 1:
        raise ValidationError(
            f"n_components must lie in [1, {n - 1}] for {n} faces, got {n_components}"
        )

    data = np.stack([face.depth.ravel() for face in faces])
    mean = data.mean(axis=0)
    centered = data - mean
    # Thin SVD of the (N x pixels) centered matrix: identical basis to the
    # N x N Gram-matrix eigendecomposition at desk scale, and it stays
    # well-defined when eigenvalues vanish (e.g. duplicated faces).
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (singular**2) / (n - 1)

    if n_components is None:
        total = eigenvalues[: n - 1].sum()
        if total <= 0.0:
            n_components = 1
        else:
            mass = np.cumsum(eigenvalues[: n - 1]) / total
            n_components = int(np.searchsorted(mass, 0.95 - 1e-12) + 1)
    vectors = vt[:n_components].copy()
    eigenvalues = eigenvalues[:n_components].copy()

    # Sign convention: first entry of magnitude > 1e-12 made positive.
    for i, vector in enumerate(vectors):
        nonzero = np.flatnonzero(np.abs(vector) > 1e-12)
        if nonzero.size and vector[nonzero[0]] < 0:
            vectors[i] = -vector

    return PcaBasis(
        mean=mean,
        eigenvectors=vectors,
        eigenvalues=eigenvalues,
        width=width,
        height=height,
    )


def _check_dimensions(image: RangeImage, basis: PcaBasis) -> None:
    if (image.height, image.width) != (basis.height, basis.width):
        raise ValidationError(
            f"image {image.height}x{image.width} does not match basis "
            f"{basis.height}x{basis.width}"
        )


def gappy_fit(incomplete: RangeImage, basis: PcaBasis) -> GappyCoefficients:
    """Fit basis coefficients using only the observed (valid) pixels.

    Solves ``min_beta || y_obs - mean_obs - V_obs beta ||`` by SVD-backed
    least squares.  Requires at least M observed pixels; a rank-deficient
    restricted system is reported with its deficiency index.
    """
    _check_dimensions(incomplete, basis)
    observed = incomplete.valid.ravel()
    count = int(observed.sum())
    m = basis.n_components
    if count < m:
        raise UnderdeterminedFitError(
            f"{count} observed pixels cannot determine {m} coefficients"
        )
    design = basis.eigenvectors[:, observed].T
    rhs = incomplete.depth.ravel()[observed] - basis.mean[observed]
    beta, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    if rank < m:
        raise RankDeficiencyError(m - rank)
    residual = float(np.linalg.norm(design @ beta - rhs))
    return GappyCoefficients(
        beta=beta, observed_count=count, residual_on_observed=residual
    )


def reconstruct(basis: PcaBasis, coeffs: GappyCoefficients) -> RangeImage:
    """``mean + sum_i beta_i v_i`` as a fully valid image (no gaps)."""
    beta = coeffs.beta
    if beta.shape[0] != basis.n_components:
        raise ValidationError(
            f"got {beta.shape[0]} coefficients for a basis of {basis.n_components}"
        )
    flat = basis.mean + beta @ basis.eigenvectors
    return RangeImage.full(flat.reshape(basis.height, basis.width))


def restore_face(
    occluded: RangeImage, mask: OcclusionMask, basis: PcaBasis
) -> tuple[RangeImage, float]:
    """Fill the occluded/invalid pixels of a face from the basis.

    Applies the mask, fits the remaining observed pixels, and reconstructs.
    Observed pixels keep their original depths; only holes take
    reconstructed values.  The returned scalar is the reconstruction error
    over observed pixels (the Euclidean norm of the observed residual).
    """
    _check_dimensions(occluded, basis)
    if (mask.height, mask.width) != (occluded.height, occluded.width):
        raise ValidationError(
            f"mask {mask.height}x{mask.width} does not match image "
            f"{occluded.height}x{occluded.width}"
        )
    incomplete = apply_mask(occluded, mask)
    coeffs = gappy_fit(incomplete, basis)
    rebuilt = reconstruct(basis, coeffs)
    depth = np.where(incomplete.valid, incomplete.depth, rebuilt.depth)
    return RangeImage.full(depth), coeffs.residual_on_observed


def save_basis(path, basis: PcaBasis) -> None:
    """Serialize a basis to a .npz file (atomic replace)."""
    path = Path(path)
    payload = {
        "format_version": np.int64(_BASIS_FORMAT_VERSION),
        "width": np.int64(basis.width),
        "height": np.int64(basis.height),
        "mean": basis.mean,
        "eigenvectors": basis.eigenvectors,
        "eigenvalues": basis.eigenvalues,
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", suffix=".npz.tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            np.savez(handle, **payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_basis(path) -> PcaBasis:
    path = Path(path)
    try:
        with np.load(path) as data:
            version = int(data["format_version"])
            if version != _BASIS_FORMAT_VERSION:
                raise DatasetError(
                    f"{path}: unsupported basis format version {version}"
                )
            return PcaBasis(
                mean=data["mean"],
                eigenvectors=data["eigenvectors"],
                eigenvalues=data["eigenvalues"],
                width=int(data["width"]),
                height=int(data["height"]),
            )
    except (OSError, KeyError, ValueError) as exc:
        raise DatasetError(f"cannot read basis file {path}: {exc}") from exc


def to_sidecar_json(basis: PcaBasis) -> str:
    """Human-readable summary of a basis (not the serialization format)."""
    return json.dumps(
        {
            "format_version": _BASIS_FORMAT_VERSION,
            "width": basis.width,
            "height": basis.height,
            "n_components": basis.n_components,
            "eigenvalues": [float(v) for v in basis.eigenvalues],
        },
        indent=2,
        sort_keys=True,
    )

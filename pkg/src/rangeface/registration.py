"""Rigid registration of a probe cloud onto a model cloud with trimmed ICP.

Correspondence search is exact brute force (chunked pairwise distances), so
results are bit-reproducible and distance ties resolve to the lowest model
index.  The per-iteration alignment is the classic SVD solution of the
orthogonal Procrustes problem with the reflection case corrected, and each
iteration drops a configurable worst fraction of correspondences before
fitting so extraneous geometry (an occluding object, say) cannot drag the
pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import PointCloud, RigidTransform
from .errors import DegenerateGeometryError, EmptyInputError, ValidationError

# Cap on the probe-chunk size used for the pairwise distance matrix, to keep
# peak memory bounded on large clouds.
_CHUNK_ROWS = 512


@dataclass(frozen=True)
class IcpConfig:
    """Iteration limits and rejection policy for :func:`icp`.

    ``initial_transform=None`` means "translate the probe centroid onto the
    model centroid and start from there"; pass an explicit transform to seed
    the search differently.  ``correspondence_rejection_fraction`` is the
    worst fraction of pairs dropped before each fit.
    """

    max_iterations: int = 60
    convergence_epsilon: float = 1e-8
    correspondence_rejection_fraction: float = 0.1
    initial_transform: RigidTransform | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError(
                f"max_iterations must be >= 1, got {self.max_iterations}"
            )
        if not self.convergence_epsilon > 0:
            raise ValidationError(
                f"convergence_epsilon must be > 0, got {self.convergence_epsilon}"
            )
        if not 0.0 <= self.correspondence_rejection_fraction < 1.0:
            raise ValidationError(
                "correspondence_rejection_fraction must lie in [0, 1), got "
                f"{self.correspondence_rejection_fraction}"
            )


@dataclass(frozen=True)
class Correspondences:
    """Index pairs and distances from nearest-neighbour search."""

    probe_indices: np.ndarray
    model_indices: np.ndarray
    distances: np.ndarray


@dataclass(frozen=True)
class IcpResult:
    """Outcome of :func:`icp`.

    ``transform`` maps original probe coordinates into the model frame.
    ``rmse_history`` holds one entry per iteration, measured on the kept
    correspondences at the start of that iteration; ``converged`` is True
    when the RMSE improvement fell below the epsilon before the iteration
    cap was hit.
    """

    transform: RigidTransform
    rmse_history: tuple[float, ...]
    iterations_run: int
    converged: bool

    @property
    def final_rmse(self) -> float:
        return self.rmse_history[-1]


def rmse(first: np.ndarray, second: np.ndarray) -> float:
    """Root of the mean squared point-to-point distance.

    Both arguments are ``(n, 3)`` arrays corresponded by index: the value is
    ``sqrt(mean_i ||first_i - second_i||^2)``.
    """
    a = np.asarray(first, dtype=np.float64)
    b = np.asarray(second, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise ValidationError(
            f"expected matching (n, 3) arrays, got {a.shape} and {b.shape}"
        )
    if a.shape[0] == 0:
        raise EmptyInputError("rmse of zero points is undefined")
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def nearest_correspondences(
    probe: PointCloud, model: PointCloud
) -> Correspondences:
    """For every probe point, its exact nearest model point.

    Brute-force search in chunks; distance ties resolve to the lowest model
    index (argmin over the model axis).
    """
    if len(probe) == 0 or len(model) == 0:
        raise EmptyInputError("nearest_correspondences needs non-empty clouds")
    probe_pts = probe.points
    model_pts = model.points
    n = len(probe)
    model_idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        block = cdist(probe_pts[start:stop], model_pts)
        j = block.argmin(axis=1)
        model_idx[start:stop] = j
        dist[start:stop] = block[np.arange(stop - start), j]
    return Correspondences(
        probe_indices=np.arange(n, dtype=np.int64),
        model_indices=model_idx,
        distances=dist,
    )


def best_rigid_transform(
    source: np.ndarray, target: np.ndarray
) -> RigidTransform:
    """Least-squares rigid motion taking ``source`` points onto ``target``.

    The classic closed form: cross-covariance of the centred pairs, SVD,
    and a sign flip on the smallest singular direction when the raw optimum
    would be a reflection, so the result is always a proper rotation.  At
    least three non-collinear source points are required.
    """
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    if src.shape != tgt.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValidationError(
            f"expected matching (n, 3) arrays, got {src.shape} and {tgt.shape}"
        )
    if src.shape[0] < 3:
        raise DegenerateGeometryError(
            f"need at least 3 point pairs, got {src.shape[0]}"
        )
    centroid_src = src.mean(axis=0)
    centroid_tgt = tgt.mean(axis=0)
    src_c = src - centroid_src
    tgt_c = tgt - centroid_tgt

    spread = np.linalg.svd(src_c, compute_uv=False)
    if spread[1] <= 1e-9 * max(spread[0], 1e-300):
        raise DegenerateGeometryError(
            "source points are collinear or coincident; rotation is not "
            "constrained"
        )

    cross_cov = src_c.T @ tgt_c
    u, _, vt = np.linalg.svd(cross_cov)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    correction = np.diag([1.0, 1.0, d])
    rotation = vt.T @ correction @ u.T
    translation = centroid_tgt - rotation @ centroid_src
    return RigidTransform(rotation, translation)


def icp(probe: PointCloud, model: PointCloud, config: IcpConfig | None = None) -> IcpResult:
    """Iteratively align ``probe`` onto ``model``.

    Each iteration finds exact nearest correspondences, keeps the best
    ``1 - rejection_fraction`` of them by distance, records their RMSE, and
    refits.  Iteration stops when the RMSE improvement drops below the
    configured epsilon (converged), when the RMSE reaches exactly zero, or
    at the iteration cap.

    Correspondence rejection exists to shrug off extraneous objects; on
    clean data it narrows the convergence basin (the trimmed fit can settle
    on a partial match under large initial rotations), so when the probe is
    known to be outlier-free, run with ``correspondence_rejection_fraction=0``
    for the widest working range.
    """
    config = config or IcpConfig()
    if len(probe) == 0 or len(model) == 0:
        raise EmptyInputError("icp needs non-empty probe and model clouds")

    if config.initial_transform is not None:
        transform = config.initial_transform
    else:
        shift = model.centroid() - probe.centroid()
        transform = RigidTransform(np.eye(3), shift)
    moved = transform.apply(probe.points)
    model_pts = model.points

    keep = max(
        3,
        int(math.ceil(len(probe) * (1.0 - config.correspondence_rejection_fraction))),
    )
    keep = min(keep, len(probe))

    history: list[float] = []
    converged = False
    for _ in range(config.max_iterations):
        corr = nearest_correspondences(PointCloud(moved), model)
        order = np.argsort(corr.distances, kind="stable")[:keep]
        kept_probe = moved[corr.probe_indices[order]]
        kept_model = model_pts[corr.model_indices[order]]
        current = rmse(kept_probe, kept_model)
        history.append(current)
        if current == 0.0:
            converged = True
            break
        if len(history) >= 2 and abs(history[-2] - current) < config.convergence_epsilon:
            converged = True
            break
        step = best_rigid_transform(kept_probe, kept_model)
        transform = step.compose(transform)
        moved = step.apply(moved)

    return IcpResult(
        transform=transform,
        rmse_history=tuple(history),
        iterations_run=len(history),
        converged=converged,
    )

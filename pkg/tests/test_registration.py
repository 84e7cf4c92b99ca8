"""Tests for correspondence search, the closed-form rigid fit, and ICP."""

import numpy as np
import pytest

from rangeface.core import PointCloud, RigidTransform
from rangeface.errors import (
    DegenerateGeometryError,
    EmptyInputError,
    ValidationError,
)
from rangeface.registration import (
    IcpConfig,
    IcpResult,
    best_rigid_transform,
    icp,
    nearest_correspondences,
    rmse,
)


def surface_cloud(n_points=600, seed=0):
    """A bumpy height-field cloud sampled at irregular sites.

    Scanner-like scattered sampling matters here: a probe that shares the
    model's sampling lattice creates lattice-commensurate pseudo-minima
    that trap point-to-point ICP a few degrees away from the optimum.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 2.0, n_points)
    y = rng.uniform(0.0, 2.0, n_points)
    z = 0.8 * np.exp(-((x - 1.0) ** 2 / 0.6 + (y - 1.0) ** 2 / 1.1))
    z += 0.35 * np.exp(-((x - 1.0) ** 2 / 0.02 + (y - 0.95) ** 2 / 0.08))
    z += 0.15 * np.exp(-(((x - 1.3) ** 2 + (y - 1.3) ** 2) / 0.02))
    return PointCloud(np.column_stack([x, y, z]))


class TestRmse:
    def test_hand_value(self):
        # One pair differing by (1, 2, 2): sqrt(9 / 1) = 3.
        assert rmse(np.array([[0.0, 0.0, 0.0]]), np.array([[1.0, 2.0, 2.0]])) == 3.0

    def test_zero_for_identical(self):
        pts = np.random.default_rng(0).normal(size=(10, 3))
        assert rmse(pts, pts) == 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            rmse(np.zeros((3, 3)), np.zeros((4, 3)))

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            rmse(np.zeros((0, 3)), np.zeros((0, 3)))


class TestNearestCorrespondences:
    def test_shuffled_copy_recovers_bijection(self):
        rng = np.random.default_rng(3)
        model = PointCloud(rng.normal(size=(100, 3)))
        perm = rng.permutation(100)
        probe = PointCloud(model.points[perm])
        corr = nearest_correspondences(probe, model)
        assert np.array_equal(corr.model_indices, perm)
        assert np.array_equal(corr.distances, np.zeros(100))

    def test_tie_breaks_to_lowest_model_index(self):
        model = PointCloud(
            np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        )
        probe = PointCloud(np.array([[0.1, 0.0, 0.0]]))
        corr = nearest_correspondences(probe, model)
        assert corr.model_indices[0] == 0

    def test_chunked_matches_direct(self):
        # More probe points than one chunk; compare against a direct argmin.
        rng = np.random.default_rng(8)
        probe = PointCloud(rng.normal(size=(700, 3)))
        model = PointCloud(rng.normal(size=(50, 3)))
        corr = nearest_correspondences(probe, model)
        diff = probe.points[:, None, :] - model.points[None, :, :]
        direct = np.linalg.norm(diff, axis=2).argmin(axis=1)
        assert np.array_equal(corr.model_indices, direct)

    def test_empty_rejected(self):
        cloud = PointCloud(np.zeros((1, 3)))
        with pytest.raises(EmptyInputError):
            nearest_correspondences(PointCloud(np.zeros((0, 3))), cloud)


class TestBestRigidTransform:
    def test_exact_recovery(self):
        rng = np.random.default_rng(5)
        src = rng.normal(size=(40, 3))
        truth = RigidTransform.from_angles(0.4, -0.9, 1.3, translation=(2, -1, 0.5))
        fitted = best_rigid_transform(src, truth.apply(src))
        assert np.abs(fitted.rotation - truth.rotation).max() < 1e-12
        assert np.abs(fitted.translation - truth.translation).max() < 1e-12

    def test_residual_is_a_local_minimum(self):
        rng = np.random.default_rng(17)
        src = rng.normal(size=(30, 3))
        tgt = RigidTransform.from_angles(0.2, 0.1, -0.3).apply(src)
        tgt = tgt + rng.normal(scale=0.05, size=tgt.shape)
        fitted = best_rigid_transform(src, tgt)
        base = np.sum((fitted.apply(src) - tgt) ** 2)
        for _ in range(20):
            axis_angles = rng.uniform(-0.01, 0.01, size=3)
            nudge = RigidTransform.from_angles(*axis_angles)
            perturbed = RigidTransform(
                nudge.rotation @ fitted.rotation, fitted.translation
            )
            worse = np.sum((perturbed.apply(src) - tgt) ** 2)
            assert worse >= base - 1e-12

    def test_mirrored_target_yields_proper_rotation(self):
        rng = np.random.default_rng(2)
        src = rng.normal(size=(25, 3))
        mirrored = src * np.array([-1.0, 1.0, 1.0])
        fitted = best_rigid_transform(src, mirrored)
        assert abs(np.linalg.det(fitted.rotation) - 1.0) < 1e-9
        assert np.sum((fitted.apply(src) - mirrored) ** 2) > 1e-3

    def test_too_few_pairs_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            best_rigid_transform(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_collinear_source_rejected(self):
        line = np.outer(np.arange(5.0), np.array([1.0, 2.0, 3.0]))
        with pytest.raises(DegenerateGeometryError):
            best_rigid_transform(line, line)


class TestIcp:
    def test_identical_clouds_converge_immediately(self):
        cloud = surface_cloud(200)
        result = icp(cloud, cloud)
        assert isinstance(result, IcpResult)
        assert result.iterations_run == 1
        assert result.converged
        assert result.final_rmse == 0.0
        assert np.abs(result.transform.rotation - np.eye(3)).max() < 1e-12

    def test_recovers_known_transform_noise_free(self):
        model = surface_cloud(800)
        truth = RigidTransform.from_angles(
            0.10, -0.08, 0.12, translation=(0.05, -0.04, 0.08)
        )
        probe = PointCloud(truth.apply(model.points))
        config = IcpConfig(max_iterations=100, convergence_epsilon=1e-12)
        result = icp(probe, model, config)
        residual = result.transform.compose(truth)
        assert residual.rotation_angle() < 1e-6
        assert np.linalg.norm(residual.translation) < 1e-6
        assert result.final_rmse < 1e-9

    def test_final_rmse_not_above_initial(self):
        model = surface_cloud(500)
        rng = np.random.default_rng(23)
        for _ in range(5):
            truth = RigidTransform.from_angles(
                *rng.uniform(-0.15, 0.15, 3), translation=rng.uniform(-0.1, 0.1, 3)
            )
            probe = PointCloud(truth.apply(model.points))
            result = icp(probe, model)
            assert result.rmse_history[-1] <= result.rmse_history[0] + 1e-15

    def test_recovers_large_rotations_without_trimming(self):
        # Within the documented working range (rotations under 30 degrees)
        # a clean transformed copy must come back almost exactly, provided
        # rejection is off: trimming exists for extraneous objects and
        # narrows the basin on outlier-free data.
        from scipy.spatial.transform import Rotation

        model = surface_cloud(800)
        rng = np.random.default_rng(77)
        config = IcpConfig(
            max_iterations=200, correspondence_rejection_fraction=0.0
        )
        for _ in range(10):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = np.radians(rng.uniform(15.0, 29.0))
            truth = RigidTransform(
                Rotation.from_rotvec(axis * angle).as_matrix(),
                rng.uniform(-0.2, 0.2, 3),
            )
            probe = PointCloud(truth.apply(model.points))
            result = icp(probe, model, config)
            residual = result.transform.compose(truth)
            assert np.degrees(residual.rotation_angle()) < 0.5
            assert np.linalg.norm(residual.translation) < 1e-2
            assert result.final_rmse < 1e-6

    def test_outliers_are_rejected(self):
        model = surface_cloud(500)
        pts = model.points.copy()
        rng = np.random.default_rng(31)
        bad = rng.choice(len(pts), size=len(pts) // 5, replace=False)
        pts[bad, 2] += 50.0
        config = IcpConfig(
            correspondence_rejection_fraction=0.25,
            initial_transform=RigidTransform.identity(),
        )
        result = icp(PointCloud(pts), model, config)
        assert np.degrees(result.transform.rotation_angle()) < 1.0
        assert np.linalg.norm(result.transform.translation) < 0.05

    def test_rejection_fraction_validated(self):
        with pytest.raises(ValidationError):
            IcpConfig(correspondence_rejection_fraction=1.0)
        with pytest.raises(ValidationError):
            IcpConfig(max_iterations=0)

    def test_empty_probe_rejected(self):
        cloud = surface_cloud(60)
        with pytest.raises(EmptyInputError):
            icp(PointCloud(np.zeros((0, 3))), cloud)

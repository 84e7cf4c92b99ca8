"""Tests for the core value types and grid/cloud conversions."""

import math

import numpy as np
import pytest

from rangeface.core import (
    OcclusionMask,
    PointCloud,
    RangeImage,
    RigidTransform,
    apply_transform,
    cloud_to_range_image,
    range_image_to_cloud,
)
from rangeface.errors import EmptyInputError, ValidationError


class TestPointCloud:
    def test_accepts_n_by_3(self):
        cloud = PointCloud(np.zeros((5, 3)))
        assert len(cloud) == 5

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValidationError):
            PointCloud(np.zeros((5, 2)))

    def test_non_finite_error_names_index(self):
        pts = np.zeros((4, 3))
        pts[2, 1] = np.nan
        with pytest.raises(ValidationError, match="point 2"):
            PointCloud(pts)

    def test_points_are_frozen(self):
        cloud = PointCloud(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            cloud.points[0, 0] = 1.0

    def test_empty_cloud_is_allowed(self):
        assert len(PointCloud(np.zeros((0, 3)))) == 0


class TestRangeImage:
    def test_invalid_pixels_are_normalised_to_zero(self):
        depth = np.array([[1.0, 2.0], [3.0, 4.0]])
        valid = np.array([[True, False], [True, True]])
        img = RangeImage(depth, valid)
        assert img.depth[0, 1] == 0.0
        assert img.valid_count == 3
        assert list(img.valid_depths()) == [1.0, 3.0, 4.0]

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            RangeImage(np.zeros((2, 2)), np.ones((2, 3), bool))

    def test_non_finite_valid_pixel_rejected(self):
        depth = np.array([[np.inf]])
        with pytest.raises(ValidationError):
            RangeImage(depth, np.array([[True]]))

    def test_non_finite_invalid_pixel_tolerated(self):
        img = RangeImage(np.array([[np.inf]]), np.array([[False]]))
        assert img.valid_count == 0

    def test_full_constructor(self):
        img = RangeImage.full(np.arange(6.0).reshape(2, 3))
        assert img.valid.all()
        assert img.width == 3 and img.height == 2


class TestRigidTransform:
    def test_identity(self):
        t = RigidTransform.identity()
        pts = np.arange(9.0).reshape(3, 3)
        assert np.array_equal(t.apply(pts), pts)

    def test_reflection_rejected(self):
        reflect = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValidationError, match="determinant"):
            RigidTransform(reflect, np.zeros(3))

    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValidationError, match="orthonormal"):
            RigidTransform(np.eye(3) * 1.001, np.zeros(3))

    def test_angle_order_is_x_after_y_after_z(self):
        # The composed matrix must equal applying the z rotation first.
        ax, ay, az = 0.3, -0.2, 0.5
        combined = RigidTransform.from_angles(ax, ay, az)
        step_z = RigidTransform.from_angles(0, 0, az)
        step_y = RigidTransform.from_angles(0, ay, 0)
        step_x = RigidTransform.from_angles(ax, 0, 0)
        p = np.array([[0.7, -1.1, 0.4]])
        expected = step_x.apply(step_y.apply(step_z.apply(p)))
        assert np.allclose(combined.apply(p), expected, atol=1e-12)

    def test_quarter_turn_about_z(self):
        t = RigidTransform.from_angles(0, 0, math.pi / 2)
        moved = t.apply(np.array([[1.0, 0.0, 0.0]]))
        assert np.allclose(moved, [[0.0, 1.0, 0.0]], atol=1e-12)

    def test_angles_round_trip(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            angles = rng.uniform(-1.2, 1.2, size=3)
            t = RigidTransform.from_angles(*angles)
            assert np.allclose(t.angles(), angles, atol=1e-9)

    def test_compose_then_inverse_is_identity(self):
        rng = np.random.default_rng(11)
        t = RigidTransform.identity()
        for _ in range(40):
            step = RigidTransform.from_angles(
                *rng.uniform(-0.5, 0.5, 3), translation=rng.normal(size=3)
            )
            t = step.compose(t)
        round_trip = t.compose(t.inverse())
        assert np.abs(round_trip.rotation - np.eye(3)).max() < 1e-9
        assert np.abs(round_trip.translation).max() < 1e-9

    def test_apply_preserves_distances(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(20, 3))
        t = RigidTransform.from_angles(0.4, 0.1, -0.7, translation=(1, 2, 3))
        moved = t.apply(pts)
        d_before = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
        d_after = np.linalg.norm(moved[:, None] - moved[None, :], axis=-1)
        assert np.allclose(d_before, d_after, atol=1e-10)

    def test_rotation_angle(self):
        t = RigidTransform.from_angles(0, 0, 0.25)
        assert abs(t.rotation_angle() - 0.25) < 1e-12


class TestApplyTransform:
    def test_identity_returns_equal_cloud(self):
        cloud = PointCloud(np.random.default_rng(0).normal(size=(10, 3)))
        out = apply_transform(cloud, RigidTransform.identity())
        assert np.array_equal(out.points, cloud.points)

    def test_empty_cloud_rejected(self):
        with pytest.raises(EmptyInputError):
            apply_transform(PointCloud(np.zeros((0, 3))), RigidTransform.identity())

    def test_count_preserved(self):
        cloud = PointCloud(np.random.default_rng(1).normal(size=(17, 3)))
        t = RigidTransform.from_angles(0.1, 0.2, 0.3, translation=(4, 5, 6))
        assert len(apply_transform(cloud, t)) == 17


class TestGridCloudConversions:
    def test_two_by_two_lift(self):
        img = RangeImage.full(np.array([[1.0, 2.0], [3.0, 4.0]]))
        cloud = range_image_to_cloud(img, pixel_spacing=0.5)
        expected = np.array(
            [
                [0.0, 0.0, 1.0],
                [0.5, 0.0, 2.0],
                [0.0, 0.5, 3.0],
                [0.5, 0.5, 4.0],
            ]
        )
        assert np.array_equal(cloud.points, expected)

    def test_invalid_pixels_are_skipped(self):
        depth = np.array([[1.0, 2.0], [3.0, 4.0]])
        valid = np.array([[True, False], [False, True]])
        cloud = range_image_to_cloud(RangeImage(depth, valid), 1.0)
        assert len(cloud) == 2
        assert np.array_equal(cloud.points[:, 2], [1.0, 4.0])

    def test_no_valid_pixels_rejected(self):
        with pytest.raises(EmptyInputError):
            range_image_to_cloud(RangeImage.all_invalid(2, 2), 1.0)

    def test_bad_spacing_rejected(self):
        img = RangeImage.full(np.zeros((2, 2)))
        with pytest.raises(ValidationError):
            range_image_to_cloud(img, 0.0)

    def test_round_trip_on_exact_grid(self):
        rng = np.random.default_rng(5)
        img = RangeImage.full(rng.normal(size=(6, 7)))
        cloud = range_image_to_cloud(img, 0.25)
        back = cloud_to_range_image(cloud, width=7, height=6, pixel_spacing=0.25)
        assert back.valid.all()
        assert np.allclose(back.depth, img.depth, atol=1e-12)

    def test_collision_keeps_largest_depth(self):
        pts = np.array([[0.0, 0.0, 1.0], [0.01, 0.0, 5.0], [0.0, 0.0, 3.0]])
        img = cloud_to_range_image(PointCloud(pts), 1, 1, pixel_spacing=1.0)
        assert img.depth[0, 0] == 5.0

    def test_out_of_bounds_dropped(self):
        pts = np.array([[0.0, 0.0, 1.0], [10.0, 0.0, 2.0], [-1.0, 0.0, 3.0]])
        img = cloud_to_range_image(PointCloud(pts), 2, 2, pixel_spacing=1.0)
        assert img.valid_count == 1
        assert img.depth[0, 0] == 1.0

    def test_empty_cloud_gives_all_invalid(self):
        img = cloud_to_range_image(PointCloud(np.zeros((0, 3))), 3, 2, 1.0)
        assert img.valid_count == 0
        assert (img.height, img.width) == (2, 3)


class TestOcclusionMask:
    def test_counts(self):
        mask = OcclusionMask(np.array([[True, False], [True, True]]))
        assert mask.occluded_count == 3

    def test_clear(self):
        assert OcclusionMask.clear(2, 3).occluded_count == 0

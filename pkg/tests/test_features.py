import numpy as np
import pytest

from rangeface.core import RangeImage
from rangeface.errors import ValidationError
from rangeface.features import NormalMap, feature_vector, pca_coefficient_vector, surface_normals
from rangeface.restoration import train_pca


def grid(height, width, spacing, fn):
    rows, cols = np.mgrid[0:height, 0:width].astype(float)
    return RangeImage.full(fn(cols * spacing, rows * spacing))


class TestSurfaceNormals:
    def test_constant_plane_points_straight_up(self):
        nm = surface_normals(grid(6, 7, 1.0, lambda x, y: np.full_like(x, 3.0)))
        assert np.abs(nm.normals - (0.0, 0.0, 1.0)).max() < 1e-9

    def test_tilted_plane_matches_analytic_normal(self):
        nm = surface_normals(grid(5, 8, 1.0, lambda x, y: x), pixel_spacing=1.0)
        expected = np.array([-1.0, 0.0, 1.0]) / np.sqrt(2.0)
        # Exact everywhere: one-sided differences are exact on a plane too.
        assert np.abs(nm.normals - expected).max() < 1e-9

    def test_plane_exact_with_non_unit_spacing(self):
        nm = surface_normals(grid(5, 5, 0.25, lambda x, y: 2.0 * y), pixel_spacing=0.25)
        expected = np.array([0.0, -2.0, 1.0]) / np.sqrt(5.0)
        assert np.abs(nm.normals - expected).max() < 1e-9

    def test_sphere_cap_within_two_percent_angular(self):
        radius, spacing = 50.0, 0.5
        n = 41  # spans +/-10 around the pole
        offset = (n - 1) / 2 * spacing

        def cap(x, y):
            return np.sqrt(radius**2 - (x - offset) ** 2 - (y - offset) ** 2)

        img = grid(n, n, spacing, cap)
        nm = surface_normals(img, pixel_spacing=spacing)
        cols, rows = np.meshgrid(np.arange(n), np.arange(n))
        truth = np.stack(
            [cols * spacing - offset, rows * spacing - offset, img.depth], axis=-1
        )
        truth /= np.linalg.norm(truth, axis=-1, keepdims=True)
        cosines = np.clip((nm.normals * truth).sum(axis=-1), -1.0, 1.0)
        assert np.arccos(cosines).max() <= 0.02

    def test_invariant_to_depth_offset(self):
        rng = np.random.default_rng(0)
        depth = rng.normal(size=(9, 11)).cumsum(axis=1)
        base = surface_normals(RangeImage.full(depth))
        lifted = surface_normals(RangeImage.full(depth + 123.456))
        assert np.abs(base.normals - lifted.normals).max() < 1e-9

    def test_axis_exchange_swaps_nx_ny(self):
        rng = np.random.default_rng(1)
        depth = rng.normal(size=(6, 6)).cumsum(axis=0).cumsum(axis=1)
        straight = surface_normals(RangeImage.full(depth))
        swapped = surface_normals(RangeImage.full(depth.T))
        flipped = straight.normals.transpose(1, 0, 2)
        assert np.abs(swapped.normals[..., 0] - flipped[..., 1]).max() < 1e-12
        assert np.abs(swapped.normals[..., 1] - flipped[..., 0]).max() < 1e-12

    def test_invalid_pixels_get_default_normal_and_stay_flagged(self):
        depth = np.arange(20, dtype=float).reshape(4, 5)
        valid = np.ones((4, 5), bool)
        valid[1, 2] = False
        nm = surface_normals(RangeImage(depth, valid))
        assert np.array_equal(nm.normals[1, 2], (0.0, 0.0, 1.0))
        assert not nm.valid[1, 2]
        assert nm.valid.sum() == 19

    def test_orientation_always_toward_sensor(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            depth = np.random.default_rng(seed).normal(size=(7, 7)) * 3
            nm = surface_normals(RangeImage.full(depth))
            assert (nm.normals[..., 2] >= 0).all()
            lengths = np.linalg.norm(nm.normals, axis=-1)
            assert np.abs(lengths - 1.0).max() < 1e-9

    def test_bad_spacing_rejected(self):
        img = grid(3, 3, 1.0, lambda x, y: x)
        with pytest.raises(ValidationError):
            surface_normals(img, pixel_spacing=0.0)


class TestNormalMapValidation:
    def test_rejects_downward_normals(self):
        normals = np.zeros((2, 2, 3))
        normals[..., 2] = -1.0
        with pytest.raises(ValidationError, match="nz"):
            NormalMap(normals, np.ones((2, 2), bool))

    def test_rejects_non_unit_valid_normals(self):
        normals = np.zeros((2, 2, 3))
        normals[..., 2] = 0.5
        with pytest.raises(ValidationError, match="unit"):
            NormalMap(normals, np.ones((2, 2), bool))


class TestFeatureVector:
    def test_flat_two_by_two_gives_twelve_entries(self):
        nm = surface_normals(grid(2, 2, 1.0, lambda x, y: np.zeros_like(x)))
        vec = feature_vector(nm, 1)
        assert vec.shape == (12,)
        assert np.array_equal(vec.reshape(4, 3), np.tile((0.0, 0.0, 1.0), (4, 1)))

    def test_factor_equal_to_dimensions_gives_single_sample(self):
        nm = surface_normals(grid(4, 4, 1.0, lambda x, y: x + y))
        vec = feature_vector(nm, 4)
        assert vec.shape == (3,)
        assert np.array_equal(vec, nm.normals[0, 0])

    def test_length_formula_over_random_sizes(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            h = int(rng.integers(1, 12))
            w = int(rng.integers(1, 12))
            f = int(rng.integers(1, 8))
            nm = surface_normals(RangeImage.full(rng.normal(size=(h, w))))
            expected = 3 * int(np.ceil(w / f)) * int(np.ceil(h / f))
            assert feature_vector(nm, f).shape == (expected,)

    def test_row_major_ordering(self):
        depth = np.zeros((4, 4))
        depth[:, 2:] = 10.0  # step between columns 1 and 2
        nm = surface_normals(RangeImage.full(depth))
        vec = feature_vector(nm, 2)
        # Samples are (0,0), (0,2), (2,0), (2,2) in that order.
        expected = np.concatenate(
            [nm.normals[0, 0], nm.normals[0, 2], nm.normals[2, 0], nm.normals[2, 2]]
        )
        assert np.array_equal(vec, expected)

    def test_deterministic_bit_identical(self):
        rng = np.random.default_rng(4)
        depth = rng.normal(size=(10, 10))
        one = feature_vector(surface_normals(RangeImage.full(depth)), 3)
        two = feature_vector(surface_normals(RangeImage.full(depth.copy())), 3)
        assert one.tobytes() == two.tobytes()

    def test_bad_factor_rejected(self):
        nm = surface_normals(grid(3, 3, 1.0, lambda x, y: x))
        with pytest.raises(ValidationError):
            feature_vector(nm, 0)
        with pytest.raises(ValidationError):
            feature_vector(nm, 1.5)


class TestPcaCoefficientVector:
    def test_matches_projection_for_full_images(self):
        rng = np.random.default_rng(5)
        faces = [RangeImage.full(rng.normal(size=(6, 6))) for _ in range(5)]
        basis = train_pca(faces, 3)
        probe = faces[1]
        vec = pca_coefficient_vector(probe, basis)
        expected = basis.eigenvectors @ (probe.depth.ravel() - basis.mean)
        assert np.abs(vec - expected).max() < 1e-10

import json
import math
import os

import numpy as np
import pytest

from rangeface.core import (
    OcclusionMask,
    PointCloud,
    RangeImage,
    cloud_to_range_image,
)
from rangeface.dataset_io import (
    FACE_SIZE,
    EllipseFootprint,
    GaussianBump,
    face_height,
    generate_scan_records,
    generate_synthetic_dataset,
    load_dataset,
    load_mask,
    load_point_cloud,
    load_range_image,
    load_scan_directory,
    neutral_range_image,
    parse_scan_filename,
    save_mask,
    save_point_cloud,
    save_range_image,
)
from rangeface.errors import (
    DatasetError,
    EmptyInputError,
    PointCloudParseError,
    ValidationError,
)
from rangeface.recognition import OcclusionKind


class TestPointCloudFiles:
    def test_single_line_file(self, tmp_path):
        path = tmp_path / "one.xyz"
        path.write_text("0 0 1\n")
        cloud = load_point_cloud(path)
        assert len(cloud) == 1
        assert np.array_equal(cloud.points[0], [0.0, 0.0, 1.0])

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("# header\n\n1 2 3\n   \n# tail\n4 5 6\n")
        assert len(load_point_cloud(path)) == 2

    def test_comment_only_file_is_empty_error(self, tmp_path):
        path = tmp_path / "empty.xyz"
        path.write_text("# nothing here\n# still nothing\n")
        with pytest.raises(EmptyInputError):
            load_point_cloud(path)

    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        cloud = PointCloud(rng.normal(size=(57, 3)) * 1e3)
        path = tmp_path / "rt.xyz"
        save_point_cloud(path, cloud)
        assert np.array_equal(load_point_cloud(path).points, cloud.points)

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "bad.xyz"
        path.write_text("1 2 3\n4 five 6\n")
        with pytest.raises(PointCloudParseError) as info:
            load_point_cloud(path)
        assert info.value.line_number == 2
        assert "bad.xyz:2" in str(info.value)

    def test_wrong_column_count_rejected(self, tmp_path):
        path = tmp_path / "cols.xyz"
        path.write_text("1 2\n")
        with pytest.raises(PointCloudParseError, match="expected 3"):
            load_point_cloud(path)

    def test_non_finite_coordinate_rejected(self, tmp_path):
        path = tmp_path / "nan.xyz"
        path.write_text("1 2 nan\n")
        with pytest.raises(PointCloudParseError, match="non-finite"):
            load_point_cloud(path)

    def test_missing_file_is_dataset_error(self, tmp_path):
        with pytest.raises(DatasetError):
            load_point_cloud(tmp_path / "absent.xyz")


class TestRangeImageFiles:
    def test_mid_scale_pixel_hits_code_32768(self, tmp_path):
        path = str(tmp_path / "mid.pgm")
        save_range_image(path, RangeImage.full(np.array([[0.5]])), depth_range=(0, 1))
        data = open(path, "rb").read()
        assert data.startswith(b"P5\n1 1\n65535\n")
        code = int.from_bytes(data[-2:], "big")
        assert code == 1 + round(0.5 * 65534) == 32768

    def test_all_invalid_round_trip(self, tmp_path):
        path = str(tmp_path / "invalid.pgm")
        save_range_image(path, RangeImage.all_invalid(3, 4))
        sidecar = json.loads(open(path + ".json").read())
        assert sidecar["all_invalid"] is True
        loaded = load_range_image(path)
        assert loaded.valid_count == 0
        assert (loaded.height, loaded.width) == (3, 4)

    def test_round_trip_within_one_quantization_step(self, tmp_path):
        rng = np.random.default_rng(1)
        depth = rng.uniform(-5.0, 7.0, size=(12, 9))
        valid = rng.random((12, 9)) < 0.8
        img = RangeImage(depth, valid)
        path = str(tmp_path / "rt.pgm")
        save_range_image(path, img)
        loaded = load_range_image(path)
        assert np.array_equal(loaded.valid, img.valid)
        step = json.loads(open(path + ".json").read())["quantization_step"]
        error = np.abs(loaded.depth[valid] - img.depth[valid]).max()
        assert error <= step / 2 + 1e-12

    def test_constant_image_round_trips_exactly(self, tmp_path):
        img = RangeImage.full(np.full((4, 4), 2.5))
        path = str(tmp_path / "const.pgm")
        save_range_image(path, img)
        loaded = load_range_image(path)
        assert np.array_equal(loaded.depth, img.depth)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n1 1\n65535\n0 ")
        (tmp_path / "bad.pgm.json").write_text("{}")
        with pytest.raises(DatasetError, match="magic"):
            load_range_image(str(path))

    def test_sidecar_dimension_mismatch_rejected(self, tmp_path):
        path = str(tmp_path / "dims.pgm")
        save_range_image(path, RangeImage.full(np.zeros((2, 3))))
        sidecar = json.loads(open(path + ".json").read())
        sidecar["width"] = 99
        open(path + ".json", "w").write(json.dumps(sidecar))
        with pytest.raises(DatasetError, match="sidecar"):
            load_range_image(path)

    def test_missing_sidecar_rejected(self, tmp_path):
        path = str(tmp_path / "nosc.pgm")
        save_range_image(path, RangeImage.full(np.zeros((2, 2))))
        os.unlink(path + ".json")
        with pytest.raises(DatasetError, match="sidecar"):
            load_range_image(path)

    def test_mask_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        mask = OcclusionMask(rng.random((7, 5)) < 0.4)
        path = str(tmp_path / "mask.pgm")
        save_mask(path, mask)
        assert np.array_equal(load_mask(path).bits, mask.bits)


class TestSyntheticGeneration:
    def test_two_subjects_one_occlusion_gives_four_files(self, tmp_path):
        out = tmp_path / "ds"
        generate_synthetic_dataset(out, 2, 1, seed=0, n_points=200, grid_size=16)
        files = sorted(p.name for p in out.iterdir())
        assert files == [
            "manifest.json",
            "s000_eye.xyz",
            "s000_none.xyz",
            "s001_eye.xyz",
            "s001_none.xyz",
        ]

    def test_same_seed_gives_byte_identical_manifest(self, tmp_path):
        kwargs = dict(n_points=150, grid_size=16)
        generate_synthetic_dataset(tmp_path / "a", 2, 2, seed=7, **kwargs)
        generate_synthetic_dataset(tmp_path / "b", 2, 2, seed=7, **kwargs)
        first = (tmp_path / "a" / "manifest.json").read_bytes()
        second = (tmp_path / "b" / "manifest.json").read_bytes()
        assert first == second

    def test_paper_scale_counts(self):
        records = generate_scan_records(10, 4, seed=1, n_points=50, grid_size=8)
        assert len(records) == 50
        occluded = [r for r in records if r.kind is not OcclusionKind.NONE]
        assert len(occluded) == 40
        kinds = {r.kind for r in occluded}
        assert kinds == {
            OcclusionKind.EYE,
            OcclusionKind.MOUTH,
            OcclusionKind.GLASSES,
            OcclusionKind.HAIR,
        }

    def test_generation_is_pure_function_of_seed(self):
        first = generate_scan_records(2, 1, seed=3, n_points=100, grid_size=8)
        second = generate_scan_records(2, 1, seed=3, n_points=100, grid_size=8)
        for a, b in zip(first, second):
            assert a.file_name == b.file_name
            assert a.cloud.points.tobytes() == b.cloud.points.tobytes()

    def test_different_seeds_differ(self):
        first = generate_scan_records(2, 0, seed=4, grid_size=8)
        second = generate_scan_records(2, 0, seed=5, grid_size=8)
        assert not np.array_equal(first[0].cloud.points, second[0].cloud.points)

    def test_neutral_scan_projects_to_fully_valid_grid(self):
        grid_size = 16
        records = generate_scan_records(2, 0, seed=6, grid_size=grid_size)
        spacing = FACE_SIZE / (grid_size - 1)
        neutral = records[0]
        img = cloud_to_range_image(neutral.cloud, grid_size, grid_size, spacing)
        assert img.valid.all()
        expected = neutral_range_image(neutral.spec.bumps, grid_size)
        assert np.array_equal(img.depth, expected.depth)

    def test_occluder_raises_surface_inside_footprint(self):
        records = generate_scan_records(
            2, 1, seed=8, n_points=3000, grid_size=8, noise_sigma=0.0
        )
        scan = next(r for r in records if r.kind is not OcclusionKind.NONE)
        spec = scan.spec
        face_frame = spec.transform.inverse().apply(scan.cloud.points)
        x, y, z = face_frame.T
        base = face_height(spec.bumps, x, y)
        inside = spec.occlusion.footprint.contains(x, y)
        assert inside.any() and (~inside).any()
        np.testing.assert_allclose(
            z[inside], base[inside] + spec.occlusion.height_offset, atol=1e-9
        )
        np.testing.assert_allclose(z[~inside], base[~inside], atol=1e-9)

    def test_poses_respect_configured_bounds(self):
        records = generate_scan_records(
            3, 4, seed=9, n_points=50, grid_size=8,
            max_rotation_deg=10.0, max_translation=0.12,
        )
        for record in records:
            if record.kind is OcclusionKind.NONE:
                continue
            angles = record.spec.transform.angles()
            assert all(abs(a) <= math.radians(10.0) + 1e-9 for a in angles)
            assert np.abs(record.spec.transform.translation).max() <= 0.12

    def test_manifest_ground_truth_round_trips(self, tmp_path):
        out = tmp_path / "ds"
        generate_synthetic_dataset(out, 2, 2, seed=10, n_points=120, grid_size=8)
        records = generate_scan_records(2, 2, seed=10, n_points=120, grid_size=8)
        manifest, scans = load_dataset(out)
        assert manifest["n_subjects"] == 2
        by_name = {r.file_name: r for r in records}
        for scan in scans:
            record = by_name[scan.file_name]
            assert scan.subject_id == record.subject_id
            assert scan.kind is record.kind
            assert np.allclose(
                scan.transform.rotation, record.spec.transform.rotation
            )
            assert np.allclose(
                scan.transform.translation, record.spec.transform.translation
            )
            if record.spec.occlusion is None:
                assert scan.occlusion is None
            else:
                assert scan.occlusion.kind is record.spec.occlusion.kind
                assert scan.occlusion.footprint == record.spec.occlusion.footprint
            assert np.array_equal(scan.cloud.points, record.cloud.points)

    def test_too_few_subjects_rejected(self):
        with pytest.raises(ValidationError):
            generate_scan_records(1, 1, seed=0)


class TestFootprintRasterization:
    def test_matches_per_pixel_scan(self):
        footprint = EllipseFootprint(1.0, 0.9, 0.5, 0.3)
        grid_size, spacing = 20, FACE_SIZE / 19
        mask = footprint.rasterize(grid_size, spacing)
        for row in range(grid_size):
            for col in range(grid_size):
                expected = footprint.contains(col * spacing, row * spacing)
                assert mask.bits[row, col] == expected

    def test_bad_radii_rejected(self):
        with pytest.raises(ValidationError):
            EllipseFootprint(1.0, 1.0, 0.0, 0.2)


class TestFaceHeight:
    def test_single_bump_peak_value(self):
        bump = GaussianBump(0.7, 1.0, 1.0, 0.3, 0.4)
        assert abs(face_height((bump,), 1.0, 1.0) - 0.7) < 1e-12

    def test_bumps_superpose(self):
        bumps = (
            GaussianBump(0.5, 0.8, 1.0, 0.3, 0.3),
            GaussianBump(0.2, 1.2, 1.0, 0.2, 0.2),
        )
        x = np.array([0.5, 1.0, 1.5])
        y = np.ones(3)
        total = face_height(bumps, x, y)
        parts = bumps[0].evaluate(x, y) + bumps[1].evaluate(x, y)
        assert np.allclose(total, parts)


class TestScanDirectoryLoader:
    def test_parse_filenames(self):
        assert parse_scan_filename("s007_eye.xyz") == (7, OcclusionKind.EYE)
        assert parse_scan_filename("s012_none.xyz") == (12, OcclusionKind.NONE)
        assert parse_scan_filename("s000_hair2.xyz") == (0, OcclusionKind.HAIR)

    def test_bad_filenames_rejected(self):
        for name in ("x1_eye.xyz", "s01-eye.xyz", "s01_scarf.xyz", "s01_eye.txt"):
            with pytest.raises(DatasetError):
                parse_scan_filename(name)

    def test_loads_bare_directory_without_manifest(self, tmp_path):
        out = tmp_path / "ds"
        generate_synthetic_dataset(out, 2, 1, seed=11, n_points=100, grid_size=8)
        scans = load_scan_directory(out)
        assert [s.file_name for s in scans] == [
            "s000_eye.xyz",
            "s000_none.xyz",
            "s001_eye.xyz",
            "s001_none.xyz",
        ]
        assert all(s.transform is None for s in scans)
        assert scans[0].subject_id == 0 and scans[0].kind is OcclusionKind.EYE

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(DatasetError, match="no .xyz scans"):
            load_scan_directory(tmp_path)

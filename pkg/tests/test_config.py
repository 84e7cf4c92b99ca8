import pytest

from rangeface.config import CONFIG_FORMAT_VERSION, PipelineConfig, load_config, save_config
from rangeface.errors import DatasetError, ValidationError


class TestPipelineConfig:
    def test_defaults_are_valid(self):
        config = PipelineConfig()
        assert config.detection_tolerance == 0.85
        assert config.classifier == "nearest_neighbor"
        assert config.ranks == (1, 2)

    def test_dict_round_trip(self):
        config = PipelineConfig(median_radius=2, detection_tolerance=0.7)
        data = config.to_dict()
        assert data["config_version"] == CONFIG_FORMAT_VERSION
        assert PipelineConfig.from_dict(data) == config

    def test_with_overrides(self):
        config = PipelineConfig().with_overrides(icp_probe_points=500)
        assert config.icp_probe_points == 500
        assert config.median_radius == PipelineConfig().median_radius

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError, match="unknown config keys"):
            PipelineConfig.from_dict({"no_such_option": 1})

    def test_version_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="config_version"):
            PipelineConfig.from_dict({"config_version": 999})

    @pytest.mark.parametrize(
        "overrides",
        [
            {"median_radius": 0},
            {"detection_tolerance": 0.0},
            {"detection_tolerance": 1.5},
            {"classifier": "svm"},
            {"test_fraction": 1.0},
            {"ranks": ()},
            {"ranks": (0,)},
            {"icp_probe_points": 2},
        ],
    )
    def test_invalid_values_rejected(self, overrides):
        with pytest.raises(ValidationError):
            PipelineConfig(**overrides)

    def test_file_round_trip(self, tmp_path):
        config = PipelineConfig(split_seed=7, downsample_factor=3)
        path = tmp_path / "config.json"
        save_config(path, config)
        assert load_config(path) == config

    def test_missing_file_is_dataset_error(self, tmp_path):
        with pytest.raises(DatasetError):
            load_config(tmp_path / "absent.json")

"""Versioned experiment configuration.

Every tunable that the processing stages leave open (filter radius, ICP
settings, detection tolerance, PCA component count, feature downsampling,
classifier choice) lives here so experiments are declarative: a config file
plus a dataset directory fully determines a pipeline run.
"""

from __future__ import annotations

import dataclasses
import json
import os

from .errors import DatasetError, ValidationError

CONFIG_FORMAT_VERSION = 1


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    # smoothing
    median_radius: int = 1
    # registration
    icp_max_iterations: int = 60
    icp_convergence_epsilon: float = 1e-8
    icp_rejection_fraction: float = 0.25
    icp_probe_points: int = 1200
    # occlusion detection
    detection_tolerance: float = 0.85
    keep_largest_component: bool = True
    # restoration (None selects the 95%-eigenvalue-mass count)
    pca_components: int | None = None
    # features
    downsample_factor: int = 2
    # recognition
    classifier: str = "nearest_neighbor"
    test_fraction: float = 1.0 / 3.0
    split_seed: int = 0
    ranks: tuple = (1, 2)
    mlp_hidden_units: int = 24
    mlp_epochs: int = 300
    mlp_learning_rate: float = 0.3
    mlp_seed: int = 0

    def __post_init__(self):
        if self.median_radius < 1:
            raise ValidationError("median_radius must be at least 1")
        if self.icp_probe_points < 3:
            raise ValidationError("icp_probe_points must be at least 3")
        if not 0 < self.detection_tolerance <= 1:
            raise ValidationError("detection_tolerance must lie in (0, 1]")
        if self.classifier not in ("nearest_neighbor", "mlp"):
            raise ValidationError(f"unknown classifier {self.classifier!r}")
        if not 0 < self.test_fraction < 1:
            raise ValidationError("test_fraction must lie strictly between 0 and 1")
        ranks = tuple(int(k) for k in self.ranks)
        if not ranks or min(ranks) < 1:
            raise ValidationError("ranks must be positive integers")
        object.__setattr__(self, "ranks", ranks)

    def to_dict(self) -> dict:
        data = {"config_version": CONFIG_FORMAT_VERSION}
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            data[field.name] = list(value) if isinstance(value, tuple) else value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        version = data.pop("config_version", CONFIG_FORMAT_VERSION)
        if version != CONFIG_FORMAT_VERSION:
            raise ValidationError(f"unsupported config_version {version!r}")
        known = {field.name for field in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        return self.from_dict({**self.to_dict(), **overrides})


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise DatasetError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"config {path} is not valid JSON: {exc}") from exc
    return PipelineConfig.from_dict(data)


def save_config(path, config: PipelineConfig) -> None:
    text = json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)

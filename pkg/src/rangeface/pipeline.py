"""End-to-end experiment pipeline over a scan dataset.

The flow mirrors the processing chain: neutral scans are projected onto the
pixel grid and median-smoothed to build the gallery (mean face + PCA basis);
each occluded probe is ICP-registered to the mean-face cloud, projected,
smoothed, screened for occlusions against the mean face, and restored from
the basis.  Surface-normal and PCA-coefficient features are extracted both
from the restored image and from the raw (unrestored) projection, and a
classifier is trained/evaluated on each variant so the with/without
restoration comparison comes out of one run.

Everything outside the ``timings`` section of the report is a pure function
of the dataset and the configuration, so repeated runs are byte-identical
after JSON serialization.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import PipelineConfig
from .core import (
    OcclusionMask,
    PointCloud,
    RangeImage,
    apply_transform,
    cloud_to_range_image,
    range_image_to_cloud,
)
from .dataset_io import load_dataset
from .errors import EmptyInputError, ValidationError
from .features import feature_vector, pca_coefficient_vector, surface_normals
from .occlusion import (
    ThresholdProfile,
    apply_mask,
    difference_map,
    find_edges,
    find_threshold_mask,
)
from .preprocess import MedianFilterConfig, weighted_median_filter
from .recognition import (
    ClassifierConfig,
    LabeledFeature,
    MlpConfig,
    OcclusionKind,
    evaluate,
    split_dataset,
    train,
)
from .registration import IcpConfig, icp
from .restoration import restore_face, train_pca

REPORT_FORMAT_VERSION = 1


def subsample_cloud(cloud: PointCloud, n_points: int, seed: int = 0) -> PointCloud:
    """Pick a deterministic random subset when the cloud exceeds n_points."""
    if n_points < 1:
        raise ValidationError("n_points must be positive")
    if len(cloud) <= n_points:
        return cloud
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(cloud), size=n_points, replace=False))
    return PointCloud(cloud.points[keep])


def project_to_image(
    cloud: PointCloud, grid_size: int, pixel_spacing: float, median_radius: int
) -> RangeImage:
    """Project a cloud onto the working grid and median-smooth it."""
    image = cloud_to_range_image(cloud, grid_size, grid_size, pixel_spacing)
    return weighted_median_filter(image, MedianFilterConfig(radius=median_radius))


def largest_occluded_component(mask: OcclusionMask, diff) -> OcclusionMask:
    """Keep only the biggest 4-connected blob of occluded pixels.

    Thresholding against a reference marks at least one pixel per difference
    column, so isolated false marks are common; a physical occluder shows up
    as one dominant blob.  Ties go to the component discovered first in
    row-major order.
    """
    if mask.occluded_count == 0:
        return mask
    # find_edges labels connected components of the *clear* region, so label
    # the inverted mask to get components of the occluded region.
    analysis = find_edges(OcclusionMask(~mask.bits), diff)
    labels = analysis.component_labels
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return OcclusionMask(labels == int(sizes.argmax()))


def mask_iou(first: OcclusionMask, second: OcclusionMask) -> float:
    """Intersection-over-union of two masks (1.0 when both are empty)."""
    if first.bits.shape != second.bits.shape:
        raise ValidationError("masks must share a shape")
    union = int((first.bits | second.bits).sum())
    if union == 0:
        return 1.0
    return int((first.bits & second.bits).sum()) / union


def detect_against_reference(
    probe: RangeImage,
    reference: RangeImage,
    tolerance: float,
    keep_largest: bool = True,
):
    """Difference a probe against a reference face and threshold the result."""
    diff = difference_map(probe, reference)
    profile = ThresholdProfile.from_difference_map(diff)
    mask = find_threshold_mask(diff, profile, tolerance)
    if keep_largest:
        mask = largest_occluded_component(mask, diff)
    return mask, diff


def _classifier_config(config: PipelineConfig) -> ClassifierConfig:
    return ClassifierConfig(
        kind=config.classifier,
        mlp=MlpConfig(
            hidden_units=config.mlp_hidden_units,
            epochs=config.mlp_epochs,
            learning_rate=config.mlp_learning_rate,
            seed=config.mlp_seed,
        ),
    )


def _build_gallery(scans, manifest, config):
    """Project and smooth the neutral scans; train the restoration basis."""
    grid_size = manifest["grid_size"]
    spacing = manifest["pixel_spacing"]
    neutrals = sorted(
        (s for s in scans if s.kind is OcclusionKind.NONE),
        key=lambda s: s.file_name,
    )
    if len(neutrals) < 2:
        raise EmptyInputError("gallery needs at least 2 neutral scans")
    images = {}
    for scan in neutrals:
        images[scan.file_name] = (
            scan.subject_id,
            project_to_image(scan.cloud, grid_size, spacing, config.median_radius),
        )
    gallery_images = [img for _, img in images.values()]
    mean_image = RangeImage.full(
        np.mean([img.depth for img in gallery_images], axis=0)
    )
    basis = train_pca(gallery_images, config.pca_components)
    mean_cloud = range_image_to_cloud(mean_image, spacing)
    return images, mean_image, mean_cloud, basis


def _probe_features(restored, unrestored, masked, basis, spacing, factor):
    return {
        ("normal", True): feature_vector(surface_normals(restored, spacing), factor),
        ("normal", False): feature_vector(surface_normals(unrestored, spacing), factor),
        ("pca", True): pca_coefficient_vector(masked, basis),
        ("pca", False): pca_coefficient_vector(unrestored, basis),
    }


def _process_probe(scan, mean_cloud, mean_image, basis, manifest, config):
    started = time.perf_counter()
    grid_size = manifest["grid_size"]
    spacing = manifest["pixel_spacing"]

    probe = subsample_cloud(scan.cloud, config.icp_probe_points)
    icp_result = icp(
        probe,
        mean_cloud,
        IcpConfig(
            max_iterations=config.icp_max_iterations,
            convergence_epsilon=config.icp_convergence_epsilon,
            correspondence_rejection_fraction=config.icp_rejection_fraction,
        ),
    )
    registered = apply_transform(scan.cloud, icp_result.transform)
    probe_img = project_to_image(registered, grid_size, spacing, config.median_radius)

    mask, _ = detect_against_reference(
        probe_img,
        mean_image,
        config.detection_tolerance,
        config.keep_largest_component,
    )
    masked = apply_mask(probe_img, mask)
    restored, residual = restore_face(probe_img, mask, basis)
    vectors = _probe_features(
        restored, probe_img, masked, basis, spacing, config.downsample_factor
    )

    entry = {
        "file": scan.file_name,
        "subject_id": scan.subject_id,
        "kind": scan.kind.value,
        "icp_iterations": icp_result.iterations_run,
        "icp_converged": icp_result.converged,
        "final_rmse": icp_result.final_rmse,
        "mask_pixels": mask.occluded_count,
        "restoration_residual": residual,
    }
    if scan.transform is not None:
        residual_pose = icp_result.transform.compose(scan.transform)
        entry["pose_residual_rotation_deg"] = float(
            np.degrees(residual_pose.rotation_angle())
        )
        entry["pose_residual_translation"] = float(
            np.linalg.norm(residual_pose.translation)
        )
    if scan.occlusion is not None:
        truth = scan.occlusion.footprint.rasterize(grid_size, spacing)
        entry["iou_vs_truth"] = mask_iou(mask, truth)
    entry["seconds"] = time.perf_counter() - started
    return entry, vectors


def _evaluation_section(gallery_items, probe_items, config, split_seeds):
    """Train/evaluate every (features, restoration) variant on each split."""
    splits = []
    improvements = {"normal": [], "pca": []}
    classifier_config = _classifier_config(config)
    for seed in split_seeds:
        per_seed = {"seed": seed}
        for feature_kind in ("normal", "pca"):
            reports = {}
            for restored_flag in (True, False):
                items = probe_items[(feature_kind, restored_flag)]
                train_probes, test_probes = split_dataset(
                    items, config.test_fraction, seed
                )
                if not test_probes:
                    raise ValidationError(
                        f"probe split produced an empty test set "
                        f"({len(items)} probes, test_fraction "
                        f"{config.test_fraction:.6g}); add occluded scans or "
                        f"raise test_fraction"
                    )
                model = train(
                    gallery_items[(feature_kind, restored_flag)] + train_probes,
                    classifier_config,
                )
                description = (
                    f"fraction={config.test_fraction:.6g}, seed={seed}, "
                    f"features={feature_kind}, restored={restored_flag}"
                )
                reports[restored_flag] = evaluate(
                    model, test_probes, ks=config.ranks, split_description=description
                )
            per_seed[feature_kind] = {
                "with_restoration": reports[True].to_dict(),
                "without_restoration": reports[False].to_dict(),
            }
            improvements[feature_kind].append(
                (reports[True].rank_1, reports[False].rank_1)
            )
        splits.append(per_seed)

    comparison = []
    for feature_kind in ("normal", "pca"):
        for restored_flag in (True, False):
            key = "with_restoration" if restored_flag else "without_restoration"
            rank_1 = [s[feature_kind][key]["rank_rates"]["1"] for s in splits]
            rank_2 = [
                s[feature_kind][key]["rank_rates"].get("2") for s in splits
            ]
            comparison.append(
                {
                    "features": feature_kind,
                    "with_restoration": restored_flag,
                    "rank_1_mean": float(np.mean(rank_1)),
                    "rank_2_mean": None
                    if any(r is None for r in rank_2)
                    else float(np.mean(rank_2)),
                }
            )
    summary = {
        kind: {
            "seeds_non_degrading": sum(w >= wo for w, wo in pairs),
            "seeds_strictly_better": sum(w > wo for w, wo in pairs),
            "n_seeds": len(pairs),
        }
        for kind, pairs in improvements.items()
    }
    return {"splits": splits, "improvement": summary}, comparison


def run_experiment_on_scans(manifest, scans, config=None, split_seeds=None, workers=1):
    """Run the full pipeline on loaded scans; returns the report dict."""
    if config is None:
        config = PipelineConfig()
    if split_seeds is None:
        split_seeds = [config.split_seed]
    started = time.perf_counter()

    gallery_start = time.perf_counter()
    gallery, mean_image, mean_cloud, basis = _build_gallery(scans, manifest, config)
    gallery_seconds = time.perf_counter() - gallery_start

    probes = sorted(
        (s for s in scans if s.kind is not OcclusionKind.NONE),
        key=lambda s: s.file_name,
    )

    def job(scan):
        return _process_probe(scan, mean_cloud, mean_image, basis, manifest, config)

    if workers > 1 and probes:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, probes))
    else:
        outcomes = [job(scan) for scan in probes]

    # Aggregation is sorted by file name, so worker order never shows up.
    per_scan = [entry for entry, _ in outcomes]
    spacing = manifest["pixel_spacing"]
    factor = config.downsample_factor

    gallery_items = {}
    for key in (("normal", True), ("normal", False), ("pca", True), ("pca", False)):
        feature_kind = key[0]
        items = []
        for _, (subject_id, image) in sorted(gallery.items()):
            if feature_kind == "normal":
                vec = feature_vector(surface_normals(image, spacing), factor)
            else:
                vec = pca_coefficient_vector(image, basis)
            items.append(LabeledFeature(subject_id, OcclusionKind.NONE, vec))
        gallery_items[key] = items

    probe_items = {key: [] for key in gallery_items}
    for (entry, vectors), scan in zip(outcomes, probes):
        for key, vec in vectors.items():
            probe_items[key].append(
                LabeledFeature(scan.subject_id, scan.kind, vec)
            )

    evaluation = None
    comparison = None
    if probes:
        evaluation, comparison = _evaluation_section(
            gallery_items, probe_items, config, split_seeds
        )

    subject_rmse = {}
    for entry in per_scan:
        subject_rmse.setdefault(entry["subject_id"], []).append(entry["final_rmse"])
    ious = [e["iou_vs_truth"] for e in per_scan if "iou_vs_truth" in e]

    probe_seconds = [entry.pop("seconds") for entry in per_scan]
    report = {
        "report_version": REPORT_FORMAT_VERSION,
        "config": config.to_dict(),
        "dataset": {
            "seed": manifest.get("seed"),
            "n_subjects": manifest.get("n_subjects"),
            "occlusions_per_subject": manifest.get("occlusions_per_subject"),
            "grid_size": manifest["grid_size"],
            "pixel_spacing": manifest["pixel_spacing"],
            "noise_sigma": manifest.get("noise_sigma"),
            "n_scans": len(scans),
            "n_probes": len(probes),
        },
        "gallery": {
            "n_neutrals": len(gallery),
            "pca_components": basis.n_components,
        },
        "registration": {
            "per_scan": [
                {
                    k: entry[k]
                    for k in (
                        "file",
                        "subject_id",
                        "icp_iterations",
                        "icp_converged",
                        "final_rmse",
                        "pose_residual_rotation_deg",
                        "pose_residual_translation",
                    )
                    if k in entry
                }
                for entry in per_scan
            ],
            "mean_final_rmse": float(np.mean([e["final_rmse"] for e in per_scan]))
            if per_scan
            else None,
            "per_subject_final_rmse": {
                str(subject): float(np.mean(values))
                for subject, values in sorted(subject_rmse.items())
            },
        },
        "detection": {
            "per_scan": [
                {
                    k: entry[k]
                    for k in ("file", "kind", "mask_pixels", "iou_vs_truth")
                    if k in entry
                }
                for entry in per_scan
            ],
            "mean_iou_vs_truth": float(np.mean(ious)) if ious else None,
            "min_iou_vs_truth": float(np.min(ious)) if ious else None,
        },
        "restoration": {
            "per_scan": [
                {"file": e["file"], "residual": e["restoration_residual"]}
                for e in per_scan
            ],
            "mean_residual": float(
                np.mean([e["restoration_residual"] for e in per_scan])
            )
            if per_scan
            else None,
        },
        "evaluation": evaluation,
        "comparison_table": comparison,
        "timings": {
            "total_seconds": time.perf_counter() - started,
            "gallery_seconds": gallery_seconds,
            "per_probe_seconds_mean": float(np.mean(probe_seconds))
            if probe_seconds
            else None,
            "workers": workers,
        },
    }
    return report


def run_experiment(dataset_dir, config=None, split_seeds=None, workers=1):
    """Load a dataset directory and run the full experiment on it."""
    manifest, scans = load_dataset(dataset_dir)
    return run_experiment_on_scans(
        manifest, scans, config=config, split_seeds=split_seeds, workers=workers
    )


def strip_timings(report: dict) -> dict:
    """Drop the (non-deterministic) timing fields for report comparisons."""
    cleaned = dict(report)
    cleaned.pop("timings", None)
    return cleaned

"""Command-line interface: every pipeline stage as a subcommand.

Each subcommand prints a JSON report to standard output (and optionally to a
file via ``--report``); wall-clock measurements live in the report's
``timings`` section so the rest of the document is byte-reproducible.
Failures exit with 2 (validation), 3 (I/O), or 4 (numerical) and write a
machine-readable error object to standard error.

Stage defaults come from a :class:`~rangeface.config.PipelineConfig`, read
from ``--config FILE`` and adjusted with repeated ``--set KEY=VALUE`` flags,
so a whole experiment is declarative.  When the ``RANGEFACE_REPORT_DIR``
environment variable is set, relative ``--report`` paths land there.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .config import PipelineConfig, load_config
from .core import OcclusionMask, RangeImage, cloud_to_range_image
from .dataset_io import (
    FACE_SIZE,
    generate_synthetic_dataset,
    load_dataset,
    load_mask,
    load_point_cloud,
    load_range_image,
    save_mask,
    save_range_image,
)
from .errors import DatasetError, NumericalError, ValidationError
from .features import feature_vector, pca_coefficient_vector, surface_normals
from .occlusion import apply_mask, find_edges
from .pipeline import (
    detect_against_reference,
    project_to_image,
    run_experiment,
    subsample_cloud,
)
from .preprocess import MedianFilterConfig, weighted_median_filter
from .recognition import (
    ClassifierConfig,
    LabeledFeature,
    MlpConfig,
    OcclusionKind,
    evaluate,
    load_model,
    save_model,
    train,
)
from .registration import IcpConfig, icp
from .restoration import gappy_fit, load_basis, restore_face, save_basis, train_pca

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

REPORT_DIR_ENV = "RANGEFACE_REPORT_DIR"
REPORT_VERSION = 1
FEATURE_FILE_VERSION = 1


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems through the error object path."""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _int_list(text: str) -> list:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from exc


def _stage_config(args) -> PipelineConfig:
    config = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides[key.strip()] = value
    if overrides:
        config = config.with_overrides(**overrides)
    return config


def _icp_config(config: PipelineConfig) -> IcpConfig:
    return IcpConfig(
        max_iterations=config.icp_max_iterations,
        convergence_epsilon=config.icp_convergence_epsilon,
        correspondence_rejection_fraction=config.icp_rejection_fraction,
    )


def _load_image_or_cloud(path, grid_size, pixel_spacing) -> RangeImage:
    """Read a range image, projecting point-cloud inputs onto the grid."""
    if str(path).endswith(".xyz"):
        cloud = load_point_cloud(path)
        return cloud_to_range_image(cloud, grid_size, grid_size, pixel_spacing)
    return load_range_image(path)


def _write_report(report: dict, args) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    target = getattr(args, "report", None)
    if not target:
        return
    report_dir = os.environ.get(REPORT_DIR_ENV)
    if report_dir and not os.path.isabs(target):
        os.makedirs(report_dir, exist_ok=True)
        target = os.path.join(report_dir, target)
    with open(target, "w", encoding="utf-8") as handle:
        handle.write(text + "\n")


def _write_normal_map_image(path, normals: np.ndarray) -> None:
    """Dump unit normals as an 8-bit PPM, components mapped [-1, 1] -> [0, 255]."""
    rgb = np.rint((normals + 1.0) * 127.5).clip(0, 255).astype(np.uint8)
    height, width = rgb.shape[:2]
    with open(path, "wb") as handle:
        handle.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        handle.write(rgb.tobytes())


# ---------------------------------------------------------------------------
# labeled feature files (train / evaluate interchange format)


def save_labeled_features(path, items) -> None:
    payload = {
        "format_version": FEATURE_FILE_VERSION,
        "features": [
            {
                "subject_id": item.subject_id,
                "kind": item.occlusion_kind.value,
                "vector": [float(v) for v in item.vector],
            }
            for item in items
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True)
        handle.write("\n")


def load_labeled_features(path) -> list:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise DatasetError(f"cannot read feature file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"feature file {path} is not valid JSON: {exc}") from exc
    if payload.get("format_version") != FEATURE_FILE_VERSION:
        raise DatasetError(
            f"{path}: unsupported feature file version "
            f"{payload.get('format_version')!r}"
        )
    try:
        return [
            LabeledFeature(
                entry["subject_id"],
                OcclusionKind(entry["kind"]),
                np.asarray(entry["vector"], dtype=np.float64),
            )
            for entry in payload["features"]
        ]
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"{path}: malformed feature entry: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args):
    started = time.perf_counter()
    manifest = generate_synthetic_dataset(
        args.out_dir,
        n_subjects=args.subjects,
        occlusions_per_subject=args.occlusions,
        seed=args.seed,
        grid_size=args.grid_size,
        n_points=args.points,
        noise_sigma=args.noise_sigma,
        max_rotation_deg=args.max_rotation_deg,
        max_translation=args.max_translation,
        occlusion_height=args.occlusion_height,
    )
    return {
        "report_version": REPORT_VERSION,
        "subcommand": "synth",
        "parameters": {
            "subjects": args.subjects,
            "occlusions_per_subject": args.occlusions,
            "seed": args.seed,
            "grid_size": args.grid_size,
            "points": args.points,
            "noise_sigma": args.noise_sigma,
            "max_rotation_deg": args.max_rotation_deg,
            "max_translation": args.max_translation,
            "occlusion_height": args.occlusion_height,
        },
        "outputs": {
            "directory": str(args.out_dir),
            "manifest": os.path.join(str(args.out_dir), "manifest.json"),
            "n_scans": len(manifest["scans"]),
        },
        "timings": {"total_seconds": time.perf_counter() - started},
    }


def _cmd_preprocess(args):
    started = time.perf_counter()
    config = _stage_config(args)
    spacing = args.pixel_spacing or FACE_SIZE / (args.grid_size - 1)
    image = _load_image_or_cloud(args.input, args.grid_size, spacing)
    radius = args.radius if args.radius is not None else config.median_radius
    smoothed = weighted_median_filter(image, MedianFilterConfig(radius=radius))
    if args.output:
        save_range_image(args.output, smoothed)
    return {
        "report_version": REPORT_VERSION,
        "subcommand": "preprocess",
        "parameters": {"input": str(args.input), "radius": radius},
        "image": {
            "width": image.width,
            "height": image.height,
            "valid_fraction_before": float(image.valid.mean()),
            "valid_fraction_after": float(smoothed.valid.mean()),
        },
        "outputs": {"smoothed": str(args.output) if args.output else None},
        "timings": {"total_seconds": time.perf_counter() - started},
    }


def _cmd_register(args):
    started = time.perf_counter()
    config = _stage_config(args)
    probe = load_point_cloud(args.probe)
    model = load_point_cloud(args.model)
    if args.probe_points is not None:
        probe = subsample_cloud(probe, args.probe_points)
    result = icp(probe, model, _icp_config(config))
    angles = result.transform.angles()
    return {
        "report_version": REPORT_VERSION,
        "subcommand": "register",
        "parameters": {
            "probe": str(args.probe),
            "model": str(args.model),
            "n_probe_points": len(probe),
            "n_model_points": len(model),
            "max_iterations": config.icp_max_iterations,
            "convergence_epsilon": config.icp_convergence_epsilon,
            "rejection_fraction": config.icp_rejection_fraction,
        },
        "transform": {
            "rotation": [[float(v) for v in row] for row in result.transform.rotation],
            "translation": [float(v) for v in result.transform.translation],
            "rotation_angles_deg": [float(np.degrees(a)) for a in angles],
            "rotation_angle_deg": float(np.degrees(result.transform.rotation_angle())),
        },
        "iterations": result.iterations_run,
        "converged": result.converged,
        "final_rmse": result.final_rmse,
        "rmse_history": list(result.rmse_history),
        "timings": {"total_seconds": time.perf_counter() - started},
    }


def _cmd_detect(args):
    started = time.perf_counter()
    config = _stage_config(args)
    probe = load_range_image(args.probe)
    reference = load_range_image(args.reference)
    tolerance = args.tolerance if args.tolerance is not None else config.detection_tolerance
    keep_largest = (
        config.keep_largest_component if args.keep_largest is None else args.keep_largest
    )
    mask, diff = detect_against_reference(probe, reference, tolerance, keep_largest)
    # Count the 4-connected blobs of the full (pre-cleanup) thresholded mask.
    full_mask, _ = detect_against_reference(probe, reference, tolerance, False)
    components = find_edges(OcclusionMask(~full_mask.bits), diff)
    if args.mask_out:
        save_mask(args.mask_out, mask)
    if args.diff_out:
        save_range_image(args.diff_out, RangeImage(diff.values, diff.valid))
    total = mask.bits.size
    return {
        "report_version": REPORT_VERSION,
        "subcommand": "detect",
        "parameters": {
            "probe": str(args.probe),
            "reference": str(args.reference),
            "tolerance": tolerance,
            "keep_largest_component": keep_largest,
        },
        "occluded_count": mask.occluded_count,
        "occluded_fraction": mask.occluded_count / total,
        "component_count": components.n_components,
        "outputs": {
            "mask": str(args.mask_out) if args.mask_out else None,
            "difference_map": str(args.diff_out) if args.diff_out else None,
        },
        "timings": {"total_seconds": time.perf_counter() - started},
    }


def _train_basis_from_dataset(dataset_dir, config):
    manifest, scans = load_dataset(dataset_dir)
    neutrals = sorted(
        (s for s in scans if s.kind is OcclusionKind.NONE), key=lambda s: s.file_name
    )
    images = [
        project_to_image(
            s.cloud, manifest["grid_size"], manifest["pixel_spacing"], config.median_radius
        )
        for s in neutrals
    ]
    return train_pca(images, config.pca_components), len(images)


def _cmd_restore(args):
    started = time.perf_counter()
    config = _stage_config(args)
    if bool(args.fit_from) == bool(args.basis):
        raise ValidationError("provide exactly one of --fit-from and --basis")

    report = {
        "report_version": REPORT_VERSION,
        "subcommand": "restore",
        "parameters": {},
        "outputs": {},
    }
    if args.fit_from:
        basis, n_train = _train_basis_from_dataset(args.fit_from, config)
        report["parameters"]["fit_from"] = str(args.fit_from)
        report["basis"] = {
            "n_train": n_train,
            "n_components": basis.n_components,
            "width": basis.width,
            "height": basis.height,
        }
        if args.basis_out:
            save_basis(args.basis_out, basis)
            report["outputs"]["basis"] = str(args.basis_out)
    else:
        basis = load_basis(args.basis)
        report["parameters"]["basis"] = str(args.basis)
        report["basis"] = {
            "n_components": basis.n_components,
            "width": basis.width,
            "height": basis.height,
        }

    if args.image:
        if not args.mask:
            raise ValidationError("--image requires --mask")
        image = load_range_image(args.image)
        mask = load_mask(args.mask)
        coefficients = gappy_fit(apply_mask(image, mask), basis)
        restored, residual = restore_face(image, mask, basis)
        if args.output:
            save_range_image(args.output, restored)
        report["parameters"].update(image=str(args.image), mask=str(args.mask))
        report["restoration"] = {
            "beta": [float(b) for b in coefficients.beta],
            "residual_on_observed": residual,
            "observed_count": coefficients.observed_count,
            "masked_fraction": mask.occluded_count / mask.bits.size,
        }
        report["outputs"]["restored"] = str(args.output) if args.output else None
    report["timings"] = {"total_seconds": time.perf_counter() - started}
    return report


def _cmd_features(args):
    started = time.perf_counter()
    config = _stage_config(args)
    image = load_range_image(args.image)
    spacing = args.pixel_spacing or (
        FACE_SIZE / (image.width - 1) if image.width > 1 else 1.0
    )
    factor = (
        args.downsample_factor
        if args.downsample_factor is not None
        else config.downsample_factor
    )

    report = {
        "report_version": REPORT_VERSION,
        "subcommand": "features",
        "parameters": {
            "image": str(args.image),
            "kind": args.kind,
            "pixel_spacing": spacing,
        },
        "outputs": {},
    }
    if args.kind == "normal":
        normal_map = surface_normals(image, spacing)
        vector = feature_vector(normal_map, factor)
        report["parameters"]["downsample_factor"] = factor
        if args.normal_image:
            _write_normal_map_image(args.normal_image, normal_map.normals)
            report["outputs"]["normal_image"] = str(args.normal_image)
    else:
        if not args.basis:
            raise ValidationError("--kind pca requires --basis")
        basis = load_basis(args.basis)
        vector = pca_coefficient_vector(image, basis)
        report["parameters"]["basis"] = str(args.basis)

    if args.output:
        np.savetxt(args.output, vector, fmt="%.17g")
        report["outputs"]["vector"] = str(args.output)
    report["vector_length"] = int(vector.size)
    report["timings"] = {"total_seconds": time.perf_counter() - started}
    return report


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


def _cmd_train(args):
    started = time.perf_counter()
    config = _stage_config(args)
    items = load_labeled_features(args.features)
    model = train(items, _classifier_config(config))
    save_model(args.model_out, model)
    report = {
        "report_version": REPORT_VERSION,
        "subcommand": "train",
        "parameters": {
            "features": str(args.features),
            "classifier": config.classifier,
        },
        "n_train": len(items),
        "n_subjects": len({item.subject_id for item in items}),
        "vector_length": items[0].vector.size if items else 0,
        "outputs": {"model": str(args.model_out)},
        "timings": {"total_seconds": time.perf_counter() - started},
    }
    if model.kind == "mlp":
        report["mlp"] = {
            "epochs_trained": model.epochs_trained,
            "initial_loss": model.loss_history[0],
            "final_loss": model.loss_history[-1],
        }
    return report


def _cmd_evaluate(args):
    started = time.perf_counter()
    config = _stage_config(args)
    model = load_model(args.model)
    items = load_labeled_features(args.features)
    ks = _int_list(args.ranks) if args.ranks else list(config.ranks)
    result = evaluate(model, items, ks=ks, split_description=str(args.features))
    report = {
        "report_version": REPORT_VERSION,
        "subcommand": "evaluate",
        "parameters": {
            "model": str(args.model),
            "features": str(args.features),
            "ranks": ks,
        },
        "evaluation": result.to_dict(),
        "timings": {"total_seconds": time.perf_counter() - started},
    }
    return report


def _cmd_pipeline(args):
    config = _stage_config(args)
    split_seeds = _int_list(args.split_seeds) if args.split_seeds else None
    report = run_experiment(
        args.dataset, config=config, split_seeds=split_seeds, workers=args.workers
    )
    report["subcommand"] = "pipeline"
    return report


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> argparse.ArgumentParser:
    report_parent = _Parser(add_help=False)
    report_parent.add_argument(
        "--report",
        metavar="FILE",
        help=f"also write the JSON report here (relative paths land in ${REPORT_DIR_ENV} when set)",
    )

    config_parent = _Parser(add_help=False)
    config_parent.add_argument("--config", metavar="FILE", help="pipeline config JSON")
    config_parent.add_argument(
        "--set",
        metavar="KEY=VALUE",
        action="append",
        help="override one config entry (repeatable; value parsed as JSON)",
    )

    parser = _Parser(
        prog="rangeface",
        description="Occlusion-robust 3D face pipeline: smooth, register, "
        "detect, restore, extract features, and recognize.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser(
        "synth", parents=[report_parent], help="generate a synthetic scan dataset"
    )
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--occlusions", type=int, default=4, help="occluded scans per subject")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=32)
    p.add_argument("--points", type=int, default=4000, help="points per occluded scan")
    p.add_argument("--noise-sigma", type=float, default=0.002)
    p.add_argument("--max-rotation-deg", type=float, default=12.0)
    p.add_argument("--max-translation", type=float, default=0.15)
    p.add_argument("--occlusion-height", type=float, default=0.5)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser(
        "preprocess",
        parents=[report_parent, config_parent],
        help="median-smooth a range image (or a projected .xyz cloud)",
    )
    p.add_argument("input", help="range image .pgm or point cloud .xyz")
    p.add_argument("--output", metavar="FILE", help="write the smoothed image here")
    p.add_argument("--radius", type=int, help="filter window radius")
    p.add_argument("--grid-size", type=int, default=32, help="grid for .xyz projection")
    p.add_argument("--pixel-spacing", type=float, help="grid spacing for .xyz projection")
    p.set_defaults(handler=_cmd_preprocess)

    p = sub.add_parser(
        "register",
        parents=[report_parent, config_parent],
        help="rigidly align a probe cloud to a model cloud",
    )
    p.add_argument("--probe", required=True, metavar="FILE")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument(
        "--probe-points",
        type=int,
        help="subsample the probe to this many points (default: use all)",
    )
    p.set_defaults(handler=_cmd_register)

    p = sub.add_parser(
        "detect",
        parents=[report_parent, config_parent],
        help="threshold a probe against a reference face",
    )
    p.add_argument("--probe", required=True, metavar="FILE")
    p.add_argument("--reference", required=True, metavar="FILE")
    p.add_argument("--tolerance", type=float, help="fraction of the column maximum")
    largest = p.add_mutually_exclusive_group()
    largest.add_argument(
        "--keep-largest", dest="keep_largest", action="store_true", default=None
    )
    largest.add_argument(
        "--no-keep-largest", dest="keep_largest", action="store_false"
    )
    p.add_argument("--mask-out", metavar="FILE", help="write the occlusion mask (8-bit PGM)")
    p.add_argument("--diff-out", metavar="FILE", help="write the difference map (16-bit PGM)")
    p.set_defaults(handler=_cmd_detect)

    p = sub.add_parser(
        "restore",
        parents=[report_parent, config_parent],
        help="fit a face basis and/or restore masked pixels from one",
    )
    p.add_argument("--fit-from", metavar="DIR", help="train the basis on a dataset's neutral scans")
    p.add_argument("--basis-out", metavar="FILE", help="save the fitted basis")
    p.add_argument("--basis", metavar="FILE", help="load a previously fitted basis")
    p.add_argument("--image", metavar="FILE", help="occluded range image to restore")
    p.add_argument("--mask", metavar="FILE", help="occlusion mask for --image")
    p.add_argument("--output", metavar="FILE", help="write the restored image here")
    p.set_defaults(handler=_cmd_restore)

    p = sub.add_parser(
        "features",
        parents=[report_parent, config_parent],
        help="extract a feature vector from a range image",
    )
    p.add_argument("--image", required=True, metavar="FILE")
    p.add_argument("--kind", choices=("normal", "pca"), default="normal")
    p.add_argument("--basis", metavar="FILE", help="face basis (required for --kind pca)")
    p.add_argument("--downsample-factor", type=int)
    p.add_argument("--pixel-spacing", type=float)
    p.add_argument("--output", metavar="FILE", help="write the vector as numeric text")
    p.add_argument(
        "--normal-image", metavar="FILE", help="write a false-color normal map (PPM)"
    )
    p.set_defaults(handler=_cmd_features)

    p = sub.add_parser(
        "train",
        parents=[report_parent, config_parent],
        help="fit a classifier on labeled feature vectors",
    )
    p.add_argument("--features", required=True, metavar="FILE", help="labeled feature JSON")
    p.add_argument("--model-out", required=True, metavar="FILE")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser(
        "evaluate",
        parents=[report_parent, config_parent],
        help="measure rank-k recognition rates of a trained model",
    )
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--features", required=True, metavar="FILE", help="labeled feature JSON")
    p.add_argument("--ranks", metavar="K1,K2,...", help="ranks to report (default from config)")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser(
        "pipeline",
        parents=[report_parent, config_parent],
        help="run the full experiment over a dataset directory",
    )
    p.add_argument("dataset", help="dataset directory with manifest.json")
    p.add_argument("--split-seeds", metavar="S1,S2,...", help="evaluation split seeds")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        report = args.handler(args)
        _write_report(report, args)
    except ValidationError as exc:
        return _fail(exc, EXIT_VALIDATION)
    except (DatasetError, OSError) as exc:
        return _fail(exc, EXIT_IO)
    except NumericalError as exc:
        return _fail(exc, EXIT_NUMERICAL)
    return EXIT_OK


def _fail(exc, code: int) -> int:
    payload = {
        "error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}
    }
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

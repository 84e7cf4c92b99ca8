"""Generate a synthetic scan collection and look at what is in it.

Every scan is a scattered 3-D point cloud of a bumpy synthetic face:
10 subjects, each with one neutral scan plus posed copies wearing an
elliptical occluder (patch / band / blob / edge).  The manifest keeps the
ground-truth pose and footprint of every scan so later stages can be scored
against the truth.

Run from the repository root:

    python demos/01_build_a_dataset.py
"""

import argparse
from pathlib import Path

from rangeface import (
    OcclusionKind,
    generate_synthetic_dataset,
    load_dataset,
    project_to_image,
)

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:  # plots are a bonus, the numbers tell the story
    plt = None


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--out", type=Path, default=Path(__file__).parent / "output" / "dataset"
    )
    args = parser.parse_args()

    manifest = generate_synthetic_dataset(
        args.out, n_subjects=10, occlusions_per_subject=3, seed=0,
        grid_size=32, n_points=4000,
    )
    print(f"wrote dataset to {args.out}")
    print(
        f"  {manifest['n_subjects']} subjects, "
        f"{len(manifest['scans'])} scans, grid {manifest['grid_size']}, "
        f"pixel spacing {manifest['pixel_spacing']:.4f}"
    )

    _, scans = load_dataset(args.out)
    kinds = {}
    for scan in scans:
        kinds[scan.kind.value] = kinds.get(scan.kind.value, 0) + 1
    print("  scans by kind:", ", ".join(f"{k}={v}" for k, v in sorted(kinds.items())))

    neutral = next(s for s in scans if s.kind is OcclusionKind.NONE)
    occluded = next(s for s in scans if s.kind is not OcclusionKind.NONE)
    print(f"\nexample neutral scan : {neutral.file_name} "
          f"({neutral.cloud.points.shape[0]} points)")
    print(f"example occluded scan: {occluded.file_name} "
          f"({occluded.cloud.points.shape[0]} points)")
    print(
        "  planted footprint   : center "
        f"({occluded.occlusion.footprint.center_x:.2f}, "
        f"{occluded.occlusion.footprint.center_y:.2f}), radii "
        f"({occluded.occlusion.footprint.radius_x:.2f}, "
        f"{occluded.occlusion.footprint.radius_y:.2f}), "
        f"raised by {occluded.occlusion.height_offset:.2f}"
    )
    angle = occluded.transform.rotation_angle()
    print(
        f"  ground-truth pose   : rotation {angle:.4f} rad, "
        f"translation {occluded.transform.translation}"
    )

    if plt is None:
        print("\nmatplotlib not installed, skipping the picture")
        return

    grid, spacing = manifest["grid_size"], manifest["pixel_spacing"]
    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    for ax, scan, title in (
        (axes[0], neutral, "neutral"),
        (axes[1], occluded, f"occluded ({occluded.kind.value})"),
    ):
        img = project_to_image(scan.cloud, grid, spacing, median_radius=1)
        ax.imshow(img.depth, origin="lower", cmap="viridis")
        ax.set_title(f"{title}\n{scan.file_name}")
        ax.set_xticks([])
        ax.set_yticks([])
    out_png = args.out.parent / "dataset_preview.png"
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    print(f"\nsaved preview to {out_png}")


if __name__ == "__main__":
    main()

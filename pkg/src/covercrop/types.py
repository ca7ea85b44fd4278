"""Shared domain types for the biomass-estimation pipeline.

Raster conventions:
  * RGB images are ``uint8`` arrays of shape ``(height, width, 3)``.
  * Disparity maps are float arrays of shape ``(height, width)`` in pixels;
    0 marks a no-match pixel (stereo-matcher convention).
  * Metric rasters (depth, height, biomass maps) are float arrays where
    invalid pixels are IEEE quiet NaN.

All dataclasses here are frozen: instances are immutable after
construction and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_PLANT_HEIGHT_M = 0.65  # tallest canopy the rig can image with stereo clearance
STEREO_CLEARANCE_M = 0.85  # minimum camera-to-canopy distance for depth sensing


@dataclass(frozen=True)
class StereoIntrinsics:
    """Stereo camera constants used for disparity/depth conversion.

    The defaults are not measured device constants; they are chosen so the
    quantization-limited depth resolution at 1.5 m range is exactly 1 mm.
    """

    focal_px: float = 937.5
    baseline_m: float = 0.075
    camera_height_m: float = 1.5
    subpixel_step: float = 1.0 / 32.0

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValueError(f"focal_px must be > 0, got {self.focal_px}")
        if self.baseline_m <= 0:
            raise ValueError(f"baseline_m must be > 0, got {self.baseline_m}")
        if self.camera_height_m <= 0:
            raise ValueError(f"camera_height_m must be > 0, got {self.camera_height_m}")
        if self.subpixel_step <= 0:
            raise ValueError(f"subpixel_step must be > 0, got {self.subpixel_step}")


@dataclass(frozen=True)
class SensorPose:
    """Sensor position in world meters plus heading about +z (radians)."""

    x: float
    y: float
    z: float
    heading_rad: float = 0.0


@dataclass(frozen=True)
class Quadrat:
    """Square ground sampling frame, addressed by its lower-left corner."""

    plot_id: str
    x_m: float
    y_m: float
    side_m: float = 0.5

    def __post_init__(self):
        if self.side_m <= 0:
            raise ValueError(f"quadrat side must be > 0, got {self.side_m}")

    @property
    def area_m2(self) -> float:
        return self.side_m * self.side_m

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_m + self.side_m / 2.0, self.y_m + self.side_m / 2.0)


@dataclass(frozen=True)
class BiomassSample:
    """One quadrat's ground-truth dry above-ground biomass in kg/m^2."""

    sample_id: str
    quadrat: Quadrat
    date_index: int
    dry_agb_kg_per_m2: float
    frame_index: int | None = None


@dataclass(frozen=True)
class Plot:
    """Experimental plot: world rectangle plus treatment assignment."""

    plot_id: str
    block: int
    density_factor: float
    rect: tuple[float, float, float, float]  # x0, y0, width, height (meters)

    def contains(self, x: float, y: float) -> bool:
        x0, y0, w, h = self.rect
        return x0 <= x <= x0 + w and y0 <= y <= y0 + h


@dataclass(frozen=True)
class MultimodalFrame:
    """Paired RGB + disparity raster with acquisition metadata.

    ``footprint_m`` is the (width, height) of the ground area the frame
    covers, centered under the pose; the top-down render is orthographic
    so world<->pixel mapping is affine.
    """

    frame_index: int
    rgb: np.ndarray
    disparity: np.ndarray
    pose: SensorPose
    footprint_m: tuple[float, float]
    date_index: int = 0

    def __post_init__(self):
        # numpy arrays are mutable; treat them as logically frozen.
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) in pixels."""
        return self.disparity.shape[0], self.disparity.shape[1]

    def world_to_pixel(self, x: float, y: float) -> tuple[float, float]:
        """Map world meters to fractional (row, col). Row 0 is the +y edge."""
        fw, fh = self.footprint_m
        h, w = self.shape
        col = (x - (self.pose.x - fw / 2.0)) / fw * w
        row = ((self.pose.y + fh / 2.0) - y) / fh * h
        return row, col

    def contains_quadrat(self, q: Quadrat) -> bool:
        fw, fh = self.footprint_m
        return (
            self.pose.x - fw / 2.0 <= q.x_m
            and q.x_m + q.side_m <= self.pose.x + fw / 2.0
            and self.pose.y - fh / 2.0 <= q.y_m
            and q.y_m + q.side_m <= self.pose.y + fh / 2.0
        )

    def quadrat_roi(self, q: Quadrat) -> tuple[int, int, int, int]:
        """Pixel rectangle (row0, row1, col0, col1) covering the quadrat."""
        r0, c0 = self.world_to_pixel(q.x_m, q.y_m + q.side_m)
        r1, c1 = self.world_to_pixel(q.x_m + q.side_m, q.y_m)
        h, w = self.shape
        row0 = max(0, int(np.floor(r0)))
        col0 = max(0, int(np.floor(c0)))
        row1 = min(h, int(np.ceil(r1)))
        col1 = min(w, int(np.ceil(c1)))
        if row1 <= row0 or col1 <= col0:
            raise ValueError(f"quadrat {q} does not overlap frame {self.frame_index}")
        return row0, row1, col0, col1


@dataclass(frozen=True)
class PolarScan:
    """One 2D LiDAR revolution: (angle, range) pairs at a fixed pose.

    Angles are radians from nadir within the scan plane (the vertical
    plane perpendicular to the travel axis); positive angles point to +y.
    Returns beyond ``max_range_m`` are dropped, so ranges are in
    (0, max_range_m] and angles are strictly increasing.
    """

    pose: SensorPose
    angles_rad: np.ndarray
    ranges_m: np.ndarray
    angular_res_deg: float = 0.1
    max_range_m: float = 12.0
    timestamp_s: float = 0.0

    @property
    def n_points(self) -> int:
        return len(self.ranges_m)


@dataclass(frozen=True)
class PointCloud:
    """World-frame 3D points, shape (n, 3)."""

    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class Dataset:
    """Frames + biomass samples + provenance manifest."""

    frames: list[MultimodalFrame] = field(default_factory=list)
    samples: list[BiomassSample] = field(default_factory=list)
    plots: list[Plot] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def frame_by_index(self, idx: int) -> MultimodalFrame | None:
        for f in self.frames:
            if f.frame_index == idx:
                return f
        return None


# ---------------------------------------------------------------------------
# Raster validation helpers


def check_rgb(img: np.ndarray, name: str = "rgb") -> np.ndarray:
    """Validate an RGB image array; returns it unchanged."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name}: expected (h, w, 3) array, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"{name}: expected uint8, got {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{name}: dimensions must be >= 1, got {img.shape}")
    return img


def check_disparity(disp: np.ndarray, name: str = "disparity") -> np.ndarray:
    """Validate a disparity raster: finite, non-negative, 2-D float."""
    disp = np.asarray(disp, dtype=float)
    if disp.ndim != 2:
        raise ValueError(f"{name}: expected 2-D array, got shape {disp.shape}")
    if not np.all(np.isfinite(disp)):
        raise ValueError(f"{name}: disparities must be finite (0 marks no-match)")
    if np.any(disp < 0):
        raise ValueError(f"{name}: disparities must be >= 0")
    return disp


def check_metric_raster(ras: np.ndarray, name: str = "raster") -> np.ndarray:
    """Validate a metric raster: 2-D float, NaN marks invalid pixels."""
    ras = np.asarray(ras, dtype=float)
    if ras.ndim != 2:
        raise ValueError(f"{name}: expected 2-D array, got shape {ras.shape}")
    valid = ras[~np.isnan(ras)]
    if valid.size and not np.all(np.isfinite(valid)):
        raise ValueError(f"{name}: non-NaN values must be finite")
    return ras


def validate_dataset(dataset: Dataset) -> list[str]:
    """Check every dataset invariant; returns a list of violation messages.

    Violations are data, not failures: an empty list means the dataset is
    well formed. The check is side-effect free and idempotent.
    """
    violations: list[str] = []
    plot_ids = {p.plot_id for p in dataset.plots}
    frame_indices = set()

    for f in dataset.frames:
        tag = f"frame {f.frame_index}"
        if f.frame_index in frame_indices:
            violations.append(f"{tag}: duplicate frame_index")
        frame_indices.add(f.frame_index)
        try:
            check_rgb(f.rgb, tag + " rgb")
        except ValueError as e:
            violations.append(str(e))
        try:
            check_disparity(f.disparity, tag + " disparity")
        except ValueError as e:
            violations.append(str(e))
        if f.rgb.ndim == 3 and f.rgb.shape[:2] != f.disparity.shape[:2]:
            violations.append(
                f"{tag}: rgb {f.rgb.shape[1]}x{f.rgb.shape[0]} and disparity "
                f"{f.disparity.shape[1]}x{f.disparity.shape[0]} dimensions differ"
            )

    for s in dataset.samples:
        tag = f"sample {s.sample_id}"
        if s.dry_agb_kg_per_m2 < 0:
            violations.append(f"{tag}: dry_agb_kg_per_m2 = {s.dry_agb_kg_per_m2} < 0")
        if plot_ids and s.quadrat.plot_id not in plot_ids:
            violations.append(f"{tag}: references unknown plot {s.quadrat.plot_id!r}")
        if s.frame_index is not None and s.frame_index not in frame_indices:
            violations.append(f"{tag}: references missing frame {s.frame_index}")
        if dataset.frames and not any(
            f.contains_quadrat(s.quadrat) for f in dataset.frames
        ):
            violations.append(f"{tag}: quadrat not covered by any frame footprint")

    if dataset.manifest.get("synthetic") and "seed" not in dataset.manifest:
        violations.append("manifest: synthetic dataset without recorded seed")

    return violations

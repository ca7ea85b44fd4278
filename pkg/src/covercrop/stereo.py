"""Disparity-to-depth conversion and the depth-resolution model.

A rectified stereo pair with focal length f (pixels) and baseline B
(meters) relates disparity d (pixels) to range Z (meters) by Z = f*B/d.
Disparity 0 marks a no-match pixel and maps to NaN depth. No hole
filling is performed; downstream statistics are invalid-aware instead.
"""

from __future__ import annotations

import numpy as np

from .types import MAX_PLANT_HEIGHT_M, StereoIntrinsics, check_disparity

DEFAULT_INTRINSICS = StereoIntrinsics()


def disparity_to_depth(disp: np.ndarray, intr: StereoIntrinsics) -> np.ndarray:
    """Per-pixel Z = f*B/d; zero-disparity pixels become NaN."""
    disp = check_disparity(disp)
    fb = intr.focal_px * intr.baseline_m
    depth = np.full(disp.shape, np.nan, dtype=float)
    valid = disp > 0
    depth[valid] = fb / disp[valid]
    return depth


def depth_to_disparity(depth: np.ndarray, intr: StereoIntrinsics) -> np.ndarray:
    """Inverse of :func:`disparity_to_depth`; NaN depth becomes disparity 0."""
    depth = np.asarray(depth, dtype=float)
    fb = intr.focal_px * intr.baseline_m
    disp = np.zeros(depth.shape, dtype=float)
    valid = ~np.isnan(depth)
    disp[valid] = fb / depth[valid]
    return disp


def depth_to_height(
    depth: np.ndarray,
    camera_height_m: float,
    max_plant_height_m: float = MAX_PLANT_HEIGHT_M,
) -> np.ndarray:
    """Canopy height above ground: clamp(camera_height - Z, 0, max).

    NaN depth pixels propagate to NaN heights.
    """
    if camera_height_m <= max_plant_height_m:
        raise ValueError(
            f"camera_height_m ({camera_height_m}) must exceed "
            f"max_plant_height_m ({max_plant_height_m})"
        )
    depth = np.asarray(depth, dtype=float)
    height = camera_height_m - depth
    np.clip(height, 0.0, max_plant_height_m, out=height)
    return height


def depth_resolution(z_m, intr: StereoIntrinsics = DEFAULT_INTRINSICS):
    """Smallest distinguishable depth change at range z.

    One subpixel quantization step in disparity shifts depth by
    dZ = z^2 * step / (f * B), so resolution degrades quadratically
    with range. Accepts scalars or arrays; z must be positive.
    """
    z = np.asarray(z_m, dtype=float)
    if np.any(z <= 0):
        raise ValueError("depth_resolution requires z > 0")
    res = z * z * intr.subpixel_step / (intr.focal_px * intr.baseline_m)
    return float(res) if np.isscalar(z_m) else res


def quantize_disparity(disp: np.ndarray, intr: StereoIntrinsics) -> np.ndarray:
    """Round disparities to the matcher's subpixel grid (0 stays 0)."""
    disp = np.asarray(disp, dtype=float)
    return np.round(disp / intr.subpixel_step) * intr.subpixel_step

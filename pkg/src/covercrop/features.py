"""Vegetation segmentation and canopy feature extraction.

The classical models consume one FeatureVec per quadrat: ground-cover
fraction from RGB segmentation plus height statistics from the stereo
chain. The fusion network consumes raw 4-channel tensors built here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stereo import disparity_to_depth, depth_to_height
from .types import (
    MAX_PLANT_HEIGHT_M,
    Dataset,
    MultimodalFrame,
    Quadrat,
    StereoIntrinsics,
    check_metric_raster,
    check_rgb,
)

# Fallback chroma threshold when the excess-green histogram is not
# bimodal (frame almost entirely vegetation or entirely soil).
VEG_EXG_FLOOR = 0.10
MIN_CLASS_GAP = 0.15

FEATURE_NAMES = (
    "cc_pixel_density",
    "height_mean_m",
    "height_p90_m",
    "height_max_m",
    "valid_fraction",
)


@dataclass(frozen=True)
class FeatureVec:
    """Cover fraction plus canopy-height statistics for one quadrat."""

    cc_pixel_density: float
    height_mean_m: float
    height_p90_m: float
    height_max_m: float
    valid_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.cc_pixel_density <= 1.0:
            raise ValueError(f"cc_pixel_density out of [0,1]: {self.cc_pixel_density}")
        if not 0.0 <= self.valid_fraction <= 1.0:
            raise ValueError(f"valid_fraction out of [0,1]: {self.valid_fraction}")
        for name in ("height_mean_m", "height_p90_m", "height_max_m"):
            v = getattr(self, name)
            if not 0.0 <= v <= MAX_PLANT_HEIGHT_M:
                raise ValueError(f"{name} out of [0, {MAX_PLANT_HEIGHT_M}]: {v}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.cc_pixel_density,
                self.height_mean_m,
                self.height_p90_m,
                self.height_max_m,
                self.valid_fraction,
            ]
        )


def excess_green(rgb: np.ndarray) -> np.ndarray:
    """Excess-green index on chromatic coordinates: 2g - r - b in [-1, 2].

    Chromatic coordinates normalize out brightness, so the index is
    invariant to uniform illumination scaling. Black pixels get 0.
    """
    rgb = check_rgb(rgb).astype(float)
    total = rgb.sum(axis=2)
    exg = np.zeros(total.shape, dtype=float)
    nz = total > 0
    exg[nz] = (2.0 * rgb[:, :, 1] - rgb[:, :, 0] - rgb[:, :, 2])[nz] / total[nz]
    return exg


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Threshold maximizing between-class variance over a histogram.

    Returns the lower edge of the first bin of the upper class, so
    ``value > threshold`` selects the upper class. Degenerate input
    (all values equal) returns that value.
    """
    flat = np.asarray(values, dtype=float).ravel()
    lo, hi = float(flat.min()), float(flat.max())
    if hi - lo < 1e-12:
        return lo
    counts, edges = np.histogram(flat, bins=bins, range=(lo, hi))
    p = counts / counts.sum()
    omega = np.cumsum(p)
    mu = np.cumsum(p * (edges[:-1] + edges[1:]) / 2.0)
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    sigma_b[~np.isfinite(sigma_b)] = 0.0
    k = int(np.argmax(sigma_b))
    return float(edges[k + 1])


def segment_vegetation(rgb: np.ndarray) -> np.ndarray:
    """Boolean vegetation mask from the excess-green index.

    Otsu picks the threshold when the index is bimodal; if the two
    classes it finds are not meaningfully separated (single-class
    frame), a fixed chroma floor decides instead.
    """
    exg = excess_green(rgb)
    thr = otsu_threshold(exg)
    above = exg > thr
    if not above.any() or above.all():
        thr = VEG_EXG_FLOOR
    elif exg[above].mean() - exg[~above].mean() < MIN_CLASS_GAP:
        thr = VEG_EXG_FLOOR
    return exg > thr


def pixel_density(mask: np.ndarray, roi: tuple[int, int, int, int]) -> float:
    """Fraction of vegetation pixels inside the ROI (row0, row1, col0, col1)."""
    row0, row1, col0, col1 = roi
    sub = np.asarray(mask, dtype=bool)[row0:row1, col0:col1]
    if sub.size == 0:
        raise ValueError(f"empty ROI {roi}")
    return float(sub.mean())


def percentile_nearest_rank(values: np.ndarray, q: float) -> float:
    """Nearest-rank (ceiling) percentile: the ceil(q*n)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("percentile of empty set")
    rank = int(np.ceil(q * v.size))
    return float(v[max(rank, 1) - 1])


def height_stats(
    heights: np.ndarray, mask: np.ndarray, roi: tuple[int, int, int, int]
) -> tuple[float, float, float, float]:
    """(mean, p90, max, valid_fraction) over vegetation pixels in the ROI.

    Only vegetation-masked pixels with valid (non-NaN) height count;
    valid_fraction is the share of masked pixels with usable depth.
    With no such pixels everything is 0.
    """
    row0, row1, col0, col1 = roi
    h = check_metric_raster(heights)[row0:row1, col0:col1]
    m = np.asarray(mask, dtype=bool)[row0:row1, col0:col1]
    if h.size == 0:
        raise ValueError(f"empty ROI {roi}")
    veg_n = int(m.sum())
    usable = m & ~np.isnan(h)
    vals = h[usable]
    if vals.size == 0:
        return 0.0, 0.0, 0.0, 0.0
    return (
        float(vals.mean()),
        percentile_nearest_rank(vals, 0.90),
        float(vals.max()),
        float(vals.size) / float(veg_n),
    )


def downsample(raster: np.ndarray, target: int) -> np.ndarray:
    """Reduce a square-factor raster to target x target.

    RGB rasters get a box-filter area average per block; metric rasters
    get an invalid-aware median per block (all-NaN block stays NaN).
    The target must evenly divide both source dimensions; upsampling is
    rejected.
    """
    ras = np.asarray(raster)
    h, w = ras.shape[:2]
    if target > h or target > w:
        raise ValueError(f"cannot upsample {w}x{h} to {target}x{target}")
    if h % target or w % target:
        raise ValueError(
            f"target {target} must evenly divide source dimensions {w}x{h}"
        )
    bh, bw = h // target, w // target
    if ras.ndim == 3:
        blocks = ras.reshape(target, bh, target, bw, ras.shape[2]).astype(float)
        out = blocks.mean(axis=(1, 3))
        return np.clip(np.round(out), 0, 255).astype(np.uint8)
    blocks = ras.astype(float).reshape(target, bh, target, bw)
    blocks = blocks.transpose(0, 2, 1, 3).reshape(target, target, bh * bw)
    out = np.full((target, target), np.nan)
    valid = ~np.isnan(blocks)
    any_valid = valid.any(axis=2)
    # nanmedian warns on all-NaN slices; compute only where something is valid
    if any_valid.any():
        out[any_valid] = np.nanmedian(blocks[any_valid], axis=1)
    return out


def feature_vector(
    frame: MultimodalFrame,
    roi: Quadrat | tuple[int, int, int, int],
    intr: StereoIntrinsics,
) -> FeatureVec:
    """Extract the FeatureVec for one quadrat from one frame.

    Segmentation runs on the full frame (Otsu needs both classes in the
    histogram); statistics are then restricted to the ROI.
    """
    if isinstance(roi, Quadrat):
        roi = frame.quadrat_roi(roi)
    mask = segment_vegetation(frame.rgb)
    depth = disparity_to_depth(frame.disparity, intr)
    height = depth_to_height(depth, frame.pose.z)
    density = pixel_density(mask, roi)
    mean_h, p90, mx, valid_frac = height_stats(height, mask, roi)
    return FeatureVec(
        cc_pixel_density=density,
        height_mean_m=mean_h,
        height_p90_m=p90,
        height_max_m=mx,
        valid_fraction=valid_frac,
    )


def fusion_tensor(
    frame: MultimodalFrame, intr: StereoIntrinsics, resolution: int | None = None
) -> np.ndarray:
    """4-channel (4, H, W) tensor: RGB in [0,1] plus normalized height.

    Early fusion input for the residual network. Invalid height pixels
    become 0 in the height channel. If ``resolution`` is given the frame
    is block-downsampled to it first.
    """
    rgb = frame.rgb
    depth = disparity_to_depth(frame.disparity, intr)
    height = depth_to_height(depth, frame.pose.z)
    if resolution is not None and resolution != rgb.shape[0]:
        rgb = downsample(rgb, resolution)
        height = downsample(height, resolution)
    t = np.empty((4,) + height.shape, dtype=float)
    t[:3] = rgb.astype(float).transpose(2, 0, 1) / 255.0
    hc = height / MAX_PLANT_HEIGHT_M
    hc = np.where(np.isnan(hc), 0.0, hc)
    t[3] = hc
    return t


def dataset_features(
    dataset: Dataset, intr: StereoIntrinsics
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Feature matrix, target vector, and sample ids for a dataset.

    Samples without a rendered frame are skipped.
    """
    rows, targets, ids = [], [], []
    frames = {f.frame_index: f for f in dataset.frames}
    for s in dataset.samples:
        if s.frame_index is None or s.frame_index not in frames:
            continue
        fv = feature_vector(frames[s.frame_index], s.quadrat, intr)
        rows.append(fv.as_array())
        targets.append(s.dry_agb_kg_per_m2)
        ids.append(s.sample_id)
    X = np.array(rows) if rows else np.empty((0, len(FEATURE_NAMES)))
    return X, np.array(targets), ids


def dataset_tensors(
    dataset: Dataset, intr: StereoIntrinsics, resolution: int | None = None
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Stacked fusion tensors (n, 4, H, W), targets, and sample ids."""
    tensors, targets, ids = [], [], []
    frames = {f.frame_index: f for f in dataset.frames}
    for s in dataset.samples:
        if s.frame_index is None or s.frame_index not in frames:
            continue
        tensors.append(fusion_tensor(frames[s.frame_index], intr, resolution))
        targets.append(s.dry_agb_kg_per_m2)
        ids.append(s.sample_id)
    X = np.stack(tensors) if tensors else np.empty((0, 4, 0, 0))
    return X, np.array(targets), ids

"""Procedural field-trial generator.

Builds a randomized-complete-block layout of plots with a density
treatment, grows a clumpy canopy per plot, samples quadrats for
ground-truth biomass, and renders what a nadir RGB-depth rig would see.

Canopy model: each plot holds point clumps; a clump at (cx, cy) with
scale sigma and amplitude a contributes ``a * exp(-r^2 / (2 sigma^2))``
out to ``TRUNC_RADIUS_SIGMA * sigma`` and nothing beyond. Clump draws
are prefix-stable: a plot at a higher density factor reuses the lower
factor's clumps and appends more, so per-pixel height (and therefore
biomass) never decreases when only the density factor is raised.

Growth dates scale the whole height field by fixed multipliers; cover
is height above ``COVER_THRESHOLD_M``, so early dates show both shorter
and sparser canopy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import substream
from .stereo import quantize_disparity
from .types import (
    MAX_PLANT_HEIGHT_M,
    STEREO_CLEARANCE_M,
    BiomassSample,
    Dataset,
    MultimodalFrame,
    Plot,
    PolarScan,
    Quadrat,
    SensorPose,
    StereoIntrinsics,
)

# Canopy constants. Calibrated so default-config biomass spans roughly
# 0 .. 1 kg/m^2 across treatments and dates.
COVER_THRESHOLD_M = 0.02      # canopy lower than this reads as bare soil
TRUNC_RADIUS_SIGMA = 2.0      # clump influence cutoff, in sigmas
CLUMPS_PER_M2 = 1.1           # clump density at treatment factor 1.0
CLUMP_SIGMA_RANGE = (0.22, 0.46)   # meters
CLUMP_AMP_RANGE = (0.18, 0.48)     # meters
SQUASH_HEIGHT_M = 0.64        # soft ceiling for stacked clumps, < MAX_PLANT_HEIGHT_M
DATE_HEIGHT_SCALES = (0.45, 0.70, 1.0)
FRAME_FOOTPRINT_M = 0.8       # ground extent of one rendered frame (square)
RANGE_QUANT_M = 0.001         # LiDAR range quantization

# Allometric calibration: biomass = COEFF * sqrt(density) * cover * height,
# anchored so (height 0.5 m, cover 0.9, density 1.0) -> 0.8 kg/m^2.
BIOMASS_COEFF = 16.0 / 9.0
DENSITY_EXPONENT = 0.5

VEGETATION_RGB = (58, 124, 52)
SOIL_RGB = (120, 96, 72)


class GeometryError(ValueError):
    """Sensor geometry violates an acquisition constraint."""


class PlacementError(RuntimeError):
    """Quadrats cannot be placed without overlap."""


@dataclass(frozen=True)
class FieldConfig:
    """Design of the synthetic trial."""

    n_plots: int = 27
    plot_w_m: float = 20.0
    plot_h_m: float = 12.0
    density_factors: tuple[float, ...] = (0.25, 0.75, 1.5)
    replications: int = 3
    quadrats_per_plot: int = 5
    n_dates: int = 3
    noise_sd: float = 0.02
    seed: int = 0
    quadrat_side_m: float = 0.5
    plot_gap_m: float = 2.0

    def __post_init__(self):
        if self.n_plots < 1:
            raise ValueError("n_plots must be >= 1")
        cell = len(self.density_factors) * self.replications
        if cell == 0 or self.n_plots % cell != 0:
            raise ValueError(
                f"n_plots ({self.n_plots}) must be a multiple of "
                f"|density_factors| * replications ({cell})"
            )
        if any(d <= 0 for d in self.density_factors):
            raise ValueError("density factors must be > 0")
        if self.quadrats_per_plot < 1:
            raise ValueError("quadrats_per_plot must be >= 1")
        if self.n_dates < 1:
            raise ValueError("n_dates must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.quadrat_side_m <= 0:
            raise ValueError("quadrat_side_m must be > 0")

    @property
    def n_blocks(self) -> int:
        return self.n_plots // len(self.density_factors)

    @property
    def n_samples(self) -> int:
        return self.n_plots * self.quadrats_per_plot

    def date_scales(self) -> tuple[float, ...]:
        """Height multipliers per sampling date, last date = full growth."""
        if self.n_dates <= len(DATE_HEIGHT_SCALES):
            return DATE_HEIGHT_SCALES[-self.n_dates :]
        return tuple(np.linspace(0.4, 1.0, self.n_dates))


@dataclass(frozen=True)
class PlotCanopy:
    """One plot's canopy: clump parameters in world coordinates."""

    plot: Plot
    clump_x: np.ndarray
    clump_y: np.ndarray
    clump_sigma: np.ndarray
    clump_amp: np.ndarray
    base_height_m: float = 0.0

    @property
    def n_clumps(self) -> int:
        return len(self.clump_x)


@dataclass(frozen=True)
class FieldState:
    """Immutable canopy model for the whole field."""

    config: FieldConfig
    plots: tuple[PlotCanopy, ...]
    date_scales: tuple[float, ...]

    def height_at(self, x, y, date_index: int = 0) -> np.ndarray:
        """Canopy height (m) at world points; bare ground is 0."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        scale = self.date_scales[date_index]
        h = np.zeros(np.broadcast(x, y).shape, dtype=float)
        xf, yf = np.broadcast_arrays(x, y)
        xf, yf, hf = xf.ravel(), yf.ravel(), h.ravel()
        for pc in self.plots:
            x0, y0, w, ph = pc.plot.rect
            inside = (xf >= x0) & (xf <= x0 + w) & (yf >= y0) & (yf <= y0 + ph)
            if not inside.any():
                continue
            clumps = _clump_height(xf[inside], yf[inside], pc)
            # tanh softly caps stacked clumps below the height ceiling while
            # staying strictly increasing in every clump contribution
            hf[inside] += (
                SQUASH_HEIGHT_M * np.tanh(clumps / SQUASH_HEIGHT_M)
                + pc.base_height_m
            )
        hf *= scale
        np.clip(hf, 0.0, MAX_PLANT_HEIGHT_M, out=hf)
        return hf.reshape(h.shape) if h.shape else float(hf[0])

    def cover_at(self, x, y, date_index: int = 0) -> np.ndarray:
        return self.height_at(x, y, date_index) > COVER_THRESHOLD_M

    def plot_by_id(self, plot_id: str) -> PlotCanopy:
        for pc in self.plots:
            if pc.plot.plot_id == plot_id:
                return pc
        raise KeyError(plot_id)


def _clump_height(x: np.ndarray, y: np.ndarray, pc: PlotCanopy) -> np.ndarray:
    """Sum of truncated Gaussian bumps at the given points (pre date-scale)."""
    if pc.n_clumps == 0:
        return np.zeros(x.shape, dtype=float)
    dx = x[:, None] - pc.clump_x[None, :]
    dy = y[:, None] - pc.clump_y[None, :]
    r2 = dx * dx + dy * dy
    sig2 = pc.clump_sigma * pc.clump_sigma
    bump = pc.clump_amp * np.exp(-r2 / (2.0 * sig2))
    bump[r2 > (TRUNC_RADIUS_SIGMA * pc.clump_sigma) ** 2] = 0.0
    return bump.sum(axis=1)


# ---------------------------------------------------------------------------
# Biomass model


def allometric_biomass(
    mean_height_m: float, cover_fraction: float, density_factor: float
) -> float:
    """Dry above-ground biomass (kg/m^2) from canopy structure.

    Strictly increasing in every argument wherever the others are
    positive; exactly 0 on bare ground (cover 0).
    """
    if mean_height_m < 0:
        raise ValueError(f"mean_height_m must be >= 0, got {mean_height_m}")
    if not 0.0 <= cover_fraction <= 1.0:
        raise ValueError(f"cover_fraction must be in [0, 1], got {cover_fraction}")
    if density_factor <= 0:
        raise ValueError(f"density_factor must be > 0, got {density_factor}")
    return (
        BIOMASS_COEFF
        * density_factor**DENSITY_EXPONENT
        * cover_fraction
        * mean_height_m
    )


def quadrat_ground_truth(
    state: FieldState, quadrat: Quadrat, date_index: int, grid_n: int = 50
) -> tuple[float, float, float]:
    """(mean_height, cover_fraction, clean_agb) over a quadrat.

    Heights are averaged over the full quadrat area with gaps counting
    as zero; cover is the fraction of the area above the soil threshold.
    """
    xs = quadrat.x_m + (np.arange(grid_n) + 0.5) * quadrat.side_m / grid_n
    ys = quadrat.y_m + (np.arange(grid_n) + 0.5) * quadrat.side_m / grid_n
    gx, gy = np.meshgrid(xs, ys)
    h = state.height_at(gx.ravel(), gy.ravel(), date_index)
    mean_h = float(h.mean())
    cover = float((h > COVER_THRESHOLD_M).mean())
    pc = state.plot_by_id(quadrat.plot_id)
    return mean_h, cover, allometric_biomass(mean_h, cover, pc.plot.density_factor)


# ---------------------------------------------------------------------------
# Field generation


def _layout_plots(config: FieldConfig) -> list[Plot]:
    """RCBD layout: blocks are rows; every block holds each factor once."""
    n_factors = len(config.density_factors)
    plots = []
    margin = config.plot_gap_m
    for b in range(config.n_blocks):
        order = substream(config.seed, "block", b, "assign").permutation(n_factors)
        for j in range(n_factors):
            idx = b * n_factors + j
            x0 = margin + j * (config.plot_w_m + config.plot_gap_m)
            y0 = margin + b * (config.plot_h_m + config.plot_gap_m)
            plots.append(
                Plot(
                    plot_id=f"P{idx:02d}",
                    block=b,
                    density_factor=float(config.density_factors[order[j]]),
                    rect=(x0, y0, config.plot_w_m, config.plot_h_m),
                )
            )
    return plots


def _grow_canopy(config: FieldConfig, plot: Plot, plot_index: int) -> PlotCanopy:
    x0, y0, w, h = plot.rect
    area = w * h
    n = int(round(CLUMPS_PER_M2 * plot.density_factor * area))
    rng = substream(config.seed, "plot", plot_index, "clumps")
    # One uniform row per clump keeps draws prefix-stable across factors.
    u = rng.random((n, 4)) if n else np.empty((0, 4))
    sig_lo, sig_hi = CLUMP_SIGMA_RANGE
    amp_lo, amp_hi = CLUMP_AMP_RANGE
    sigma = sig_lo + (sig_hi - sig_lo) * u[:, 2]
    margin = TRUNC_RADIUS_SIGMA * sigma
    return PlotCanopy(
        plot=plot,
        clump_x=x0 + margin + u[:, 0] * (w - 2 * margin),
        clump_y=y0 + margin + u[:, 1] * (h - 2 * margin),
        clump_sigma=sigma,
        clump_amp=amp_lo + (amp_hi - amp_lo) * u[:, 3],
    )


def _place_quadrats(config: FieldConfig, plot: Plot, plot_index: int) -> list[Quadrat]:
    """Non-overlapping quadrats inside the plot, margin kept from edges."""
    side = config.quadrat_side_m
    edge = 0.25
    x0, y0, w, h = plot.rect
    if w - 2 * edge < side or h - 2 * edge < side:
        raise PlacementError(
            f"plot {plot.plot_id}: quadrat side {side} m does not fit "
            f"inside {w} x {h} m plot"
        )
    rng = substream(config.seed, "plot", plot_index, "quadrats")
    placed: list[Quadrat] = []
    for _ in range(config.quadrats_per_plot):
        for attempt in range(1000):
            qx = x0 + edge + rng.random() * (w - 2 * edge - side)
            qy = y0 + edge + rng.random() * (h - 2 * edge - side)
            if all(
                abs(qx - q.x_m) >= side or abs(qy - q.y_m) >= side for q in placed
            ):
                placed.append(Quadrat(plot.plot_id, qx, qy, side))
                break
        else:
            raise PlacementError(
                f"plot {plot.plot_id}: could not place "
                f"{config.quadrats_per_plot} non-overlapping quadrats"
            )
    return placed


def generate_field(
    config: FieldConfig,
    intrinsics: StereoIntrinsics = StereoIntrinsics(),
    resolution: int = 64,
    render: bool = True,
    footprint_m: float = FRAME_FOOTPRINT_M,
    dropout_rate: float = 0.0,
) -> tuple[FieldState, Dataset]:
    """Generate the trial: layout, canopy, ground truth, and frames.

    Each biomass sample gets one frame centered over its quadrat at the
    sample's growth date. Sampling dates rotate across the quadrats of a
    plot. With ``render=False`` the dataset carries samples only.
    """
    plots = _layout_plots(config)
    canopies = tuple(_grow_canopy(config, p, i) for i, p in enumerate(plots))
    state = FieldState(
        config=config, plots=canopies, date_scales=config.date_scales()
    )

    samples: list[BiomassSample] = []
    frames: list[MultimodalFrame] = []
    frame_idx = 0
    for i, plot in enumerate(plots):
        quadrats = _place_quadrats(config, plot, i)
        noise = substream(config.seed, "plot", i, "noise").standard_normal(
            config.quadrats_per_plot
        )
        for j, q in enumerate(quadrats):
            date_index = j % config.n_dates
            _, _, clean = quadrat_ground_truth(state, q, date_index)
            agb = max(0.0, clean + config.noise_sd * noise[j])
            sample_frame = None
            if render:
                cx, cy = q.center
                pose = SensorPose(cx, cy, intrinsics.camera_height_m)
                frames.append(
                    render_frame(
                        state,
                        pose,
                        intrinsics,
                        resolution,
                        footprint_m=footprint_m,
                        date_index=date_index,
                        frame_index=frame_idx,
                        dropout_rate=dropout_rate,
                    )
                )
                sample_frame = frame_idx
                frame_idx += 1
            samples.append(
                BiomassSample(
                    sample_id=f"{plot.plot_id}-Q{j}",
                    quadrat=q,
                    date_index=date_index,
                    dry_agb_kg_per_m2=float(agb),
                    frame_index=sample_frame,
                )
            )

    manifest = {
        "synthetic": True,
        "seed": config.seed,
        "config": {
            "n_plots": config.n_plots,
            "quadrats_per_plot": config.quadrats_per_plot,
            "n_dates": config.n_dates,
            "noise_sd": config.noise_sd,
            "density_factors": list(config.density_factors),
            "replications": config.replications,
        },
        "resolution": resolution,
        "footprint_m": footprint_m,
        "dropout_rate": dropout_rate,
    }
    dataset = Dataset(frames=frames, samples=samples, plots=plots, manifest=manifest)
    return state, dataset


# ---------------------------------------------------------------------------
# Frame rendering


def render_frame(
    state: FieldState,
    pose: SensorPose,
    intrinsics: StereoIntrinsics,
    resolution: int = 64,
    footprint_m: float = FRAME_FOOTPRINT_M,
    date_index: int = 0,
    frame_index: int = 0,
    dropout_rate: float = 0.0,
) -> MultimodalFrame:
    """Orthographic top-down render of RGB + quantized disparity.

    Disparity is ``f * B / (pose.z - h)`` per pixel, rounded to the
    matcher's subpixel grid; bare soil gets the soil-plane disparity.
    A positive ``dropout_rate`` knocks out random pixels (disparity 0)
    to emulate match failures.
    """
    res = int(resolution)
    if res < 1:
        raise ValueError("resolution must be >= 1")
    half = footprint_m / 2.0
    xs = pose.x - half + (np.arange(res) + 0.5) * footprint_m / res
    ys = pose.y + half - (np.arange(res) + 0.5) * footprint_m / res
    gx, gy = np.meshgrid(xs, ys)
    h = state.height_at(gx.ravel(), gy.ravel(), date_index).reshape(res, res)

    clearance = pose.z - float(h.max())
    if clearance < STEREO_CLEARANCE_M - 1e-9:
        raise GeometryError(
            f"camera at z={pose.z} m leaves {clearance:.3f} m clearance over "
            f"the canopy; needs >= {STEREO_CLEARANCE_M} m"
        )

    fb = intrinsics.focal_px * intrinsics.baseline_m
    disparity = quantize_disparity(fb / (pose.z - h), intrinsics)

    veg = h > COVER_THRESHOLD_M
    tex_rng = substream(state.config.seed, "frame", frame_index, "texture")
    rgb = np.empty((res, res, 3), dtype=float)
    # brightness rises with canopy height for a little visual structure
    shade = 0.85 + 0.3 * (h / MAX_PLANT_HEIGHT_M)
    for c in range(3):
        rgb[:, :, c] = np.where(
            veg, VEGETATION_RGB[c] * shade, float(SOIL_RGB[c])
        )
    rgb += tex_rng.integers(-10, 11, size=rgb.shape)
    rgb = np.clip(np.round(rgb), 0, 255).astype(np.uint8)

    if dropout_rate > 0:
        drop_rng = substream(state.config.seed, "frame", frame_index, "dropout")
        disparity[drop_rng.random((res, res)) < dropout_rate] = 0.0

    return MultimodalFrame(
        frame_index=frame_index,
        rgb=rgb,
        disparity=disparity,
        pose=pose,
        footprint_m=(footprint_m, footprint_m),
        date_index=date_index,
    )


# ---------------------------------------------------------------------------
# LiDAR sweep simulation


@dataclass(frozen=True)
class SweepConfig:
    """2D LiDAR sweep: scans along +x, scan plane in y-z."""

    x_start_m: float = 0.0
    y_m: float = 0.0
    n_scans: int = 10
    spacing_m: float = 0.1
    height_m: float = 1.45
    angular_res_deg: float = 0.1
    max_range_m: float = 12.0
    span_deg: float = 160.0
    date_index: int = 0
    scan_period_s: float = 1.0


def simulate_lidar_sweep(state: FieldState, sweep: SweepConfig) -> list[PolarScan]:
    """Ray-cast each scan against the canopy height field.

    Angles run across the scan fan (radians from nadir, +y positive) at
    the configured resolution; returns beyond the range limit produce no
    point. Ranges are quantized to 1 mm.
    """
    scans = []
    for i in range(sweep.n_scans):
        pose = SensorPose(
            sweep.x_start_m + i * sweep.spacing_m, sweep.y_m, sweep.height_m
        )
        angles, ranges = _cast_scan(state, pose, sweep)
        scans.append(
            PolarScan(
                pose=pose,
                angles_rad=angles,
                ranges_m=ranges,
                angular_res_deg=sweep.angular_res_deg,
                max_range_m=sweep.max_range_m,
                timestamp_s=i * sweep.scan_period_s,
            )
        )
    return scans


def _cast_scan(
    state: FieldState, pose: SensorPose, sweep: SweepConfig
) -> tuple[np.ndarray, np.ndarray]:
    half_span = math.radians(sweep.span_deg) / 2.0
    step = math.radians(sweep.angular_res_deg)
    n_rays = int(round(2.0 * half_span / step)) + 1
    angles = -half_span + step * np.arange(n_rays)

    # The fan lies in the plane x = pose.x, so one height profile along y
    # serves every ray of the scan.
    dy = 0.002
    reach = sweep.max_range_m
    ys = np.arange(pose.y - reach, pose.y + reach + dy, dy)
    profile = state.height_at(np.full(ys.shape, pose.x), ys, sweep.date_index)

    dt = 0.002
    ts = np.arange(dt, sweep.max_range_m + dt, dt)
    sin_a, cos_a = np.sin(angles), np.cos(angles)

    hit_ranges = np.full(n_rays, np.nan)
    chunk = 256
    for lo in range(0, n_rays, chunk):
        hi = min(lo + chunk, n_rays)
        ray_y = pose.y + sin_a[lo:hi, None] * ts[None, :]
        ray_z = pose.z - cos_a[lo:hi, None] * ts[None, :]
        idx = np.clip(np.round((ray_y - ys[0]) / dy).astype(int), 0, len(ys) - 1)
        below = ray_z <= profile[idx]
        first = np.argmax(below, axis=1)
        has_hit = below[np.arange(hi - lo), first]
        for k in np.nonzero(has_hit)[0]:
            j = first[k]
            t1 = ts[j]
            f1 = ray_z[k, j] - profile[idx[k, j]]
            if j == 0:
                hit_ranges[lo + k] = t1
                continue
            t0 = ts[j - 1]
            f0 = ray_z[k, j - 1] - profile[idx[k, j - 1]]
            # linear interpolation of the signed clearance along the ray
            hit_ranges[lo + k] = t0 + (t1 - t0) * f0 / (f0 - f1)

    hit_ranges = np.round(hit_ranges / RANGE_QUANT_M) * RANGE_QUANT_M
    keep = np.isfinite(hit_ranges) & (hit_ranges > 0) & (
        hit_ranges <= sweep.max_range_m
    )
    return angles[keep], hit_ranges[keep]


# ---------------------------------------------------------------------------
# Synthetic biomass gradient (for saturation analysis)


@dataclass(frozen=True)
class GradientStep:
    """One step of a monotone canopy growth sequence."""

    state: FieldState
    quadrat: Quadrat
    growth: float
    clean_agb: float


def biomass_gradient(
    n_steps: int = 20, seed: int = 0
) -> tuple[list[GradientStep], int]:
    """Monotone canopy growth sequence over one fixed quadrat.

    Up to the returned saturation index, each step adds one clump (from a
    prefix-stable pool) and raises every amplitude, so ground cover and
    canopy height both grow. From the saturation index on, the clump set
    is frozen and only amplitudes rise: every clump's footprint is fully
    above the soil threshold out to its truncation radius, so the
    vegetation mask stops changing entirely while heights keep climbing.
    """
    if n_steps < 4:
        raise ValueError("n_steps must be >= 4")
    plot = Plot("G00", 0, 1.0, (0.0, 0.0, 1.5, 1.5))
    quadrat = Quadrat("G00", 0.5, 0.5, 0.5)
    sat_index = max(2, (3 * n_steps) // 5)
    n_pool = 3 + sat_index

    rng = substream(seed, "gradient", "clumps")
    u = rng.random((n_pool, 4))
    sigma = 0.035 + 0.025 * u[:, 2]
    amp = 0.85 + 0.50 * u[:, 3]
    # clump centers sit on a shuffled, lightly jittered grid over the
    # quadrat so each added clump claims mostly uncovered ground; grid
    # spacing stays under any truncation radius, so every clump also
    # intersects the quadrat
    side = int(math.ceil(math.sqrt(n_pool)))
    cells = rng.permutation(side * side)[:n_pool]
    pitch = 0.5 / side
    cx = 0.5 + (cells % side + 0.5) * pitch + (u[:, 0] - 0.5) * 0.04
    cy = 0.5 + (cells // side + 0.5) * pitch + (u[:, 1] - 0.5) * 0.04

    growths = np.linspace(0.26, 0.80, n_steps)
    # amplitudes must clear the soil threshold at the truncation edge from
    # step 0 on; otherwise the vegetation mask would depend on amplitude
    edge_frac = math.exp(-0.5 * TRUNC_RADIUS_SIGMA**2)
    sum_thr = SQUASH_HEIGHT_M * math.atanh(COVER_THRESHOLD_M / SQUASH_HEIGHT_M)
    if growths[0] * float(amp.min()) * edge_frac < sum_thr:
        raise AssertionError("gradient amplitude floor below cover threshold")

    config = FieldConfig(
        n_plots=1,
        plot_w_m=1.5,
        plot_h_m=1.5,
        density_factors=(1.0,),
        replications=1,
        quadrats_per_plot=1,
        n_dates=1,
        noise_sd=0.0,
        seed=seed,
    )
    steps = []
    for i, g in enumerate(growths):
        n = 3 + min(i, sat_index)
        canopy = PlotCanopy(
            plot=plot,
            clump_x=cx[:n],
            clump_y=cy[:n],
            clump_sigma=sigma[:n],
            clump_amp=amp[:n] * g,
        )
        state = FieldState(config=config, plots=(canopy,), date_scales=(1.0,))
        _, _, clean = quadrat_ground_truth(state, quadrat, 0)
        steps.append(
            GradientStep(state=state, quadrat=quadrat, growth=float(g), clean_agb=clean)
        )
    return steps, sat_index

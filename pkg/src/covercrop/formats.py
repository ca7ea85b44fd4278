"""Bit-exact binary file formats for frames and LiDAR sweeps.

PPM  : binary P6, 8 bits per channel, for RGB frames.
DMAP : raster of float32 values (disparity, depth, or biomass maps).
       Layout: magic ``DMAP``, version u8, width u32 LE, height u32 LE,
       then width*height binary32 LE row-major; NaN marks invalid pixels.
LSCN : list of 2D LiDAR scans. Layout: magic ``LSCN``, version u8,
       scan count u32 LE; per scan: pose as 5 binary64 LE
       (x, y, z, heading_rad, timestamp_s), point count u32 LE, then
       (angle_rad, range_m) binary32 LE pairs.

Every decoder rejects inputs whose declared payload size disagrees with
the actual byte length, and reports the byte offset of the problem.
"""

from __future__ import annotations

import struct

import numpy as np

from .types import PolarScan, SensorPose, check_rgb

DMAP_MAGIC = b"DMAP"
LSCN_MAGIC = b"LSCN"
FORMAT_VERSION = 1

# Guards against absurd headers before allocating payload buffers.
MAX_DIM = 1 << 20
MAX_SCAN_POINTS = 1 << 24


class FormatError(ValueError):
    """Malformed file content; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


# ---------------------------------------------------------------------------
# PPM (P6)


def encode_ppm(img: np.ndarray) -> bytes:
    img = check_rgb(img)
    h, w = img.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + img.tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    if data[:2] != b"P6":
        raise FormatError(f"bad PPM magic {data[:2]!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and '#' comments between header tokens
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise FormatError(f"bad PPM header token {token!r}", start)
        fields.append(int(token))
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}", pos)
    if not (1 <= w <= MAX_DIM and 1 <= h <= MAX_DIM):
        raise FormatError(f"PPM dimensions {w}x{h} out of range", 3)
    pos += 1  # single whitespace byte after maxval
    expected = w * h * 3
    payload = data[pos:]
    if len(payload) != expected:
        raise FormatError(
            f"PPM payload is {len(payload)} bytes, expected {expected}", pos
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def write_ppm(path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(img))


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_ppm(f.read())


# ---------------------------------------------------------------------------
# DMAP


def encode_dmap(raster: np.ndarray) -> bytes:
    ras = np.asarray(raster)
    if ras.ndim != 2:
        raise ValueError(f"DMAP raster must be 2-D, got shape {ras.shape}")
    h, w = ras.shape
    if not (1 <= w <= MAX_DIM and 1 <= h <= MAX_DIM):
        raise ValueError(f"DMAP dimensions {w}x{h} out of range")
    header = DMAP_MAGIC + struct.pack("<BII", FORMAT_VERSION, w, h)
    return header + ras.astype("<f4").tobytes()


def decode_dmap(data: bytes) -> np.ndarray:
    if data[:4] != DMAP_MAGIC:
        raise FormatError(f"bad DMAP magic {data[:4]!r}", 0)
    if len(data) < 13:
        raise FormatError("truncated DMAP header", len(data))
    version, w, h = struct.unpack_from("<BII", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported DMAP version {version}", 4)
    if not (1 <= w <= MAX_DIM and 1 <= h <= MAX_DIM):
        raise FormatError(f"DMAP dimensions {w}x{h} out of range", 5)
    expected = w * h * 4
    payload = data[13:]
    if len(payload) != expected:
        raise FormatError(
            f"DMAP payload is {len(payload)} bytes, expected {expected}", 13
        )
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).copy()


def write_dmap(path, raster: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_dmap(raster))


def read_dmap(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_dmap(f.read())


# ---------------------------------------------------------------------------
# LSCN


def encode_lscn(scans: list[PolarScan]) -> bytes:
    parts = [LSCN_MAGIC + struct.pack("<BI", FORMAT_VERSION, len(scans))]
    for scan in scans:
        p = scan.pose
        parts.append(
            struct.pack("<5d", p.x, p.y, p.z, p.heading_rad, scan.timestamp_s)
        )
        n = scan.n_points
        parts.append(struct.pack("<I", n))
        pairs = np.empty((n, 2), dtype="<f4")
        pairs[:, 0] = scan.angles_rad
        pairs[:, 1] = scan.ranges_m
        parts.append(pairs.tobytes())
    return b"".join(parts)


def decode_lscn(data: bytes) -> list[PolarScan]:
    if data[:4] != LSCN_MAGIC:
        raise FormatError(f"bad LSCN magic {data[:4]!r}", 0)
    if len(data) < 9:
        raise FormatError("truncated LSCN header", len(data))
    version, n_scans = struct.unpack_from("<BI", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported LSCN version {version}", 4)
    pos = 9
    scans = []
    for i in range(n_scans):
        if len(data) < pos + 44:
            raise FormatError(f"truncated pose for scan {i}", pos)
        x, y, z, heading, t = struct.unpack_from("<5d", data, pos)
        pos += 40
        (n_pts,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if n_pts > MAX_SCAN_POINTS:
            raise FormatError(f"scan {i} point count {n_pts} out of range", pos - 4)
        nbytes = n_pts * 8
        if len(data) < pos + nbytes:
            raise FormatError(f"truncated point payload for scan {i}", pos)
        pairs = np.frombuffer(data, dtype="<f4", count=n_pts * 2, offset=pos)
        pairs = pairs.reshape(n_pts, 2)
        pos += nbytes
        scans.append(
            PolarScan(
                pose=SensorPose(x, y, z, heading),
                angles_rad=pairs[:, 0].copy(),
                ranges_m=pairs[:, 1].copy(),
                timestamp_s=t,
            )
        )
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after last scan", pos)
    return scans


def write_lscn(path, scans: list[PolarScan]) -> None:
    with open(path, "wb") as f:
        f.write(encode_lscn(scans))


def read_lscn(path) -> list[PolarScan]:
    with open(path, "rb") as f:
        return decode_lscn(f.read())

"""Flow-file I/O and color-wheel visualization.

Supports the Middlebury `.flo` container (bit-exact round trip) and the
KITTI 16-bit PNG encoding (quantized to 1/64 px with a validity channel).
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError, InvalidInputError
from .flow import FlowField
from .image import RGB, Image

FLO_MAGIC = 202021.25
UNKNOWN_FLOW = 1e10
UNKNOWN_FLOW_THRESH = 1e9
KITTI_OFFSET = 2 ** 15
KITTI_SCALE = 64.0


def write_flo(path: str | os.PathLike, flow: FlowField) -> None:
    """Middlebury format: float32 magic, int32 width/height, interleaved
    row-major (u, v) float32 pairs. Invalid pixels store the conventional
    huge sentinel value."""
    u = flow.u.astype("<f4")
    v = flow.v.astype("<f4")
    u = np.where(flow.valid, u, np.float32(UNKNOWN_FLOW))
    v = np.where(flow.valid, v, np.float32(UNKNOWN_FLOW))
    data = np.stack([u, v], axis=2).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", flow.width, flow.height))
        fh.write(data.tobytes())


def read_flo(path: str | os.PathLike) -> FlowField:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) != 4:
            raise FormatError(f"truncated flow file {path}")
        (magic,) = struct.unpack("<f", head)
        if magic != np.float32(FLO_MAGIC):
            raise FormatError(f"bad flow magic {magic!r} in {path}")
        dims = fh.read(8)
        if len(dims) != 8:
            raise FormatError(f"truncated flow header in {path}")
        w, h = struct.unpack("<ii", dims)
        if w <= 0 or h <= 0 or w > 10**6 or h > 10**6:
            raise FormatError(f"implausible flow dimensions {w}x{h} in {path}")
        raw = fh.read(8 * w * h)
        if len(raw) != 8 * w * h:
            raise FormatError(f"truncated flow data in {path}")
    data = np.frombuffer(raw, dtype="<f4").reshape(h, w, 2).astype(np.float64)
    u = data[:, :, 0]
    v = data[:, :, 1]
    valid = (np.abs(u) < UNKNOWN_FLOW_THRESH) & (np.abs(v) < UNKNOWN_FLOW_THRESH)
    valid &= np.isfinite(u) & np.isfinite(v)
    u = np.where(valid, u, 0.0)
    v = np.where(valid, v, 0.0)
    return FlowField(u, v, valid)


def write_kitti_png(path: str | os.PathLike, flow: FlowField) -> None:
    """KITTI devkit encoding: u16 = flow * 64 + 2^15 in the first two
    channels, validity flag in the third; invalid pixels store zeros."""
    import cv2

    def encode(comp):
        return np.clip(np.round(comp * KITTI_SCALE + KITTI_OFFSET), 0, 65535).astype(np.uint16)

    r = np.where(flow.valid, encode(flow.u), 0).astype(np.uint16)
    g = np.where(flow.valid, encode(flow.v), 0).astype(np.uint16)
    b = flow.valid.astype(np.uint16)
    bgr = np.stack([b, g, r], axis=2)
    if not cv2.imwrite(os.fspath(path), bgr):
        raise FormatError(f"cannot write KITTI flow PNG {path}")


def read_kitti_png(path: str | os.PathLike) -> FlowField:
    import cv2

    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"cannot decode {path}")
    if raw.ndim != 3 or raw.shape[2] != 3 or raw.dtype != np.uint16:
        raise FormatError(f"KITTI flow PNG must be 16-bit 3-channel, got "
                          f"{raw.dtype} with shape {raw.shape} in {path}")
    b, g, r = raw[:, :, 0], raw[:, :, 1], raw[:, :, 2]
    valid = b > 0
    u = (r.astype(np.float64) - KITTI_OFFSET) / KITTI_SCALE
    v = (g.astype(np.float64) - KITTI_OFFSET) / KITTI_SCALE
    u = np.where(valid, u, 0.0)
    v = np.where(valid, v, 0.0)
    return FlowField(u, v, valid)


def read_flow_any(path: str | os.PathLike) -> FlowField:
    """Dispatch on extension: .flo or KITTI .png."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".flo":
        return read_flo(path)
    if ext == ".png":
        return read_kitti_png(path)
    raise InvalidInputError(f"unknown flow file extension {ext!r}")


def _make_colorwheel() -> np.ndarray:
    """Middlebury color wheel: 55 RGB anchors around the circle."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((ry + yg + gc + cb + bm + mr, 3))
    col = 0
    wheel[0:ry, 0] = 1.0
    wheel[0:ry, 1] = np.arange(ry) / ry
    col += ry
    wheel[col:col + yg, 0] = 1.0 - np.arange(yg) / yg
    wheel[col:col + yg, 1] = 1.0
    col += yg
    wheel[col:col + gc, 1] = 1.0
    wheel[col:col + gc, 2] = np.arange(gc) / gc
    col += gc
    wheel[col:col + cb, 1] = 1.0 - np.arange(cb) / cb
    wheel[col:col + cb, 2] = 1.0
    col += cb
    wheel[col:col + bm, 2] = 1.0
    wheel[col:col + bm, 0] = np.arange(bm) / bm
    col += bm
    wheel[col:col + mr, 2] = 1.0 - np.arange(mr) / mr
    wheel[col:col + mr, 0] = 1.0
    return wheel


_COLORWHEEL = _make_colorwheel()


def visualize(flow: FlowField, max_magnitude: float | None = None) -> Image:
    """Color-wheel rendering: hue from atan2(v, u), saturation from the
    magnitude normalized by max_magnitude (default: 99th percentile).
    Zero flow renders white; invalid pixels render black."""
    mag = flow.magnitude()
    if max_magnitude is None:
        valid_mags = mag[flow.valid]
        max_magnitude = float(np.percentile(valid_mags, 99.0)) if valid_mags.size else 1.0
    if max_magnitude <= 0:
        max_magnitude = 1.0
    ncols = _COLORWHEEL.shape[0]
    rad = np.clip(mag / max_magnitude, 0.0, 1.0)
    angle = np.arctan2(flow.v, flow.u) / np.pi          # [-1, 1]
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(int) % ncols
    k1 = (k0 + 1) % ncols
    f = fk - np.floor(fk)
    col = (1.0 - f[:, :, None]) * _COLORWHEEL[k0] + f[:, :, None] * _COLORWHEEL[k1]
    rgb = 1.0 - rad[:, :, None] * (1.0 - col)
    rgb[~flow.valid] = 0.0
    return Image(rgb.astype(np.float32), RGB)

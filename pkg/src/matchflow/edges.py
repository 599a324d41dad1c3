"""Edge-strength maps and edge-weighted geodesic distances.

The built-in detector is a smoothed multi-channel gradient magnitude;
externally computed boundary maps (e.g. from a learned detector) can be
ingested through the EDG1 file format instead.
"""
from __future__ import annotations

import heapq
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidInputError
from .image import Image

EDGE_MAGIC = b"EDG1"
EUCLIDEAN_OFFSET = 0.002


@dataclass(frozen=True)
class EdgeMap:
    """Per-pixel boundary strength in [0, 1]."""

    strength: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.strength, dtype=np.float32)
        if s.ndim != 2:
            raise InvalidInputError("edge map must be 2-D")
        if not np.isfinite(s).all():
            raise InvalidInputError("edge map contains non-finite values")
        if s.min() < 0.0 or s.max() > 1.0:
            raise InvalidInputError("edge strengths must lie in [0, 1]")
        object.__setattr__(self, "strength", s)

    @property
    def height(self) -> int:
        return self.strength.shape[0]

    @property
    def width(self) -> int:
        return self.strength.shape[1]


@dataclass(frozen=True)
class GeodesicParams:
    """Step costs: mean endpoint strength plus a constant offset per unit
    length, over a 4- or 8-connected grid."""

    euclidean_offset: float = EUCLIDEAN_OFFSET
    connectivity: int = 8

    def __post_init__(self):
        if self.euclidean_offset <= 0:
            raise InvalidInputError("euclidean_offset must be positive")
        if self.connectivity not in (4, 8):
            raise InvalidInputError("connectivity must be 4 or 8")


def detect_edges(img: Image) -> EdgeMap:
    """Gaussian-smoothed gradient magnitude over all channels, normalized by
    its 99th percentile and clamped to [0, 1]."""
    from scipy.ndimage import gaussian_filter

    data = img.data.astype(np.float64)
    mag2 = np.zeros(data.shape[:2])
    for c in range(data.shape[2]):
        smooth = gaussian_filter(data[:, :, c], sigma=1.0, mode="nearest")
        gy, gx = np.gradient(smooth)
        mag2 += gx * gx + gy * gy
    mag = np.sqrt(mag2)
    ref = np.percentile(mag, 99.0)
    if ref > 0:
        mag /= ref
    return EdgeMap(np.clip(mag, 0.0, 1.0).astype(np.float32))


def save_edges(path: str | os.PathLike, edges: EdgeMap) -> None:
    """Write the EDG1 container: magic, little-endian int32 width/height,
    then row-major float32 strengths."""
    with open(path, "wb") as fh:
        fh.write(EDGE_MAGIC)
        fh.write(struct.pack("<ii", edges.width, edges.height))
        fh.write(edges.strength.astype("<f4").tobytes())


def load_edges(path: str | os.PathLike, width: int | None = None, height: int | None = None) -> EdgeMap:
    """Read an EDG1 file; values are clamped to [0, 1].

    When width/height are given the file dimensions must match. Non-finite
    values are rejected.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EDGE_MAGIC:
            raise FormatError(f"bad edge-map magic {magic!r} in {path}")
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError(f"truncated edge-map header in {path}")
        w, h = struct.unpack("<ii", header)
        if w <= 0 or h <= 0:
            raise FormatError(f"invalid edge-map dimensions {w}x{h} in {path}")
        raw = fh.read(4 * w * h)
        if len(raw) != 4 * w * h:
            raise FormatError(f"truncated edge-map data in {path}")
    if (width is not None and w != width) or (height is not None and h != height):
        raise InvalidInputError(f"edge map is {w}x{h}, expected {width}x{height}")
    data = np.frombuffer(raw, dtype="<f4").reshape(h, w)
    if not np.isfinite(data).all():
        raise FormatError(f"edge map {path} contains non-finite values")
    return EdgeMap(np.clip(data, 0.0, 1.0))


_STEPS_4 = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0))
_STEPS_8 = _STEPS_4 + ((1, 1, np.sqrt(2.0)), (1, -1, np.sqrt(2.0)),
                       (-1, 1, np.sqrt(2.0)), (-1, -1, np.sqrt(2.0)))


def geodesic_distances(edges: EdgeMap, source: tuple[int, int],
                       params: GeodesicParams | None = None,
                       radius_limit: float = np.inf) -> np.ndarray:
    """Single-source shortest-path distances over the pixel grid.

    A step from p to q costs step_length * ((strength(p) + strength(q)) / 2
    + euclidean_offset). source is (x, y). Expansion stops beyond
    radius_limit; unreached pixels hold inf.
    """
    params = params or GeodesicParams()
    sx, sy = source
    h, w = edges.height, edges.width
    if not (0 <= sx < w and 0 <= sy < h):
        raise InvalidInputError(f"source ({sx}, {sy}) outside {w}x{h} domain")
    strength = edges.strength.astype(np.float64)
    steps = _STEPS_4 if params.connectivity == 4 else _STEPS_8
    off = params.euclidean_offset

    dist = np.full((h, w), np.inf)
    dist[sy, sx] = 0.0
    heap = [(0.0, sy, sx)]
    while heap:
        d, y, x = heapq.heappop(heap)
        if d > dist[y, x]:
            continue
        if d > radius_limit:
            continue
        sp = strength[y, x]
        for dy, dx, length in steps:
            ny = y + dy
            nx = x + dx
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            nd = d + length * ((sp + strength[ny, nx]) * 0.5 + off)
            if nd < dist[ny, nx] and nd <= radius_limit:
                dist[ny, nx] = nd
                heapq.heappush(heap, (nd, ny, nx))
    return dist

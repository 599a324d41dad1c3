"""Raster containers, color conversion, resampling, and scale pyramids.

Images are stored as (H, W, C) float32 arrays in [0, 1] for gray/RGB data
(8/16-bit files are divided by their maximum on load) or in the usual
CIELab ranges after conversion. All operations treat images as immutable.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidInputError, OutOfBoundsError

GRAY = "gray"
RGB = "rgb"
CIELAB = "lab"

_CHANNELS = {GRAY: 1, RGB: 3, CIELAB: 3}

# sRGB (D65) -> XYZ, IEC 61966-2-1
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


@dataclass(frozen=True)
class Image:
    """Multi-channel float raster with a color-space tag.

    data has shape (height, width, channels) and must be finite everywhere.
    """

    data: np.ndarray
    colorspace: str = RGB

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise InvalidInputError(f"image data must be 2- or 3-dimensional, got shape {data.shape}")
        if self.colorspace not in _CHANNELS:
            raise InvalidInputError(f"unknown colorspace {self.colorspace!r}")
        if data.shape[2] != _CHANNELS[self.colorspace]:
            raise InvalidInputError(
                f"{self.colorspace} images need {_CHANNELS[self.colorspace]} channels, got {data.shape[2]}"
            )
        if not np.isfinite(data).all():
            raise InvalidInputError("image contains non-finite samples")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class PyramidConfig:
    """Schedule for coarse-to-fine pyramids.

    Each octave halves the resolution; with sub-scales enabled an extra
    1/sqrt(2) level is inserted per octave, and sub-sub-scales insert a
    further 2**-0.25 step. The pyramid stops before any dimension would
    drop below min_dim.
    """

    use_subscales: bool = True
    use_subsubscales: bool = False
    min_dim: int = 16

    def step(self) -> float:
        if self.use_subsubscales:
            return 2.0 ** -0.25
        if self.use_subscales:
            return 2.0 ** -0.5
        return 0.5


@dataclass(frozen=True)
class ScalePyramid:
    """Ordered list of images, full resolution first, coarsest last."""

    levels: list[Image] = field(default_factory=list)
    scale_factors: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.levels)


def to_cielab(img: Image) -> Image:
    """Convert a gray or RGB image with samples in [0, 1] to CIELab (D65)."""
    if img.colorspace == CIELAB:
        return img
    if img.colorspace == GRAY:
        rgb = np.repeat(img.data, 3, axis=2)
    else:
        rgb = img.data
    rgb = rgb.astype(np.float64)

    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T
    xyz /= _D65_WHITE

    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return Image(lab.astype(np.float32), CIELAB)


def to_gray(img: Image) -> Image:
    """Luma (Rec. 601) of the stored sRGB samples; Lab images use L/100."""
    if img.colorspace == GRAY:
        return img
    if img.colorspace == CIELAB:
        return Image(img.data[:, :, :1] / 100.0, GRAY)
    gray = img.data @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
    return Image(gray[:, :, None], GRAY)


def _box_weights(n_in: int, n_out: int) -> np.ndarray:
    """Area-averaging weights: row i integrates input over [i*r, (i+1)*r)."""
    ratio = n_in / n_out
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = i * ratio
        hi = (i + 1) * ratio
        j0 = int(np.floor(lo))
        j1 = min(int(np.ceil(hi)), n_in)
        for j in range(j0, j1):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                weights[i, j] = overlap
        weights[i] /= ratio
    return weights


def resize_area(img: Image, width: int, height: int, prefilter_sigma: float = 0.0) -> Image:
    """Area-average resampling to (width, height), optionally Gaussian-prefiltered."""
    from scipy.ndimage import gaussian_filter

    data = img.data.astype(np.float64)
    if prefilter_sigma > 0:
        data = gaussian_filter(data, sigma=(prefilter_sigma, prefilter_sigma, 0), mode="nearest")
    wy = _box_weights(img.height, height)
    wx = _box_weights(img.width, width)
    out = np.tensordot(wy, data, axes=(1, 0))          # (height, W, C)
    out = np.tensordot(wx, out, axes=(1, 1))           # (width, height, C)
    out = np.moveaxis(out, 0, 1)
    return Image(out.astype(np.float32), img.colorspace)


def build_pyramid(img: Image, config: PyramidConfig | None = None) -> ScalePyramid:
    """Build a scale pyramid with full-octave and sub-scale levels.

    Every level below full resolution is resampled directly from the input
    with a Gaussian prefilter (sigma = 0.5/scale) followed by area averaging.
    """
    config = config or PyramidConfig()
    if min(img.width, img.height) < 32:
        raise InvalidInputError(f"image {img.width}x{img.height} too small to build a pyramid (need 32x32)")

    step = config.step()
    factors = [1.0]
    while True:
        nxt = factors[-1] * step
        if round(min(img.width, img.height) * nxt) < config.min_dim:
            break
        factors.append(nxt)

    levels = [img]
    for f in factors[1:]:
        w = int(round(img.width * f))
        h = int(round(img.height * f))
        levels.append(resize_area(img, w, h, prefilter_sigma=0.5 / f))
    return ScalePyramid(levels=levels, scale_factors=factors)


def sample_bilinear(img: Image, x: float, y: float, channel: int = 0) -> float:
    """Bilinear sample at (x, y); exact at integer coordinates."""
    if not (0.0 <= x <= img.width - 1 and 0.0 <= y <= img.height - 1):
        raise OutOfBoundsError(f"({x}, {y}) outside [0, {img.width - 1}] x [0, {img.height - 1}]")
    return float(_bilinear(img.data[:, :, channel], np.float64(x), np.float64(y)))


def _bilinear(plane: np.ndarray, x, y):
    """Vectorized bilinear lookup on one channel; coordinates must be in-domain."""
    x0 = np.floor(x).astype(np.int64) if hasattr(x, "astype") else int(np.floor(x))
    y0 = np.floor(y).astype(np.int64) if hasattr(y, "astype") else int(np.floor(y))
    h, w = plane.shape
    x0 = np.clip(x0, 0, w - 2) if w > 1 else np.zeros_like(x0)
    y0 = np.clip(y0, 0, h - 2) if h > 1 else np.zeros_like(y0)
    fx = x - x0
    fy = y - y0
    p00 = plane[y0, x0]
    p01 = plane[y0, np.minimum(x0 + 1, w - 1)]
    p10 = plane[np.minimum(y0 + 1, h - 1), x0]
    p11 = plane[np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)]
    return (p00 * (1 - fx) + p01 * fx) * (1 - fy) + (p10 * (1 - fx) + p11 * fx) * fy


def sample_bilinear_grid(plane: np.ndarray, x: np.ndarray, y: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Bilinear samples of a 2-D array at arrays of coordinates.

    With clamp=True coordinates are clamped to the domain (replicate border).
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    if clamp:
        x = np.clip(x, 0.0, w - 1.0)
        y = np.clip(y, 0.0, h - 1.0)
    return _bilinear(plane, np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))


def load_image(path: str | os.PathLike) -> Image:
    """Read a PNG (8- or 16-bit) or PPM/PGM image, scaled to [0, 1]."""
    import cv2

    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"cannot decode image file {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"unsupported sample type {raw.dtype} in {path}")
    data = raw.astype(np.float32) / scale
    if data.ndim == 2:
        return Image(data[:, :, None], GRAY)
    if data.shape[2] == 4:
        data = data[:, :, :3]
    return Image(data[:, :, ::-1], RGB)  # BGR -> RGB


def save_image(path: str | os.PathLike, img: Image) -> None:
    """Write an image as 8-bit PNG/PPM/PGM (gray or RGB, clipped to [0, 1])."""
    import cv2

    if img.colorspace == CIELAB:
        raise InvalidInputError("cannot save CIELab images directly; convert first")
    data = np.clip(img.data, 0.0, 1.0)
    out = np.round(data * 255.0).astype(np.uint8)
    if img.colorspace == RGB:
        out = out[:, :, ::-1]
    else:
        out = out[:, :, 0]
    if not cv2.imwrite(os.fspath(path), out):
        raise FormatError(f"cannot write image file {path}")

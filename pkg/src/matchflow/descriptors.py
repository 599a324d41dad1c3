"""Per-pixel feature descriptors and their distances.

Three descriptor families drive the matcher: Census binary patterns over
CIELab (Hamming distance), a dense fixed-scale SIFT-style gradient
histogram (Euclidean distance), and short Walsh-Hadamard projections used
only to seed the coarsest scale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidInputError
from .image import CIELAB, GRAY, Image, to_cielab, to_gray

CENSUS_RADIUS_DEFAULT = 3  # 7x7 patch
SIFT_RADIUS_DEFAULT = 8
WH_PATCH = 8
WH_COEFFS = 16


def census_words_per_channel(radius: int) -> int:
    """uint64 words needed for the (2r+1)^2 - 1 comparison bits of one channel."""
    neighbors = (2 * radius + 1) ** 2 - 1
    return (neighbors + 63) // 64


@dataclass(frozen=True)
class CensusDescriptor:
    """Packed comparison bits, channel-major; 144 bits for the default 7x7
    patch over three CIELab channels (48 neighbors x 3)."""

    words: np.ndarray
    radius: int = CENSUS_RADIUS_DEFAULT
    channels: int = 3

    @property
    def n_bits(self) -> int:
        return ((2 * self.radius + 1) ** 2 - 1) * self.channels

    def bit(self, channel: int, k: int) -> bool:
        wpc = census_words_per_channel(self.radius)
        word = self.words[channel * wpc + (k >> 6)]
        return bool((int(word) >> (k & 63)) & 1)


@dataclass(frozen=True)
class SiftDescriptor:
    """128 floats: 4x4 spatial cells x 8 orientation bins, L2-normalized
    with 0.2 clamping then renormalized (all-zero for flat patches)."""

    values: np.ndarray


@dataclass(frozen=True)
class WHDescriptor:
    """First 16 sequency-ordered Walsh-Hadamard coefficients of an 8x8 patch."""

    values: np.ndarray


def _require_lab(img: Image) -> Image:
    return img if img.colorspace == CIELAB else to_cielab(img)


def census_at(img: Image, x: float, y: float, radius: int = CENSUS_RADIUS_DEFAULT) -> CensusDescriptor:
    """Census comparison pattern at (x, y); sub-pixel samples are bilinear,
    border samples replicate-clamped. The center is clamped into the domain."""
    lab = _require_lab(img)
    wpc = census_words_per_channel(radius)
    x = float(min(max(x, 0.0), lab.width - 1.0))
    y = float(min(max(y, 0.0), lab.height - 1.0))
    words = _kernels.census_words_at(lab.data, x, y, radius, wpc)
    return CensusDescriptor(words=words, radius=radius, channels=lab.channels)


def census_distance(a: CensusDescriptor, b: CensusDescriptor) -> int:
    """Hamming distance: popcount of XORed bit patterns."""
    if a.words.shape != b.words.shape or a.radius != b.radius:
        raise InvalidInputError("census descriptors have mismatched layouts")
    return int(np.bitwise_count(a.words ^ b.words).sum())


def sift_at(img: Image, x: float, y: float, patch_radius: int = SIFT_RADIUS_DEFAULT) -> SiftDescriptor:
    """Dense SIFT-style descriptor at (x, y) on the grayscale image."""
    gray = img if img.colorspace == GRAY else to_gray(img)
    values = _kernels.sift_desc_at(gray.data[:, :, 0], float(x), float(y), patch_radius)
    return SiftDescriptor(values=values)


def sift_distance(a: SiftDescriptor, b: SiftDescriptor) -> float:
    d = a.values.astype(np.float64) - b.values.astype(np.float64)
    return float(np.sqrt(np.sum(d * d)))


def _hadamard_sequency(n: int) -> np.ndarray:
    h = np.array([[1.0]])
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    sign_changes = (np.diff(h, axis=1) != 0).sum(axis=1)
    return h[np.argsort(sign_changes, kind="stable")]


_HSEQ8 = _hadamard_sequency(WH_PATCH)
_HSEQ4 = _HSEQ8[:4]  # four lowest sequencies per axis -> 16 2-D coefficients


def wh_basis() -> np.ndarray:
    """The 16 (8, 8) basis patches, index k = 4 * row_sequency + col_sequency."""
    basis = np.einsum("ia,jb->ijab", _HSEQ4, _HSEQ4)
    return basis.reshape(WH_COEFFS, WH_PATCH, WH_PATCH)


def _wh_window(gray: np.ndarray, x: int, y: int) -> np.ndarray:
    ys = np.clip(np.arange(y - 3, y + 5), 0, gray.shape[0] - 1)
    xs = np.clip(np.arange(x - 3, x + 5), 0, gray.shape[1] - 1)
    return gray[np.ix_(ys, xs)]


def _axis_rows(n_coeffs: int) -> np.ndarray:
    """Lowest-sequency rows per axis for an n_coeffs = k*k 2-D descriptor."""
    k = int(np.sqrt(n_coeffs))
    if k * k != n_coeffs or not 1 <= k <= WH_PATCH:
        raise InvalidInputError(f"n_coeffs must be a square in [1, 64], got {n_coeffs}")
    return _HSEQ8[:k]


def wh_at(img: Image, x: int, y: int, n_coeffs: int = WH_COEFFS) -> WHDescriptor:
    """First n_coeffs sequency-ordered WH coefficients of the 8x8 patch
    spanning [x-3, x+4] x [y-3, y+4] (replicate-clamped at borders)."""
    gray = img if img.colorspace == GRAY else to_gray(img)
    rows = _axis_rows(n_coeffs)
    patch = _wh_window(gray.data[:, :, 0].astype(np.float64), int(x), int(y))
    coeffs = rows @ patch @ rows.T
    return WHDescriptor(values=coeffs.reshape(n_coeffs))


def wh_grid(img: Image, n_coeffs: int = WH_COEFFS) -> np.ndarray:
    """WH descriptors for every pixel as an (H, W, n_coeffs) float64 array."""
    gray = img if img.colorspace == GRAY else to_gray(img)
    rows = _axis_rows(n_coeffs)
    plane = gray.data[:, :, 0].astype(np.float64)
    padded = np.pad(plane, ((3, 4), (3, 4)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (WH_PATCH, WH_PATCH))
    coeffs = np.einsum("hwab,ia,jb->hwij", windows, rows, rows, optimize=True)
    return coeffs.reshape(plane.shape[0], plane.shape[1], n_coeffs)


def census_grid_for(img: Image, radius: int = CENSUS_RADIUS_DEFAULT) -> np.ndarray:
    """Packed census words for every pixel: (H, W, channels * wpc) uint64."""
    lab = _require_lab(img)
    return _kernels.census_grid(lab.data, radius, census_words_per_channel(radius))


def sift_grid_for(img: Image, patch_radius: int = SIFT_RADIUS_DEFAULT) -> np.ndarray:
    """SIFT descriptors for every pixel: (H, W, 128) float32."""
    gray = img if img.colorspace == GRAY else to_gray(img)
    return _kernels.sift_grid(gray.data[:, :, 0], patch_radius)

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from matchflow import Image


def smooth_noise(height, width, channels=3, seed=0, sigma=1.2):
    """Band-limited random texture in [0, 1]; matchable at sub-pixel shifts."""
    rng = np.random.default_rng(seed)
    data = gaussian_filter(rng.random((height, width, channels)), (sigma, sigma, 0))
    lo, hi = data.min(), data.max()
    return ((data - lo) / (hi - lo)).astype(np.float32)


def shifted_pair(height, width, u, v, seed=0, margin=12, sigma=1.2):
    """Image pair where frame-1 content moves by exactly (u, v) pixels."""
    assert abs(u) <= margin and abs(v) <= margin
    big = smooth_noise(height + 2 * margin, width + 2 * margin, seed=seed, sigma=sigma)
    i1 = Image(big[margin:margin + height, margin:margin + width], "rgb")
    i2 = Image(big[margin - v:margin - v + height, margin - u:margin - u + width], "rgb")
    return i1, i2


def warped_pair(height, width, flow_u, flow_v, seed=0, sigma=2.0):
    """Frame pair consistent with a known dense flow: I1(x) = I2(x + w(x)).

    The flow arrays give, per frame-1 pixel, where its content lands in
    frame 2; frame 1 is synthesized by sampling a smooth texture at the
    displaced positions.
    """
    from matchflow.image import sample_bilinear_grid

    big = smooth_noise(height, width, seed=seed, sigma=sigma)
    gx, gy = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    i1 = np.stack([
        sample_bilinear_grid(big[:, :, c], gx + flow_u, gy + flow_v)
        for c in range(big.shape[2])
    ], axis=2)
    return Image(i1.astype(np.float32), "rgb"), Image(big, "rgb")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from matchflow import (
    Image,
    InvalidInputError,
    OutOfBoundsError,
    PyramidConfig,
    build_pyramid,
    sample_bilinear,
    to_cielab,
    to_gray,
)
from matchflow.image import load_image, resize_area, sample_bilinear_grid, save_image

from conftest import smooth_noise


def lab_to_srgb(lab):
    """Test-local inverse of the D65 sRGB -> CIELab conversion."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    delta = 6.0 / 29.0

    def finv(t):
        return np.where(t > delta, t**3, 3 * delta**2 * (t - 4.0 / 29.0))

    xyz = np.stack([finv(fx), finv(fy), finv(fz)], axis=-1)
    xyz *= np.array([0.95047, 1.0, 1.08883])
    m = np.linalg.inv(np.array([
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]))
    linear = xyz @ m.T
    return np.where(linear <= 0.0031308, 12.92 * linear,
                    1.055 * np.clip(linear, 0, None) ** (1 / 2.4) - 0.055)


class TestImageType:
    def test_channel_counts_enforced(self):
        with pytest.raises(InvalidInputError):
            Image(np.zeros((4, 4, 2)), "rgb")
        with pytest.raises(InvalidInputError):
            Image(np.zeros((4, 4, 3)), "gray")

    def test_non_finite_rejected(self):
        data = np.zeros((4, 4, 1))
        data[1, 1] = np.nan
        with pytest.raises(InvalidInputError):
            Image(data, "gray")

    def test_2d_data_promoted_to_gray_shape(self):
        img = Image(np.zeros((4, 5)), "gray")
        assert img.data.shape == (4, 5, 1)
        assert (img.width, img.height, img.channels) == (5, 4, 1)


class TestCielab:
    def test_white_maps_to_l100(self):
        lab = to_cielab(Image(np.ones((2, 2, 3)), "rgb")).data[0, 0]
        assert lab[0] == pytest.approx(100.0, abs=1e-3)
        assert abs(lab[1]) < 0.5 and abs(lab[2]) < 0.5

    def test_black_maps_to_zero(self):
        lab = to_cielab(Image(np.zeros((2, 2, 3)), "rgb")).data[0, 0]
        assert np.allclose(lab, 0.0, atol=1e-5)

    def test_mid_gray_matches_reference_colorimetry(self):
        # frozen from skimage.color.rgb2lab([[[0.5, 0.5, 0.5]]])
        lab = to_cielab(Image(np.full((1, 1, 3), 0.5), "rgb")).data[0, 0]
        assert lab[0] == pytest.approx(53.3889647, abs=1e-3)

    def test_probe_color_matches_reference_colorimetry(self):
        # frozen from skimage.color.rgb2lab([[[0.2, 0.6, 0.9]]]); reference
        # converters differ in matrix rounding at the ~5e-3 level
        lab = to_cielab(Image(np.array([[[0.2, 0.6, 0.9]]]), "rgb")).data[0, 0]
        assert np.allclose(lab, [60.92953203, -3.06015532, -46.83765364], atol=2e-2)

    def test_random_colors_match_skimage(self, rng):
        from skimage import color

        rgb = rng.random((8, 8, 3))
        mine = to_cielab(Image(rgb.astype(np.float32), "rgb")).data
        ref = color.rgb2lab(rgb.astype(np.float32))
        assert np.max(np.abs(mine - ref)) < 2e-2

    def test_round_trip_error_below_1e3(self, rng):
        rgb = rng.random((16, 16, 3)).astype(np.float32)
        lab = to_cielab(Image(rgb, "rgb"))
        back = lab_to_srgb(lab.data)
        assert np.max(np.abs(back - rgb)) < 1e-3

    def test_gray_input_expands(self):
        lab = to_cielab(Image(np.full((2, 2, 1), 0.5), "gray")).data[0, 0]
        assert lab[0] == pytest.approx(53.3889647, abs=1e-3)
        assert abs(lab[1]) < 1e-3 and abs(lab[2]) < 1e-3

    def test_injective_on_gamut(self, rng):
        rgb = rng.random((64, 3))
        lab = to_cielab(Image(rgb.reshape(8, 8, 3).astype(np.float32), "rgb")).data.reshape(64, 3)
        d = np.linalg.norm(lab[:, None] - lab[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        assert d.min() > 1e-6


class TestPyramid:
    def test_512_schedule(self):
        img = Image(smooth_noise(512, 512, seed=3), "rgb")
        pyr = build_pyramid(img)
        expected = [1.0, 2**-0.5, 0.5, 2**-1.5, 0.25, 2**-2.5, 0.125, 2**-3.5, 0.0625, 2**-4.5, 0.03125]
        assert pyr.scale_factors == pytest.approx(expected)
        assert min(pyr.levels[-1].width, pyr.levels[-1].height) >= 16
        assert round(512 * pyr.scale_factors[-1] * 2**-0.5) < 16

    def test_constant_image_stays_constant(self):
        img = Image(np.full((64, 64, 3), 0.37, np.float32), "rgb")
        pyr = build_pyramid(img)
        for level in pyr.levels:
            assert np.allclose(level.data, 0.37, atol=1e-6)

    def test_mean_preserved_within_1pct(self):
        img = Image(smooth_noise(480, 640, seed=9), "rgb")
        pyr = build_pyramid(img)
        full_mean = img.data.mean()
        for level in pyr.levels:
            assert level.data.mean() == pytest.approx(full_mean, rel=0.01)

    def test_dims_round_and_non_increasing(self):
        img = Image(smooth_noise(100, 130, seed=2), "rgb")
        pyr = build_pyramid(img)
        prev = (img.height, img.width)
        for level, f in zip(pyr.levels, pyr.scale_factors):
            assert level.width == round(130 * f)
            assert level.height == round(100 * f)
            assert (level.height, level.width) <= prev
            prev = (level.height, level.width)

    def test_too_small_rejected(self):
        with pytest.raises(InvalidInputError):
            build_pyramid(Image(np.zeros((16, 64, 3)), "rgb"))

    def test_subsubscale_config(self):
        img = Image(smooth_noise(64, 64, seed=2), "rgb")
        pyr = build_pyramid(img, PyramidConfig(use_subsubscales=True))
        assert pyr.scale_factors[1] == pytest.approx(2**-0.25)

    def test_octave_only_config(self):
        img = Image(smooth_noise(64, 64, seed=2), "rgb")
        pyr = build_pyramid(img, PyramidConfig(use_subscales=False))
        assert pyr.scale_factors == pytest.approx([1.0, 0.5, 0.25])


class TestBilinear:
    def test_exact_on_lattice(self, rng):
        img = Image(rng.random((10, 12, 3)).astype(np.float32), "rgb")
        assert sample_bilinear(img, 3, 5, 0) == pytest.approx(float(img.data[5, 3, 0]), abs=0)

    def test_midpoint(self):
        data = np.zeros((2, 2, 1))
        data[0, 0] = 10.0
        data[0, 1] = 20.0
        img = Image(data, "gray")
        assert sample_bilinear(img, 0.5, 0.0) == pytest.approx(15.0)

    def test_random_points_match_oracle(self, rng):
        def oracle(plane, x, y):
            x0, y0 = int(np.floor(x)), int(np.floor(y))
            x0 = min(x0, plane.shape[1] - 2)
            y0 = min(y0, plane.shape[0] - 2)
            fx, fy = x - x0, y - y0
            return ((1 - fy) * ((1 - fx) * plane[y0, x0] + fx * plane[y0, x0 + 1])
                    + fy * ((1 - fx) * plane[y0 + 1, x0] + fx * plane[y0 + 1, x0 + 1]))

        img = Image(rng.random((20, 30, 1)).astype(np.float32), "gray")
        plane = img.data[:, :, 0].astype(np.float64)
        for _ in range(200):
            x = rng.uniform(0, img.width - 1)
            y = rng.uniform(0, img.height - 1)
            assert sample_bilinear(img, x, y) == pytest.approx(oracle(plane, x, y), abs=1e-6)

    def test_bounded_by_neighbors(self, rng):
        img = Image(rng.random((9, 9, 1)).astype(np.float32), "gray")
        plane = img.data[:, :, 0]
        for _ in range(100):
            x = rng.uniform(0, 7.999)
            y = rng.uniform(0, 7.999)
            x0, y0 = int(x), int(y)
            quad = plane[y0:y0 + 2, x0:x0 + 2]
            val = sample_bilinear(img, x, y)
            assert quad.min() - 1e-9 <= val <= quad.max() + 1e-9

    def test_out_of_range_raises(self):
        img = Image(np.zeros((4, 4, 1)), "gray")
        with pytest.raises(OutOfBoundsError):
            sample_bilinear(img, -0.1, 0)
        with pytest.raises(OutOfBoundsError):
            sample_bilinear(img, 0, 3.01)

    def test_grid_sampler_clamps(self):
        plane = np.arange(12, dtype=np.float64).reshape(3, 4)
        out = sample_bilinear_grid(plane, np.array([-5.0, 10.0]), np.array([0.0, 2.0]))
        assert out[0] == plane[0, 0]
        assert out[1] == plane[2, 3]


class TestResizeAndFiles:
    def test_resize_area_preserves_constant(self):
        img = Image(np.full((40, 60, 3), 0.7, np.float32), "rgb")
        out = resize_area(img, 23, 17)
        assert out.data.shape == (17, 23, 3)
        assert np.allclose(out.data, 0.7, atol=1e-6)

    def test_png_round_trip(self, tmp_path, rng):
        img = Image((rng.random((12, 15, 3)) * 255).round().astype(np.float32) / 255, "rgb")
        path = tmp_path / "img.png"
        save_image(path, img)
        back = load_image(path)
        assert back.colorspace == "rgb"
        assert np.allclose(back.data, img.data, atol=1 / 255)

    def test_pgm_round_trip(self, tmp_path, rng):
        img = Image((rng.random((8, 9, 1)) * 255).round().astype(np.float32) / 255, "gray")
        path = tmp_path / "img.pgm"
        save_image(path, img)
        back = load_image(path)
        assert back.colorspace == "gray"
        assert np.allclose(back.data, img.data, atol=1 / 255)

    def test_16bit_png_scaled_by_65535(self, tmp_path):
        import cv2

        raw = np.array([[0, 32768], [65535, 1000]], np.uint16)
        path = str(tmp_path / "img16.png")
        cv2.imwrite(path, raw)
        img = load_image(path)
        assert img.colorspace == "gray"
        assert np.allclose(img.data[:, :, 0], raw / 65535.0, atol=1e-7)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

import struct

import numpy as np
import pytest

from matchflow import FlowField, FormatError, read_flo, read_kitti_png, visualize, write_flo, write_kitti_png
from matchflow.flowio import _COLORWHEEL, read_flow_any


def independent_flo_writer(path, u, v):
    """Byte-level .flo writer sharing no code with the package reader."""
    h, w = u.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", 202021.25))
        fh.write(struct.pack("<i", w))
        fh.write(struct.pack("<i", h))
        for y in range(h):
            for x in range(w):
                fh.write(struct.pack("<ff", u[y, x], v[y, x]))


class TestFlo:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        u = rng.standard_normal((7, 9)).astype(np.float32).astype(np.float64)
        v = rng.standard_normal((7, 9)).astype(np.float32).astype(np.float64)
        flow = FlowField(u, v, np.ones((7, 9), bool))
        path = tmp_path / "f.flo"
        write_flo(path, flow)
        back = read_flo(path)
        assert np.array_equal(back.u, u)
        assert np.array_equal(back.v, v)
        assert back.valid.all()

    def test_documented_byte_layout(self, tmp_path):
        flow = FlowField(np.array([[1.5, 0.0]]), np.array([[-0.25, 0.0]]), np.ones((1, 2), bool))
        path = tmp_path / "f.flo"
        write_flo(path, flow)
        blob = path.read_bytes()
        assert len(blob) == 4 + 4 + 4 + 16
        assert struct.unpack("<f", blob[:4])[0] == 202021.25
        assert struct.unpack("<ii", blob[4:12]) == (2, 1)
        assert struct.unpack("<ffff", blob[12:]) == (1.5, -0.25, 0.0, 0.0)

    def test_reading_independent_writer(self, tmp_path, rng):
        u = rng.standard_normal((5, 4)).astype(np.float32)
        v = rng.standard_normal((5, 4)).astype(np.float32)
        path = tmp_path / "ref.flo"
        independent_flo_writer(path, u, v)
        back = read_flo(path)
        assert np.array_equal(back.u, u.astype(np.float64))
        assert np.array_equal(back.v, v.astype(np.float64))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "f.flo"
        path.write_bytes(struct.pack("<f", 0.0) + struct.pack("<ii", 1, 1) + b"\x00" * 8)
        with pytest.raises(FormatError):
            read_flo(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "f.flo"
        path.write_bytes(struct.pack("<f", 202021.25) + struct.pack("<ii", 4, 4) + b"\x00" * 10)
        with pytest.raises(FormatError):
            read_flo(path)

    def test_implausible_dims(self, tmp_path):
        path = tmp_path / "f.flo"
        path.write_bytes(struct.pack("<f", 202021.25) + struct.pack("<ii", -3, 4))
        with pytest.raises(FormatError):
            read_flo(path)

    def test_invalid_pixels_round_trip_as_invalid(self, tmp_path):
        valid = np.array([[True, False]])
        flow = FlowField(np.array([[1.0, 2.0]]), np.array([[0.5, 1.0]]), valid)
        path = tmp_path / "f.flo"
        write_flo(path, flow)
        back = read_flo(path)
        assert back.valid.tolist() == [[True, False]]
        assert back.u[0, 0] == np.float32(1.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_flo(tmp_path / "none.flo")


class TestKittiPng:
    def test_encoding_formulas(self, tmp_path):
        import cv2

        flow = FlowField(np.array([[0.0, 1.0]]), np.array([[0.0, -2.0]]), np.ones((1, 2), bool))
        path = str(tmp_path / "f.png")
        write_kitti_png(path, flow)
        raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)  # BGR order
        assert raw.dtype == np.uint16
        assert raw[0, 0, 2] == 2**15          # u = 0 stores the offset
        assert raw[0, 1, 2] == 2**15 + 64     # u = 1
        assert raw[0, 1, 1] == 2**15 - 128    # v = -2
        assert raw[0, 0, 0] == 1 and raw[0, 1, 0] == 1

    def test_round_trip_quantization_bound(self, tmp_path, rng):
        u = rng.uniform(-500, 500, (11, 13))
        v = rng.uniform(-500, 500, (11, 13))
        flow = FlowField(u, v, np.ones((11, 13), bool))
        path = str(tmp_path / "f.png")
        write_kitti_png(path, flow)
        back = read_kitti_png(path)
        assert np.max(np.abs(back.u - u)) <= 1 / 128
        assert np.max(np.abs(back.v - v)) <= 1 / 128
        assert back.valid.all()

    def test_validity_channel(self, tmp_path):
        valid = np.array([[True, False]])
        flow = FlowField(np.array([[3.0, 1.0]]), np.array([[0.0, 0.0]]), valid)
        path = str(tmp_path / "f.png")
        write_kitti_png(path, flow)
        back = read_kitti_png(path)
        assert back.valid.tolist() == [[True, False]]
        assert back.u[0, 1] == 0.0

    def test_wrong_depth_rejected(self, tmp_path):
        import cv2

        path = str(tmp_path / "f.png")
        cv2.imwrite(path, np.zeros((4, 4, 3), np.uint8))
        with pytest.raises(FormatError):
            read_kitti_png(path)

    def test_dispatch_by_extension(self, tmp_path):
        flow = FlowField.constant(3, 2, 1.0, -1.0)
        write_flo(tmp_path / "a.flo", flow)
        write_kitti_png(str(tmp_path / "a.png"), flow)
        assert np.allclose(read_flow_any(tmp_path / "a.flo").u, 1.0)
        assert np.allclose(read_flow_any(tmp_path / "a.png").u, 1.0)


def colorwheel_oracle(u, v, max_mag):
    """Per-pixel reference rendering of the anchor-interpolated color wheel."""
    ncols = _COLORWHEEL.shape[0]
    rad = min(np.hypot(u, v) / max_mag, 1.0)
    fk = (np.arctan2(v, u) / np.pi + 1.0) / 2.0 * (ncols - 1)
    k0 = int(np.floor(fk)) % ncols
    k1 = (k0 + 1) % ncols
    f = fk - np.floor(fk)
    out = np.empty(3)
    for c in range(3):
        col = (1 - f) * _COLORWHEEL[k0, c] + f * _COLORWHEEL[k1, c]
        out[c] = 1.0 - rad * (1.0 - col)
    return out


class TestVisualize:
    def test_zero_flow_white(self):
        img = visualize(FlowField.zeros(6, 5), max_magnitude=1.0)
        assert np.allclose(img.data, 1.0)

    def test_opposite_flows_hue_180_apart(self):
        m = 3.0
        flow = FlowField(np.array([[m, -m]]), np.zeros((1, 2)), np.ones((1, 2), bool))
        img = visualize(flow, max_magnitude=m).data
        a, b = img[0, 0], img[0, 1]
        assert not np.allclose(a, b, atol=0.1)
        assert np.argmax(a) != np.argmax(b)

    def test_matches_reference_oracle(self, rng):
        h, w = 9, 11
        u = rng.uniform(-4, 4, (h, w))
        v = rng.uniform(-4, 4, (h, w))
        flow = FlowField(u, v, np.ones((h, w), bool))
        img = visualize(flow, max_magnitude=5.0).data
        for y in range(h):
            for x in range(w):
                ref = colorwheel_oracle(u[y, x], v[y, x], 5.0)
                assert np.max(np.abs(img[y, x] - ref)) <= 2 / 255

    def test_direction_injective_at_fixed_magnitude(self):
        angles = np.deg2rad(np.arange(0, 360, 3.0))
        u = 2.0 * np.cos(angles)[None, :]
        v = 2.0 * np.sin(angles)[None, :]
        img = visualize(FlowField(u, v, np.ones_like(u, bool)), max_magnitude=2.0).data[0]
        d = np.linalg.norm(img[:, None] - img[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        assert d.min() > 1e-4

    def test_invalid_pixels_black(self):
        flow = FlowField(np.array([[1.0, 1.0]]), np.zeros((1, 2)), np.array([[True, False]]))
        img = visualize(flow, max_magnitude=1.0).data
        assert np.allclose(img[0, 1], 0.0)

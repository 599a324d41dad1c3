import numpy as np
import pytest

from matchflow import Image, InvalidInputError, segment, to_cielab

from conftest import smooth_noise


def flood_fill_components(labels):
    """Independent component check: number of 4-connected blobs per label."""
    h, w = labels.shape
    seen = np.zeros((h, w), bool)
    per_label = {}
    for sy in range(h):
        for sx in range(w):
            if seen[sy, sx]:
                continue
            lbl = labels[sy, sx]
            per_label[lbl] = per_label.get(lbl, 0) + 1
            stack = [(sy, sx)]
            seen[sy, sx] = True
            while stack:
                y, x = stack.pop()
                for ny, nx in ((y + 1, x), (y - 1, x), (y, x + 1), (y, x - 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and labels[ny, nx] == lbl:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
    return per_label


@pytest.fixture(scope="module")
def natural_seg():
    img = to_cielab(Image(smooth_noise(90, 120, seed=17), "rgb"))
    return segment(img, grid_step=12)


class TestSegment:
    def test_partition(self, natural_seg):
        seg = natural_seg
        hist = np.bincount(seg.labels.ravel(), minlength=seg.count)
        assert hist.sum() == seg.height * seg.width
        assert (hist > 0).all()
        assert seg.labels.min() == 0 and seg.labels.max() == seg.count - 1

    def test_every_label_connected(self, natural_seg):
        per_label = flood_fill_components(natural_seg.labels)
        assert all(n == 1 for n in per_label.values())

    def test_constant_image_regular_grid(self):
        img = Image(np.full((80, 100, 3), 0.5, np.float32), "rgb")
        seg = segment(img, grid_step=10)
        areas = np.bincount(seg.labels.ravel(), minlength=seg.count)
        assert (areas >= 0.25 * 100).all()
        assert (areas <= 4 * 100).all()

    def test_count_near_grid_prediction(self, natural_seg):
        seg = natural_seg
        predicted = (120 / 12) * (90 / 12)
        assert 0.7 * predicted <= seg.count <= 1.3 * predicted

    def test_adjacency_symmetric_and_exact(self, natural_seg):
        seg = natural_seg
        assert all((b, a) in seg.adjacency for a, b in seg.adjacency)
        expected = set()
        lab = seg.labels
        for a, b in zip(lab[:, :-1].ravel(), lab[:, 1:].ravel()):
            if a != b:
                expected.add((int(a), int(b)))
                expected.add((int(b), int(a)))
        for a, b in zip(lab[:-1, :].ravel(), lab[1:, :].ravel()):
            if a != b:
                expected.add((int(a), int(b)))
                expected.add((int(b), int(a)))
        assert seg.adjacency == expected

    def test_adjacency_graph_connected(self, natural_seg):
        seg = natural_seg
        reached = {0}
        frontier = [0]
        adj = {}
        for a, b in seg.adjacency:
            adj.setdefault(a, []).append(b)
        while frontier:
            cur = frontier.pop()
            for nb in adj.get(cur, ()):
                if nb not in reached:
                    reached.add(nb)
                    frontier.append(nb)
        assert len(reached) == seg.count

    def test_deterministic(self):
        img = to_cielab(Image(smooth_noise(48, 64, seed=19), "rgb"))
        a = segment(img, grid_step=8)
        b = segment(img, grid_step=8)
        assert a.count == b.count
        assert np.array_equal(a.labels, b.labels)

    def test_centers_inside_image_and_centroids(self, natural_seg):
        seg = natural_seg
        assert (seg.centers[:, 0] >= 0).all() and (seg.centers[:, 0] <= seg.width - 1).all()
        lbl = 0
        ys, xs = np.nonzero(seg.labels == lbl)
        assert seg.centers[lbl, 0] == pytest.approx(xs.mean())
        assert seg.centers[lbl, 1] == pytest.approx(ys.mean())

    def test_grid_step_bounds(self):
        img = Image(smooth_noise(40, 40, seed=20), "rgb")
        with pytest.raises(InvalidInputError):
            segment(img, grid_step=4)
        with pytest.raises(InvalidInputError):
            segment(img, grid_step=21)

    def test_rgb_input_autoconverted(self):
        img = Image(smooth_noise(40, 40, seed=21), "rgb")
        seg = segment(img, grid_step=8)
        assert seg.count > 4

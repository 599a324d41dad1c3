"""Compact over-segmentation of the reference image (SLIC-style).

Superpixels are the interpolation units: per-superpixel affine models are
fitted from geodesic match neighborhoods and propagated between adjacent
superpixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _kernels
from .errors import InvalidInputError
from .image import CIELAB, Image, to_cielab

SLIC_COMPACTNESS = 10.0
SLIC_ITERATIONS = 10


@dataclass
class SuperpixelSegmentation:
    """Label raster plus per-label centroids, mean colors, and adjacency."""

    labels: np.ndarray          # (H, W) int32, values in [0, count)
    count: int
    centers: np.ndarray         # (count, 2) float64 centroid (x, y)
    mean_color: np.ndarray      # (count, C) float64
    adjacency: set[tuple[int, int]]  # symmetric label pairs sharing a 4-edge

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def neighbors(self, label: int) -> list[int]:
        return sorted(b for a, b in self.adjacency if a == label)


@njit(cache=True, nogil=True)
def _slic_assign(lab, cx, cy, cc, labels, grid_step, compactness, iterations):
    h, w, nch = lab.shape
    k = cx.shape[0]
    dist = np.empty((h, w), np.float64)
    ratio = compactness / grid_step
    for _ in range(iterations):
        dist[:] = np.inf
        for j in range(k):
            x_lo = max(0, int(cx[j] - grid_step))
            x_hi = min(w, int(cx[j] + grid_step) + 1)
            y_lo = max(0, int(cy[j] - grid_step))
            y_hi = min(h, int(cy[j] + grid_step) + 1)
            for y in range(y_lo, y_hi):
                for x in range(x_lo, x_hi):
                    dc = 0.0
                    for c in range(nch):
                        d = float(lab[y, x, c]) - cc[j, c]
                        dc += d * d
                    dxs = x - cx[j]
                    dys = y - cy[j]
                    dv = np.sqrt(dc) + ratio * np.sqrt(dxs * dxs + dys * dys)
                    if dv < dist[y, x]:
                        dist[y, x] = dv
                        labels[y, x] = j
        # recompute centers; empty clusters keep their previous position
        nx = np.zeros(k, np.float64)
        ny = np.zeros(k, np.float64)
        ncol = np.zeros((k, nch), np.float64)
        cnt = np.zeros(k, np.int64)
        for y in range(h):
            for x in range(w):
                j = labels[y, x]
                nx[j] += x
                ny[j] += y
                for c in range(nch):
                    ncol[j, c] += float(lab[y, x, c])
                cnt[j] += 1
        for j in range(k):
            if cnt[j] > 0:
                cx[j] = nx[j] / cnt[j]
                cy[j] = ny[j] / cnt[j]
                for c in range(nch):
                    cc[j, c] = ncol[j, c] / cnt[j]


def _enforce_connectivity(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Merge orphan fragments so every final label is one 4-connected blob.

    Fragments that are not the largest piece of their label join the
    adjacent fragment with the largest area (smallest fragment id on ties),
    processed smallest-first; final labels are compacted per merged blob.
    """
    h, w = labels.shape
    ok_right = labels[:, :-1] == labels[:, 1:]
    ok_down = labels[:-1, :] == labels[1:, :]
    active = np.ones((h, w), bool)
    comp, ncomp = _kernels.grid_components(ok_right, ok_down, active)
    areas = np.bincount(comp.ravel(), minlength=ncomp).astype(np.int64)

    # fragment adjacency from boundary pixel pairs
    pairs = set()
    a = comp[:, :-1][~ok_right]
    b = comp[:, 1:][~ok_right]
    for i, j in zip(a.ravel(), b.ravel()):
        pairs.add((int(i), int(j)))
        pairs.add((int(j), int(i)))
    a = comp[:-1, :][~ok_down]
    b = comp[1:, :][~ok_down]
    for i, j in zip(a.ravel(), b.ravel()):
        pairs.add((int(i), int(j)))
        pairs.add((int(j), int(i)))
    adj: list[set[int]] = [set() for _ in range(ncomp)]
    for i, j in pairs:
        adj[i].add(j)

    # largest fragment per original label is canonical
    frag_label = np.full(ncomp, -1, np.int64)
    flat_comp = comp.ravel()
    flat_lab = labels.ravel()
    seen = np.zeros(ncomp, bool)
    for idx in range(flat_comp.size):
        f = flat_comp[idx]
        if not seen[f]:
            seen[f] = True
            frag_label[f] = flat_lab[idx]
    canonical = np.zeros(ncomp, bool)
    best_area: dict[int, tuple[int, int]] = {}
    for f in range(ncomp):
        lbl = int(frag_label[f])
        cur = best_area.get(lbl)
        cand = (int(areas[f]), -f)
        if cur is None or cand > cur:
            best_area[lbl] = cand
    for lbl, (_, negf) in best_area.items():
        canonical[-negf] = True

    parent = np.arange(ncomp)

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    orphans = sorted((int(areas[f]), f) for f in range(ncomp) if not canonical[f])
    for _, f in orphans:
        root_f = find(f)
        best = None
        for g in adj[f]:
            rg = find(g)
            if rg == root_f:
                continue
            cand = (int(areas[rg]), -rg)
            if best is None or cand > best:
                best = cand
        if best is None:
            continue
        target = -best[1]
        parent[root_f] = target
        areas[target] += areas[root_f]

    roots = np.array([find(f) for f in range(ncomp)])
    uniq, compact = np.unique(roots, return_inverse=True)
    final = compact[comp]
    return final.astype(np.int32), len(uniq)


def segment(img: Image, grid_step: int) -> SuperpixelSegmentation:
    """SLIC clustering with seed spacing grid_step, compactness 10, 10
    iterations, then connectivity enforcement."""
    if img.colorspace != CIELAB:
        img = to_cielab(img)
    h, w = img.height, img.width
    if grid_step < 5 or grid_step > min(w, h) / 2:
        raise InvalidInputError(f"grid_step {grid_step} outside [5, min(W,H)/2]")
    lab = img.data

    nx = max(1, round(w / grid_step))
    ny = max(1, round(h / grid_step))
    xs = (np.arange(nx) + 0.5) * (w / nx)
    ys = (np.arange(ny) + 0.5) * (h / ny)
    cx, cy = [a.ravel().astype(np.float64) for a in np.meshgrid(xs, ys)]
    cc = np.stack([lab[np.clip(cy.astype(int), 0, h - 1), np.clip(cx.astype(int), 0, w - 1), c]
                   for c in range(lab.shape[2])], axis=1).astype(np.float64)

    labels = np.zeros((h, w), np.int64)
    _slic_assign(lab, cx, cy, cc, labels, float(grid_step), SLIC_COMPACTNESS, SLIC_ITERATIONS)
    final, count = _enforce_connectivity(labels)

    flat = final.ravel()
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    area = np.bincount(flat, minlength=count).astype(np.float64)
    centers = np.stack([
        np.bincount(flat, weights=gx.ravel(), minlength=count) / area,
        np.bincount(flat, weights=gy.ravel(), minlength=count) / area,
    ], axis=1)
    mean_color = np.stack([
        np.bincount(flat, weights=lab[:, :, c].astype(np.float64).ravel(), minlength=count) / area
        for c in range(lab.shape[2])
    ], axis=1)

    adjacency: set[tuple[int, int]] = set()
    la, lb = final[:, :-1], final[:, 1:]
    diff = la != lb
    for i, j in zip(la[diff].ravel(), lb[diff].ravel()):
        adjacency.add((int(i), int(j)))
        adjacency.add((int(j), int(i)))
    la, lb = final[:-1, :], final[1:, :]
    diff = la != lb
    for i, j in zip(la[diff].ravel(), lb[diff].ravel()):
        adjacency.add((int(i), int(j)))
        adjacency.add((int(j), int(i)))

    return SuperpixelSegmentation(labels=final, count=count, centers=centers,
                                  mean_color=mean_color, adjacency=adjacency)

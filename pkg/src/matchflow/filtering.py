"""Multi-stage rejection of false matches.

Two forward-backward consistency checks against independently computed
inverse flows, connected-component region filtering, and 3x3-block
sparsification that keeps only the lowest-error match per block.
"""
from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidInputError
from .flow import FlowField
from .image import Image, PyramidConfig, sample_bilinear_grid
from .matcher import MatchingParams, alt_matching_params, match_full


@dataclass(frozen=True)
class FilterParams:
    """Consistency threshold epsilon, block minimum s, and region-filter knobs."""

    epsilon: float = 1.0
    min_matches_s: int = 7
    min_region_area: int = 10
    region_flow_tolerance: float = 1.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvalidInputError("epsilon must be positive")
        if not 1 <= self.min_matches_s <= 9:
            raise InvalidInputError("min_matches_s must be in [1, 9]")


@dataclass(frozen=True)
class Match:
    """One surviving correspondence: position in frame 1, displacement, and
    the larger of its two consistency errors."""

    x: float
    y: float
    u: float
    v: float
    error: float


@dataclass
class MatchSet:
    """Sparse matches stored as parallel arrays; iterable as Match records."""

    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    y: np.ndarray = field(default_factory=lambda: np.empty(0))
    u: np.ndarray = field(default_factory=lambda: np.empty(0))
    v: np.ndarray = field(default_factory=lambda: np.empty(0))
    error: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.error = np.asarray(self.error, dtype=np.float64)
        n = len(self.x)
        if not all(len(a) == n for a in (self.y, self.u, self.v, self.error)):
            raise InvalidInputError("match arrays must have equal length")

    def __len__(self) -> int:
        return len(self.x)

    def __iter__(self):
        for i in range(len(self.x)):
            yield Match(self.x[i], self.y[i], self.u[i], self.v[i], self.error[i])

    def save_text(self, path: str | os.PathLike) -> None:
        """Write one `x y u v error` line per match; floats round-trip exactly."""
        with open(path, "w") as fh:
            for i in range(len(self.x)):
                fh.write("%.17g %.17g %.17g %.17g %.17g\n"
                         % (self.x[i], self.y[i], self.u[i], self.v[i], self.error[i]))

    @classmethod
    def load_text(cls, path: str | os.PathLike) -> "MatchSet":
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 5:
                    raise InvalidInputError(f"malformed match line: {line!r}")
                rows.append([float(p) for p in parts])
        arr = np.asarray(rows, dtype=np.float64).reshape(-1, 5)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])


def consistency_check(fwd: FlowField, bwd: FlowField, epsilon: float) -> tuple[FlowField, np.ndarray]:
    """Validate forward flow against an inverse field.

    The error at x is ||w_fwd(x) + w_bwd(x + w_fwd(x))||; validity is cleared
    where it exceeds epsilon or where the target leaves the second frame.
    Returns the masked flow and the per-pixel error raster (inf where the
    target is out of bounds).
    """
    if (fwd.width, fwd.height) != (bwd.width, bwd.height):
        raise InvalidInputError("forward/backward dimensions differ")
    h, w = fwd.height, fwd.width
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    tx = gx + fwd.u
    ty = gy + fwd.v
    in_dom = (tx >= 0) & (tx <= w - 1) & (ty >= 0) & (ty <= h - 1)
    bu = sample_bilinear_grid(bwd.u, tx, ty)
    bv = sample_bilinear_grid(bwd.v, tx, ty)
    err = np.hypot(fwd.u + bu, fwd.v + bv)
    err[~in_dom] = np.inf
    valid = fwd.valid & in_dom & (err <= epsilon)
    return FlowField(fwd.u.copy(), fwd.v.copy(), valid), err


def two_pass_filter(img1: Image, img2: Image, fwd: FlowField,
                    params_main: MatchingParams, params_alt: MatchingParams | None,
                    fp: FilterParams,
                    pyramid_config: PyramidConfig | None = None) -> tuple[FlowField, np.ndarray]:
    """Run both consistency checks; a pixel survives only if it passes both.

    The two inverse fields (frame order swapped) use params_main and
    params_alt; params_alt defaults to the one-larger-patch variant. They
    are independent searches and run on separate threads. The returned
    error raster holds the max of the two check errors.
    """
    if params_alt is None:
        params_alt = alt_matching_params(params_main)
    with concurrent.futures.ThreadPoolExecutor(max_workers=2) as pool:
        fut_main = pool.submit(match_full, img2, img1, params_main, pyramid_config)
        fut_alt = pool.submit(match_full, img2, img1, params_alt, pyramid_config)
        bwd_main = fut_main.result()
        bwd_alt = fut_alt.result()
    flow1, err1 = consistency_check(fwd, bwd_main, fp.epsilon)
    flow2, err2 = consistency_check(fwd, bwd_alt, fp.epsilon)
    err = np.maximum(err1, err2)
    valid = flow1.valid & flow2.valid
    return FlowField(fwd.u.copy(), fwd.v.copy(), valid), err


def region_filter(flow: FlowField, fp: FilterParams) -> FlowField:
    """Drop small coherent islands.

    Valid pixels join 4-connected components when both flow components of
    adjacent pixels differ by less than region_flow_tolerance; components
    smaller than min_region_area pixels are invalidated.
    """
    tol = fp.region_flow_tolerance
    du_r = np.abs(np.diff(flow.u, axis=1))
    dv_r = np.abs(np.diff(flow.v, axis=1))
    du_d = np.abs(np.diff(flow.u, axis=0))
    dv_d = np.abs(np.diff(flow.v, axis=0))
    ok_right = (du_r < tol) & (dv_r < tol)
    ok_down = (du_d < tol) & (dv_d < tol)
    labels, count = _kernels.grid_components(ok_right, ok_down, flow.valid)
    if count == 0:
        return flow.copy()
    areas = np.bincount(labels[labels >= 0].ravel(), minlength=count)
    keep = areas >= fp.min_region_area
    valid = flow.valid & np.where(labels >= 0, keep[np.maximum(labels, 0)], False)
    return FlowField(flow.u.copy(), flow.v.copy(), valid)


def sparsify(flow: FlowField, errors: np.ndarray, fp: FilterParams) -> MatchSet:
    """One match per 3x3 block holding at least min_matches_s valid pixels.

    Blocks are anchored at (0, 0) and may be partial at the borders; the
    emitted match is the valid pixel with the lowest consistency error,
    ties broken by in-block raster order.
    """
    h, w = flow.height, flow.width
    errors = np.asarray(errors, dtype=np.float64)
    if errors.shape != (h, w):
        raise InvalidInputError("error raster shape mismatch")
    bh = (h + 2) // 3
    bw = (w + 2) // 3
    pad_err = np.full((bh * 3, bw * 3), np.inf)
    pad_valid = np.zeros((bh * 3, bw * 3), bool)
    pad_err[:h, :w] = np.where(flow.valid, errors, np.inf)
    pad_valid[:h, :w] = flow.valid
    # (bh, bw, 9) with in-block raster order along the last axis
    blk_err = pad_err.reshape(bh, 3, bw, 3).transpose(0, 2, 1, 3).reshape(bh, bw, 9)
    blk_valid = pad_valid.reshape(bh, 3, bw, 3).transpose(0, 2, 1, 3).reshape(bh, bw, 9)
    counts = blk_valid.sum(axis=2)
    emit = counts >= fp.min_matches_s
    if not emit.any():
        return MatchSet()
    best = np.argmin(blk_err, axis=2)  # first minimum = lowest raster index on ties
    by, bx = np.nonzero(emit)
    k = best[by, bx]
    # all-inf blocks: argmin may land on an invalid slot; take the first valid pixel
    bad = ~blk_valid[by, bx, k]
    if bad.any():
        k[bad] = np.argmax(blk_valid[by[bad], bx[bad]], axis=1)
    ys = by * 3 + k // 3
    xs = bx * 3 + k % 3
    return MatchSet(
        x=xs.astype(np.float64),
        y=ys.astype(np.float64),
        u=flow.u[ys, xs],
        v=flow.v[ys, xs],
        error=errors[ys, xs],
    )

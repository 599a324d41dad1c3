"""Coarse-to-fine dense correspondence search.

Initialization matches Walsh-Hadamard descriptors through a kd-tree at the
coarsest pyramid level; every level then runs quadrant propagation sweeps
with periodic random search, and flows are upscaled between levels.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .descriptors import (
    CENSUS_RADIUS_DEFAULT,
    SIFT_RADIUS_DEFAULT,
    census_words_per_channel,
    wh_grid,
)
from .errors import InvalidInputError
from .flow import FlowField
from .image import Image, PyramidConfig, build_pyramid, sample_bilinear_grid, to_cielab, to_gray
from .kdtree import KDTree

DESCRIPTOR_CENSUS = "census"
DESCRIPTOR_SIFT = "sift"


@dataclass(frozen=True)
class MatchingParams:
    """Knobs of the propagation search.

    patch_radius None selects the per-descriptor default (3 for Census,
    8 for SIFT). kd_leaf_visits bounds best-bin-first backtracking during
    initialization; None searches exactly.
    """

    iterations: int = 12
    descriptor: str = DESCRIPTOR_CENSUS
    patch_radius: int | None = None
    random_search_radius: float = 1.0
    random_searches_per_iteration: int = 3
    seed: int = 0
    kd_leaf_visits: int | None = 32
    wh_coefficients: int = 16

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if self.random_search_radius <= 0:
            raise InvalidInputError("random_search_radius must be positive")
        if not 0 <= self.random_searches_per_iteration <= 4:
            raise InvalidInputError("random_searches_per_iteration must be in [0, 4]")
        if self.descriptor not in (DESCRIPTOR_CENSUS, DESCRIPTOR_SIFT):
            raise InvalidInputError(f"unknown descriptor {self.descriptor!r}")

    def effective_patch_radius(self) -> int:
        if self.patch_radius is not None:
            return self.patch_radius
        return CENSUS_RADIUS_DEFAULT if self.descriptor == DESCRIPTOR_CENSUS else SIFT_RADIUS_DEFAULT


@dataclass
class CostField:
    """Per-pixel current best flow and its descriptor distance."""

    u: np.ndarray
    v: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        self.cost = np.ascontiguousarray(self.cost, dtype=np.float64)
        if not (self.u.shape == self.v.shape == self.cost.shape) or self.u.ndim != 2:
            raise InvalidInputError("u, v, cost must share one 2-D shape")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def copy(self) -> "CostField":
        return CostField(self.u.copy(), self.v.copy(), self.cost.copy())

    def to_flow(self) -> FlowField:
        return FlowField(self.u.copy(), self.v.copy(), np.ones(self.u.shape, bool))


class _Context:
    """Descriptor tables for one pyramid level of an image pair."""

    def __init__(self, img1: Image, img2: Image, params: MatchingParams):
        self.kind = params.descriptor
        self.radius = params.effective_patch_radius()
        if self.kind == DESCRIPTOR_CENSUS:
            lab1 = to_cielab(img1).data
            self.plane2 = to_cielab(img2).data
            self.wpc = census_words_per_channel(self.radius)
            self.desc1 = _kernels.census_grid(lab1, self.radius, self.wpc)
            self.desc2 = _kernels.census_grid(self.plane2, self.radius, self.wpc)
            self.cost_clamp = float(((2 * self.radius + 1) ** 2 - 1) * lab1.shape[2] + 1)
        else:
            gray1 = to_gray(img1).data[:, :, 0]
            gray2 = to_gray(img2).data[:, :, 0]
            self.gx2, self.gy2 = _kernels.gradient_planes(gray2)
            self.desc1 = _kernels.sift_grid(gray1, self.radius)
            self.desc2 = _kernels.sift_grid(gray2, self.radius)
            self.cost_clamp = 4.0  # > max distance of two unit-norm descriptors

    def sweep(self, field: CostField, ydir: int, xdir: int) -> None:
        if self.kind == DESCRIPTOR_CENSUS:
            _kernels.sweep_census(field.u, field.v, field.cost, self.desc1, self.plane2,
                                  self.desc2, self.radius, self.wpc, ydir, xdir)
        else:
            _kernels.sweep_sift(field.u, field.v, field.cost, self.desc1, self.gx2, self.gy2,
                                self.desc2, self.radius, ydir, xdir)

    def random_pass(self, field: CostField, du: np.ndarray, dv: np.ndarray) -> None:
        if self.kind == DESCRIPTOR_CENSUS:
            _kernels.random_pass_census(field.u, field.v, field.cost, self.desc1, self.plane2,
                                        self.desc2, self.radius, self.wpc, du, dv)
        else:
            _kernels.random_pass_sift(field.u, field.v, field.cost, self.desc1, self.gx2, self.gy2,
                                      self.desc2, self.radius, du, dv)

    def recompute(self, field: CostField) -> None:
        if self.kind == DESCRIPTOR_CENSUS:
            _kernels.recompute_census(field.u, field.v, field.cost, self.desc1, self.plane2,
                                      self.desc2, self.radius, self.wpc)
        else:
            _kernels.recompute_sift(field.u, field.v, field.cost, self.desc1, self.gx2, self.gy2,
                                    self.desc2, self.radius)

    def traced_total(self, field: CostField) -> float:
        return float(np.minimum(field.cost, self.cost_clamp).sum())


def _rng_for(params: MatchingParams, stream: int) -> np.random.Generator:
    entropy = [int(params.seed) & 0xFFFFFFFFFFFFFFFF, int(stream)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def init_coarsest(img1: Image, img2: Image, params: MatchingParams) -> CostField:
    """Seed flows at the coarsest level via kd-tree Walsh-Hadamard matching."""
    if (img1.width, img1.height) != (img2.width, img2.height):
        raise InvalidInputError("image pair dimensions differ")
    h, w = img1.height, img1.width
    d1 = wh_grid(img1, params.wh_coefficients).reshape(-1, params.wh_coefficients)
    d2 = wh_grid(img2, params.wh_coefficients).reshape(-1, params.wh_coefficients)
    tree = KDTree.build(d2)
    u = np.zeros((h, w))
    v = np.zeros((h, w))
    flat_u = u.reshape(-1)
    flat_v = v.reshape(-1)
    for i in range(h * w):
        j, _ = tree.query(d1[i], max_leaf_visits=params.kd_leaf_visits)
        flat_u[i] = (j % w) - (i % w)
        flat_v[i] = (j // w) - (i // w)
    field = CostField(u, v, np.zeros((h, w)))
    _Context(img1, img2, params).recompute(field)
    return field


# Sweep order: TL->BR, BR->TL, TR->BL, BL->TR. (ydir, xdir) gives the scan
# direction; the causal neighbors of a pixel are at (x - xdir, y) and
# (x, y - ydir).
_SWEEPS = ((1, 1), (-1, -1), (1, -1), (-1, 1))


def propagate_scale(img1: Image, img2: Image, init: CostField, params: MatchingParams,
                    rng_stream: int = 0, trace: list | None = None,
                    _ctx: _Context | None = None) -> CostField:
    """Quadrant propagation with random search at one scale.

    Each iteration runs four diagonal sweeps; after each of the last
    random_searches_per_iteration sweeps, every pixel additionally tests
    its flow plus a uniform offset in [-r, r] per component. Candidates
    are adopted only on strictly lower cost. When trace is given, the
    clamped total cost is appended after every sweep and random pass.
    """
    if (init.height, init.width) != (img1.height, img1.width):
        raise InvalidInputError("cost field dimensions do not match the images")
    ctx = _ctx if _ctx is not None else _Context(img1, img2, params)
    field = init.copy()
    rng = _rng_for(params, rng_stream)
    r = params.random_search_radius
    first_random = 4 - params.random_searches_per_iteration
    if trace is not None:
        trace.append(ctx.traced_total(field))
    for _ in range(params.iterations):
        for s, (ydir, xdir) in enumerate(_SWEEPS):
            ctx.sweep(field, ydir, xdir)
            if trace is not None:
                trace.append(ctx.traced_total(field))
            if s >= first_random:
                du = rng.uniform(-r, r, size=field.u.shape)
                dv = rng.uniform(-r, r, size=field.u.shape)
                ctx.random_pass(field, du, dv)
                if trace is not None:
                    trace.append(ctx.traced_total(field))
    return field


def upscale_flow(coarse: CostField, img1: Image, img2: Image, params: MatchingParams,
                 scale_ratio: float, _ctx: _Context | None = None) -> CostField:
    """Resample a coarse flow to the next finer level and rescale components.

    Costs are recomputed from the fine-level descriptors.
    """
    if scale_ratio < 1.0:
        raise InvalidInputError("scale_ratio must be >= 1")
    h, w = img1.height, img1.width
    ch, cw = coarse.height, coarse.width
    xs = (np.arange(w) + 0.5) * (cw / w) - 0.5
    ys = (np.arange(h) + 0.5) * (ch / h) - 0.5
    gx, gy = np.meshgrid(np.clip(xs, 0, cw - 1), np.clip(ys, 0, ch - 1))
    u = sample_bilinear_grid(coarse.u, gx, gy) * scale_ratio
    v = sample_bilinear_grid(coarse.v, gx, gy) * scale_ratio
    field = CostField(u, v, np.zeros((h, w)))
    ctx = _ctx if _ctx is not None else _Context(img1, img2, params)
    ctx.recompute(field)
    return field


def match_full(img1: Image, img2: Image, params: MatchingParams,
               pyramid_config: PyramidConfig | None = None) -> FlowField:
    """Dense matching over the full pyramid; returns an all-valid flow field."""
    if (img1.width, img1.height) != (img2.width, img2.height):
        raise InvalidInputError("image pair dimensions differ")
    if min(img1.width, img1.height) < 32:
        raise InvalidInputError("images must be at least 32x32")
    pyr1 = build_pyramid(img1, pyramid_config)
    pyr2 = build_pyramid(img2, pyramid_config)
    coarsest = len(pyr1) - 1
    field = init_coarsest(pyr1.levels[coarsest], pyr2.levels[coarsest], params)
    ctx = _Context(pyr1.levels[coarsest], pyr2.levels[coarsest], params)
    field = propagate_scale(pyr1.levels[coarsest], pyr2.levels[coarsest], field, params,
                            rng_stream=coarsest, _ctx=ctx)
    for k in range(coarsest - 1, -1, -1):
        ratio = pyr1.scale_factors[k] / pyr1.scale_factors[k + 1]
        ctx = _Context(pyr1.levels[k], pyr2.levels[k], params)
        field = upscale_flow(field, pyr1.levels[k], pyr2.levels[k], params, ratio, _ctx=ctx)
        field = propagate_scale(pyr1.levels[k], pyr2.levels[k], field, params, rng_stream=k, _ctx=ctx)
    return field.to_flow()


def alt_matching_params(params: MatchingParams) -> MatchingParams:
    """Second-check variant: one-larger patch and a decorrelated seed."""
    return replace(params,
                   patch_radius=params.effective_patch_radius() + 1,
                   seed=(params.seed + 1) & 0xFFFFFFFFFFFFFFFF)

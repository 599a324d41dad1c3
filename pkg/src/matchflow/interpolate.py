"""Sparse-to-dense interpolation with per-superpixel affine models.

Each superpixel gathers the geodesically nearest matches, estimates a
6-parameter affine motion by randomized consensus, improves it by spatial
model propagation, and stamps the model onto its pixels. Surviving match
pixels keep their matched flow verbatim.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edges import EUCLIDEAN_OFFSET, EdgeMap
from .errors import DegenerateFitError, InterpolationImpossibleError, InvalidInputError
from .filtering import MatchSet
from .flow import FlowField
from .superpixels import SuperpixelSegmentation

CONDITION_LIMIT = 1e10


@dataclass(frozen=True)
class AffineModel:
    """Planar motion model: (x, y) maps to (a11 x + a12 y + b1, a21 x + a22 y + b2).

    Flow at (x, y) is the mapped point minus (x, y).
    """

    a11: float
    a12: float
    a21: float
    a22: float
    b1: float
    b2: float

    def apply(self, x, y):
        return (self.a11 * x + self.a12 * y + self.b1,
                self.a21 * x + self.a22 * y + self.b2)

    def flow_at(self, x, y):
        mx, my = self.apply(x, y)
        return mx - x, my - y

    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    @classmethod
    def identity(cls) -> "AffineModel":
        return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class InterpParams:
    """Support size, consensus thresholds, and propagation schedule."""

    neighborhood_size: int = 150
    inlier_threshold: float = 1.0
    ransac_iterations: int = 150
    propagation_rounds: int = 8
    seed: int = 0
    # Gaussian locality of the least-squares weights, as a fraction of the
    # zero-edge geodesic cost of the image diagonal.
    weight_sigma_fraction: float = 0.05

    def __post_init__(self):
        if self.neighborhood_size < 3:
            raise InvalidInputError("neighborhood_size must be >= 3")
        if self.inlier_threshold <= 0:
            raise InvalidInputError("inlier_threshold must be positive")


@dataclass
class RobustFit:
    model: AffineModel
    inliers: np.ndarray  # bool mask over the support list
    low_confidence: bool = False

    @property
    def inlier_count(self) -> int:
        return int(self.inliers.sum())


def _superpixel_graph(seg: SuperpixelSegmentation, edges: EdgeMap,
                      offset: float = EUCLIDEAN_OFFSET):
    """Sparse weighted adjacency: mean boundary edge strength between two
    superpixels plus offset times their centroid distance."""
    import scipy.sparse as sp

    labels = seg.labels
    strength = edges.strength.astype(np.float64)
    sums: dict[tuple[int, int], float] = {}
    counts: dict[tuple[int, int], int] = {}

    def accumulate(la, lb, sa, sb):
        diff = la != lb
        pair_s = (sa[diff] + sb[diff]) * 0.5
        for i, j, s in zip(la[diff].ravel(), lb[diff].ravel(), pair_s.ravel()):
            key = (int(i), int(j)) if i < j else (int(j), int(i))
            sums[key] = sums.get(key, 0.0) + float(s)
            counts[key] = counts.get(key, 0) + 1

    accumulate(labels[:, :-1], labels[:, 1:], strength[:, :-1], strength[:, 1:])
    accumulate(labels[:-1, :], labels[1:, :], strength[:-1, :], strength[1:, :])

    rows, cols, vals = [], [], []
    for (i, j), total in sums.items():
        mean_strength = total / counts[(i, j)]
        d = np.hypot(*(seg.centers[i] - seg.centers[j]))
        wgt = mean_strength + offset * d
        rows.extend((i, j))
        cols.extend((j, i))
        vals.extend((wgt, wgt))
    n = seg.count
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assign_support(matches: MatchSet, seg: SuperpixelSegmentation, edges: EdgeMap,
                   params: InterpParams,
                   geodesic_offset: float = EUCLIDEAN_OFFSET) -> list[np.ndarray]:
    """Per-superpixel support: indices of the geodesically nearest matches
    paired with their distances.

    Distances are superpixel-graph shortest paths from the superpixel to the
    superpixel containing each match. Returns, per superpixel, a (k, 2)
    array of (match index, distance) sorted by distance then match index.
    """
    from scipy.sparse.csgraph import dijkstra

    if len(matches) < 3:
        raise InterpolationImpossibleError(f"{len(matches)} matches; need at least 3")
    if (seg.height, seg.width) != (edges.height, edges.width):
        raise InvalidInputError("segmentation and edge map dimensions differ")

    graph = _superpixel_graph(seg, edges, geodesic_offset)
    all_dist = dijkstra(graph, directed=False)

    mx = np.clip(np.round(matches.x).astype(int), 0, seg.width - 1)
    my = np.clip(np.round(matches.y).astype(int), 0, seg.height - 1)
    match_label = seg.labels[my, mx]

    k = min(params.neighborhood_size, len(matches))
    support: list[np.ndarray] = []
    idx = np.arange(len(matches))
    for sp_label in range(seg.count):
        d = all_dist[sp_label, match_label]
        if k < len(matches):
            part = np.argpartition(d, k - 1)[:k]
        else:
            part = idx
        order = part[np.lexsort((part, d[part]))]
        support.append(np.stack([order.astype(np.float64), d[order]], axis=1))
    return support


def fit_affine(x: np.ndarray, y: np.ndarray, u: np.ndarray, v: np.ndarray,
               weights: np.ndarray | None = None) -> AffineModel:
    """Weighted least-squares fit of the 6-unknown system mapping
    (x, y) -> (x + u, y + v); raises on degenerate geometry."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if len(x) < 3:
        raise InvalidInputError("affine fit needs at least 3 matches")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)
    phi = np.stack([x, y, np.ones_like(x)], axis=1)
    g = phi.T @ (phi * w[:, None])
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise DegenerateFitError(f"support positions are collinear (cond={cond:.3g})")
    rhs = phi.T @ (w[:, None] * np.stack([x + u, y + v], axis=1))
    sol = np.linalg.solve(g, rhs)
    return AffineModel(a11=sol[0, 0], a12=sol[1, 0], a21=sol[0, 1],
                       a22=sol[1, 1], b1=sol[2, 0], b2=sol[2, 1])


def _residuals(model: AffineModel, x, y, u, v) -> np.ndarray:
    mx, my = model.apply(x, y)
    return np.hypot(mx - (x + u), my - (y + v))


def _support_weights(dists: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return np.ones_like(dists)
    w = np.exp(-0.5 * (dists / sigma) ** 2)
    peak = w.max()
    if peak <= 0 or not np.isfinite(peak):
        return np.ones_like(dists)
    return w / peak


def _fallback_fit(x, y, u, v, weights) -> AffineModel:
    """Weighted full-support fit; degenerate geometry degrades to the
    weighted-mean translation model."""
    try:
        return fit_affine(x, y, u, v, weights)
    except DegenerateFitError:
        wsum = weights.sum()
        if wsum <= 0:
            weights = np.ones_like(weights)
            wsum = weights.sum()
        return AffineModel(1.0, 0.0, 0.0, 1.0,
                           float((weights * u).sum() / wsum),
                           float((weights * v).sum() / wsum))


def robust_model(matches: MatchSet, support: np.ndarray, params: InterpParams,
                 rng: np.random.Generator, weight_sigma: float = 0.0) -> RobustFit:
    """Randomized consensus over one superpixel's support.

    Minimal 3-match hypotheses are scored by inliers (residual strictly
    below the threshold); the best is refit by weighted least squares on
    its inliers. Falls back to a weighted fit over all support (flagged
    low-confidence) when no hypothesis reaches 3 inliers; degenerate
    support degrades further to a translation-only model.
    """
    idx = support[:, 0].astype(int)
    dist = support[:, 1]
    x, y, u, v = matches.x[idx], matches.y[idx], matches.u[idx], matches.v[idx]
    n = len(idx)
    weights = _support_weights(dist, weight_sigma)

    phi = np.stack([x, y, np.ones_like(x)], axis=1)
    targets = np.stack([x + u, y + v], axis=1)

    best_count = 0
    best_inliers: np.ndarray | None = None
    thr = params.inlier_threshold
    if n == 3:
        samples = np.array([[0, 1, 2]])
    else:
        samples = np.stack([rng.choice(n, size=3, replace=False)
                            for _ in range(params.ransac_iterations)])
    a = phi[samples]                       # (it, 3, 3)
    b = targets[samples]                   # (it, 3, 2)
    dets = np.abs(np.linalg.det(a))
    ok = dets > 1e-12
    if ok.any():
        sols = np.full((len(samples), 3, 2), np.nan)
        sols[ok] = np.linalg.solve(a[ok], b[ok])
        pred = np.einsum("nk,ikj->inj", phi, sols)      # (it, n, 2)
        res = np.hypot(pred[:, :, 0] - targets[None, :, 0],
                       pred[:, :, 1] - targets[None, :, 1])
        counts = (res < thr).sum(axis=1)
        counts[~ok] = 0
        best = int(np.argmax(counts))                   # first best: deterministic
        if counts[best] >= 3:
            best_count = int(counts[best])
            best_inliers = res[best] < thr

    if best_inliers is None:
        model = _fallback_fit(x, y, u, v, weights)
        return RobustFit(model=model, inliers=np.ones(n, bool), low_confidence=True)

    try:
        model = fit_affine(x[best_inliers], y[best_inliers], u[best_inliers], v[best_inliers],
                           weights[best_inliers])
    except DegenerateFitError:
        model = _fallback_fit(x, y, u, v, weights)
        return RobustFit(model=model, inliers=np.ones(n, bool), low_confidence=True)
    inliers = _residuals(model, x, y, u, v) < thr
    if inliers.sum() < best_count:
        inliers = best_inliers  # keep the hypothesis consensus if refit lost ground
    return RobustFit(model=model, inliers=inliers, low_confidence=False)


def fit_all_models(matches: MatchSet, seg: SuperpixelSegmentation,
                   support: list[np.ndarray], params: InterpParams,
                   weight_sigma: float = 0.0) -> list[RobustFit]:
    """Independent per-superpixel consensus fits with decorrelated, label-keyed
    RNG streams (deterministic regardless of evaluation order)."""
    fits = []
    for label in range(seg.count):
        rng = np.random.default_rng(np.random.SeedSequence([int(params.seed) & 0xFFFFFFFFFFFFFFFF, label]))
        fits.append(robust_model(matches, support[label], params, rng, weight_sigma))
    return fits


def propagate_models(seg: SuperpixelSegmentation, fits: list[RobustFit],
                     matches: MatchSet, support: list[np.ndarray],
                     params: InterpParams, weight_sigma: float = 0.0) -> list[RobustFit]:
    """Jacobi rounds of spatial model propagation.

    Each superpixel scores all adjacent superpixels' previous-round models
    on its own support and adopts the best strictly better one (ties keep
    the incumbent), then refits on the adopted inliers. The refit is kept
    only if it does not lose inliers, so per-superpixel counts never drop.
    """
    neighbor_lists: list[list[int]] = [[] for _ in range(seg.count)]
    for a, b in seg.adjacency:
        neighbor_lists[a].append(b)
    for lst in neighbor_lists:
        lst.sort()
    current = list(fits)
    for _ in range(params.propagation_rounds):
        previous = current
        current = []
        for label in range(seg.count):
            sup = support[label]
            idx = sup[:, 0].astype(int)
            x, y, u, v = matches.x[idx], matches.y[idx], matches.u[idx], matches.v[idx]
            weights = _support_weights(sup[:, 1], weight_sigma)
            incumbent = previous[label]
            best = incumbent
            best_count = incumbent.inlier_count
            thr = params.inlier_threshold
            for nb in neighbor_lists[label]:
                cand_model = previous[nb].model
                inl = _residuals(cand_model, x, y, u, v) < thr
                cnt = int(inl.sum())
                if cnt > best_count:
                    best_count = cnt
                    best = RobustFit(model=cand_model, inliers=inl, low_confidence=False)
            if best is not incumbent and best.inlier_count >= 3:
                try:
                    refit = fit_affine(x[best.inliers], y[best.inliers],
                                       u[best.inliers], v[best.inliers],
                                       weights[best.inliers])
                    inl = _residuals(refit, x, y, u, v) < thr
                    if int(inl.sum()) >= best_count:
                        best = RobustFit(model=refit, inliers=inl, low_confidence=False)
                except DegenerateFitError:
                    pass
            current.append(best)
    return current


def densify(seg: SuperpixelSegmentation, fits: list[RobustFit],
            matches: MatchSet) -> FlowField:
    """Stamp each superpixel's model onto its pixels; match pixels keep
    their matched flow verbatim. Output is dense and fully valid."""
    if len(fits) != seg.count:
        raise InvalidInputError("one model per superpixel required")
    h, w = seg.height, seg.width
    a11 = np.array([f.model.a11 for f in fits])
    a12 = np.array([f.model.a12 for f in fits])
    a21 = np.array([f.model.a21 for f in fits])
    a22 = np.array([f.model.a22 for f in fits])
    b1 = np.array([f.model.b1 for f in fits])
    b2 = np.array([f.model.b2 for f in fits])
    lab = seg.labels
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    u = a11[lab] * gx + a12[lab] * gy + b1[lab] - gx
    v = a21[lab] * gx + a22[lab] * gy + b2[lab] - gy
    mx = np.clip(np.round(matches.x).astype(int), 0, w - 1)
    my = np.clip(np.round(matches.y).astype(int), 0, h - 1)
    u[my, mx] = matches.u
    v[my, mx] = matches.v
    return FlowField(u, v, np.ones((h, w), bool))


def interpolate(matches: MatchSet, seg: SuperpixelSegmentation, edges: EdgeMap,
                params: InterpParams,
                geodesic_offset: float = EUCLIDEAN_OFFSET) -> FlowField:
    """Full interpolation stage: support assignment, consensus fits, model
    propagation, and densification."""
    support = assign_support(matches, seg, edges, params, geodesic_offset)
    # diagonal crossing cost under the mean per-step rate, so the locality
    # scale tracks whatever the edge map contributes to path costs
    step_rate = float(edges.strength.mean()) + geodesic_offset
    diag_cost = step_rate * float(np.hypot(seg.width, seg.height))
    sigma = params.weight_sigma_fraction * diag_cost
    fits = fit_all_models(matches, seg, support, params, sigma)
    fits = propagate_models(seg, fits, matches, support, params, sigma)
    return densify(seg, fits, matches)

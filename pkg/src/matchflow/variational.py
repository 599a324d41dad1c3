"""Energy-based refinement of an interpolated flow field.

Robust brightness + gradient constancy data term with a robust TV-like
smoothness term, minimized by warping iterations at full resolution only
(the initialization is already dense and accurate, so no pyramid is used).
Pixels whose initial flow leaves the second frame are frozen: they keep
their input flow exactly and enter neighbors' smoothness stencils as
constants.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidInputError
from .flow import FlowField
from .image import Image, sample_bilinear_grid, to_cielab


@dataclass(frozen=True)
class VariationalParams:
    """Solver schedule and energy weights.

    outer_iterations is the warping count; each warp runs
    inner_fixed_point_iterations reweighting steps with sor_iterations of
    successive over-relaxation each.
    """

    outer_iterations: int = 5
    inner_fixed_point_iterations: int = 5
    sor_iterations: int = 30
    sor_omega: float = 1.85
    alpha: float = 1.0
    gamma: float = 0.72
    robust_epsilon: float = 1e-3

    def __post_init__(self):
        if self.outer_iterations < 1:
            raise InvalidInputError("outer_iterations must be >= 1")
        if not 0.0 < self.sor_omega < 2.0:
            raise InvalidInputError("sor_omega must lie in (0, 2)")
        if self.alpha < 0 or self.gamma < 0:
            raise InvalidInputError("alpha and gamma must be non-negative")
        if self.robust_epsilon <= 0:
            raise InvalidInputError("robust_epsilon must be positive")


def build_mask(w_init: FlowField, dims: tuple[int, int] | None = None) -> np.ndarray:
    """Optimization-domain mask: False exactly where x + w(x) leaves the
    second frame's domain [0, W-1] x [0, H-1]."""
    h, w = (w_init.height, w_init.width) if dims is None else (dims[1], dims[0])
    gx, gy = np.meshgrid(np.arange(w_init.width, dtype=np.float64),
                         np.arange(w_init.height, dtype=np.float64))
    tx = gx + w_init.u
    ty = gy + w_init.v
    return (tx >= 0) & (tx <= w - 1) & (ty >= 0) & (ty <= h - 1)


def _lab_planes(img: Image) -> np.ndarray:
    return to_cielab(img).data.astype(np.float64)


def _grad(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(plane)
    return gx, gy


def _warp(plane: np.ndarray, tx: np.ndarray, ty: np.ndarray) -> np.ndarray:
    return sample_bilinear_grid(plane, tx, ty)


def energy(img1: Image, img2: Image, w: FlowField, params: VariationalParams,
           mask: np.ndarray | None = None) -> float:
    """Robust flow energy.

    Data term (channel-averaged over CIELab, masked pixels only):
    Psi(|I2(x+w) - I1(x)|^2 + gamma |grad I2(x+w) - grad I1(x)|^2) with
    Psi(s^2) = sqrt(s^2 + eps^2) and clamped bilinear warping. Smoothness
    (all pixels): alpha * Psi(|grad u|^2 + |grad v|^2) with
    central-difference gradients (one-sided at borders).
    """
    if (img1.width, img1.height) != (w.width, w.height):
        raise InvalidInputError("flow and image dimensions differ")
    lab1 = _lab_planes(img1)
    lab2 = _lab_planes(img2)
    if mask is None:
        mask = np.ones((w.height, w.width), bool)
    eps2 = params.robust_epsilon ** 2

    gx, gy = np.meshgrid(np.arange(w.width, dtype=np.float64),
                         np.arange(w.height, dtype=np.float64))
    tx = gx + w.u
    ty = gy + w.v

    nch = lab1.shape[2]
    bright = np.zeros_like(tx)
    grad = np.zeros_like(tx)
    for c in range(nch):
        i1 = lab1[:, :, c]
        i2 = lab2[:, :, c]
        i1x, i1y = _grad(i1)
        i2x, i2y = _grad(i2)
        dwarp = _warp(i2, tx, ty) - i1
        bright += dwarp * dwarp
        dx = _warp(i2x, tx, ty) - i1x
        dy = _warp(i2y, tx, ty) - i1y
        grad += dx * dx + dy * dy
    data_s2 = bright / nch + params.gamma * grad / nch
    data = np.sqrt(data_s2 + eps2)[mask].sum()

    ux, uy = _grad(w.u)
    vx, vy = _grad(w.v)
    smooth = np.sqrt(ux * ux + uy * uy + vx * vx + vy * vy + eps2).sum()
    return float(data + params.alpha * smooth)


@njit(cache=True, nogil=True)
def _sor(du, dv, a11, a12, a22, b1, b2, wr, wd, u, v, mask, omega, iterations):
    """Red-black SOR on the coupled 2x2 per-pixel increment system.

    Frozen pixels never update and contribute du = dv = 0 plus their fixed
    flow to neighboring stencils.
    """
    h, w = du.shape
    for _ in range(iterations):
        for color in range(2):
            for y in range(h):
                for x in range((color + y) & 1, w, 2):
                    if not mask[y, x]:
                        continue
                    acc_u = b1[y, x]
                    acc_v = b2[y, x]
                    wsum = 0.0
                    if x > 0:
                        wgt = wr[y, x - 1]
                        wsum += wgt
                        acc_u += wgt * ((u[y, x - 1] - u[y, x]) + du[y, x - 1])
                        acc_v += wgt * ((v[y, x - 1] - v[y, x]) + dv[y, x - 1])
                    if x < w - 1:
                        wgt = wr[y, x]
                        wsum += wgt
                        acc_u += wgt * ((u[y, x + 1] - u[y, x]) + du[y, x + 1])
                        acc_v += wgt * ((v[y, x + 1] - v[y, x]) + dv[y, x + 1])
                    if y > 0:
                        wgt = wd[y - 1, x]
                        wsum += wgt
                        acc_u += wgt * ((u[y - 1, x] - u[y, x]) + du[y - 1, x])
                        acc_v += wgt * ((v[y - 1, x] - v[y, x]) + dv[y - 1, x])
                    if y < h - 1:
                        wgt = wd[y, x]
                        wsum += wgt
                        acc_u += wgt * ((u[y + 1, x] - u[y, x]) + du[y + 1, x])
                        acc_v += wgt * ((v[y + 1, x] - v[y, x]) + dv[y + 1, x])
                    m11 = a11[y, x] + wsum
                    m22 = a22[y, x] + wsum
                    m12 = a12[y, x]
                    det = m11 * m22 - m12 * m12
                    if det <= 0.0:
                        continue
                    nu = (m22 * acc_u - m12 * acc_v) / det
                    nv = (m11 * acc_v - m12 * acc_u) / det
                    du[y, x] = (1.0 - omega) * du[y, x] + omega * nu
                    dv[y, x] = (1.0 - omega) * dv[y, x] + omega * nv


def _smoothness_weights(u: np.ndarray, v: np.ndarray, alpha: float, eps2: float):
    ux, uy = _grad(u)
    vx, vy = _grad(v)
    psi = 1.0 / (2.0 * np.sqrt(ux * ux + uy * uy + vx * vx + vy * vy + eps2))
    wr = alpha * 0.5 * (psi[:, :-1] + psi[:, 1:])
    wd = alpha * 0.5 * (psi[:-1, :] + psi[1:, :])
    return wr, wd


def refine(img1: Image, img2: Image, w_init: FlowField, params: VariationalParams) -> FlowField:
    """Warping iterations at full resolution with frozen out-of-bounds pixels.

    Each outer iteration linearizes both constancy terms at the warped
    second image, runs fixed-point reweighting with SOR, and accepts the
    increment only if the energy does not increase (halving it a few times
    otherwise, then stopping). Masked-out pixels return w_init bit-exactly.
    """
    if (img1.width, img1.height) != (img2.width, img2.height):
        raise InvalidInputError("image pair dimensions differ")
    if (img1.width, img1.height) != (w_init.width, w_init.height):
        raise InvalidInputError("flow and image dimensions differ")
    lab1 = _lab_planes(img1)
    lab2 = _lab_planes(img2)
    nch = lab1.shape[2]
    h, w = w_init.height, w_init.width
    mask = build_mask(w_init)
    eps2 = params.robust_epsilon ** 2

    i1x = np.empty_like(lab1)
    i1y = np.empty_like(lab1)
    i2x = np.empty_like(lab2)
    i2y = np.empty_like(lab2)
    i2xx = np.empty_like(lab2)
    i2xy = np.empty_like(lab2)
    i2yy = np.empty_like(lab2)
    for c in range(nch):
        i1x[:, :, c], i1y[:, :, c] = _grad(lab1[:, :, c])
        i2x[:, :, c], i2y[:, :, c] = _grad(lab2[:, :, c])
        i2xx[:, :, c], _ = _grad(i2x[:, :, c])
        i2xy[:, :, c] = _grad(i2y[:, :, c])[0]
        i2yy[:, :, c] = _grad(i2y[:, :, c])[1]

    u = w_init.u.copy()
    v = w_init.v.copy()
    gxx, gyy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    current_energy = energy(img1, img2, FlowField(u, v, w_init.valid.copy()), params, mask)

    for _ in range(params.outer_iterations):
        tx = gxx + u
        ty = gyy + v
        it_ = np.empty_like(lab1)
        ix = np.empty_like(lab1)
        iy = np.empty_like(lab1)
        ixx = np.empty_like(lab1)
        ixy = np.empty_like(lab1)
        iyy = np.empty_like(lab1)
        ixt = np.empty_like(lab1)
        iyt = np.empty_like(lab1)
        for c in range(nch):
            it_[:, :, c] = _warp(lab2[:, :, c], tx, ty) - lab1[:, :, c]
            ix[:, :, c] = _warp(i2x[:, :, c], tx, ty)
            iy[:, :, c] = _warp(i2y[:, :, c], tx, ty)
            ixx[:, :, c] = _warp(i2xx[:, :, c], tx, ty)
            ixy[:, :, c] = _warp(i2xy[:, :, c], tx, ty)
            iyy[:, :, c] = _warp(i2yy[:, :, c], tx, ty)
            ixt[:, :, c] = ix[:, :, c] - i1x[:, :, c]
            iyt[:, :, c] = iy[:, :, c] - i1y[:, :, c]

        du = np.zeros((h, w))
        dv = np.zeros((h, w))
        g = params.gamma
        for _inner in range(params.inner_fixed_point_iterations):
            bright = ((it_ + ix * du[:, :, None] + iy * dv[:, :, None]) ** 2).mean(axis=2)
            gradx = (ixt + ixx * du[:, :, None] + ixy * dv[:, :, None])
            grady = (iyt + ixy * du[:, :, None] + iyy * dv[:, :, None])
            grad2 = (gradx ** 2 + grady ** 2).mean(axis=2)
            psi_d = 1.0 / (2.0 * np.sqrt(bright + g * grad2 + eps2))
            psi_d = np.where(mask, psi_d, 0.0)

            j11 = (ix * ix).mean(axis=2) + g * (ixx * ixx + ixy * ixy).mean(axis=2)
            j12 = (ix * iy).mean(axis=2) + g * (ixx * ixy + ixy * iyy).mean(axis=2)
            j22 = (iy * iy).mean(axis=2) + g * (ixy * ixy + iyy * iyy).mean(axis=2)
            j1t = (ix * it_).mean(axis=2) + g * (ixx * ixt + ixy * iyt).mean(axis=2)
            j2t = (iy * it_).mean(axis=2) + g * (ixy * ixt + iyy * iyt).mean(axis=2)

            a11 = psi_d * j11
            a12 = psi_d * j12
            a22 = psi_d * j22
            b1 = -psi_d * j1t
            b2 = -psi_d * j2t
            wr, wd = _smoothness_weights(u + du, v + dv, params.alpha, eps2)
            _sor(du, dv, a11, a12, a22, b1, b2, wr, wd, u, v, mask,
                 params.sor_omega, params.sor_iterations)

        # energy safeguard: accept the increment only if it does not raise
        # the objective; halve it a few times otherwise, then stop early
        accepted = False
        step = 1.0
        for _try in range(6):
            cand_u = np.where(mask, u + step * du, u)
            cand_v = np.where(mask, v + step * dv, v)
            cand_energy = energy(img1, img2, FlowField(cand_u, cand_v, w_init.valid.copy()),
                                 params, mask)
            if cand_energy <= current_energy * (1.0 + 1e-12) + 1e-12:
                u, v = cand_u, cand_v
                current_energy = cand_energy
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break

    u = np.where(mask, u, w_init.u)
    v = np.where(mask, v, w_init.v)
    return FlowField(u, v, np.ones((h, w), bool))

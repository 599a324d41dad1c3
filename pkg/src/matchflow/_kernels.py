"""Numba kernels for descriptor extraction and correspondence search.

Sweeps are single-threaded on purpose: scan order is part of the
propagation contract and results must be bit-identical across thread-count
settings (callers may still run independent fields on separate threads;
all kernels release the GIL). Images arrive as float32 planes; arithmetic
runs in float64.

Bilinear sampling everywhere uses one canonical expression
(w00*p00 + w01*p01 + w10*p10 + w11*p11) so that descriptor bits computed
by the fast candidate-evaluation paths match descriptor-API output
bit-for-bit.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_U1 = np.uint64(1)
_U2 = np.uint64(2)
_U4 = np.uint64(4)
_U56 = np.uint64(56)
_U0 = np.uint64(0)


@njit(inline="always")
def _popcount(x):
    x = x - ((x >> _U1) & _M1)
    x = (x & _M2) + ((x >> _U2) & _M2)
    x = (x + (x >> _U4)) & _M4
    return (x * _H01) >> _U56


@njit(inline="always")
def _sample_channel(img, x, y, c):
    """Clamped bilinear sample of channel c; exact at integer coordinates."""
    h = img.shape[0]
    w = img.shape[1]
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    x0 = int(x)
    y0 = int(y)
    if w > 1 and x0 > w - 2:
        x0 = w - 2
    if h > 1 and y0 > h - 2:
        y0 = h - 2
    x1 = x0 + 1 if x0 + 1 <= w - 1 else x0
    y1 = y0 + 1 if y0 + 1 <= h - 1 else y0
    fx = x - x0
    fy = y - y0
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    return (w00 * float(img[y0, x0, c]) + w01 * float(img[y0, x1, c])
            + w10 * float(img[y1, x0, c]) + w11 * float(img[y1, x1, c]))


@njit(inline="always")
def _sample_plane(plane, x, y):
    h = plane.shape[0]
    w = plane.shape[1]
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    x0 = int(x)
    y0 = int(y)
    if w > 1 and x0 > w - 2:
        x0 = w - 2
    if h > 1 and y0 > h - 2:
        y0 = h - 2
    x1 = x0 + 1 if x0 + 1 <= w - 1 else x0
    y1 = y0 + 1 if y0 + 1 <= h - 1 else y0
    fx = x - x0
    fy = y - y0
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    return (w00 * float(plane[y0, x0]) + w01 * float(plane[y0, x1])
            + w10 * float(plane[y1, x0]) + w11 * float(plane[y1, x1]))


# --------------------------------------------------------------------------
# Census transform
# --------------------------------------------------------------------------

@njit(inline="always")
def _census_words(img, x, y, radius, wpc, out):
    """Binary comparison pattern at (x, y), one bit per neighbor per channel.

    Neighbors are enumerated in raster order over the (2r+1)^2 patch with the
    center skipped; bit k of channel c is set iff that neighbor sample is
    strictly greater than the center sample. Words are channel-major.
    """
    h = img.shape[0]
    w = img.shape[1]
    nch = img.shape[2]
    for i in range(nch * wpc):
        out[i] = _U0
    x0 = int(x)
    y0 = int(y)
    fx = x - x0
    fy = y - y0
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    interior = (x0 >= radius and x0 <= w - 2 - radius and y0 >= radius and y0 <= h - 2 - radius)
    for c in range(nch):
        if interior:
            center = (w00 * float(img[y0, x0, c]) + w01 * float(img[y0, x0 + 1, c])
                      + w10 * float(img[y0 + 1, x0, c]) + w11 * float(img[y0 + 1, x0 + 1, c]))
        else:
            center = _sample_channel(img, x, y, c)
        k = 0
        for dy in range(-radius, radius + 1):
            yb = y0 + dy
            for dx in range(-radius, radius + 1):
                if dx == 0 and dy == 0:
                    continue
                if interior:
                    xb = x0 + dx
                    v = (w00 * float(img[yb, xb, c]) + w01 * float(img[yb, xb + 1, c])
                         + w10 * float(img[yb + 1, xb, c]) + w11 * float(img[yb + 1, xb + 1, c]))
                else:
                    v = _sample_channel(img, x + dx, y + dy, c)
                if v > center:
                    out[c * wpc + (k >> 6)] |= _U1 << np.uint64(k & 63)
                k += 1


@njit(cache=True, nogil=True)
def census_grid(img, radius, wpc):
    h = img.shape[0]
    w = img.shape[1]
    nch = img.shape[2]
    out = np.zeros((h, w, nch * wpc), np.uint64)
    for y in range(h):
        for x in range(w):
            _census_words(img, float(x), float(y), radius, wpc, out[y, x])
    return out


@njit(cache=True, nogil=True)
def census_words_at(img, x, y, radius, wpc):
    out = np.zeros(img.shape[2] * wpc, np.uint64)
    _census_words(img, x, y, radius, wpc, out)
    return out


@njit(inline="always")
def _cost_census(lab2, desc2, d1row, x, y, fu, fv, radius, wpc, bound):
    """Hamming cost of candidate flow (fu, fv) at pixel (x, y).

    Returns inf when the target leaves the second frame. May return early
    with a partial (lower-bound) distance once it exceeds bound; callers
    only use such values for rejection.
    """
    tx = x + fu
    ty = y + fv
    h2 = lab2.shape[0]
    w2 = lab2.shape[1]
    nch = lab2.shape[2]
    if tx < 0.0 or tx > w2 - 1.0 or ty < 0.0 or ty > h2 - 1.0:
        return np.inf
    x0 = int(tx)
    y0 = int(ty)
    fx = tx - x0
    fy = ty - y0
    if fx == 0.0 and fy == 0.0:
        d = _U0
        row2 = desc2[y0, x0]
        for i in range(nch * wpc):
            d += _popcount(d1row[i] ^ row2[i])
        return float(d)
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    interior = (x0 >= radius and x0 <= w2 - 2 - radius and y0 >= radius and y0 <= h2 - 2 - radius)
    d = 0.0
    for c in range(nch):
        if interior:
            center = (w00 * float(lab2[y0, x0, c]) + w01 * float(lab2[y0, x0 + 1, c])
                      + w10 * float(lab2[y0 + 1, x0, c]) + w11 * float(lab2[y0 + 1, x0 + 1, c]))
        else:
            center = _sample_channel(lab2, tx, ty, c)
        k = 0
        wi = 0
        word = _U0
        for dy in range(-radius, radius + 1):
            yb = y0 + dy
            for dx in range(-radius, radius + 1):
                if dx == 0 and dy == 0:
                    continue
                if interior:
                    xb = x0 + dx
                    v = (w00 * float(lab2[yb, xb, c]) + w01 * float(lab2[yb, xb + 1, c])
                         + w10 * float(lab2[yb + 1, xb, c]) + w11 * float(lab2[yb + 1, xb + 1, c]))
                else:
                    v = _sample_channel(lab2, tx + dx, ty + dy, c)
                if v > center:
                    word |= _U1 << np.uint64(k & 63)
                k += 1
                if (k & 63) == 0:
                    d += float(_popcount(word ^ d1row[c * wpc + wi]))
                    word = _U0
                    wi += 1
        if (k & 63) != 0:
            d += float(_popcount(word ^ d1row[c * wpc + wi]))
        if d > bound:
            return d
    return d


# --------------------------------------------------------------------------
# Dense SIFT-style descriptor (fixed scale, no orientation alignment)
# --------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def sift_gauss_table(radius):
    """Spatial weights exp(-(dx^2+dy^2) / (2 radius^2)) in patch raster order."""
    n = 2 * radius + 1
    out = np.empty(n * n, np.float64)
    inv2s2 = 1.0 / (2.0 * float(radius) * float(radius))
    i = 0
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            out[i] = math.exp(-(dx * dx + dy * dy) * inv2s2)
            i += 1
    return out


@njit(cache=True, nogil=True)
def gradient_planes(gray):
    """Central-difference gradients with replicate-clamped borders.

    Sampling these planes bilinearly equals taking finite differences of the
    clamped bilinear surface, so descriptor semantics are unchanged while
    each gradient costs one lookup instead of two.
    """
    h, w = gray.shape
    gx = np.empty((h, w), np.float64)
    gy = np.empty((h, w), np.float64)
    for y in range(h):
        ym = y - 1 if y - 1 >= 0 else 0
        yp = y + 1 if y + 1 <= h - 1 else h - 1
        for x in range(w):
            xm = x - 1 if x - 1 >= 0 else 0
            xp = x + 1 if x + 1 <= w - 1 else w - 1
            gx[y, x] = 0.5 * (float(gray[y, xp]) - float(gray[y, xm]))
            gy[y, x] = 0.5 * (float(gray[yp, x]) - float(gray[ym, x]))
    return gx, gy


@njit(inline="always")
def _sift_desc(gxp, gyp, x, y, radius, gauss, acc, out):
    """128-d gradient histogram descriptor at (x, y).

    4x4 spatial cells x 8 orientation bins with trilinear vote splitting,
    Gaussian spatial weighting (sigma = radius), L2 normalization, 0.2
    clamping and renormalization. Zero-gradient patches yield all zeros.
    All patch samples share one fractional offset, so interior patches
    reuse the four bilinear weights.
    """
    for i in range(128):
        acc[i] = 0.0
    cell = (2.0 * radius + 1.0) / 4.0
    two_pi = 2.0 * math.pi
    h = gxp.shape[0]
    w = gxp.shape[1]
    xf = int(math.floor(x))
    yf = int(math.floor(y))
    fxp = x - xf
    fyp = y - yf
    w00 = (1.0 - fxp) * (1.0 - fyp)
    w01 = fxp * (1.0 - fyp)
    w10 = (1.0 - fxp) * fyp
    w11 = fxp * fyp
    interior = (xf >= radius and xf <= w - 2 - radius and yf >= radius and yf <= h - 2 - radius)
    gi = 0
    for dy in range(-radius, radius + 1):
        yb = yf + dy
        for dx in range(-radius, radius + 1):
            gw = gauss[gi]
            gi += 1
            if interior:
                xb = xf + dx
                gx = (w00 * gxp[yb, xb] + w01 * gxp[yb, xb + 1]
                      + w10 * gxp[yb + 1, xb] + w11 * gxp[yb + 1, xb + 1])
                gy = (w00 * gyp[yb, xb] + w01 * gyp[yb, xb + 1]
                      + w10 * gyp[yb + 1, xb] + w11 * gyp[yb + 1, xb + 1])
            else:
                px = x + dx
                py = y + dy
                gx = _sample_plane(gxp, px, py)
                gy = _sample_plane(gyp, px, py)
            mag = math.sqrt(gx * gx + gy * gy)
            if mag == 0.0:
                continue
            wgt = gw * mag
            theta = math.atan2(gy, gx)
            if theta < 0.0:
                theta += two_pi
            ob = theta * (8.0 / two_pi)
            if ob >= 8.0:
                ob = 0.0
            o0 = int(ob)
            fo = ob - o0
            cx = (dx + radius + 0.5) / cell - 0.5
            cy = (dy + radius + 0.5) / cell - 0.5
            x0 = int(math.floor(cx))
            y0 = int(math.floor(cy))
            fx = cx - x0
            fy = cy - y0
            for iy in range(2):
                yc = y0 + iy
                if yc < 0 or yc > 3:
                    continue
                wy = fy if iy == 1 else 1.0 - fy
                for ix in range(2):
                    xc = x0 + ix
                    if xc < 0 or xc > 3:
                        continue
                    wx = fx if ix == 1 else 1.0 - fx
                    for io in range(2):
                        oc = (o0 + io) & 7
                        wo = fo if io == 1 else 1.0 - fo
                        acc[(yc * 4 + xc) * 8 + oc] += wgt * wy * wx * wo
    norm2 = 0.0
    for i in range(128):
        norm2 += acc[i] * acc[i]
    if norm2 <= 1e-24:
        for i in range(128):
            out[i] = 0.0
        return
    inv = 1.0 / math.sqrt(norm2)
    norm2 = 0.0
    for i in range(128):
        v = acc[i] * inv
        if v > 0.2:
            v = 0.2
        acc[i] = v
        norm2 += v * v
    inv = 1.0 / math.sqrt(norm2)
    for i in range(128):
        out[i] = np.float32(acc[i] * inv)


@njit(cache=True, nogil=True)
def sift_grid(gray, radius):
    h = gray.shape[0]
    w = gray.shape[1]
    gxp, gyp = gradient_planes(gray)
    gauss = sift_gauss_table(radius)
    out = np.zeros((h, w, 128), np.float32)
    acc = np.empty(128, np.float64)
    for y in range(h):
        for x in range(w):
            _sift_desc(gxp, gyp, float(x), float(y), radius, gauss, acc, out[y, x])
    return out


@njit(cache=True, nogil=True)
def sift_desc_at(gray, x, y, radius):
    gxp, gyp = gradient_planes(gray)
    gauss = sift_gauss_table(radius)
    out = np.zeros(128, np.float32)
    acc = np.empty(128, np.float64)
    _sift_desc(gxp, gyp, x, y, radius, gauss, acc, out)
    return out


@njit(inline="always")
def _l2_distance(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        d = float(a[i]) - float(b[i])
        s += d * d
    return math.sqrt(s)


@njit(inline="always")
def _l2_bounded(a, b, bound):
    """Euclidean distance with early exit once it provably exceeds bound."""
    limit = bound * bound if bound < 1e150 else np.inf
    s = 0.0
    for i in range(0, 128, 16):
        for j in range(i, i + 16):
            d = float(a[j]) - float(b[j])
            s += d * d
        if s > limit:
            return math.sqrt(s)
    return math.sqrt(s)


@njit(inline="always")
def _cost_sift(gx2, gy2, desc2, d1row, x, y, fu, fv, radius, gauss, acc, scratch, bound):
    tx = x + fu
    ty = y + fv
    h2 = gx2.shape[0]
    w2 = gx2.shape[1]
    if tx < 0.0 or tx > w2 - 1.0 or ty < 0.0 or ty > h2 - 1.0:
        return np.inf
    itx = int(tx)
    ity = int(ty)
    if tx == itx and ty == ity:
        return _l2_bounded(d1row, desc2[ity, itx], bound)
    _sift_desc(gx2, gy2, tx, ty, radius, gauss, acc, scratch)
    return _l2_bounded(d1row, scratch, bound)


# --------------------------------------------------------------------------
# Propagation sweeps and random search
# --------------------------------------------------------------------------
# Sweeps are sequential in scan order so updates from the current sweep are
# visible to later pixels; candidates are adopted only on strictly lower
# cost, so per-pixel cost never increases.

@njit(cache=True, nogil=True)
def sweep_census(u, v, cost, desc1, lab2, desc2, radius, wpc, ydir, xdir):
    h = u.shape[0]
    w = u.shape[1]
    for yi in range(h):
        y = yi if ydir > 0 else h - 1 - yi
        for xi in range(w):
            x = xi if xdir > 0 else w - 1 - xi
            bu = u[y, x]
            bv = v[y, x]
            bc = cost[y, x]
            nx = x - xdir
            if 0 <= nx < w:
                cu = u[y, nx]
                cv = v[y, nx]
                if cu != bu or cv != bv:
                    c = _cost_census(lab2, desc2, desc1[y, x], float(x), float(y), cu, cv, radius, wpc, bc)
                    if c < bc:
                        bu = cu
                        bv = cv
                        bc = c
            ny = y - ydir
            if 0 <= ny < h:
                cu = u[ny, x]
                cv = v[ny, x]
                if cu != bu or cv != bv:
                    c = _cost_census(lab2, desc2, desc1[y, x], float(x), float(y), cu, cv, radius, wpc, bc)
                    if c < bc:
                        bu = cu
                        bv = cv
                        bc = c
            u[y, x] = bu
            v[y, x] = bv
            cost[y, x] = bc


@njit(cache=True, nogil=True)
def random_pass_census(u, v, cost, desc1, lab2, desc2, radius, wpc, du, dv):
    h = u.shape[0]
    w = u.shape[1]
    for y in range(h):
        for x in range(w):
            cu = u[y, x] + du[y, x]
            cv = v[y, x] + dv[y, x]
            c = _cost_census(lab2, desc2, desc1[y, x], float(x), float(y), cu, cv, radius, wpc, cost[y, x])
            if c < cost[y, x]:
                u[y, x] = cu
                v[y, x] = cv
                cost[y, x] = c


@njit(cache=True, nogil=True)
def recompute_census(u, v, cost, desc1, lab2, desc2, radius, wpc):
    h = u.shape[0]
    w = u.shape[1]
    for y in range(h):
        for x in range(w):
            cost[y, x] = _cost_census(lab2, desc2, desc1[y, x], float(x), float(y),
                                      u[y, x], v[y, x], radius, wpc, np.inf)


@njit(cache=True, nogil=True)
def sweep_sift(u, v, cost, desc1, gx2, gy2, desc2, radius, ydir, xdir):
    h = u.shape[0]
    w = u.shape[1]
    gauss = sift_gauss_table(radius)
    acc = np.empty(128, np.float64)
    scratch = np.zeros(128, np.float32)
    for yi in range(h):
        y = yi if ydir > 0 else h - 1 - yi
        for xi in range(w):
            x = xi if xdir > 0 else w - 1 - xi
            bu = u[y, x]
            bv = v[y, x]
            bc = cost[y, x]
            nx = x - xdir
            if 0 <= nx < w:
                cu = u[y, nx]
                cv = v[y, nx]
                if cu != bu or cv != bv:
                    c = _cost_sift(gx2, gy2, desc2, desc1[y, x], float(x), float(y), cu, cv,
                                   radius, gauss, acc, scratch, bc)
                    if c < bc:
                        bu = cu
                        bv = cv
                        bc = c
            ny = y - ydir
            if 0 <= ny < h:
                cu = u[ny, x]
                cv = v[ny, x]
                if cu != bu or cv != bv:
                    c = _cost_sift(gx2, gy2, desc2, desc1[y, x], float(x), float(y), cu, cv,
                                   radius, gauss, acc, scratch, bc)
                    if c < bc:
                        bu = cu
                        bv = cv
                        bc = c
            u[y, x] = bu
            v[y, x] = bv
            cost[y, x] = bc


@njit(cache=True, nogil=True)
def random_pass_sift(u, v, cost, desc1, gx2, gy2, desc2, radius, du, dv):
    h = u.shape[0]
    w = u.shape[1]
    gauss = sift_gauss_table(radius)
    acc = np.empty(128, np.float64)
    scratch = np.zeros(128, np.float32)
    for y in range(h):
        for x in range(w):
            cu = u[y, x] + du[y, x]
            cv = v[y, x] + dv[y, x]
            c = _cost_sift(gx2, gy2, desc2, desc1[y, x], float(x), float(y), cu, cv,
                           radius, gauss, acc, scratch, cost[y, x])
            if c < cost[y, x]:
                u[y, x] = cu
                v[y, x] = cv
                cost[y, x] = c


@njit(cache=True, nogil=True)
def recompute_sift(u, v, cost, desc1, gx2, gy2, desc2, radius):
    h = u.shape[0]
    w = u.shape[1]
    gauss = sift_gauss_table(radius)
    acc = np.empty(128, np.float64)
    scratch = np.zeros(128, np.float32)
    for y in range(h):
        for x in range(w):
            cost[y, x] = _cost_sift(gx2, gy2, desc2, desc1[y, x], float(x), float(y),
                                    u[y, x], v[y, x], radius, gauss, acc, scratch, np.inf)


# --------------------------------------------------------------------------
# Grid connected components (union-find over precomputed edge masks)
# --------------------------------------------------------------------------

@njit(inline="always")
def _find_root(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True, nogil=True)
def grid_components(ok_right, ok_down, active):
    """Label 4-connected components among active pixels.

    ok_right[y, x] joins (y, x)-(y, x+1); ok_down[y, x] joins (y, x)-(y+1, x).
    Inactive pixels get label -1; labels are compact and ordered by the
    raster position of each component's first pixel.
    """
    h = active.shape[0]
    w = active.shape[1]
    n = h * w
    parent = np.arange(n)
    for y in range(h):
        for x in range(w):
            if not active[y, x]:
                continue
            i = y * w + x
            if x + 1 < w and active[y, x + 1] and ok_right[y, x]:
                ra = _find_root(parent, i)
                rb = _find_root(parent, i + 1)
                if ra != rb:
                    if ra < rb:
                        parent[rb] = ra
                    else:
                        parent[ra] = rb
            if y + 1 < h and active[y + 1, x] and ok_down[y, x]:
                ra = _find_root(parent, i)
                rb = _find_root(parent, i + w)
                if ra != rb:
                    if ra < rb:
                        parent[rb] = ra
                    else:
                        parent[ra] = rb
    labels = np.full((h, w), -1, np.int64)
    remap = np.full(n, -1, np.int64)
    count = 0
    for y in range(h):
        for x in range(w):
            if not active[y, x]:
                continue
            r = _find_root(parent, y * w + x)
            if remap[r] < 0:
                remap[r] = count
                count += 1
            labels[y, x] = remap[r]
    return labels, count

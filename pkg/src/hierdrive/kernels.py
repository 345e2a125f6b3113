"""Hot numeric kernels with numba-compiled and pure-numpy variants.

The active backend is chosen at import time: numba when available, unless
the environment variable ``HIERDRIVE_NUMBA`` is set to ``0``.  Both variants
are importable directly (``*_np`` / ``*_nb``) so the benchmark can compare
them; everything else should use the unprefixed selected names.
"""

from __future__ import annotations

import os

import numpy as np

_want_numba = os.environ.get("HIERDRIVE_NUMBA", "1") != "0"

try:
    if not _want_numba:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # no-op decorator
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def polyline_project_np(px, py, pts, cum_s, lo, hi):
    """Project (px, py) onto polyline segments [lo, hi).

    Returns (s, d, dist, idx): arclength of the foot point, signed lateral
    offset (left of travel positive), Euclidean distance and segment index.
    Ties in distance go to the smaller arclength.
    """
    ax = pts[lo:hi, 0]
    ay = pts[lo:hi, 1]
    bx = pts[lo + 1 : hi + 1, 0]
    by = pts[lo + 1 : hi + 1, 1]
    ex = bx - ax
    ey = by - ay
    seg_len = np.hypot(ex, ey)
    ux = ex / seg_len
    uy = ey / seg_len
    t = np.clip((px - ax) * ux + (py - ay) * uy, 0.0, seg_len)
    fx = ax + t * ux
    fy = ay + t * uy
    dist = np.hypot(px - fx, py - fy)
    i = int(np.argmin(dist))  # argmin takes the first minimum: smaller s wins
    d = -(px - fx[i]) * uy[i] + (py - fy[i]) * ux[i]
    s = cum_s[lo + i] + t[i]
    return s, d, dist[i], lo + i


def rect_gap_np(cx1, cy1, h1, len1, wid1, cx2, cy2, h2, len2, wid2):
    """Minimum gap between two oriented rectangles; 0.0 when they overlap."""
    c1 = _rect_corners(cx1, cy1, h1, len1, wid1)
    c2 = _rect_corners(cx2, cy2, h2, len2, wid2)
    if _rects_overlap(c1, c2):
        return 0.0
    best = np.inf
    for i in range(4):
        a0 = c1[i]
        a1 = c1[(i + 1) % 4]
        for j in range(4):
            b0 = c2[j]
            b1 = c2[(j + 1) % 4]
            best = min(best, _seg_seg_dist(a0[0], a0[1], a1[0], a1[1], b0[0], b0[1], b1[0], b1[1]))
    return best


def _rect_corners(cx, cy, heading, length, width):
    ca = np.cos(heading)
    sa = np.sin(heading)
    hl = 0.5 * length
    hw = 0.5 * width
    out = np.empty((4, 2))
    for k, (lx, ly) in enumerate(((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))):
        out[k, 0] = cx + lx * ca - ly * sa
        out[k, 1] = cy + lx * sa + ly * ca
    return out


def _rects_overlap(c1, c2):
    # separating-axis test over the 4 edge normals
    for rect in (c1, c2):
        for i in range(4):
            nx = rect[(i + 1) % 4, 1] - rect[i, 1]
            ny = rect[i, 0] - rect[(i + 1) % 4, 0]
            p1 = c1 @ np.array([nx, ny])
            p2 = c2 @ np.array([nx, ny])
            if p1.max() < p2.min() or p2.max() < p1.min():
                return False
    return True


def _seg_seg_dist(ax, ay, bx, by, cx, cy, dx, dy):
    best = np.inf
    for px, py, qx, qy, rx, ry in (
        (ax, ay, cx, cy, dx, dy),
        (bx, by, cx, cy, dx, dy),
        (cx, cy, ax, ay, bx, by),
        (dx, dy, ax, ay, bx, by),
    ):
        ex = rx - qx
        ey = ry - qy
        L2 = ex * ex + ey * ey
        t = 0.0 if L2 == 0.0 else min(max(((px - qx) * ex + (py - qy) * ey) / L2, 0.0), 1.0)
        fx = qx + t * ex
        fy = qy + t * ey
        best = min(best, np.hypot(px - fx, py - fy))
    return best


def eval_candidates_np(lon_c, lat_c, durations, n_check, a_max, v_floor, v_cap):
    """Feasibility scan over a candidate lattice.

    lon_c, lat_c: (N, 6) polynomial coefficient rows; durations: (N,).
    Samples each candidate on ``n_check`` points of its own [0, T] span and
    rejects any with combined |acceleration| > a_max or longitudinal speed
    outside [v_floor, v_cap].  Returns a boolean feasibility mask.
    """
    n = lon_c.shape[0]
    frac = np.linspace(0.0, 1.0, n_check)
    t = durations[:, None] * frac[None, :]
    sd = _poly_eval_batch(lon_c, t, deriv=1)
    sdd = _poly_eval_batch(lon_c, t, deriv=2)
    ddd = _poly_eval_batch(lat_c, t, deriv=2)
    acc = np.hypot(sdd, ddd)
    ok_a = (acc <= a_max).all(axis=1)
    ok_v = ((sd >= v_floor) & (sd <= v_cap)).all(axis=1)
    return ok_a & ok_v


def _poly_eval_batch(coeffs, t, deriv=0):
    c = coeffs.copy()
    for _ in range(deriv):
        c = c[:, 1:] * np.arange(1, c.shape[1])[None, :]
    out = np.zeros_like(t)
    for k in range(c.shape[1] - 1, -1, -1):
        out = out * t + c[:, k, None]
    return out


# ---------------------------------------------------------------------------
# numba variants (compiled lazily on first call, cached on disk)
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def polyline_project_nb(px, py, pts, cum_s, lo, hi):
        best_d2 = np.inf
        best_i = lo
        best_t = 0.0
        for i in range(lo, hi):
            ax = pts[i, 0]
            ay = pts[i, 1]
            ex = pts[i + 1, 0] - ax
            ey = pts[i + 1, 1] - ay
            L = (ex * ex + ey * ey) ** 0.5
            t = ((px - ax) * ex + (py - ay) * ey) / L
            if t < 0.0:
                t = 0.0
            elif t > L:
                t = L
            fx = ax + t * ex / L
            fy = ay + t * ey / L
            d2 = (px - fx) ** 2 + (py - fy) ** 2
            if d2 < best_d2:  # strict: first (smallest-s) minimum wins ties
                best_d2 = d2
                best_i = i
                best_t = t
        i = best_i
        ax = pts[i, 0]
        ay = pts[i, 1]
        ex = pts[i + 1, 0] - ax
        ey = pts[i + 1, 1] - ay
        L = (ex * ex + ey * ey) ** 0.5
        ux = ex / L
        uy = ey / L
        fx = ax + best_t * ux
        fy = ay + best_t * uy
        d = -(px - fx) * uy + (py - fy) * ux
        return cum_s[i] + best_t, d, best_d2**0.5, i

    @njit(cache=True)
    def rect_gap_nb(cx1, cy1, h1, len1, wid1, cx2, cy2, h2, len2, wid2):
        c1 = np.empty((4, 2))
        c2 = np.empty((4, 2))
        for out, cx, cy, h, ln, wd in ((c1, cx1, cy1, h1, len1, wid1), (c2, cx2, cy2, h2, len2, wid2)):
            ca = np.cos(h)
            sa = np.sin(h)
            hl = 0.5 * ln
            hw = 0.5 * wd
            lxs = (hl, hl, -hl, -hl)
            lys = (hw, -hw, -hw, hw)
            for k in range(4):
                out[k, 0] = cx + lxs[k] * ca - lys[k] * sa
                out[k, 1] = cy + lxs[k] * sa + lys[k] * ca
        overlap = True
        for r in range(2):
            rect = c1 if r == 0 else c2
            for i in range(4):
                nx = rect[(i + 1) % 4, 1] - rect[i, 1]
                ny = rect[i, 0] - rect[(i + 1) % 4, 0]
                lo1 = np.inf
                hi1 = -np.inf
                lo2 = np.inf
                hi2 = -np.inf
                for k in range(4):
                    v1 = c1[k, 0] * nx + c1[k, 1] * ny
                    v2 = c2[k, 0] * nx + c2[k, 1] * ny
                    lo1 = min(lo1, v1)
                    hi1 = max(hi1, v1)
                    lo2 = min(lo2, v2)
                    hi2 = max(hi2, v2)
                if hi1 < lo2 or hi2 < lo1:
                    overlap = False
        if overlap:
            return 0.0
        best = np.inf
        for i in range(4):
            a0x = c1[i, 0]
            a0y = c1[i, 1]
            a1x = c1[(i + 1) % 4, 0]
            a1y = c1[(i + 1) % 4, 1]
            for j in range(4):
                b0x = c2[j, 0]
                b0y = c2[j, 1]
                b1x = c2[(j + 1) % 4, 0]
                b1y = c2[(j + 1) % 4, 1]
                for p in range(4):
                    if p == 0:
                        px, py, qx, qy, rx, ry = a0x, a0y, b0x, b0y, b1x, b1y
                    elif p == 1:
                        px, py, qx, qy, rx, ry = a1x, a1y, b0x, b0y, b1x, b1y
                    elif p == 2:
                        px, py, qx, qy, rx, ry = b0x, b0y, a0x, a0y, a1x, a1y
                    else:
                        px, py, qx, qy, rx, ry = b1x, b1y, a0x, a0y, a1x, a1y
                    ex = rx - qx
                    ey = ry - qy
                    L2 = ex * ex + ey * ey
                    if L2 == 0.0:
                        t = 0.0
                    else:
                        t = ((px - qx) * ex + (py - qy) * ey) / L2
                        if t < 0.0:
                            t = 0.0
                        elif t > 1.0:
                            t = 1.0
                    fx = qx + t * ex
                    fy = qy + t * ey
                    dd = ((px - fx) ** 2 + (py - fy) ** 2) ** 0.5
                    if dd < best:
                        best = dd
        return best

    @njit(cache=True)
    def eval_candidates_nb(lon_c, lat_c, durations, n_check, a_max, v_floor, v_cap):
        n = lon_c.shape[0]
        ok = np.ones(n, dtype=np.bool_)
        for i in range(n):
            T = durations[i]
            for k in range(n_check):
                t = T * k / (n_check - 1)
                sd = 0.0
                sdd = 0.0
                ddd = 0.0
                for j in range(5, 0, -1):
                    sd = sd * t + j * lon_c[i, j]
                for j in range(5, 1, -1):
                    sdd = sdd * t + j * (j - 1) * lon_c[i, j]
                    ddd = ddd * t + j * (j - 1) * lat_c[i, j]
                if (sdd * sdd + ddd * ddd) ** 0.5 > a_max or sd < v_floor or sd > v_cap:
                    ok[i] = False
                    break
        return ok

    polyline_project = polyline_project_nb
    rect_gap = rect_gap_nb
    eval_candidates = eval_candidates_nb
else:
    polyline_project = polyline_project_np
    rect_gap = rect_gap_np
    eval_candidates = eval_candidates_np


def backend_name() -> str:
    return "numba" if HAVE_NUMBA else "numpy"

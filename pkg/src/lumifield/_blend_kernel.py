"""Compiled per-pixel lumigraph blending (numba), semantics-identical to the
numpy path in lumigraph._blend_points. One pass over memory per frame instead
of ~40; falls back transparently when numba is unavailable."""

import numpy as np

try:
    from numba import njit, prange
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - environment without numba
    HAS_NUMBA = False

    def njit(*a, **k):
        def wrap(fn):
            return fn
        return wrap

    prange = range


@njit(parallel=True, cache=True)
def blend_kernel(x, tri_ids, vp, centers, tri_vis, eye, tex, k, bias,
                 debug, only_texture, out):
    """x (P,3) f32; vp (N,4,4) f32; centers (N,3) f32; tri_vis (T,N) u8;
    tex (N,H,W,4) f32; out (P,4) f32 preallocated zeros."""
    p_cnt = x.shape[0]
    n_tex = vp.shape[0]
    h = tex.shape[1]
    w = tex.shape[2]
    kk = min(k, n_tex)
    for p in prange(p_cnt):
        xx = x[p, 0]
        xy = x[p, 1]
        xz = x[p, 2]
        ex = eye[0] - xx
        ey = eye[1] - xy
        ez = eye[2] - xz
        en = np.sqrt(ex * ex + ey * ey + ez * ez)
        if en < 1e-12:
            en = 1e-12
        ex /= en
        ey /= en
        ez /= en
        tri = tri_ids[p]
        if tri < 0:
            tri = 0

        tau = np.empty(kk, dtype=np.float32)
        idx = np.empty(kk, dtype=np.int32)
        us = np.empty(kk, dtype=np.float32)
        vs = np.empty(kk, dtype=np.float32)
        m = 0
        for n in range(n_tex):
            if only_texture >= 0 and n != only_texture:
                continue
            if tri_vis[tri, n] == 0:
                continue
            c0 = vp[n, 0, 0] * xx + vp[n, 0, 1] * xy + vp[n, 0, 2] * xz + vp[n, 0, 3]
            c1 = vp[n, 1, 0] * xx + vp[n, 1, 1] * xy + vp[n, 1, 2] * xz + vp[n, 1, 3]
            c3 = vp[n, 3, 0] * xx + vp[n, 3, 1] * xy + vp[n, 3, 2] * xz + vp[n, 3, 3]
            if c3 <= 1e-9 or abs(c0) > c3 or abs(c1) > c3:
                continue
            inv = 1.0 / c3
            px = (c0 * inv + 1.0) * 0.5 * w - 0.5
            py = (1.0 - c1 * inv) * 0.5 * h - 0.5
            tx = centers[n, 0] - xx
            ty = centers[n, 1] - xy
            tz = centers[n, 2] - xz
            dist = np.sqrt(tx * tx + ty * ty + tz * tz)
            if dist < 1e-12:
                dist = 1e-12
            cosang = (tx * ex + ty * ey + tz * ez) / dist
            if cosang > 1.0:
                cosang = 1.0
            elif cosang < -1.0:
                cosang = -1.0
            t = np.arccos(cosang)
            if m == kk and t >= tau[kk - 1]:
                continue
            j = min(m, kk - 1)
            while j > 0 and tau[j - 1] > t:
                tau[j] = tau[j - 1]
                idx[j] = idx[j - 1]
                us[j] = us[j - 1]
                vs[j] = vs[j - 1]
                j -= 1
            tau[j] = t
            idx[j] = n
            us[j] = px
            vs[j] = py
            if m < kk:
                m += 1

        if m == 0:
            if debug:
                out[p, 0] = 1.0
                out[p, 2] = 1.0
            continue

        cut = tau[m - 1] if m == kk else np.float32(1.1) * tau[m - 1]
        total = np.float32(0.0)
        wts = np.empty(kk, dtype=np.float32)
        n_zero = 0
        for j in range(m):
            if tau[j] <= 0.0:
                n_zero += 1
        if m == 1:
            wts[0] = 1.0
            total = 1.0
        elif n_zero > 0:
            for j in range(m):
                wts[j] = (1.0 / n_zero) if tau[j] <= 0.0 else 0.0
            total = 1.0
        else:
            for j in range(m):
                if j == m - 1 and m == kk:
                    wts[j] = 0.0
                else:
                    wts[j] = (1.0 / tau[j]) * (1.0 - tau[j] / cut)
                total += wts[j]
            if total < 1e-9:
                for j in range(m):
                    wts[j] = 1.0 / m
                total = 1.0

        r = np.float32(0.0)
        g = np.float32(0.0)
        b = np.float32(0.0)
        for j in range(m):
            if wts[j] == 0.0:
                continue
            px = us[j]
            py = vs[j]
            x0f = np.floor(px)
            y0f = np.floor(py)
            x0 = int(x0f)
            y0 = int(y0f)
            if x0 < 0:
                x0 = 0
            elif x0 > w - 1:
                x0 = w - 1
            if y0 < 0:
                y0 = 0
            elif y0 > h - 1:
                y0 = h - 1
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            y1 = y0 + 1 if y0 + 1 < h else h - 1
            fx = px - x0
            fy = py - y0
            if fx < 0.0:
                fx = 0.0
            elif fx > 1.0:
                fx = 1.0
            if fy < 0.0:
                fy = 0.0
            elif fy > 1.0:
                fy = 1.0
            n = idx[j]
            wj = wts[j] / total
            for c in range(3):
                c00 = tex[n, y0, x0, c]
                c01 = tex[n, y0, x1, c]
                c10 = tex[n, y1, x0, c]
                c11 = tex[n, y1, x1, c]
                val = ((c00 * (1 - fx) + c01 * fx) * (1 - fy)
                       + (c10 * (1 - fx) + c11 * fx) * fy)
                if c == 0:
                    r += wj * val
                elif c == 1:
                    g += wj * val
                else:
                    b += wj * val
        out[p, 0] = r
        out[p, 1] = g
        out[p, 2] = b
        out[p, 3] = 1.0

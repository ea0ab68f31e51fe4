"""CPU unstructured-lumigraph rendering of an ExportBundle.

A z-buffered software rasterizer produces per-pixel world positions; each
covered pixel then blends the k nearest textures by viewing angle, after
shadow-map-style occlusion culling against the baked depth maps.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .geometry import Camera, pixel_from_ndc


class NoVisibleTexture(ValueError):
    pass


DEBUG_COLOR = np.array([1.0, 0.0, 1.0], dtype=np.float32)  # magenta


@dataclass
class GBuffer:
    position: np.ndarray  # (H,W,3) world positions (0 where uncovered)
    depth: np.ndarray     # (H,W) distance to the camera center (+inf uncovered)
    coverage: np.ndarray  # (H,W) bool
    tri_id: np.ndarray = None  # (H,W) int32 source triangle (-1 uncovered)


# ---------------------------------------------------------------------------
# Rasterization


def rasterize(mesh, camera: Camera, width: int, height: int,
              cull_backfaces: bool = True) -> GBuffer:
    """Perspective rasterization with a top-left fill rule and z-buffering.

    World positions are interpolated perspective-correct; depth is Euclidean
    distance from the camera center (monotone along each pixel ray).
    """
    if mesh.n_triangles == 0:
        raise ValueError("cannot rasterize an empty mesh")
    v = mesh.vertices
    h = np.concatenate([v, np.ones((len(v), 1))], axis=1)
    clip = h @ (camera.proj @ camera.view).T
    w_clip = clip[:, 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        ndc = clip[:, :3] / w_clip[:, None]
    sx, sy = pixel_from_ndc(ndc[:, 0], ndc[:, 1], width, height)

    tris = mesh.triangles
    orig_ids = np.arange(len(tris), dtype=np.int32)
    front = np.all(w_clip[tris] > 1e-9, axis=1)  # drop near-plane crossers
    tris = tris[front]
    orig_ids = orig_ids[front]
    if not len(tris):
        return GBuffer(position=np.zeros((height, width, 3)),
                       depth=np.full((height, width), np.inf),
                       coverage=np.zeros((height, width), dtype=bool),
                       tri_id=np.full((height, width), -1, dtype=np.int32))

    ax, ay = sx[tris[:, 0]], sy[tris[:, 0]]
    bx, by = sx[tris[:, 1]], sy[tris[:, 1]]
    cx, cy = sx[tris[:, 2]], sy[tris[:, 2]]
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    # The NDC->pixel y flip mirrors orientation: outward (world-CCW) faces
    # toward the camera project with negative screen area.
    if cull_backfaces:
        keep = area < -1e-12
    else:
        keep = np.abs(area) > 1e-12
    tris = tris[keep]
    orig_ids = orig_ids[keep]
    area = area[keep]
    flip = area < 0
    t = tris.copy()
    t[flip] = t[flip][:, [0, 2, 1]]
    tris = t
    ax, ay = sx[tris[:, 0]], sy[tris[:, 0]]
    bx, by = sx[tris[:, 1]], sy[tris[:, 1]]
    cx, cy = sx[tris[:, 2]], sy[tris[:, 2]]
    area = np.abs(area)

    x0 = np.clip(np.ceil(np.minimum.reduce([ax, bx, cx])), 0, width - 1).astype(np.int64)
    x1 = np.clip(np.floor(np.maximum.reduce([ax, bx, cx])), 0, width - 1).astype(np.int64)
    y0 = np.clip(np.ceil(np.minimum.reduce([ay, by, cy])), 0, height - 1).astype(np.int64)
    y1 = np.clip(np.floor(np.maximum.reduce([ay, by, cy])), 0, height - 1).astype(np.int64)
    bw = x1 - x0 + 1
    bh = y1 - y0 + 1
    ok = (bw > 0) & (bh > 0)

    inv_w = 1.0 / w_clip
    pos_over_w = v * inv_w[:, None]
    cam_center = camera.center

    frag_pix, frag_depth, frag_pos, frag_tid = [], [], [], []

    sizes = bw * bh
    order = np.argsort(sizes, kind="stable")
    # bucket triangles by bbox area so each batch rasters a uniform grid
    buckets = {}
    for t_idx in order:
        if not ok[t_idx]:
            continue
        key = (int(np.ceil(bw[t_idx] / 4) * 4), int(np.ceil(bh[t_idx] / 4) * 4))
        buckets.setdefault(key, []).append(t_idx)

    for (gw, gh), idx_list in buckets.items():
        idx = np.asarray(idx_list)
        dx = np.arange(gw)
        dy = np.arange(gh)
        px = x0[idx][:, None] + dx[None, :]                  # (K,gw)
        py = y0[idx][:, None] + dy[None, :]                  # (K,gh)
        in_x = px <= x1[idx][:, None]
        in_y = py <= y1[idx][:, None]
        pxf = px[:, None, :].astype(np.float64)              # (K,1,gw)
        pyf = py[:, :, None].astype(np.float64)              # (K,gh,1)

        def edge(x_a, y_a, x_b, y_b):
            return ((x_b - x_a)[:, None, None] * (pyf - y_a[:, None, None])
                    - (y_b - y_a)[:, None, None] * (pxf - x_a[:, None, None]))

        e0 = edge(bx[idx], by[idx], cx[idx], cy[idx])  # opposite vertex a
        e1 = edge(cx[idx], cy[idx], ax[idx], ay[idx])
        e2 = edge(ax[idx], ay[idx], bx[idx], by[idx])

        def topleft(x_a, y_a, x_b, y_b):
            dy_e = y_b - y_a
            dx_e = x_b - x_a
            return (dy_e > 0) | ((dy_e == 0) & (dx_e < 0))

        tl0 = topleft(bx[idx], by[idx], cx[idx], cy[idx])[:, None, None]
        tl1 = topleft(cx[idx], cy[idx], ax[idx], ay[idx])[:, None, None]
        tl2 = topleft(ax[idx], ay[idx], bx[idx], by[idx])[:, None, None]
        inside = (((e0 > 0) | ((e0 == 0) & tl0))
                  & ((e1 > 0) | ((e1 == 0) & tl1))
                  & ((e2 > 0) | ((e2 == 0) & tl2))
                  & in_y[:, :, None] & in_x[:, None, :])
        if not inside.any():
            continue

        k_i, y_i, x_i = np.nonzero(inside)
        t_i = idx[k_i]
        lam0 = e0[k_i, y_i, x_i] / area[t_i]
        lam1 = e1[k_i, y_i, x_i] / area[t_i]
        lam2 = e2[k_i, y_i, x_i] / area[t_i]
        va, vb, vc = tris[t_i, 0], tris[t_i, 1], tris[t_i, 2]
        inv = lam0 * inv_w[va] + lam1 * inv_w[vb] + lam2 * inv_w[vc]
        pos = (lam0[:, None] * pos_over_w[va] + lam1[:, None] * pos_over_w[vb]
               + lam2[:, None] * pos_over_w[vc]) / inv[:, None]
        pix = py[k_i, y_i] * width + px[k_i, x_i]
        frag_pix.append(pix)
        frag_depth.append(np.linalg.norm(pos - cam_center, axis=1))
        frag_pos.append(pos)
        frag_tid.append(orig_ids[t_i])

    depth_img = np.full(height * width, np.inf)
    pos_img = np.zeros((height * width, 3))
    cover = np.zeros(height * width, dtype=bool)
    tid_img = np.full(height * width, -1, dtype=np.int32)
    if frag_pix:
        pix = np.concatenate(frag_pix)
        dep = np.concatenate(frag_depth)
        pos = np.concatenate(frag_pos)
        tid = np.concatenate(frag_tid)
        order = np.lexsort((dep, pix))
        pix_sorted = pix[order]
        first = np.unique(pix_sorted, return_index=True)[1]
        sel = order[first]
        depth_img[pix[sel]] = dep[sel]
        pos_img[pix[sel]] = pos[sel]
        cover[pix[sel]] = True
        tid_img[pix[sel]] = tid[sel]
    return GBuffer(position=pos_img.reshape(height, width, 3),
                   depth=depth_img.reshape(height, width),
                   coverage=cover.reshape(height, width),
                   tri_id=tid_img.reshape(height, width))


# ---------------------------------------------------------------------------
# Blend weights


def _weights_from_sorted(tau: np.ndarray) -> np.ndarray:
    """Weight math for pre-validated sorted (P,k) angle arrays."""
    k = tau.shape[1]
    t_k = tau[:, -1:]
    zero = tau <= 0.0
    has_zero = zero.any(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_hat = (1.0 / tau) * (1.0 - tau / t_k)
    w_hat[:, -1] = 0.0
    w_hat = np.where(np.isfinite(w_hat), w_hat, 0.0)
    total = w_hat.sum(axis=1, keepdims=True)
    degenerate = (total[:, 0] < 1e-9) & ~has_zero
    out = np.where(total > 0, w_hat / np.where(total == 0, 1.0, total), 0.0)
    if np.any(has_zero):
        z = zero[has_zero]
        out[has_zero] = z / z.sum(axis=1, keepdims=True)
    if np.any(degenerate):
        out[degenerate] = 1.0 / k
    return out


def blend_weights(tau) -> np.ndarray:
    """Normalized lumigraph weights for sorted angles: w_i ~ (1/t_i)(1-t_i/t_k).

    The last weight is exactly zero; equal angles fall back to uniform; a zero
    angle takes the full weight (epipolar consistency limit).
    """
    tau = np.asarray(tau, dtype=np.float64)
    squeeze = tau.ndim == 1
    tau = np.atleast_2d(tau)
    if tau.shape[1] < 2:
        raise ValueError("need at least two candidates")
    if np.any(np.diff(tau, axis=1) < -1e-12) or np.any(tau < 0):
        raise ValueError("angles must be sorted ascending and non-negative")
    out = _weights_from_sorted(tau)
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# Occlusion and view rendering


class BundleSampler:
    """Precomputed arrays for fast per-pixel texture queries."""

    def __init__(self, bundle):
        self.bundle = bundle
        self.n = len(bundle.cameras)
        self.centers = np.array([c.center for c in bundle.cameras])
        self.vp = np.array([c.proj @ c.view for c in bundle.cameras])
        self.width = bundle.cameras[0].width
        self.height = bundle.cameras[0].height
        self.tex = np.stack(bundle.textures).astype(np.float32)   # (N,H,W,4)
        self.dep = np.stack(bundle.depths).astype(np.float32)     # (N,H,W)
        # single-gemm projection: ph (P,4) @ vp32 (4,N*4) -> clip (P,N,4)
        self.vp32 = np.concatenate([m.T for m in self.vp], axis=1).astype(np.float32)
        self.centers32 = self.centers.astype(np.float32)
        # flat copies feed np.take, which beats multi-axis fancy indexing
        self.dep_flat = np.ascontiguousarray(self.dep).reshape(-1)
        self.alpha_flat = np.ascontiguousarray(self.tex[..., 3]).reshape(-1)
        self.rgb_rows = np.ascontiguousarray(self.tex[..., :3]).reshape(-1, 3)
        self._tri_vis = {}

    def tri_visibility(self, bias: float) -> np.ndarray:
        """(T,N) precomputed per-triangle texture visibility.

        Camera-independent, so it moves the whole occlusion test out of the
        frame loop: a triangle counts as seen by a texture when all three of
        its vertices pass the depth/alpha compare.
        """
        key = round(float(bias), 9)
        if key not in self._tri_vis:
            mesh = self.bundle.mesh
            verts = mesh.vertices.astype(np.float32)
            px, py, in_front = self.project(verts)
            dist = np.linalg.norm(
                self.centers[:, None, :] - verts[None, :, :], axis=2)
            n_idx = np.broadcast_to(np.arange(self.n, dtype=np.int32)[:, None],
                                    px.shape)
            vis = in_front & _depth_alpha_visible(self, n_idx, px, py, dist, bias)
            self._tri_vis[key] = np.ascontiguousarray(
                vis[:, mesh.triangles].all(axis=2).T)  # (T,N)
        return self._tri_vis[key]

    def project(self, x):
        """World points (P,3) -> pixel coords and in-front flag per texture."""
        ph = np.concatenate([x, np.ones((len(x), 1))], axis=1)    # (P,4)
        clip = np.einsum("nij,pj->npi", self.vp, ph)              # (N,P,4)
        w = clip[..., 3]
        with np.errstate(divide="ignore", invalid="ignore"):
            ndc = clip[..., :2] / w[..., None]
        px, py = pixel_from_ndc(ndc[..., 0], ndc[..., 1], self.width, self.height)
        return px, py, w > 1e-9


def _bilinear(images, idx, px, py):
    """Sample images[idx] (RGBA) at fractional (px,py), clamped to edges."""
    h, w = images.shape[1:3]
    x0 = np.clip(np.floor(px).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(py).astype(np.int64), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fx = np.clip(px - x0, 0.0, 1.0)[..., None]
    fy = np.clip(py - y0, 0.0, 1.0)[..., None]
    c00 = images[idx, y0, x0]
    c01 = images[idx, y0, x1]
    c10 = images[idx, y1, x0]
    c11 = images[idx, y1, x1]
    return ((c00 * (1 - fx) + c01 * fx) * (1 - fy)
            + (c10 * (1 - fx) + c11 * fx) * fy)


def _bilinear_rgb(sampler, idx, px, py):
    """RGB-only bilinear sampling through flat row gathers (edge clamped)."""
    h, w = sampler.height, sampler.width
    x0 = np.clip(np.floor(px).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(py).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(px - x0.astype(np.float32), 0.0, 1.0).astype(np.float32)[..., None]
    fy = np.clip(py - y0.astype(np.float32), 0.0, 1.0).astype(np.float32)[..., None]
    base = (idx * h).astype(np.int64)
    rows = sampler.rgb_rows
    c00 = rows.take((base + y0) * w + x0, axis=0)
    c01 = rows.take((base + y0) * w + x1, axis=0)
    c10 = rows.take((base + y1) * w + x0, axis=0)
    c11 = rows.take((base + y1) * w + x1, axis=0)
    return ((c00 * (1 - fx) + c01 * fx) * (1 - fy)
            + (c10 * (1 - fx) + c11 * fx) * fy)


def _depth_alpha_visible(sampler: BundleSampler, tex_idx, px, py, dist, bias,
                         check_frame: bool = True):
    """Shadow-map style visibility for aligned flat candidate arrays.

    Bilinear depth where the whole 2x2 footprint is foreground (accurate on
    smooth interiors); at the silhouette fall back to the footprint's largest
    finite depth plus one texel of local slope, which stays tight against
    leaks while not rejecting grazing limb samples. check_frame=False skips
    the frame test when the caller has already applied it.
    """
    w, h = sampler.width, sampler.height
    pxc = np.nan_to_num(px).astype(np.float32, copy=False)
    pyc = np.nan_to_num(py).astype(np.float32, copy=False)
    base = tex_idx.astype(np.int32) * np.int32(h)
    x0f = np.floor(pxc)
    y0f = np.floor(pyc)
    x0 = np.clip(x0f.astype(np.int32), 0, w - 1)
    y0 = np.clip(y0f.astype(np.int32), 0, h - 1)
    xi = np.clip(np.rint(pxc).astype(np.int32), 0, w - 1)
    yi = np.clip(np.rint(pyc).astype(np.int32), 0, h - 1)
    alpha = sampler.alpha_flat.take((base + yi) * np.int32(w) + xi) > 0.0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    row0 = (base + y0) * np.int32(w)
    row1 = (base + y1) * np.int32(w)
    dep = sampler.dep_flat
    d00 = dep.take(row0 + x0)
    d01 = dep.take(row0 + x1)
    d10 = dep.take(row1 + x0)
    d11 = dep.take(row1 + x1)
    big = np.float32(1e30)  # background depth is +inf; compare finiteness fast
    interior = (d00 < big) & (d01 < big) & (d10 < big) & (d11 < big)
    fx = np.clip(pxc - x0f.astype(np.float32), 0.0, 1.0)
    fy = np.clip(pyc - y0f.astype(np.float32), 0.0, 1.0)
    with np.errstate(invalid="ignore"):
        bil = ((d00 * (1 - fx) + d01 * fx) * (1 - fy)
               + (d10 * (1 - fx) + d11 * fx) * fy)
    fin_max = np.maximum(np.maximum(np.where(d00 < big, d00, -big),
                                    np.where(d01 < big, d01, -big)),
                         np.maximum(np.where(d10 < big, d10, -big),
                                    np.where(d11 < big, d11, -big)))
    fin_min = np.minimum(np.minimum(np.where(d00 < big, d00, big),
                                    np.where(d01 < big, d01, big)),
                         np.minimum(np.where(d10 < big, d10, big),
                                    np.where(d11 < big, d11, big)))
    limb = fin_max + np.where(fin_min < big, fin_max - fin_min, 0.0)
    stored = np.where(interior, bil, limb)
    vis = alpha & (stored >= dist - bias)
    if check_frame:
        vis &= ((px >= -0.5) & (px <= w - 0.5)
                & (py >= -0.5) & (py <= h - 0.5))
    return vis


def visibility_and_angles(sampler: BundleSampler, x: np.ndarray,
                          eye: np.ndarray, bias: float = 1e-3):
    """For world points x: per-texture visibility, viewing angle and pixel coords.

    A texture sees a point when the projection lands inside its frame with
    alpha > 0 and the stored depth is not in front of the point (shadow-map
    comparison with the given bias).
    """
    px, py, in_front = sampler.project(x)
    n_idx = np.broadcast_to(np.arange(sampler.n)[:, None], px.shape)
    to_tex = sampler.centers[:, None, :] - x[None, :, :]      # (N,P,3)
    dist = np.linalg.norm(to_tex, axis=2)
    visible = in_front & _depth_alpha_visible(sampler, n_idx, px, py, dist, bias)

    to_eye = eye[None, :] - x                                  # (P,3)
    to_eye = to_eye / np.maximum(np.linalg.norm(to_eye, axis=1, keepdims=True), 1e-12)
    dir_tex = to_tex / np.maximum(dist[..., None], 1e-12)
    cosang = np.clip(np.einsum("npk,pk->np", dir_tex, to_eye), -1.0, 1.0)
    tau = np.arccos(cosang)                                    # (N,P)
    return visible, tau, px, py


def occlusion_test(x, texture_index: int, bundle, bias: float = 1e-3) -> bool:
    """Single-point visibility of x from one texture camera."""
    sampler = bundle if isinstance(bundle, BundleSampler) else BundleSampler(bundle)
    eye = sampler.centers[texture_index]  # angle unused here
    visible, _, _, _ = visibility_and_angles(sampler, np.atleast_2d(x), eye, bias)
    return bool(visible[texture_index, 0])


def render_view(bundle, camera: Camera, width: int = None, height: int = None,
                k: int = 5, bias: float = 1e-3, debug: bool = False,
                only_texture: int = None, sampler: BundleSampler = None,
                gbuffer: GBuffer = None):
    """Blend the k angularly nearest visible textures per covered pixel.

    Returns an (H,W,4) float image; pixels with no visible texture get alpha 0
    (magenta in debug mode). only_texture restricts the candidate set, which
    gives the nearest-single-texture reprojection baseline.
    """
    width = camera.width if width is None else width
    height = camera.height if height is None else height
    if sampler is None:
        sampler = BundleSampler(bundle)
    if gbuffer is None:
        gbuffer = rasterize(bundle.mesh if not isinstance(bundle, BundleSampler)
                            else bundle.bundle.mesh, camera, width, height)
    out = np.zeros((height, width, 4), dtype=np.float32)
    cov = gbuffer.coverage.reshape(-1)
    if not cov.any():
        return out
    x = gbuffer.position.reshape(-1, 3)[cov].astype(np.float32)
    tri_ids = gbuffer.tri_id.reshape(-1)[cov]
    workers = _render_workers()
    if workers > 1 and x.shape[0] >= 20_000:
        # pixels are independent and numpy releases the GIL: band per worker
        from concurrent.futures import ThreadPoolExecutor
        bands = np.array_split(np.arange(x.shape[0]), workers)
        sampler.tri_visibility(bias)  # build once outside the pool
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda b: _blend_points(sampler, x[b], tri_ids[b],
                                        camera.center, k, bias, debug,
                                        only_texture), bands))
        rgba = np.concatenate(parts, axis=0)
    else:
        rgba = _blend_points(sampler, x, tri_ids, camera.center, k, bias, debug,
                             only_texture)
    out.reshape(-1, 4)[cov] = rgba
    return out


def _render_workers() -> int:
    env = os.environ.get("LUMIFIELD_RENDER_THREADS", "")
    if env:
        return max(1, int(env))
    return max(1, min(4, os.cpu_count() or 1))


def _blend_points(sampler, x, tri_ids, eye, k, bias, debug, only_texture):
    """Top-k selection + weights + bilinear fetch for covered points (P,3).

    Occlusion uses the precomputed per-triangle visibility table, so the
    frame loop is pure linear algebra plus the final texture gathers.
    """
    p_cnt = x.shape[0]
    n_tex = sampler.n
    kk = min(k, n_tex)
    ph = np.concatenate([x, np.ones((p_cnt, 1), dtype=np.float32)], axis=1)
    clip = ph @ sampler.vp32  # (P, N*4) via the stacked matrix, reshaped below
    clip = clip.reshape(p_cnt, n_tex, 4)
    w_clip = clip[..., 3]
    # frame test in clip space avoids the perspective divide for losers
    in_frame = ((np.abs(clip[..., 0]) <= w_clip)
                & (np.abs(clip[..., 1]) <= w_clip) & (w_clip > 1e-9))

    # distances and angles via gemms against the texture centers
    centers = sampler.centers32
    xc = x @ centers.T                                        # (P,N)
    dist = np.sqrt(np.maximum(
        (centers * centers).sum(axis=1)[None, :] - 2.0 * xc
        + (x * x).sum(axis=1)[:, None], 1e-12))
    to_eye = eye.astype(np.float32)[None, :] - x
    to_eye /= np.maximum(np.linalg.norm(to_eye, axis=1, keepdims=True), 1e-12)
    cosang = ((to_eye @ centers.T)
              - (x * to_eye).sum(axis=1)[:, None]) / dist
    visible = in_frame & sampler.tri_visibility(bias).take(
        np.maximum(tri_ids, 0), axis=0)
    if only_texture is not None:
        lock = np.zeros_like(visible)
        lock[:, only_texture] = visible[:, only_texture]
        visible = lock
    key = np.where(visible, cosang, -np.inf)

    rows = np.arange(p_cnt)[:, None]
    if n_tex > kk:
        part = np.argpartition(-key, kk - 1, axis=1)[:, :kk]
        pk = key[rows, part]
        order = np.argsort(-pk, axis=1, kind="stable")
        sel = part[rows, order]
        cos_sel = pk[rows, order]
    else:
        sel = np.argsort(-key, axis=1, kind="stable")[:, :kk]
        cos_sel = key[rows, sel]
    n_vis = (cos_sel > -np.inf).sum(axis=1)

    tau_sel = np.arccos(np.clip(cos_sel, -1.0, 1.0))
    tau_sel[cos_sel == -np.inf] = np.inf

    none = n_vis == 0
    covered = ~none
    # perspective divide only for the selected candidates
    csel = clip[rows, sel]                                    # (P,kk,4)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_w = np.where(csel[..., 3] > 1e-9, 1.0 / csel[..., 3], 0.0)
    px_sel = (csel[..., 0] * inv_w + 1.0) * np.float32(0.5 * sampler.width) \
        - np.float32(0.5)
    py_sel = (1.0 - csel[..., 1] * inv_w) * np.float32(0.5 * sampler.height) \
        - np.float32(0.5)

    rgba = np.zeros((p_cnt, 4), dtype=np.float32)
    if np.any(covered):
        t_m = tau_sel[covered]
        m_cnt = np.maximum(n_vis[covered], 1)
        # fewer than k candidates: pad with a cutoff 10% beyond the largest
        # real angle; padded entries then get exactly zero weight
        last = t_m[np.arange(t_m.shape[0]), m_cnt - 1]
        cut = np.where(m_cnt == kk, last, np.float32(1.1) * last)
        t_filled = np.where(np.isfinite(t_m), t_m, cut[:, None])
        w = _weights_from_sorted(t_filled)
        one = m_cnt == 1  # single visible texture reprojects directly
        if np.any(one):
            w[one] = 0.0
            w[one, 0] = 1.0
        texel = _bilinear_rgb(sampler, sel[covered], px_sel[covered],
                              py_sel[covered])
        rgba[covered, :3] = np.einsum("pk,pkc->pc", w.astype(np.float32), texel)
        rgba[covered, 3] = 1.0
    if np.any(none) and debug:
        rgba[none, :3] = DEBUG_COLOR
    return rgba

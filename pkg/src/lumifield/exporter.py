"""Mesh extraction and texture baking: turn trained fields into a bundle the
real-time renderer (and the browser viewer) can consume.

Bundle directory layout:
    mesh.obj  cameras.json  meta.json  tex/tex_###.png  depth/dep_###.pfm
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio
from ._mc_tables import CORNERS, EDGE_CORNERS, TRI_TABLE
from .geometry import Camera, look_at
from .render import render_neural
from .tracer import TraceConfig


class EmptyMesh(ValueError):
    pass


class DegenerateLayout(ValueError):
    pass


DEFAULT_ISO = 0.005  # 0.5% of the unit object radius, offset outward


# ---------------------------------------------------------------------------
# Mesh


@dataclass
class Mesh:
    vertices: np.ndarray   # (V,3) float64
    triangles: np.ndarray  # (T,3) int64
    normals: np.ndarray    # (V,3) float64, unit

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle indices out of range")
        if len(self.normals) != len(self.vertices):
            raise ValueError("need one normal per vertex")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edge_counts(self):
        """Histogram of triangle-edge usage: {times_shared: n_edges}."""
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]],
                            self.triangles[:, [2, 0]]])
        e.sort(axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        vals, freq = np.unique(counts, return_counts=True)
        return dict(zip(vals.tolist(), freq.tolist()))

    def is_watertight(self) -> bool:
        return set(self.edge_counts()) == {2}

    def euler_characteristic(self) -> int:
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]],
                            self.triangles[:, [2, 0]]])
        e.sort(axis=1)
        n_edges = len(np.unique(e, axis=0))
        return self.n_vertices - n_edges + self.n_triangles

    def triangle_areas(self) -> np.ndarray:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _field_fn(f):
    return f.f if hasattr(f, "f") else f


def _field_gradient(f, pts, h):
    if hasattr(f, "gradient"):
        return np.asarray(f.gradient(pts))
    fn = _field_fn(f)
    g = np.zeros_like(pts)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        g[:, j] = (fn(pts + e) - fn(pts - e)) / (2 * h)
    return g


def marching_cubes(f, resolution: int = 512, iso: float = DEFAULT_ISO,
                   domain: float = 1.0, chunk_rows: int = 4_000_000) -> Mesh:
    """Extract the level set f = iso over [-domain, domain]^3.

    Streams the grid one z-slab at a time, shares vertices through global edge
    keys (which is what makes closed surfaces watertight), and orients
    triangles so the winding normal points along the field gradient.
    """
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    fn = _field_fn(f)
    r = resolution
    coords = np.linspace(-domain, domain, r + 1)
    stride = r + 1

    def plane_values(iz):
        gy, gx = np.meshgrid(coords, coords, indexing="ij")  # (Y,X)
        pts = np.stack([gx.ravel(), gy.ravel(),
                        np.full(gx.size, coords[iz])], axis=1)
        out = np.empty(gx.size, dtype=np.float64)
        for lo in range(0, pts.shape[0], chunk_rows):
            hi = min(lo + chunk_rows, pts.shape[0])
            out[lo:hi] = np.asarray(fn(pts[lo:hi])).reshape(-1)
        vals = out.reshape(r + 1, r + 1)  # [iy, ix]
        # keep corner samples strictly off the iso level
        exact = vals == iso
        if np.any(exact):
            vals[exact] += 1e-12 * max(1.0, abs(iso))
        return vals

    def edge_key(axis, ix, iy, iz):
        return ((axis * stride + iz) * stride + iy) * stride + ix

    tri_edge_keys = []
    below = plane_values(0)
    for iz in range(r):
        above = plane_values(iz + 1)
        corner_vals = [below[:-1, :-1], below[:-1, 1:], below[1:, 1:], below[1:, :-1],
                       above[:-1, :-1], above[:-1, 1:], above[1:, 1:], above[1:, :-1]]
        case = np.zeros((r, r), dtype=np.uint16)
        for bit, cv in enumerate(corner_vals):
            case |= (cv < iso).astype(np.uint16) << bit
        iy_arr, ix_arr = np.nonzero((case != 0) & (case != 255))
        if iy_arr.size:
            rows = TRI_TABLE[case[iy_arr, ix_arr]]  # (M,16)
            tri = rows.reshape(-1, 16)
            n_cubes = iy_arr.size
            # expand to per-triangle records
            for k in range(0, 15, 3):
                e3 = tri[:, k:k + 3]
                keep = e3[:, 0] >= 0
                if not np.any(keep):
                    break
                cube_ix = ix_arr[keep]
                cube_iy = iy_arr[keep]
                edges = e3[keep].astype(np.int64)  # (K,3) edge ids 0..11
                ca = EDGE_CORNERS[edges, 0]        # (K,3) corner index
                cb = EDGE_CORNERS[edges, 1]
                ox = CORNERS[ca, 0] + cube_ix[:, None]
                oy = CORNERS[ca, 1] + cube_iy[:, None]
                oz = CORNERS[ca, 2] + iz
                bx = CORNERS[cb, 0] + cube_ix[:, None]
                by = CORNERS[cb, 1] + cube_iy[:, None]
                bz = CORNERS[cb, 2] + iz
                # the lattice edge is keyed by its min corner and run axis
                axis = np.where(ox != bx, 0, np.where(oy != by, 1, 2))
                keys = edge_key(axis, np.minimum(ox, bx), np.minimum(oy, by),
                                np.minimum(oz, bz))
                tri_edge_keys.append(keys)
        below = above
    if not tri_edge_keys:
        raise EmptyMesh(f"no crossings of level {iso} inside the grid")

    tris_keyed = np.concatenate(tri_edge_keys, axis=0)  # (T,3) global edge keys
    uniq, inverse = np.unique(tris_keyed.ravel(), return_inverse=True)
    triangles = inverse.reshape(-1, 3)

    # decode unique edge keys back to endpoints and interpolate the crossing
    axis = uniq // (stride ** 3)
    rem = uniq % (stride ** 3)
    iz_e = rem // (stride * stride)
    iy_e = (rem // stride) % stride
    ix_e = rem % stride
    p0 = np.stack([coords[ix_e], coords[iy_e], coords[iz_e]], axis=1)
    step = np.zeros_like(p0)
    h = coords[1] - coords[0]
    step[np.arange(len(uniq)), axis] = h
    p1 = p0 + step
    f0 = np.asarray(fn(p0)).reshape(-1)
    f1 = np.asarray(fn(p1)).reshape(-1)
    t = (iso - f0) / (f1 - f0)
    t = np.clip(t, 0.0, 1.0)
    vertices = p0 + t[:, None] * step

    # drop degenerate triangles (distinct edges can interpolate to one point)
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    triangles = triangles[areas > 1e-12]
    if not len(triangles):
        raise EmptyMesh("all extracted triangles are degenerate")

    grads = _field_gradient(f, vertices, h * 0.25)
    normals = grads / np.maximum(np.linalg.norm(grads, axis=1, keepdims=True), 1e-12)

    # orient windings with the outward field gradient
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    geo = np.cross(b - a, c - a)
    vote = np.einsum("ij,ij->i", geo, (normals[triangles[:, 0]]
                                       + normals[triangles[:, 1]]
                                       + normals[triangles[:, 2]]))
    if np.median(np.sign(vote)) < 0:
        triangles = triangles[:, [0, 2, 1]]

    return Mesh(vertices=vertices, triangles=triangles, normals=normals)


# ---------------------------------------------------------------------------
# Texture camera generation


def _common_target(cams) -> np.ndarray:
    """Least-squares intersection point of the cameras' optical axes."""
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for cam in cams:
        d = cam.forward
        P = np.eye(3) - np.outer(d, d)
        A += P
        b += P @ cam.center
    if np.linalg.cond(A) > 1e8:
        raise DegenerateLayout("camera axes do not determine a common target")
    return np.linalg.solve(A, b)


def _cluster(values, tol):
    """Sort scalars into lattice levels; returns (levels, index-per-value)."""
    order = np.argsort(values)
    levels = [values[order[0]]]
    idx = np.empty(len(values), dtype=int)
    idx[order[0]] = 0
    for k in order[1:]:
        if values[k] - levels[-1] > tol:
            levels.append(values[k])
        idx[k] = len(levels) - 1
    return np.array(levels), idx


def generate_texture_cameras(base, level: int = 1) -> list:
    """Subdivide a lattice of texture cameras on the capture surface.

    level 1 returns the base cameras; each further level inserts midpoints
    along both lattice axes (a w x h grid becomes (2w-1) x (2h-1)), with new
    poses positioned on the same distance sphere and re-aimed at the shared
    look-at target.
    """
    if level not in (1, 2, 3):
        raise ValueError("level must be 1, 2 or 3")
    if len(base) < 2:
        raise DegenerateLayout("need at least two base cameras")
    target = _common_target(base)
    centers = np.array([cam.center for cam in base]) - target
    radii = np.linalg.norm(centers, axis=1)
    if np.linalg.matrix_rank(centers - centers.mean(0), tol=1e-9) < 2:
        raise DegenerateLayout("base camera positions are collinear")
    if level == 1:
        return list(base)

    el = np.arcsin(np.clip(centers[:, 2] / radii, -1, 1))
    az = np.arctan2(centers[:, 1], centers[:, 0])
    az = np.unwrap(np.sort(az))[np.argsort(np.argsort(az))]  # keep continuity
    az_levels, az_idx = _cluster(az, tol=1e-6 + 0.05 * np.ptp(az) / max(len(base), 1))
    el_levels, el_idx = _cluster(el, tol=1e-6 + 0.05 * max(np.ptp(el), 1e-9))
    nw, nh = len(az_levels), len(el_levels)
    if nw * nh != len(base):
        raise DegenerateLayout(
            f"cameras do not form a lattice ({nw} x {nh} != {len(base)})")
    occupied = set(zip(az_idx.tolist(), el_idx.tolist()))
    if len(occupied) != len(base):
        raise DegenerateLayout("duplicate lattice positions")

    r_grid = np.zeros((nh, nw))
    for k in range(len(base)):
        r_grid[el_idx[k], az_idx[k]] = radii[k]

    def refine(levels):
        mids = 0.5 * (levels[:-1] + levels[1:])
        out = np.empty(len(levels) + len(mids))
        out[0::2] = levels
        out[1::2] = mids
        return out

    def refine_grid(g):
        gy = np.empty((2 * g.shape[0] - 1, g.shape[1]))
        gy[0::2] = g
        gy[1::2] = 0.5 * (g[:-1] + g[1:])
        gx = np.empty((gy.shape[0], 2 * gy.shape[1] - 1))
        gx[:, 0::2] = gy
        gx[:, 1::2] = 0.5 * (gy[:, :-1] + gy[:, 1:])
        return gx

    for _ in range(level - 1):
        az_levels = refine(az_levels)
        el_levels = refine(el_levels)
        r_grid = refine_grid(r_grid)

    proto = base[0]
    out = []
    for i, e in enumerate(el_levels):
        for j, a in enumerate(az_levels):
            rr = r_grid[i, j]
            pos = target + rr * np.array([np.cos(e) * np.cos(a),
                                          np.cos(e) * np.sin(a), np.sin(e)])
            out.append(Camera(view=look_at(pos, target), proj=proto.proj,
                              width=proto.width, height=proto.height))
    return out


# ---------------------------------------------------------------------------
# Texture baking


def _dilate_colors(rgb, alpha, passes: int = 4):
    """Flood foreground colors a few pixels outward so bilinear taps near the
    silhouette do not pull in background black."""
    rgb = rgb.copy()
    known = alpha.copy()
    for _ in range(passes):
        if known.all():
            break
        acc = np.zeros_like(rgb)
        cnt = np.zeros(known.shape, dtype=np.int32)
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            src_known = np.zeros_like(known)
            src_rgb = np.zeros_like(rgb)
            ys = slice(max(dy, 0), known.shape[0] + min(dy, 0))
            yd = slice(max(-dy, 0), known.shape[0] + min(-dy, 0))
            xs = slice(max(dx, 0), known.shape[1] + min(dx, 0))
            xd = slice(max(-dx, 0), known.shape[1] + min(-dx, 0))
            src_known[yd, xd] = known[ys, xs]
            src_rgb[yd, xd] = rgb[ys, xs]
            take = src_known & ~known
            acc[take] += src_rgb[take]
            cnt[take] += 1
        newly = (cnt > 0) & ~known
        rgb[newly] = acc[newly] / cnt[newly][:, None]
        known |= newly
    return rgb


def bake_textures(sdf, radiance, cameras, cfg: TraceConfig = TraceConfig(),
                  dilate: int = 4):
    """Neural-render every texture camera; returns (textures, depths).

    Each texture is (H,W,4) float RGBA with alpha = hit mask; each depth map
    stores Euclidean distance to the camera viewpoint (+inf on background).
    """
    textures, depths = [], []
    for cam in cameras:
        rgb, alpha, depth = render_neural(sdf, radiance, cam, cfg)
        rgb = _dilate_colors(rgb, alpha, passes=dilate)
        tex = np.concatenate([rgb, alpha[..., None].astype(np.float32)], axis=2)
        textures.append(tex)
        depths.append(depth)
    return textures, depths


# ---------------------------------------------------------------------------
# Bundle I/O


@dataclass
class ExportBundle:
    mesh: Mesh
    textures: list          # (H,W,4) float arrays
    depths: list            # (H,W) float arrays
    cameras: list           # Camera records
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.textures)
        if not (n == len(self.depths) == len(self.cameras)):
            raise ValueError("textures, depths and cameras must align")
        for i, (t, d) in enumerate(zip(self.textures, self.depths)):
            if t.shape[:2] != d.shape:
                raise ValueError(f"texture/depth {i} shape mismatch")
            if not np.all(np.isfinite(d[t[..., 3] > 0])):
                raise ValueError(f"depth {i} not finite inside the alpha mask")


def write_obj(path, mesh: Mesh) -> None:
    with open(path, "w") as fh:
        fh.write("# lumifield mesh\n")
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for n in mesh.normals:
            fh.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for t in mesh.triangles + 1:
            fh.write(f"f {t[0]}//{t[0]} {t[1]}//{t[1]} {t[2]}//{t[2]}\n")


def read_obj(path) -> Mesh:
    verts, norms, tris = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                norms.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                tris.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not verts:
        raise EmptyMesh(f"{path} contains no vertices")
    return Mesh(vertices=np.array(verts), triangles=np.array(tris),
                normals=np.array(norms) if norms else np.zeros((len(verts), 3)))


def write_bundle(out_dir, bundle: ExportBundle) -> Path:
    out = Path(out_dir)
    (out / "tex").mkdir(parents=True, exist_ok=True)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    write_obj(out / "mesh.obj", bundle.mesh)
    cams = [cam.to_dict() for cam in bundle.cameras]
    (out / "cameras.json").write_text(json.dumps(cams, indent=1))
    for i, (tex, dep) in enumerate(zip(bundle.textures, bundle.depths)):
        imgio.write_png_color(out / "tex" / f"tex_{i:03d}.png",
                              tex[..., :3], alpha=tex[..., 3])
        dep_out = np.where(np.isfinite(dep), dep, np.float32(np.inf))
        imgio.write_pfm(out / "depth" / f"dep_{i:03d}.pfm", dep_out.astype(np.float32))
    (out / "meta.json").write_text(json.dumps(bundle.meta, indent=1))
    return out


def load_bundle(path) -> ExportBundle:
    p = Path(path)
    mesh = read_obj(p / "mesh.obj")
    cams = [Camera.from_dict(d) for d in json.loads((p / "cameras.json").read_text())]
    textures, depths = [], []
    for i in range(len(cams)):
        rgb, alpha = imgio.read_png_color(p / "tex" / f"tex_{i:03d}.png")
        if alpha is None:
            alpha = np.ones(rgb.shape[:2], dtype=np.float32)
        textures.append(np.concatenate([rgb, alpha[..., None]], axis=2))
        depths.append(imgio.read_pfm(p / "depth" / f"dep_{i:03d}.pfm"))
    meta = json.loads((p / "meta.json").read_text()) if (p / "meta.json").exists() else {}
    return ExportBundle(mesh=mesh, textures=textures, depths=depths,
                        cameras=cams, meta=meta)


def checkpoint_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def export_bundle(sdf, radiance, cameras, out_dir, resolution: int = 256,
                  iso: float = DEFAULT_ISO, cfg: TraceConfig = TraceConfig(),
                  checkpoint=None) -> ExportBundle:
    """Full export: marching cubes + baked textures + metadata, written to disk."""
    mesh = marching_cubes(sdf, resolution=resolution, iso=iso,
                          domain=cfg.domain_radius)
    textures, depths = bake_textures(sdf, radiance, cameras, cfg)
    meta = {
        "iso": iso,
        "resolution": resolution,
        "n_textures": len(cameras),
        "checkpoint_hash": checkpoint_hash(checkpoint) if checkpoint else "",
    }
    bundle = ExportBundle(mesh=mesh, textures=textures, depths=depths,
                          cameras=list(cameras), meta=meta)
    write_bundle(out_dir, bundle)
    return bundle

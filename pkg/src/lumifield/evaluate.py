"""Quantitative evaluation: masked PSNR and one-directional Chamfer distance."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree


class EmptyMask(ValueError):
    pass


class EmptyMesh(ValueError):
    pass


def masked_psnr(pred, gt, mask) -> float:
    """10 log10(1/MSE) over mask pixels; inputs in [0,1]. +inf when identical."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or mask.shape != pred.shape[:2]:
        raise ValueError("pred/gt/mask dimensions do not match")
    if not np.any(mask):
        raise EmptyMask("mask selects no pixels")
    mse = float(np.mean((pred[mask] - gt[mask]) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _point_triangle_distances(points, tri_a, tri_b, tri_c):
    """Exact distances from each point to each triangle; (P,T) array."""
    # Ericson's closest-point-on-triangle, vectorized over the point/tri grid.
    p = points[:, None, :]
    a, b, c = tri_a[None], tri_b[None], tri_c[None]
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ptk,ptk->pt", np.broadcast_arrays(ab, ap)[0], ap)
    d2 = np.einsum("ptk,ptk->pt", np.broadcast_arrays(ac, ap)[0], ap)
    bp = p - b
    d3 = np.einsum("ptk,ptk->pt", np.broadcast_arrays(ab, bp)[0], bp)
    d4 = np.einsum("ptk,ptk->pt", np.broadcast_arrays(ac, bp)[0], bp)
    cp = p - c
    d5 = np.einsum("ptk,ptk->pt", np.broadcast_arrays(ab, cp)[0], cp)
    d6 = np.einsum("ptk,ptk->pt", np.broadcast_arrays(ac, cp)[0], cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    v = np.where(np.abs(denom) > 1e-30, vb / np.where(denom == 0, 1, denom), 0.0)
    w = np.where(np.abs(denom) > 1e-30, vc / np.where(denom == 0, 1, denom), 0.0)

    closest = a + v[..., None] * ab + w[..., None] * ac  # interior candidate

    # vertex regions
    reg_a = (d1 <= 0) & (d2 <= 0)
    reg_b = (d3 >= 0) & (d4 <= d3)
    reg_c = (d6 >= 0) & (d5 <= d6)
    # edge regions
    v_ab = np.clip(np.where(d1 - d3 != 0, d1 / np.where(d1 - d3 == 0, 1, d1 - d3), 0), 0, 1)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    w_ac = np.clip(np.where(d2 - d6 != 0, d2 / np.where(d2 - d6 == 0, 1, d2 - d6), 0), 0, 1)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t_bc = np.clip(np.where((d4 - d3) + (d5 - d6) != 0,
                            (d4 - d3) / np.where((d4 - d3) + (d5 - d6) == 0, 1,
                                                 (d4 - d3) + (d5 - d6)), 0), 0, 1)
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)

    closest = np.where(on_bc[..., None], b + t_bc[..., None] * (c - b), closest)
    closest = np.where(on_ac[..., None], a + w_ac[..., None] * ac, closest)
    closest = np.where(on_ab[..., None], a + v_ab[..., None] * ab, closest)
    closest = np.where(reg_c[..., None], c, closest)
    closest = np.where(reg_b[..., None], b, closest)
    closest = np.where(reg_a[..., None], a, closest)
    return np.linalg.norm(p - closest, axis=2)


def point_mesh_distances(points, mesh, use_tree: bool = True,
                         chunk: int = 256) -> np.ndarray:
    """Shortest distance from each point to the mesh surface.

    use_tree prunes candidate triangles with a centroid KD-tree while staying
    exact: any triangle within best-vertex-distance + max triangle radius is
    still examined. use_tree=False brute-forces every (point, triangle) pair.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if mesh.n_triangles == 0:
        raise EmptyMesh("mesh has no triangles")
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    if not use_tree:
        out = np.empty(points.shape[0])
        for lo in range(0, points.shape[0], chunk):
            hi = min(lo + chunk, points.shape[0])
            out[lo:hi] = _point_triangle_distances(points[lo:hi], a, b, c).min(axis=1)
        return out

    centroids = (a + b + c) / 3.0
    radius = np.maximum.reduce([np.linalg.norm(a - centroids, axis=1),
                                np.linalg.norm(b - centroids, axis=1),
                                np.linalg.norm(c - centroids, axis=1)])
    r_max = float(radius.max())
    vert_tree = cKDTree(mesh.vertices)
    cent_tree = cKDTree(centroids)
    upper, _ = vert_tree.query(points)  # nearest vertex bounds the answer
    out = np.empty(points.shape[0])
    for i, p in enumerate(points):
        cand = cent_tree.query_ball_point(p, upper[i] + r_max + 1e-12)
        cand = np.asarray(cand, dtype=int)
        d = _point_triangle_distances(p[None], a[cand], b[cand], c[cand])
        out[i] = d.min()
    return out


def chamfer_one_directional(gt_points, mesh, use_tree: bool = True) -> float:
    """Mean distance from ground-truth surface samples to the mesh."""
    gt_points = np.atleast_2d(np.asarray(gt_points, dtype=np.float64))
    if gt_points.shape[0] < 1:
        raise ValueError("need at least one ground-truth point")
    return float(np.mean(point_mesh_distances(gt_points, mesh, use_tree=use_tree)))


@dataclass
class EvalReport:
    per_view_psnr: list = field(default_factory=list)
    mean_psnr: float = 0.0
    chamfer: float | None = None
    timings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def enc(v):
            if isinstance(v, float) and np.isinf(v):
                return "inf"
            return v
        doc = {
            "per_view_psnr": [enc(v) for v in self.per_view_psnr],
            "mean_psnr": enc(self.mean_psnr),
            "chamfer": self.chamfer,
            "timings": self.timings,
        }
        return json.dumps(doc, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


def evaluate_views(pred_images, views) -> EvalReport:
    """Masked PSNR per (prediction, view) pair plus the finite-value mean."""
    psnrs = [masked_psnr(p, v.image, v.mask) for p, v in zip(pred_images, views)]
    finite = [p for p in psnrs if np.isfinite(p)]
    mean = float(np.mean(finite)) if finite else float("inf")
    return EvalReport(per_view_psnr=psnrs, mean_psnr=mean)

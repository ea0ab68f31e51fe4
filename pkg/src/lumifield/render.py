"""Sphere-traced neural rendering of the two fields (the slow, exact path)."""

from __future__ import annotations

import numpy as np

from .geometry import Camera, rays_for_image
from .tracer import TraceConfig, trace_bidirectional


def render_neural(sdf, radiance, cam: Camera, cfg: TraceConfig = TraceConfig(),
                  chunk: int = 65536):
    """Render one view; returns (rgb (H,W,3), alpha (H,W) bool, depth (H,W)).

    Depth is Euclidean distance to the camera center, +inf on background.
    RGB is clamped to [0,1]; background pixels are black.
    """
    origins, dirs = rays_for_image(cam)
    n = origins.shape[0]
    rgb = np.zeros((n, 3), dtype=np.float32)
    alpha = np.zeros(n, dtype=bool)
    depth = np.full(n, np.inf, dtype=np.float32)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        res = trace_bidirectional(sdf, origins[lo:hi], dirs[lo:hi], cfg)
        hit = res.hit
        if not np.any(hit):
            continue
        x = res.x[hit]
        _, g, z, _ = sdf.value_grad_feature(x)
        nrm = g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-12)
        rgb[lo:hi][hit] = radiance.eval(x, dirs[lo:hi][hit], nrm, z, clamp=True)
        alpha[lo:hi][hit] = True
        depth[lo:hi][hit] = np.linalg.norm(x - origins[lo:hi][hit], axis=1)
    h, w = cam.height, cam.width
    return rgb.reshape(h, w, 3), alpha.reshape(h, w), depth.reshape(h, w)

"""Analytic signed distance functions used by the synthetic-scene generator
and as ground truth in tracer/exporter verification."""

from __future__ import annotations

import numpy as np


class SphereSdf:
    def __init__(self, radius: float = 0.5):
        self.radius = float(radius)

    def f(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.linalg.norm(x, axis=1) - self.radius

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        r = np.linalg.norm(x, axis=1, keepdims=True)
        return x / np.maximum(r, 1e-12)


class TorusSdf:
    """Torus around the z axis: ring radius R, tube radius r."""

    def __init__(self, ring: float = 0.35, tube: float = 0.15):
        self.ring = float(ring)
        self.tube = float(tube)

    def f(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        q = np.hypot(np.hypot(x[:, 0], x[:, 1]) - self.ring, x[:, 2])
        return q - self.tube

    def gradient(self, x, h: float = 1e-6) -> np.ndarray:
        return _fd_gradient(self.f, np.atleast_2d(x), h)


class BoxSdf:
    """Axis-aligned box; exact exterior and interior distances."""

    def __init__(self, half_extents=(0.4, 0.4, 0.4)):
        self.half = np.asarray(half_extents, dtype=np.float64)

    def f(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        q = np.abs(x) - self.half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside

    def gradient(self, x, h: float = 1e-6) -> np.ndarray:
        return _fd_gradient(self.f, np.atleast_2d(x), h)


def _fd_gradient(f, x, h):
    g = np.zeros_like(x, dtype=np.float64)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        g[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def make_shape(kind: str, **kw):
    kinds = {"sphere": SphereSdf, "torus": TorusSdf, "box": BoxSdf}
    if kind not in kinds:
        raise ValueError(f"unknown shape {kind!r} (choose from {sorted(kinds)})")
    return kinds[kind](**kw)

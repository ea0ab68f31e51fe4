"""Scene loading/saving and the synthetic multi-view scene generator.

A scene directory holds `scene.json` plus one image and one mask PNG per view.
The generator ray-traces an analytic SDF with a view-dependent Phong shading
model, so the fitted radiance field genuinely needs the ray direction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio
from .geometry import Camera, SingularMatrix, look_at, perspective, rays_for_image
from .shapes import make_shape
from .tracer import TraceConfig, trace_bidirectional


class ParseError(ValueError):
    pass


class MissingFile(FileNotFoundError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass
class View:
    camera: Camera
    image: np.ndarray  # (H,W,3) float32, linear RGB in [0,1]
    mask: np.ndarray   # (H,W) bool


@dataclass
class Scene:
    name: str
    views: list

    def __post_init__(self):
        if not self.views:
            raise ParseError("a scene needs at least one view")
        for i, v in enumerate(self.views):
            if v.image.shape[:2] != (v.camera.height, v.camera.width):
                raise DimensionMismatch(
                    f"view {i}: image {v.image.shape[:2]} does not match camera "
                    f"{(v.camera.height, v.camera.width)}")
            if v.mask.shape != v.image.shape[:2]:
                raise DimensionMismatch(
                    f"view {i}: mask {v.mask.shape} does not match image "
                    f"{v.image.shape[:2]}")

    @property
    def n_pixels(self) -> int:
        return sum(v.image.shape[0] * v.image.shape[1] for v in self.views)


def write_scene(scene: Scene, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    views = []
    for i, v in enumerate(scene.views):
        img_name = f"view_{i:03d}.png"
        mask_name = f"mask_{i:03d}.png"
        imgio.write_png_color(out / img_name, v.image)
        imgio.write_png_mask(out / mask_name, v.mask)
        entry = {"image": img_name, "mask": mask_name}
        entry.update(v.camera.to_dict())
        views.append(entry)
    doc = {"name": scene.name, "views": views}
    (out / "scene.json").write_text(json.dumps(doc, indent=1))
    return out / "scene.json"


def load_scene(path) -> Scene:
    path = Path(path)
    if path.is_dir():
        path = path / "scene.json"
    if not path.exists():
        raise MissingFile(f"scene file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e})") from e
    if "views" not in doc or not isinstance(doc["views"], list):
        raise ParseError(f"{path}: missing 'views' list")
    base = path.parent
    views = []
    for i, entry in enumerate(doc["views"]):
        for key in ("image", "mask", "view", "proj", "width", "height"):
            if key not in entry:
                raise ParseError(f"{path}: view {i} missing field {key!r}")
        try:
            cam = Camera.from_dict(entry)
        except SingularMatrix as e:
            raise SingularMatrix(f"view {i}: {e}") from e
        img_path = base / entry["image"]
        mask_path = base / entry["mask"]
        if not img_path.exists():
            raise MissingFile(f"view {i}: missing image file {img_path}")
        if not mask_path.exists():
            raise MissingFile(f"view {i}: missing mask file {mask_path}")
        img, _ = imgio.read_png_color(img_path)
        mask = imgio.read_png_mask(mask_path)
        views.append(View(camera=cam, image=img, mask=mask))
    return Scene(name=doc.get("name", path.parent.name), views=views)


# ---------------------------------------------------------------------------
# Synthetic scenes


@dataclass
class SynthSpec:
    shape: str = "sphere"
    shape_params: dict = field(default_factory=dict)
    layout: str = "ring"          # "ring" or "grid"
    n_views: int = 16             # ring layout
    grid_shape: tuple = (3, 2)    # grid layout (columns, rows)
    grid_span: tuple = (0.9, 0.45)  # grid angular extents (radians)
    distance: float = 2.0
    elevation: float = 0.35      # ring elevation (radians)
    azimuth0: float = 0.0
    fov_deg: float = 35.0
    width: int = 64
    height: int = 64
    # shading
    light_dir: tuple = (0.4, 0.25, 0.88)
    ambient: float = 0.12
    diffuse: float = 0.75
    specular: float = 0.7
    shininess: float = 24.0
    checker_scale: float = 6.0
    albedo_a: tuple = (0.9, 0.55, 0.25)
    albedo_b: tuple = (0.2, 0.45, 0.85)
    noise: float = 0.0
    seed: int = 0

    def make_shape(self):
        return make_shape(self.shape, **self.shape_params)


def _ring_cameras(spec: SynthSpec):
    cams = []
    proj = perspective(spec.fov_deg, spec.width / spec.height, 0.05, 20.0)
    for k in range(spec.n_views):
        az = spec.azimuth0 + 2.0 * np.pi * k / spec.n_views
        eye = spec.distance * np.array([
            np.cos(spec.elevation) * np.cos(az),
            np.cos(spec.elevation) * np.sin(az),
            np.sin(spec.elevation)])
        cams.append(Camera(view=look_at(eye, [0, 0, 0]), proj=proj,
                           width=spec.width, height=spec.height))
    return cams


def _grid_cameras(spec: SynthSpec):
    cams = []
    proj = perspective(spec.fov_deg, spec.width / spec.height, 0.05, 20.0)
    nw, nh = spec.grid_shape
    az_span, el_span = spec.grid_span
    azs = spec.azimuth0 + (np.linspace(-0.5, 0.5, nw) * az_span if nw > 1
                           else np.zeros(1))
    els = spec.elevation + (np.linspace(-0.5, 0.5, nh) * el_span if nh > 1
                            else np.zeros(1))
    for el in els:
        for az in azs:
            eye = spec.distance * np.array([
                np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
            cams.append(Camera(view=look_at(eye, [0, 0, 0]), proj=proj,
                               width=spec.width, height=spec.height))
    return cams


def synth_cameras(spec: SynthSpec):
    if spec.layout == "ring":
        return _ring_cameras(spec)
    if spec.layout == "grid":
        return _grid_cameras(spec)
    raise ValueError(f"unknown layout {spec.layout!r}")


def _hash_noise(x: np.ndarray, seed: int) -> np.ndarray:
    """Cheap deterministic value noise on lattice cells."""
    cell = np.floor(x * 8.0).astype(np.int64)
    h = (cell[:, 0] * 73856093) ^ (cell[:, 1] * 19349663) ^ (cell[:, 2] * 83492791)
    h = (h ^ np.int64(seed * 2654435761)) & np.int64(0x7FFFFFFF)
    return (h % 1024).astype(np.float64) / 1023.0


def shade(spec: SynthSpec, shape, x: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """Phong shading at surface points x seen from direction view_dir (unit, x->eye)."""
    n = shape.gradient(x)
    n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)
    l = np.asarray(spec.light_dir, dtype=np.float64)
    l = l / np.linalg.norm(l)
    ndl = np.maximum(n @ l, 0.0)
    refl = 2.0 * ndl[:, None] * n - l
    spec_term = np.maximum(np.sum(refl * view_dir, axis=1), 0.0) ** spec.shininess
    spec_term *= (ndl > 0)

    k = spec.checker_scale
    parity = (np.floor(x[:, 0] * k) + np.floor(x[:, 1] * k) + np.floor(x[:, 2] * k)) % 2
    albedo = np.where(parity[:, None] > 0.5,
                      np.asarray(spec.albedo_b), np.asarray(spec.albedo_a))
    if spec.noise > 0:
        albedo = albedo * (1.0 - spec.noise * _hash_noise(x, spec.seed))[:, None]

    rgb = albedo * (spec.ambient + spec.diffuse * ndl[:, None]) \
        + spec.specular * spec_term[:, None]
    return np.clip(rgb, 0.0, 1.0)


def render_ground_truth(spec: SynthSpec, shape, cam: Camera):
    """Ray-trace the analytic SDF for one camera; returns (image, mask)."""
    origins, dirs = rays_for_image(cam)
    cfg = TraceConfig(n_steps=48, scan_samples=160, section_steps=24,
                      converge_eps=1e-7, accept_eps=1e-4)
    res = trace_bidirectional(shape.f, origins, dirs, cfg)
    h, w = cam.height, cam.width
    img = np.zeros((h * w, 3))
    hit = res.hit
    if np.any(hit):
        img[hit] = shade(spec, shape, res.x[hit], -dirs[hit])
    return (img.reshape(h, w, 3).astype(np.float32),
            hit.reshape(h, w).copy())


def generate_synthetic(spec: SynthSpec):
    """Build a synthetic scene; returns (Scene, ground-truth SDF handle)."""
    shape = spec.make_shape()
    views = []
    for cam in synth_cameras(spec):
        img, mask = render_ground_truth(spec, shape, cam)
        views.append(View(camera=cam, image=img, mask=mask))
    return Scene(name=f"synth-{spec.shape}", views=views), shape

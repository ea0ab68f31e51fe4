"""Cameras, rays, and the small linear-algebra kit shared by every stage.

Conventions: matrices are row-major, the coordinate system is right-handed,
cameras look down -z in view space, and NDC spans [-1,1]^3 (GL-style).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MAX_COND = 1e12


class SingularMatrix(ValueError):
    """A view or projection matrix is not (usably) invertible."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Camera:
    """A posed pinhole camera: world->camera view matrix V plus projection P."""

    view: np.ndarray   # (4,4) world -> camera
    proj: np.ndarray   # (4,4) camera -> clip
    width: int
    height: int
    _vp_inv: np.ndarray = field(init=False, repr=False, compare=False)
    _view_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        view = _freeze(np.asarray(self.view).reshape(4, 4))
        proj = _freeze(np.asarray(self.proj).reshape(4, 4))
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad image size {self.width}x{self.height}")
        for name, m in (("view", view), ("proj", proj)):
            if not np.all(np.isfinite(m)) or np.linalg.cond(m) > _MAX_COND:
                raise SingularMatrix(f"{name} matrix is singular or ill-conditioned")
        object.__setattr__(self, "view", view)
        object.__setattr__(self, "proj", proj)
        object.__setattr__(self, "_view_inv", _freeze(np.linalg.inv(view)))
        object.__setattr__(self, "_vp_inv", _freeze(np.linalg.inv(proj @ view)))

    @property
    def center(self) -> np.ndarray:
        """Camera position in world space, (V^-1 . [0,0,0,1])_xyz."""
        return self._view_inv[:3, 3].copy()

    @property
    def forward(self) -> np.ndarray:
        """World-space optical axis (the -z axis of the camera frame)."""
        return -self._view_inv[:3, 2].copy()

    def unproject(self, u: np.ndarray, ndc_z: float) -> np.ndarray:
        """Map NDC coordinates (N,2) at a fixed NDC depth back to world (N,3)."""
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        h = np.empty((u.shape[0], 4))
        h[:, :2] = u
        h[:, 2] = ndc_z
        h[:, 3] = 1.0
        w = h @ self._vp_inv.T
        return w[:, :3] / w[:, 3:4]

    def project(self, points: np.ndarray) -> np.ndarray:
        """World points (N,3) -> NDC (N,3). Points behind the camera get w<=0."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        h = np.concatenate([p, np.ones((p.shape[0], 1))], axis=1)
        c = h @ (self.proj @ self.view).T
        return c[:, :3] / c[:, 3:4]

    def to_dict(self) -> dict:
        return {
            "view": [float(v) for v in self.view.reshape(-1)],
            "proj": [float(v) for v in self.proj.reshape(-1)],
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            view=np.asarray(d["view"], dtype=np.float64).reshape(4, 4),
            proj=np.asarray(d["proj"], dtype=np.float64).reshape(4, 4),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray  # (3,)
    dir: np.ndarray     # (3,), unit length

    def __post_init__(self):
        o = _freeze(np.asarray(self.origin).reshape(3))
        d = np.asarray(self.dir, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"ray direction norm {n} is not unit")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "dir", _freeze(d))

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.dir


def ndc_from_pixel(ix, iy, width: int, height: int):
    """Pixel-center coordinates -> NDC in [-1,1]^2 (row 0 is the top of the frame)."""
    ix = np.asarray(ix, dtype=np.float64)
    iy = np.asarray(iy, dtype=np.float64)
    u = 2.0 * (ix + 0.5) / width - 1.0
    v = 1.0 - 2.0 * (iy + 0.5) / height
    return u, v


def pixel_from_ndc(u, v, width: int, height: int):
    """Inverse of ndc_from_pixel; returns fractional pixel coordinates."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    ix = (u + 1.0) * 0.5 * width - 0.5
    iy = (1.0 - v) * 0.5 * height - 0.5
    return ix, iy


def ray_dirs_for_ndc(cam: Camera, u: np.ndarray) -> np.ndarray:
    """Unit world-space ray directions through NDC points u (N,2)."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    origin = cam.center
    p = cam.unproject(u, ndc_z=0.0)
    d = p - origin
    n = np.linalg.norm(d, axis=1)
    bad = n < 1e-9
    if np.any(bad):
        # Degenerate for non-perspective P (the unprojected point coincides with
        # the center); fall back to the near plane, which fixes the identity case.
        p2 = cam.unproject(u[bad], ndc_z=-1.0)
        d[bad] = p2 - origin
        n = np.linalg.norm(d, axis=1)
        if np.any(n < 1e-9):
            raise SingularMatrix("camera produces zero-length ray directions")
    return d / n[:, None]


def ray_from_pixel(cam: Camera, u) -> Ray:
    """Build the ray through one NDC location u in [-1,1]^2."""
    u = np.asarray(u, dtype=np.float64).reshape(2)
    if np.any(np.abs(u) > 1.0 + 1e-9):
        raise ValueError(f"NDC coordinate {u} outside [-1,1]^2")
    d = ray_dirs_for_ndc(cam, u[None, :])[0]
    return Ray(origin=cam.center, dir=d)


def rays_for_image(cam: Camera, width: int | None = None, height: int | None = None):
    """Per-pixel rays for a full image: (H*W,3) origins and unit dirs, row-major."""
    w = cam.width if width is None else width
    h = cam.height if height is None else height
    iy, ix = np.mgrid[0:h, 0:w]
    u, v = ndc_from_pixel(ix.ravel(), iy.ravel(), w, h)
    dirs = ray_dirs_for_ndc(cam, np.stack([u, v], axis=1))
    origins = np.broadcast_to(cam.center, dirs.shape).copy()
    return origins, dirs


def intersect_sphere(origins, dirs, radius: float):
    """Ray/sphere intersection against a sphere of given radius at the origin.

    Accepts (3,) or (N,3) arrays; returns (t_near, t_far, hit) where t values
    are NaN for misses. A tangent ray reports t_near == t_far.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    b = np.sum(o * d, axis=1)
    c = np.sum(o * o, axis=1) - radius * radius
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = np.where(hit, -b - sq, np.nan)
    t_far = np.where(hit, -b + sq, np.nan)
    return t_near, t_far, hit


def intersect_unit_sphere(ray: Ray, radius: float = 1.0):
    """Single-ray wrapper: returns (t_near, t_far) or None on a miss."""
    tn, tf, hit = intersect_sphere(ray.origin, ray.dir, radius)
    if not hit[0]:
        return None
    return float(tn[0]), float(tf[0])


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World->camera view matrix with the camera at eye staring at target."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    f = target - eye
    fn = np.linalg.norm(f)
    if fn < 1e-12:
        raise ValueError("eye and target coincide")
    f = f / fn
    s = np.cross(f, up)
    sn = np.linalg.norm(s)
    if sn < 1e-9:  # forward parallel to up; pick an arbitrary orthogonal
        up = np.array([1.0, 0.0, 0.0]) if abs(f[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        s = np.cross(f, up)
        sn = np.linalg.norm(s)
    s = s / sn
    u = np.cross(s, f)
    m = np.eye(4)
    m[0, :3] = s
    m[1, :3] = u
    m[2, :3] = -f
    m[:3, 3] = -m[:3, :3] @ eye
    return m


def perspective(fov_y_deg: float, aspect: float, near: float, far: float) -> np.ndarray:
    """GL-style perspective projection, NDC z in [-1,1]."""
    if near <= 0 or far <= near:
        raise ValueError("need 0 < near < far")
    t = 1.0 / np.tan(np.deg2rad(fov_y_deg) * 0.5)
    m = np.zeros((4, 4))
    m[0, 0] = t / aspect
    m[1, 1] = t
    m[2, 2] = (far + near) / (near - far)
    m[2, 3] = 2.0 * far * near / (near - far)
    m[3, 2] = -1.0
    return m

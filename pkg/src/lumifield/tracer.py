"""Sphere tracing against a signed distance field.

The fast forward pass steps by the SDF value; rays it cannot settle get a
second chance from a backward trace plus a dense scan and bisection, which is
what keeps grazing rays from being misclassified. Everything here is
gradient-free; the one differentiable piece is the final refinement step.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geometry import intersect_sphere


class DegenerateNormal(ArithmeticError):
    pass


class Status(IntEnum):
    MISS = 0
    CONVERGED = 1
    REFINED = 2


@dataclass(frozen=True)
class TraceConfig:
    n_steps: int = 16
    converge_eps: float = 5e-5
    accept_eps: float = 0.005
    scan_samples: int = 100
    section_steps: int = 8
    denom_clamp: float = 0.01
    domain_radius: float = 1.0

    def __post_init__(self):
        for name in ("n_steps", "converge_eps", "accept_eps", "scan_samples",
                     "section_steps", "denom_clamp", "domain_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.converge_eps >= self.accept_eps:
            raise ValueError("converge_eps must be below accept_eps")


@dataclass(frozen=True)
class SurfaceHit:
    """A converged ray/surface intersection."""

    x: np.ndarray
    t: float
    n: np.ndarray
    residual: float
    status: Status


@dataclass
class TraceBatch:
    """Struct-of-arrays result for a batch of rays."""

    status: np.ndarray    # (N,) Status values
    t: np.ndarray         # (N,) hit parameter (NaN on miss)
    x: np.ndarray         # (N,3) hit points (undefined on miss)
    residual: np.ndarray  # (N,) |f| at the hit

    @property
    def hit(self) -> np.ndarray:
        return self.status != Status.MISS


def _sdf_fn(f):
    """Accept either a plain callable or any object exposing .f(points)."""
    return f.f if hasattr(f, "f") else f


def _domain_interval(origins, dirs, cfg):
    tn, tf, hit = intersect_sphere(origins, dirs, cfg.domain_radius)
    tn = np.where(hit, np.maximum(tn, 0.0), np.nan)
    # A sphere entirely behind the origin counts as a miss.
    behind = hit & (tf < 0)
    hit = hit & ~behind
    return tn, tf, hit


@dataclass
class ForwardTrace:
    t: np.ndarray          # (N,) last ray parameter
    f: np.ndarray          # (N,) SDF value at the last evaluated point
    f_min: np.ndarray      # (N,) minimum SDF value seen along the march
    converged: np.ndarray  # (N,) bool
    entered: np.ndarray    # (N,) bool, ray touched the domain sphere
    t_pos: np.ndarray      # (N,) last parameter with f > 0 (NaN if none)
    t_neg: np.ndarray      # (N,) first parameter with f < 0 (NaN if none)


def trace_forward(f, origins, dirs, cfg: TraceConfig = TraceConfig()) -> ForwardTrace:
    """Plain sphere tracing from the near domain entry.

    Also records the first sign-change bracket (t_pos, t_neg) seen along the
    march: fields that are not quite 1-Lipschitz (mid-training networks)
    overshoot the surface, and that bracket is what rescues those rays.
    """
    f = _sdf_fn(f)
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = origins.shape[0]
    t_near, t_far, entered = _domain_interval(origins, dirs, cfg)

    t = np.where(entered, t_near, 0.0)
    fv = np.full(n, np.inf)
    f_min = np.full(n, np.inf)
    t_pos = np.full(n, np.nan)
    t_neg = np.full(n, np.nan)
    converged = np.zeros(n, dtype=bool)
    active = entered.copy()
    for _ in range(cfg.n_steps):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        x = origins[idx] + t[idx, None] * dirs[idx]
        val = np.asarray(f(x), dtype=np.float64).reshape(-1)
        fv[idx] = val
        f_min[idx] = np.minimum(f_min[idx], val)
        pos = val > 0
        no_neg_yet = np.isnan(t_neg[idx])
        upd_pos = idx[pos & no_neg_yet]
        t_pos[upd_pos] = t[upd_pos]
        first_neg = idx[(val < 0) & no_neg_yet]
        t_neg[first_neg] = t[first_neg]
        conv = np.abs(val) < cfg.converge_eps
        converged[idx[conv]] = True
        active[idx[conv]] = False
        still = idx[~conv]
        t[still] += fv[still]
        # rays that walked out of the domain are done (no surface ahead)
        left = still[t[still] > t_far[still]]
        active[left] = False
        t[left] = t_far[left]
    return ForwardTrace(t=t, f=fv, f_min=f_min, converged=converged,
                        entered=entered, t_pos=t_pos, t_neg=t_neg)


def _scan_and_bisect(f, o, d, lo, hi, cfg):
    """First sign change of f in [lo, hi] per ray, refined by bisection.

    Returns (t, residual, found); rays whose interval holds no crossing (or
    whose refined point misses accept_eps) report found=False. A ray already
    inside at lo counts as an immediate hit when its residual is acceptable.
    """
    frac = np.linspace(0.0, 1.0, cfg.scan_samples)
    ts = lo[:, None] + (hi - lo)[:, None] * frac[None, :]   # (R,S)
    pts = o[:, None, :] + ts[..., None] * d[:, None, :]
    vals = np.asarray(f(pts.reshape(-1, 3))).reshape(ts.shape)
    cross = (vals[:, :-1] > 0) & (vals[:, 1:] <= 0)
    has = cross.any(axis=1)
    first = np.argmax(cross, axis=1)
    inside0 = vals[:, 0] <= 0

    t_out = np.full(lo.shape, np.nan)
    res_out = np.full(lo.shape, np.nan)
    found = np.zeros(lo.shape, dtype=bool)

    r = np.flatnonzero(has & ~inside0)
    if r.size:
        t_lo = ts[r, first[r]]
        t_hi = ts[r, first[r] + 1]
        ro, rd = o[r], d[r]
        for _ in range(cfg.section_steps):
            mid = 0.5 * (t_lo + t_hi)
            v = np.asarray(f(ro + mid[:, None] * rd)).reshape(-1)
            gt = v > 0
            t_lo = np.where(gt, mid, t_lo)
            t_hi = np.where(gt, t_hi, mid)
        mid = 0.5 * (t_lo + t_hi)
        v = np.abs(np.asarray(f(ro + mid[:, None] * rd)).reshape(-1))
        good = v < cfg.accept_eps
        t_out[r[good]] = mid[good]
        res_out[r[good]] = v[good]
        found[r[good]] = True

    r0 = np.flatnonzero(inside0)
    if r0.size:
        v = np.abs(vals[r0, 0])
        good = v < cfg.accept_eps
        t_out[r0[good]] = lo[r0[good]]
        res_out[r0[good]] = v[good]
        found[r0[good]] = True
    return t_out, res_out, found


def trace_bidirectional(f, origins, dirs, cfg: TraceConfig = TraceConfig()) -> TraceBatch:
    """Robust surface finding.

    Converged forward rays are accepted directly. Rays whose forward march
    overshot through the surface carry a sign-change bracket and are resolved
    inside it. The rest get the backward trace from the far domain boundary;
    a crossed interval means no surface, otherwise the interval is scanned
    for the first sign change and refined by bisection.
    """
    f = _sdf_fn(f)
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = origins.shape[0]
    t_near_dom, t_far_dom, entered = _domain_interval(origins, dirs, cfg)

    fw = trace_forward(f, origins, dirs, cfg)
    t_fwd, converged = fw.t, fw.converged

    status = np.zeros(n, dtype=np.int8)
    t_hit = np.full(n, np.nan)
    residual = np.full(n, np.nan)
    status[converged] = Status.CONVERGED
    t_hit[converged] = t_fwd[converged]
    residual[converged] = np.abs(fw.f[converged])

    bracket = entered & ~converged & np.isfinite(fw.t_neg)
    if np.any(bracket):
        idx = np.flatnonzero(bracket)
        lo = np.where(np.isfinite(fw.t_pos[idx]), fw.t_pos[idx],
                      np.maximum(t_near_dom[idx], 0.0))
        hi = fw.t_neg[idx]
        t_b, res_b, ok = _scan_and_bisect(f, origins[idx], dirs[idx], lo, hi, cfg)
        tgt = idx[ok]
        status[tgt] = Status.REFINED
        t_hit[tgt] = t_b[ok]
        residual[tgt] = res_b[ok]

    todo = entered & ~converged & ~bracket
    if np.any(todo):
        idx = np.flatnonzero(todo)
        o, d = origins[idx], dirs[idx]
        # backward trace from the far domain intersection
        tb = t_far_dom[idx].copy()
        active = np.ones(idx.size, dtype=bool)
        for _ in range(cfg.n_steps):
            if not np.any(active):
                break
            sub = np.flatnonzero(active)
            val = np.asarray(f(o[sub] + tb[sub, None] * d[sub])).reshape(-1)
            done = np.abs(val) < cfg.converge_eps
            active[sub[done]] = False
            move = sub[~done]
            tb[move] -= val[~done]
        lo = t_fwd[idx]
        hi = np.minimum(tb, t_far_dom[idx])
        ok = hi >= lo  # otherwise the bounds crossed: no surface exists
        if np.any(ok):
            sidx = idx[ok]
            t_s, res_s, found = _scan_and_bisect(
                f, origins[sidx], dirs[sidx], lo[ok], hi[ok], cfg)
            tgt = sidx[found]
            status[tgt] = Status.REFINED
            t_hit[tgt] = t_s[found]
            residual[tgt] = res_s[found]

    x = origins + np.where(np.isnan(t_hit), 0.0, t_hit)[:, None] * dirs
    return TraceBatch(status=status, t=t_hit, x=x, residual=residual)


def trace_ray(f, ray, cfg: TraceConfig = TraceConfig(), normal_fn=None):
    """Single-ray convenience wrapper returning a SurfaceHit or None."""
    batch = trace_bidirectional(f, ray.origin[None, :], ray.dir[None, :], cfg)
    if batch.status[0] == Status.MISS:
        return None
    x = batch.x[0]
    if normal_fn is None and hasattr(f, "gradient"):
        normal_fn = f.gradient
    if normal_fn is not None:
        g = np.asarray(normal_fn(x[None, :])).reshape(3)
        norm = np.linalg.norm(g)
        if norm < 1e-8:
            raise DegenerateNormal(f"|grad f| = {norm:.2e} at hit point")
        nrm = g / norm
    else:
        nrm = np.full(3, np.nan)
    return SurfaceHit(x=x, t=float(batch.t[0]), n=nrm,
                      residual=float(batch.residual[0]), status=Status(batch.status[0]))


def min_sdf_along_ray(f, origins, dirs, cfg: TraceConfig = TraceConfig()):
    """Minimum SDF value along each ray's domain interval.

    Dense scan refined by one parabolic step through the argmin neighborhood.
    Rays missing the domain sphere are evaluated at their closest approach to
    the origin. Returns (f_min (N,), t_min (N,)).
    """
    f = _sdf_fn(f)
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = origins.shape[0]
    t_near, t_far, entered = _domain_interval(origins, dirs, cfg)

    f_min = np.empty(n)
    t_min = np.empty(n)

    if np.any(~entered):
        idx = np.flatnonzero(~entered)
        t_ca = np.maximum(-np.sum(origins[idx] * dirs[idx], axis=1), 0.0)
        pts = origins[idx] + t_ca[:, None] * dirs[idx]
        f_min[idx] = np.asarray(f(pts)).reshape(-1)
        t_min[idx] = t_ca

    if np.any(entered):
        idx = np.flatnonzero(entered)
        o, d = origins[idx], dirs[idx]
        lo, hi = t_near[idx], t_far[idx]
        frac = np.linspace(0.0, 1.0, cfg.scan_samples)
        ts = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
        vals = np.asarray(f((o[:, None, :] + ts[..., None] * d[:, None, :])
                            .reshape(-1, 3))).reshape(ts.shape)
        k = np.argmin(vals, axis=1)
        rows = np.arange(idx.size)
        best_t = ts[rows, k]
        best_f = vals[rows, k]
        # parabolic vertex through the three samples around the argmin
        interior = (k > 0) & (k < cfg.scan_samples - 1)
        if np.any(interior):
            r = np.flatnonzero(interior)
            f0 = vals[r, k[r] - 1]
            f1 = vals[r, k[r]]
            f2 = vals[r, k[r] + 1]
            h = (hi[r] - lo[r]) / (cfg.scan_samples - 1)
            denom = f2 - 2 * f1 + f0
            safe = np.abs(denom) > 1e-12
            shift = np.zeros_like(h)
            shift[safe] = 0.5 * h[safe] * (f0[safe] - f2[safe]) / denom[safe]
            shift = np.clip(shift, -h, h)
            t_v = ts[r, k[r]] + shift
            v = np.asarray(f(o[r] + t_v[:, None] * d[r])).reshape(-1)
            better = v < best_f[r]
            best_t[r[better]] = t_v[better]
            best_f[r[better]] = v[better]
        f_min[idx] = best_f
        t_min[idx] = best_t

    return f_min, t_min


class RefineTape:
    """Backward pass data for the differentiable last refinement step."""

    def __init__(self, net, tape, dirs, denom, clamped):
        self.net = net
        self.tape = tape
        self.dirs = dirs
        self.denom = denom
        self.clamped = clamped
        self.f_hat = tape.y[:, 0]

    def backward(self, x_bar):
        """Map a cotangent on x_n to parameter gradients of the SDF network.

        The candidate point is treated as a constant, so gradients flow only
        through the refinement expression itself.
        """
        x_bar = np.asarray(x_bar, dtype=self.net.dtype)
        u = np.sum(x_bar * self.dirs.astype(self.net.dtype), axis=1)  # (N,)
        c_f = -u / self.denom
        c_d = np.where(self.clamped, 0.0, u * self.f_hat / self.denom ** 2)
        ybar = c_f[:, None]
        dybar = (c_d[:, None] * self.dirs)[:, :, None].astype(self.net.dtype)
        _, grads = self.net.jet_backward(self.tape, ybar=ybar, dybar=dybar)
        return grads


def differentiable_refine(sdf, x_hat, dirs, cfg: TraceConfig = TraceConfig()):
    """One gradient-adjusted correction step x_n = x^ - f/(grad f . d) d.

    Returns (x_n, RefineTape); the tape maps loss cotangents on x_n back to
    SDF parameter gradients (all earlier trace arithmetic stays frozen).
    """
    x_hat = np.atleast_2d(np.asarray(x_hat))
    dirs = np.atleast_2d(np.asarray(dirs))
    net = sdf.net
    seeds = np.eye(3, dtype=net.dtype)
    tape = net.jet_forward(x_hat.astype(net.dtype), seeds=seeds)
    fv = tape.y[:, 0]
    g = tape.dy[:, :, 0]
    gnorm = np.linalg.norm(g, axis=1)
    if np.any(gnorm < 1e-8):
        raise DegenerateNormal("vanishing SDF gradient at refinement point")
    dot = np.sum(g * dirs.astype(net.dtype), axis=1)
    clamped = np.abs(dot) < cfg.denom_clamp
    denom = np.where(clamped, np.where(dot < 0, -cfg.denom_clamp, cfg.denom_clamp), dot)
    x_n = x_hat - (fv / denom)[:, None] * dirs
    return x_n, RefineTape(net, tape, dirs, denom, clamped)

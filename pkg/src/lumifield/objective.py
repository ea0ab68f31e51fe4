"""The four training losses and their weighted combination.

Values are straightforward; the work is in the exact parameter gradients:
the reconstruction term reaches the SDF through the refined hit point, the
normal and the feature tap (all second-order paths), the smoothness term
differentiates an input-Laplacian, and the mask term reaches f through the
frozen argmin points of the dense scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import NonFinite
from .tracer import TraceConfig, differentiable_refine, min_sdf_along_ray, trace_bidirectional

_P_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    w_E: float = 0.1
    w_M: float = 100.0
    w_S: float = 0.01
    mask_alpha: float = 50.0

    def __post_init__(self):
        if min(self.w_E, self.w_M, self.w_S, self.mask_alpha) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossTerms:
    L_R: float
    L_E: float
    L_M: float
    L_S: float
    total: float

    def check_finite(self):
        vals = [self.L_R, self.L_E, self.L_M, self.L_S, self.total]
        if not np.all(np.isfinite(vals)):
            raise NonFinite(f"non-finite loss terms: {self}")
        return self


# ---------------------------------------------------------------------------
# Individual terms (value only)


def loss_reconstruction(pred_rgb, target_rgb, batch_size: int) -> float:
    """L1 color error over foreground hits, normalized by the full batch size."""
    pred_rgb = np.atleast_2d(pred_rgb)
    target_rgb = np.atleast_2d(target_rgb)
    if pred_rgb.shape != target_rgb.shape:
        raise ValueError("pred/target shape mismatch")
    if pred_rgb.size == 0:
        return 0.0
    return float(np.sum(np.abs(pred_rgb - target_rgb)) / batch_size)


def loss_eikonal(sdf, sample_count: int = None, rng=None, samples=None) -> float:
    """Mean (||grad f|| - 1)^2 over uniform samples in the [-1,1]^3 cube."""
    if samples is None:
        rng = np.random.default_rng(rng)
        samples = rng.uniform(-1.0, 1.0, size=(sample_count, 3))
    g = sdf.gradient(samples)
    return float(np.mean((np.linalg.norm(g, axis=1) - 1.0) ** 2))


def _bce(p, m):
    p = np.clip(p, _P_CLAMP, 1.0 - _P_CLAMP)
    return -(m * np.log(p) + (1.0 - m) * np.log(1.0 - p))


def loss_mask(f_min, mask_values, alpha: float, batch_size: int) -> float:
    """Soft silhouette loss over the non-foreground rays."""
    f_min = np.asarray(f_min, dtype=np.float64)
    m = np.asarray(mask_values, dtype=np.float64)
    if f_min.size == 0:
        return 0.0
    p = _sigmoid(-alpha * f_min)
    return float(np.sum(_bce(p, m)) / (alpha * batch_size))


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def loss_smoothness(radiance, x, rd, n, z, batch_size: int) -> float:
    """Mean squared norm of the per-channel angular Laplacian of B."""
    x = np.atleast_2d(x)
    if x.shape[0] == 0:
        return 0.0
    lap = radiance.angular_laplacian(x, rd, n, z)  # (H,3)
    return float(np.sum(lap ** 2) / batch_size)


# ---------------------------------------------------------------------------
# Full objective with gradients


@dataclass
class RayBatch:
    origins: np.ndarray  # (N,3)
    dirs: np.ndarray     # (N,3)
    rgb: np.ndarray      # (N,3) target colors
    mask: np.ndarray     # (N,) bool

    @property
    def size(self) -> int:
        return self.origins.shape[0]


@dataclass
class TraceCandidates:
    """Gradient-free tracer output frozen for one optimization step."""

    hit_idx: np.ndarray     # rays in U_f (surface hit AND mask true)
    x_hat: np.ndarray       # (H,3) pre-refinement candidates for those rays
    nonfg_idx: np.ndarray   # rays outside U_f
    t_min: np.ndarray       # (M,) frozen argmin parameter along non-fg rays


def prepare_candidates(sdf, batch: RayBatch, cfg: TraceConfig) -> TraceCandidates:
    res = trace_bidirectional(sdf, batch.origins, batch.dirs, cfg)
    fg = res.hit & batch.mask
    hit_idx = np.flatnonzero(fg)
    nonfg_idx = np.flatnonzero(~fg)
    _, t_min = min_sdf_along_ray(sdf, batch.origins[nonfg_idx],
                                 batch.dirs[nonfg_idx], cfg)
    return TraceCandidates(hit_idx=hit_idx, x_hat=res.x[hit_idx],
                           nonfg_idx=nonfg_idx, t_min=t_min)


def _normalize_rows(g, eps=1e-12):
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    return g / np.maximum(nrm, eps), nrm[:, 0]


def _add_grads(acc, extra):
    for (aW, ab), (eW, eb) in zip(acc, extra):
        aW += eW
        ab += eb
    return acc


def loss_total(sdf, radiance, batch: RayBatch, cand: TraceCandidates,
               weights: LossWeights = LossWeights(),
               cfg: TraceConfig = TraceConfig(),
               eik_samples: np.ndarray = None,
               use_ls: bool = True,
               compute_grads: bool = True):
    """Evaluate all four terms and (optionally) gradients for theta and phi.

    The trace candidates stay frozen: parameter gradients flow only through
    the refinement expression, the field evaluations at the refined points,
    the eikonal samples and the frozen argmin points of the mask scan.
    Returns (LossTerms, grads_sdf, grads_radiance).
    """
    n_total = batch.size
    dt = sdf.net.dtype
    grads_sdf = sdf.net.zero_grads() if compute_grads else None
    grads_rad = radiance.net.zero_grads() if compute_grads else None

    # --- reconstruction + smoothness over foreground hits -------------------
    L_R = 0.0
    L_S = 0.0
    hit_idx = cand.hit_idx
    if hit_idx.size:
        dirs_h = batch.dirs[hit_idx]
        x_n, refine_tape = differentiable_refine(sdf, cand.x_hat, dirs_h, cfg)

        seeds3 = np.eye(3, dtype=dt)
        sdf_tape = sdf.net.jet_forward(x_n.astype(dt), seeds=seeds3)
        g = sdf_tape.dy[:, :, 0]
        z = sdf_tape.layers[sdf.tap][0]
        nrm, gnorm = _normalize_rows(g)

        rad_in = radiance.assemble_input(x_n, dirs_h, nrm, z)
        if use_ls:
            a_seeds, a_seeds2 = radiance.angular_seeds(dirs_h)
            rad_tape = radiance.net.jet_forward(rad_in, seeds=a_seeds, seeds2=a_seeds2)
            lap = rad_tape.d2y.sum(axis=1)  # (H,3)
            L_S = float(np.sum(lap ** 2) / n_total)
        else:
            rad_tape = radiance.net.jet_forward(rad_in)
            lap = None
        pred = rad_tape.y
        target = batch.rgb[hit_idx]
        L_R = loss_reconstruction(pred, target, n_total)

        if compute_grads:
            resid = pred - target
            ybar = (np.sign(resid) / n_total).astype(dt)
            d2ybar = None
            if use_ls and weights.w_S > 0:
                # L_S cotangent: each seed's d2y shares the channel Laplacian
                d2ybar = np.repeat(((2.0 * weights.w_S / n_total) * lap)[:, None, :],
                                   rad_tape.dy.shape[1], axis=1).astype(dt)
            in_bar, g_rad = radiance.net.jet_backward(rad_tape, ybar=ybar,
                                                      d2ybar=d2ybar)
            _add_grads(grads_rad, g_rad)

            sl = radiance.input_slices()
            x_bar = in_bar[:, sl["x"]].astype(np.float64)
            n_bar = in_bar[:, sl["n"]].astype(np.float64)
            z_bar = in_bar[:, sl["z"]]

            # normal = g/|g|: pull n_bar back to the raw gradient
            dot = np.sum(nrm * n_bar, axis=1, keepdims=True)
            g_bar = (n_bar - nrm * dot) / gnorm[:, None]

            x_bar2, g_sdf = sdf.net.jet_backward(
                sdf_tape, dybar=g_bar[:, :, None].astype(dt),
                tap=sdf.tap, tap_bar=z_bar)
            _add_grads(grads_sdf, g_sdf)

            _add_grads(grads_sdf, refine_tape.backward(x_bar + x_bar2))

    # --- eikonal -------------------------------------------------------------
    if eik_samples is None:
        raise ValueError("loss_total needs eik_samples (draw them per batch)")
    seeds3 = np.eye(3, dtype=dt)
    eik_tape = sdf.net.jet_forward(eik_samples.astype(dt), seeds=seeds3)
    g_e = eik_tape.dy[:, :, 0]
    norms = np.linalg.norm(g_e, axis=1)
    L_E = float(np.mean((norms - 1.0) ** 2))
    if compute_grads and weights.w_E > 0:
        coef = (2.0 * weights.w_E / eik_samples.shape[0]) * (norms - 1.0) / np.maximum(norms, 1e-12)
        dybar = (coef[:, None] * g_e)[:, :, None].astype(dt)
        _, g_sdf = sdf.net.jet_backward(eik_tape, dybar=dybar)
        _add_grads(grads_sdf, g_sdf)

    # --- mask ----------------------------------------------------------------
    L_M = 0.0
    nf = cand.nonfg_idx
    if nf.size:
        pts = batch.origins[nf] + cand.t_min[:, None] * batch.dirs[nf]
        m = batch.mask[nf].astype(np.float64)
        mask_tape = sdf.net.jet_forward(pts.astype(dt))
        f_min = mask_tape.y[:, 0].astype(np.float64)
        alpha = weights.mask_alpha
        p_raw = _sigmoid(-alpha * f_min)
        clamped = (p_raw < _P_CLAMP) | (p_raw > 1.0 - _P_CLAMP)
        L_M = float(np.sum(_bce(p_raw, m)) / (alpha * n_total))
        if compute_grads and weights.w_M > 0:
            # d BCE(sigmoid(-alpha f), m)/df = -alpha (p - m); clamp kills it
            dldf = np.where(clamped, 0.0
                            , (m - p_raw)) * (weights.w_M / n_total)
            _, g_sdf = sdf.net.jet_backward(mask_tape,
                                            ybar=dldf[:, None].astype(dt))
            _add_grads(grads_sdf, g_sdf)

    total = (L_R + weights.w_E * L_E + weights.w_M * L_M + weights.w_S * L_S)
    terms = LossTerms(L_R=L_R, L_E=L_E, L_M=L_M, L_S=L_S, total=total).check_finite()
    return terms, grads_sdf, grads_rad

"""Neural field primitives: small MLPs with analytic derivatives.

Everything the training loop needs is hand-derived for the one fixed topology
used here (a chain of linear layers with sine or relu activations):

  * forward evaluation,
  * input Jacobians (forward-mode "jets" along seed directions),
  * per-parameter gradients of scalars built from values, input gradients and
    input second derivatives (reverse pass over the jet computation).

The jet formulation is what makes losses like the eikonal term and the angular
smoothness term exactly differentiable w.r.t. parameters without a general
autodiff framework.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

SINE = "sine"
RELU = "relu"

_ACT_TAGS = {SINE: 0, RELU: 1}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}


class DimensionMismatch(ValueError):
    pass


class NonFinite(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# Core network


class FieldNetwork:
    """MLP with hidden activations sin(omega*(Wx+b)) or relu, linear last layer."""

    def __init__(self, dims, activation=SINE, omegas=None, dtype=np.float32):
        dims = [int(d) for d in dims]
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if activation not in (SINE, RELU):
            raise ValueError(f"unknown activation {activation!r}")
        self.dims = dims
        self.activation = activation
        self.dtype = np.dtype(dtype)
        n_hidden = len(dims) - 2
        if omegas is None:
            omegas = [30.0] * n_hidden
        if len(omegas) != n_hidden:
            raise ValueError("need one omega per hidden layer")
        self.omegas = [float(w) for w in omegas]
        self.weights = [
            (np.zeros((dims[i + 1], dims[i]), dtype=self.dtype),
             np.zeros(dims[i + 1], dtype=self.dtype))
            for i in range(len(dims) - 1)
        ]

    # -- basic structure ----------------------------------------------------

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in self.weights)

    def astype(self, dtype) -> "FieldNetwork":
        net = FieldNetwork(self.dims, self.activation, self.omegas, dtype)
        net.weights = [(W.astype(dtype), b.astype(dtype)) for W, b in self.weights]
        return net

    def copy(self) -> "FieldNetwork":
        return self.astype(self.dtype)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.weights])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=self.dtype)
        if vec.size != self.n_params:
            raise DimensionMismatch("flat parameter vector has wrong length")
        off = 0
        for i, (W, b) in enumerate(self.weights):
            nw, nb = W.size, b.size
            self.weights[i] = (vec[off:off + nw].reshape(W.shape).copy(),
                               vec[off + nw:off + nw + nb].copy())
            off += nw + nb

    def zero_grads(self):
        return [(np.zeros_like(W), np.zeros_like(b)) for W, b in self.weights]

    # -- forward ------------------------------------------------------------

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"input dim {x.shape[1]} != network input dim {self.input_dim}")
        return x, squeeze

    def forward(self, x, tap: int | None = None):
        """Evaluate the network; with tap=k also return the k-th hidden output."""
        x, squeeze = self._check_input(x)
        h = x
        tapped = None
        for l in range(self.n_layers - 1):
            W, b = self.weights[l]
            a = h @ W.T + b
            if self.activation == SINE:
                h = np.sin(self.omegas[l] * a)
            else:
                h = np.maximum(a, 0.0)
            if tap is not None and l + 1 == tap:
                tapped = h
        W, b = self.weights[-1]
        y = h @ W.T + b
        if squeeze:
            y = y[0]
            tapped = None if tapped is None else tapped[0]
        if tap is not None:
            return y, tapped
        return y

    def jet_forward(self, x, seeds=None, seeds2=None, order: int = 0):
        """Forward pass carrying first/second derivatives along seed directions.

        seeds:  (S,in) or (N,S,in) input tangents (d input / d parameter_s).
        seeds2: matching second derivatives of the input map (else zero).
        Returns a JetTape; tape.y is (N,out), tape.dy/d2y are (N,S,out).
        """
        x, _ = self._check_input(x)
        n = x.shape[0]
        if seeds is not None:
            order = max(order, 1)
            seeds = np.asarray(seeds, dtype=self.dtype)
            if seeds.ndim == 2:
                seeds = np.broadcast_to(seeds, (n,) + seeds.shape)
            if seeds.shape[0] != n or seeds.shape[2] != self.input_dim:
                raise DimensionMismatch("seeds must be (S,in) or (N,S,in)")
        if seeds2 is not None:
            order = 2
            seeds2 = np.asarray(seeds2, dtype=self.dtype)
            if seeds2.ndim == 2:
                seeds2 = np.broadcast_to(seeds2, (n,) + seeds2.shape)
        if order >= 1 and seeds is None:
            raise ValueError("order>=1 requires seeds")
        if order == 2 and seeds2 is None:
            seeds2 = np.zeros_like(seeds)

        tape = JetTape(net=self, order=order, n=n)
        h, t, s = x, seeds, seeds2
        for l in range(self.n_layers - 1):
            W, b = self.weights[l]
            om = self.omegas[l] if self.activation == SINE else 0.0
            a = h @ W.T + b
            ta = None if t is None else t @ W.T
            sa = None if s is None else s @ W.T
            if self.activation == SINE:
                sn = np.sin(om * a)
                cs = np.cos(om * a)
                tape.layers.append((h, t, s, a, ta, sa, sn, cs))
                h = sn
                if order >= 1:
                    t = om * cs[:, None, :] * ta
                if order == 2:
                    s = om * cs[:, None, :] * sa - (om * om) * sn[:, None, :] * ta * ta
            else:
                m = (a > 0).astype(self.dtype)
                tape.layers.append((h, t, s, a, ta, sa, m, None))
                h = a * m
                if order >= 1:
                    t = m[:, None, :] * ta
                if order == 2:
                    s = m[:, None, :] * sa
        W, b = self.weights[-1]
        tape.layers.append((h, t, s, None, None, None, None, None))
        tape.y = h @ W.T + b
        tape.dy = None if t is None else t @ W.T
        tape.d2y = None if s is None else s @ W.T
        return tape

    def jet_backward(self, tape: "JetTape", ybar=None, dybar=None, d2ybar=None,
                     tap: int | None = None, tap_bar=None):
        """Reverse pass over jet_forward.

        Accumulates d(scalar)/d(parameters) for a scalar whose cotangents w.r.t.
        (y, dy, d2y) are given, plus the cotangent w.r.t. the input points.
        Seed directions are treated as constants. Returns (xbar, grads).
        """
        if tape.net is not self:
            raise ValueError("tape belongs to a different network")
        grads = self.zero_grads()
        dt = self.dtype
        n = tape.n

        def z(shape):
            return np.zeros(shape, dtype=dt)

        def contract(bar, val):  # sum_{n,s} bar (x) val -> (out,in)
            return bar.reshape(-1, bar.shape[-1]).T @ val.reshape(-1, val.shape[-1])

        h_last = tape.layers[-1][0]
        W, _ = self.weights[-1]
        ybar = z(tape.y.shape) if ybar is None else np.asarray(ybar, dtype=dt)
        hbar = ybar @ W
        gW, gb = grads[-1]
        gW += ybar.T @ h_last
        gb += ybar.sum(axis=0)
        tbar = sbar = None
        if tape.order >= 1:
            t_last = tape.layers[-1][1]
            if dybar is not None:
                dybar = np.asarray(dybar, dtype=dt)
                tbar = dybar @ W
                gW += contract(dybar, t_last)
            else:
                tbar = z(t_last.shape)
        if tape.order == 2:
            s_last = tape.layers[-1][2]
            if d2ybar is not None:
                d2ybar = np.asarray(d2ybar, dtype=dt)
                sbar = d2ybar @ W
                gW += contract(d2ybar, s_last)
            else:
                sbar = z(s_last.shape)

        if tap is not None and tap == self.n_layers - 1 and tap_bar is not None:
            hbar = hbar + np.asarray(tap_bar, dtype=dt)

        for l in range(self.n_layers - 2, -1, -1):
            h_in, t_in, s_in, a, ta, sa, act1, act2 = tape.layers[l]
            W, _ = self.weights[l]
            if self.activation == SINE:
                om = self.omegas[l]
                sn, cs = act1, act2
                om_cs = om * cs
                abar = om_cs * hbar
                if tape.order >= 1:
                    abar -= (om * om) * np.sum(sn[:, None, :] * ta * tbar, axis=1)
                    tabar = om_cs[:, None, :] * tbar
                if tape.order == 2:
                    abar -= np.sum(((om * om) * sa * sbar) * sn[:, None, :]
                                   + ((om ** 3) * ta * ta * sbar) * cs[:, None, :],
                                   axis=1)
                    tabar -= (2.0 * om * om) * sn[:, None, :] * ta * sbar
                    sabar = om_cs[:, None, :] * sbar
            else:
                m = act1
                abar = m * hbar
                if tape.order >= 1:
                    tabar = m[:, None, :] * tbar
                if tape.order == 2:
                    sabar = m[:, None, :] * sbar

            gW, gb = grads[l]
            gW += abar.T @ h_in
            gb += abar.sum(axis=0)
            hbar = abar @ W
            if tape.order >= 1:
                gW += contract(tabar, t_in)
                tbar = tabar @ W
            if tape.order == 2:
                gW += contract(sabar, s_in)
                sbar = sabar @ W
            if tap is not None and tap == l and tap_bar is not None:
                hbar = hbar + np.asarray(tap_bar, dtype=dt)

        return hbar, grads


@dataclass
class JetTape:
    net: FieldNetwork
    order: int
    n: int
    y: np.ndarray = None
    dy: np.ndarray = None
    d2y: np.ndarray = None

    def __post_init__(self):
        self.layers = []


# ---------------------------------------------------------------------------
# Spec-level derivative operations (thin wrappers over the jets)


def forward(net: FieldNetwork, x):
    return net.forward(x)


def input_gradient(net: FieldNetwork, x) -> np.ndarray:
    """Jacobian d out / d in, shape (out,in) for one point or (N,out,in)."""
    x = np.asarray(x)
    squeeze = x.ndim == 1
    seeds = np.eye(net.input_dim, dtype=net.dtype)
    tape = net.jet_forward(np.atleast_2d(x), seeds=seeds)
    jac = np.swapaxes(tape.dy, 1, 2)  # (N, out, in)
    return jac[0] if squeeze else jac


def param_gradients(net: FieldNetwork, x, upstream):
    """d(upstream . out)/d(params) summed over the batch."""
    x = np.atleast_2d(np.asarray(x))
    upstream = np.asarray(upstream, dtype=net.dtype)
    upstream = np.atleast_2d(upstream)
    if upstream.shape[-1] != net.output_dim:
        raise DimensionMismatch("upstream dim != output dim")
    if upstream.shape[0] == 1 and x.shape[0] > 1:
        upstream = np.broadcast_to(upstream, (x.shape[0], net.output_dim))
    tape = net.jet_forward(x)
    _, grads = net.jet_backward(tape, ybar=upstream)
    return grads


def directional_second_derivative(net: FieldNetwork, x, subset) -> np.ndarray:
    """Sum of d^2 out / d x_i^2 over the index subset, per output channel."""
    x = np.asarray(x)
    squeeze = x.ndim == 1
    subset = np.asarray(subset, dtype=int)
    seeds = np.zeros((subset.size, net.input_dim), dtype=net.dtype)
    seeds[np.arange(subset.size), subset] = 1.0
    tape = net.jet_forward(np.atleast_2d(x), seeds=seeds, order=2)
    lap = tape.d2y.sum(axis=1)  # (N, out)
    return lap[0] if squeeze else lap


# ---------------------------------------------------------------------------
# Initialization


def init_siren(net: FieldNetwork, omega0: float = 30.0, rng=None) -> None:
    """SIREN-style init: first layer U(-1/in,1/in), hidden U(+-sqrt(6/in)/omega)."""
    if net.activation != SINE:
        raise ValueError("init_siren requires sine activation")
    rng = np.random.default_rng(rng)
    net.omegas = [float(omega0)] * (net.n_layers - 1)
    for l, (W, b) in enumerate(net.weights):
        fan_in = W.shape[1]
        if l == 0:
            bound = 1.0 / fan_in
        else:
            bound = np.sqrt(6.0 / fan_in) / omega0
        Wn = rng.uniform(-bound, bound, size=W.shape).astype(net.dtype)
        bn = rng.uniform(-bound, bound, size=b.shape).astype(net.dtype)
        net.weights[l] = (Wn, bn)


def init_relu(net: FieldNetwork, rng=None) -> None:
    """He-uniform init for the relu ablation."""
    rng = np.random.default_rng(rng)
    for l, (W, b) in enumerate(net.weights):
        fan_in = W.shape[1]
        bound = np.sqrt(6.0 / fan_in)
        Wn = rng.uniform(-bound, bound, size=W.shape).astype(net.dtype)
        net.weights[l] = (Wn, np.zeros_like(b))


# ---------------------------------------------------------------------------
# Fourier features for the ray direction


class FourierEncoding:
    """Maps a direction d to {sin(2 k pi d), cos(2 k pi d) : k=1..k_max}."""

    def __init__(self, k_max: int = 4):
        self.k_max = int(k_max)
        self.freqs = 2.0 * np.pi * np.arange(1, self.k_max + 1)

    @property
    def output_dim(self) -> int:
        return 3 * 2 * self.k_max

    def encode(self, d: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(d)
        arg = d[:, None, :] * self.freqs[None, :, None]          # (N,k,3)
        out = np.concatenate([np.sin(arg), np.cos(arg)], axis=2)  # (N,k,6)
        return out.reshape(d.shape[0], -1)

    def encode_jets(self, d: np.ndarray):
        """Value plus first/second derivatives w.r.t. each direction component.

        Returns (val (N,F), d1 (N,3,F), d2 (N,3,F)) where row j of d1/d2 holds
        the derivative w.r.t. d_j (nonzero only in that component's slots).
        """
        d = np.atleast_2d(d)
        n = d.shape[0]
        arg = d[:, None, :] * self.freqs[None, :, None]
        sin, cos = np.sin(arg), np.cos(arg)
        val = np.concatenate([sin, cos], axis=2).reshape(n, -1)
        d1 = np.zeros((n, 3, self.k_max, 6))
        d2 = np.zeros((n, 3, self.k_max, 6))
        for j in range(3):
            d1[:, j, :, j] = self.freqs[None, :] * cos[:, :, j]
            d1[:, j, :, 3 + j] = -self.freqs[None, :] * sin[:, :, j]
            d2[:, j, :, j] = -(self.freqs[None, :] ** 2) * sin[:, :, j]
            d2[:, j, :, 3 + j] = -(self.freqs[None, :] ** 2) * cos[:, :, j]
        return val, d1.reshape(n, 3, -1), d2.reshape(n, 3, -1)


# ---------------------------------------------------------------------------
# The two fields


class SdfField:
    """Signed distance field f(x) with a feature tap at the last hidden layer."""

    def __init__(self, hidden: int = 256, n_hidden: int = 5, omega0: float = 30.0,
                 activation: str = SINE, dtype=np.float32, rng=None):
        dims = [3] + [hidden] * n_hidden + [1]
        self.net = FieldNetwork(dims, activation=activation, dtype=dtype)
        self.feature_dim = hidden
        self.tap = self.net.n_layers - 1
        if activation == SINE:
            init_siren(self.net, omega0, rng)
        else:
            init_relu(self.net, rng)

    def f(self, x) -> np.ndarray:
        """SDF values, shape (N,)."""
        return self.net.forward(np.atleast_2d(x))[:, 0]

    def gradient(self, x) -> np.ndarray:
        """Spatial gradient, shape (N,3)."""
        seeds = np.eye(3, dtype=self.net.dtype)
        tape = self.net.jet_forward(np.atleast_2d(x), seeds=seeds)
        return tape.dy[:, :, 0]

    def value_grad_feature(self, x):
        """(f (N,), grad (N,3), feature (N,F), tape) in one pass."""
        x = np.atleast_2d(x)
        seeds = np.eye(3, dtype=self.net.dtype)
        tape = self.net.jet_forward(x, seeds=seeds)
        feat = tape.layers[self.tap][0]
        return tape.y[:, 0], tape.dy[:, :, 0], feat, tape

    def normals(self, x, eps: float = 1e-8) -> np.ndarray:
        g = self.gradient(x)
        n = np.linalg.norm(g, axis=1, keepdims=True)
        return g / np.maximum(n, eps)

    def astype(self, dtype) -> "SdfField":
        out = object.__new__(SdfField)
        out.net = self.net.astype(dtype)
        out.feature_dim = self.feature_dim
        out.tap = self.tap
        return out


class RadianceField:
    """View-dependent RGB field B(x, r_d, n, z) with optional extra Fourier features."""

    def __init__(self, feature_dim: int = 256, hidden: int = 256, n_hidden: int = 5,
                 k_max: int = 4, use_ff: bool = True, omega0: float = 30.0,
                 activation: str = SINE, dtype=np.float32, rng=None):
        self.ff = FourierEncoding(k_max) if use_ff else None
        self.use_ff = use_ff
        self.feature_dim = feature_dim
        in_dim = 3 + 3 + (self.ff.output_dim if use_ff else 0) + 3 + feature_dim
        dims = [in_dim] + [hidden] * n_hidden + [3]
        self.net = FieldNetwork(dims, activation=activation, dtype=dtype)
        if activation == SINE:
            init_siren(self.net, omega0, rng)
        else:
            init_relu(self.net, rng)

    def assemble_input(self, x, rd, n, z) -> np.ndarray:
        parts = [np.atleast_2d(x), np.atleast_2d(rd)]
        if self.use_ff:
            parts.append(self.ff.encode(rd))
        parts.extend([np.atleast_2d(n), np.atleast_2d(z)])
        return np.concatenate([p.astype(self.net.dtype) for p in parts], axis=1)

    def input_slices(self):
        """Column ranges of (x, rd, ff, n, z) inside the assembled input."""
        ffd = self.ff.output_dim if self.use_ff else 0
        ofs = np.cumsum([0, 3, 3, ffd, 3, self.feature_dim])
        return {
            "x": slice(ofs[0], ofs[1]),
            "rd": slice(ofs[1], ofs[2]),
            "ff": slice(ofs[2], ofs[3]),
            "n": slice(ofs[3], ofs[4]),
            "z": slice(ofs[4], ofs[5]),
        }

    def eval(self, x, rd, n, z, clamp: bool = False) -> np.ndarray:
        rgb = self.net.forward(self.assemble_input(x, rd, n, z))
        return np.clip(rgb, 0.0, 1.0) if clamp else rgb

    def angular_seeds(self, rd):
        """Jet seeds for d/d(rd_j), chaining through the Fourier features."""
        rd = np.atleast_2d(rd)
        n = rd.shape[0]
        dt = self.net.dtype
        seeds = np.zeros((n, 3, self.net.input_dim), dtype=dt)
        seeds2 = np.zeros_like(seeds)
        sl = self.input_slices()
        for j in range(3):
            seeds[:, j, sl["rd"].start + j] = 1.0
        if self.use_ff:
            _, d1, d2 = self.ff.encode_jets(rd)
            seeds[:, :, sl["ff"]] = d1.astype(dt)
            seeds2[:, :, sl["ff"]] = d2.astype(dt)
        return seeds, seeds2

    def angular_laplacian(self, x, rd, n, z):
        """Per-channel sum_j d^2 B / d rd_j^2 including the Fourier chain; (N,3)."""
        seeds, seeds2 = self.angular_seeds(rd)
        tape = self.net.jet_forward(self.assemble_input(x, rd, n, z),
                                    seeds=seeds, seeds2=seeds2)
        return tape.d2y.sum(axis=1)

    def astype(self, dtype) -> "RadianceField":
        out = object.__new__(RadianceField)
        out.ff = self.ff
        out.use_ff = self.use_ff
        out.feature_dim = self.feature_dim
        out.net = self.net.astype(dtype)
        return out


# ---------------------------------------------------------------------------
# Checkpoint serialization (magic "NLRC")

_MAGIC = b"NLRC"
_VERSION = 1


def _write_net(fh, net: FieldNetwork) -> None:
    fh.write(struct.pack("<I", _ACT_TAGS[net.activation]))
    fh.write(struct.pack("<I", len(net.dims)))
    fh.write(struct.pack(f"<{len(net.dims)}I", *net.dims))
    fh.write(struct.pack("<I", len(net.omegas)))
    if net.omegas:
        fh.write(struct.pack(f"<{len(net.omegas)}f", *net.omegas))
    for W, b in net.weights:
        fh.write(np.ascontiguousarray(W, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def _read_net(fh) -> FieldNetwork:
    act = _TAG_ACTS[struct.unpack("<I", fh.read(4))[0]]
    ndims = struct.unpack("<I", fh.read(4))[0]
    dims = struct.unpack(f"<{ndims}I", fh.read(4 * ndims))
    nom = struct.unpack("<I", fh.read(4))[0]
    omegas = list(struct.unpack(f"<{nom}f", fh.read(4 * nom))) if nom else []
    net = FieldNetwork(dims, activation=act, omegas=omegas or None, dtype=np.float32)
    if not omegas:
        net.omegas = []
    for i in range(net.n_layers):
        out_d, in_d = net.weights[i][0].shape
        W = np.frombuffer(fh.read(4 * out_d * in_d), dtype="<f4").reshape(out_d, in_d)
        b = np.frombuffer(fh.read(4 * out_d), dtype="<f4")
        net.weights[i] = (W.copy(), b.copy())
    return net


def save_checkpoint(path, networks: list[FieldNetwork]) -> None:
    """Write networks to the binary checkpoint format (bit-exact round trip)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(networks)))
        for net in networks:
            _write_net(fh, net)


def load_checkpoint(path) -> list[FieldNetwork]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        version = struct.unpack("<I", fh.read(4))[0]
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        count = struct.unpack("<I", fh.read(4))[0]
        return [_read_net(fh) for _ in range(count)]


def save_fields(path, sdf: SdfField, radiance: RadianceField) -> None:
    save_checkpoint(path, [sdf.net, radiance.net])


def load_fields(path) -> tuple[SdfField, RadianceField]:
    nets = load_checkpoint(path)
    if len(nets) != 2:
        raise ValueError(f"{path}: expected 2 networks, found {len(nets)}")
    sdf = object.__new__(SdfField)
    sdf.net = nets[0]
    sdf.feature_dim = nets[0].dims[-2]
    sdf.tap = nets[0].n_layers - 1
    rad = object.__new__(RadianceField)
    rad.net = nets[1]
    # Input layout: x(3) + rd(3) + ff + n(3) + z(feature); recover the split.
    rad.feature_dim = sdf.feature_dim
    ffd = nets[1].dims[0] - 9 - rad.feature_dim
    rad.use_ff = ffd > 0
    rad.ff = FourierEncoding(ffd // 6) if rad.use_ff else None
    return sdf, rad


# ---------------------------------------------------------------------------
# Sphere pretraining


def pretrain_sphere(sdf: SdfField, radius: float = 0.5, steps: int = 2100,
                    batch: int = 2048, lr: float = 3e-4, rng=None,
                    log_every: int = 0) -> float:
    """Regress f to the analytic sphere SDF ||x|| - radius over [-1,1]^3.

    The target includes its gradient (a Sobolev term keeps the field
    eikonal-like away from the center) and samples are biased toward the
    cone apex at the origin, which value-only uniform regression underfits.
    The learning rate halves twice over the run so the apex settles.
    Returns the final value MSE.
    """
    from .trainer import AdamState, adam_step

    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(rng)
    state = AdamState.for_networks([sdf.net])
    dt = sdf.net.dtype
    seeds = np.eye(3, dtype=dt)
    n_radial = int(batch * 0.3)   # radius-uniform draws oversample the apex
    apex_w, apex_sigma = 24.0, 0.15
    grad_excl, w_grad = 0.15, 0.1
    loss = np.inf
    for step in range(steps):
        lr_s = lr * 0.5 ** (step // max(steps // 3, 1))
        x = rng.uniform(-1.0, 1.0, size=(batch, 3)).astype(dt)
        if n_radial:
            d = rng.normal(size=(n_radial, 3))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            x[:n_radial] = (d * rng.uniform(0, 1, size=(n_radial, 1))).astype(dt)
        r = np.linalg.norm(x, axis=1)
        target = (r - radius).astype(dt)
        gt_grad = (x / np.maximum(r, 1e-6)[:, None]).astype(dt)
        grad_ok = (r > grad_excl).astype(dt)[:, None]
        w = 1.0 + apex_w * np.exp(-(r / apex_sigma) ** 2)

        tape = sdf.net.jet_forward(x, seeds=seeds)
        resid = tape.y[:, 0] - target
        loss = float(np.mean(resid ** 2))
        if not np.isfinite(loss):
            raise NonFinite(f"sphere pretraining diverged at step {step}")
        ybar = (2.0 / batch) * (w * resid)[:, None].astype(dt)
        g = tape.dy[:, :, 0]
        dybar = ((2.0 * w_grad / batch) * grad_ok * (g - gt_grad))[:, :, None].astype(dt)
        _, grads = sdf.net.jet_backward(tape, ybar=ybar, dybar=dybar)
        adam_step(state, [sdf.net], [grads], lr_s)
        if log_every and (step + 1) % log_every == 0:
            print(f"[pretrain] step {step + 1}/{steps} mse {loss:.3e}")
    return loss

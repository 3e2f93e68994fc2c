"""Fourier neural operator trunks and the layer-corrected composite model.

The composite model adds to a plain FNO trunk one correction block per
boundary layer:

    output = FNO_0(a) + sum_i Dense_i(a) * exp(extra_FNO_i(a ++ stretched_i))

where `stretched_i` re-samples the whole input stack (function values and
coordinate channels alike) at the layer-local coordinate
xi = (x0 - x) / eps, clamped to the physical domain.  Re-sampling the
coordinate channel hands the extra trunk the clamped stretched coordinate
itself, so a layer profile exp(-c xi) is one affine map away.  Dense_i is
a shallow network applied independently at every node.  Inputs to exp are
clipped to +-20 for stability.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import NonFiniteError, ShapeError
from .grids import Mesh1D, Mesh2D

EXP_CLIP = 20.0


@dataclass(frozen=True)
class FnoConfig:
    """Plain FNO trunk: lift -> depth Fourier layers -> pointwise projection."""

    width: int = 64
    modes: int = 16
    depth: int = 4
    in_channels: int = 2
    out_channels: int = 1
    ndim: int = 1

    def __post_init__(self):
        if min(self.width, self.depth, self.in_channels, self.out_channels) < 1:
            raise ValueError("config dimensions must be positive")
        if self.ndim not in (1, 2):
            raise ValueError("only 1-d and 2-d trunks are supported")
        modes = self.modes if isinstance(self.modes, tuple) else (self.modes,) * self.ndim
        if len(modes) != self.ndim or min(modes) < 1:
            raise ValueError("modes must be positive, one count per spatial dimension")
        object.__setattr__(self, "modes", modes if self.ndim == 2 else modes[0])

    @property
    def proj_hidden(self):
        return 2 * self.width


@dataclass(frozen=True)
class LayerBlockSpec:
    """One correction block: anchor of the layer and, in 2-d, the stretched axis.

    Per-block trunk sizing is optional; None inherits the shared defaults on
    ComFnoConfig.
    """

    location: float
    axis: int = 0
    extra_width: object = None
    extra_modes: object = None
    extra_depth: object = None
    dense_hidden: object = None

    def __post_init__(self):
        if self.axis not in (0, 1):
            raise ValueError("axis must be 0 (x) or 1 (y)")
        if self.dense_hidden is not None:
            object.__setattr__(self, "dense_hidden", tuple(self.dense_hidden))


@dataclass(frozen=True)
class ComFnoConfig:
    """Composite model: base trunk plus zero or more layer correction blocks."""

    base: FnoConfig
    blocks: tuple = (LayerBlockSpec(1.0),)
    extra_width: int = 32
    extra_modes: int = 8
    extra_depth: int = 2
    dense_hidden: tuple = (64,)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "dense_hidden", tuple(self.dense_hidden))
        for blk in self.blocks:
            depth = blk.extra_depth if blk.extra_depth is not None else self.extra_depth
            if depth > self.base.depth:
                raise ValueError("extra trunk depth must not exceed the base depth")

    def extra_config(self, blk):
        def pick(override, default):
            return default if override is None else override

        return FnoConfig(
            width=pick(blk.extra_width, self.extra_width),
            modes=pick(blk.extra_modes, self.extra_modes),
            depth=pick(blk.extra_depth, self.extra_depth),
            in_channels=2 * self.base.in_channels,
            out_channels=self.base.out_channels,
            ndim=self.base.ndim,
        )

    def dense_widths(self, blk):
        hidden = self.dense_hidden if blk.dense_hidden is None else blk.dense_hidden
        return (self.base.in_channels, *hidden, self.base.out_channels)


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _spectral(rng, shape, cin, cout):
    scale = 1.0 / (cin * cout)
    return scale * (rng.random(shape) + 1j * rng.random(shape))


def _init_fno(rng, cfg, params, prefix):
    w = cfg.width
    params[f"{prefix}lift.w"] = _glorot(rng, cfg.in_channels, w)
    params[f"{prefix}lift.b"] = np.zeros(w)
    for i in range(cfg.depth):
        if cfg.ndim == 1:
            params[f"{prefix}layer{i}.r"] = _spectral(rng, (cfg.modes, w, w), w, w)
        else:
            m1, m2 = cfg.modes
            params[f"{prefix}layer{i}.r_low"] = _spectral(rng, (m1, m2, w, w), w, w)
            params[f"{prefix}layer{i}.r_high"] = _spectral(rng, (m1, m2, w, w), w, w)
        params[f"{prefix}layer{i}.w"] = _glorot(rng, w, w)
        params[f"{prefix}layer{i}.b"] = np.zeros(w)
    params[f"{prefix}proj1.w"] = _glorot(rng, w, cfg.proj_hidden)
    params[f"{prefix}proj1.b"] = np.zeros(cfg.proj_hidden)
    params[f"{prefix}proj2.w"] = _glorot(rng, cfg.proj_hidden, cfg.out_channels)
    params[f"{prefix}proj2.b"] = np.zeros(cfg.out_channels)


def _init_dense(rng, widths, params, prefix):
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        params[f"{prefix}dense{i}.w"] = _glorot(rng, fan_in, fan_out)
        params[f"{prefix}dense{i}.b"] = np.zeros(fan_out)


def init_params(config, seed):
    """Deterministic parameter dict for an FnoConfig or ComFnoConfig."""
    rng = np.random.default_rng(int(seed))
    raw = {}
    if isinstance(config, FnoConfig):
        _init_fno(rng, config, raw, "")
    elif isinstance(config, ComFnoConfig):
        _init_fno(rng, config.base, raw, "fno0.")
        for i, blk in enumerate(config.blocks):
            _init_fno(rng, config.extra_config(blk), raw, f"block{i}.fno.")
            _init_dense(rng, config.dense_widths(blk), raw, f"block{i}.")
    else:
        raise TypeError("config must be FnoConfig or ComFnoConfig")
    return {k: ad.Tensor(v, requires_grad=True, name=k) for k, v in raw.items()}


def parameter_count(params):
    """Total count of real scalars (complex entries count twice)."""
    total = 0
    for p in params.values():
        total += p.data.size * (2 if np.iscomplexobj(p.data) else 1)
    return total


def _as_input_tensor(a, cfg):
    t = a if isinstance(a, ad.Tensor) else ad.Tensor(a)
    expected_ndim = cfg.ndim + 2
    if t.data.ndim != expected_ndim or t.data.shape[-1] != cfg.in_channels:
        raise ShapeError(
            f"model input must have shape (batch, nodes..., {cfg.in_channels}); "
            f"got {t.data.shape}"
        )
    return t


def fno_forward(params, cfg, a, prefix=""):
    """Apply the FNO trunk; input (batch, n, c) in 1-d, (batch, ny, nx, c) in 2-d."""
    v = _as_input_tensor(a, cfg)
    v = ad.affine(v, params[f"{prefix}lift.w"], params[f"{prefix}lift.b"])
    for i in range(cfg.depth):
        if cfg.ndim == 1:
            s = ad.spectral_conv(v, params[f"{prefix}layer{i}.r"], cfg.modes)
        else:
            s = ad.spectral_conv2d(
                v, params[f"{prefix}layer{i}.r_low"], params[f"{prefix}layer{i}.r_high"],
                cfg.modes,
            )
        w = ad.affine(v, params[f"{prefix}layer{i}.w"], params[f"{prefix}layer{i}.b"])
        v = ad.add(s, w)
        if i < cfg.depth - 1:
            v = ad.gelu(v)
    v = ad.gelu(ad.affine(v, params[f"{prefix}proj1.w"], params[f"{prefix}proj1.b"]))
    return ad.affine(v, params[f"{prefix}proj2.w"], params[f"{prefix}proj2.b"])


def _dense_forward(params, prefix, a, n_layers):
    v = a
    for i in range(n_layers):
        v = ad.affine(v, params[f"{prefix}dense{i}.w"], params[f"{prefix}dense{i}.b"])
        if i < n_layers - 1:
            v = ad.gelu(v)
    return v


def stretch_coordinates(f_values, x0, eps, nodes):
    """Layer-local re-sampling of nodal functions (batch, n) -> (batch, n).

    The stretched coordinate xi = (x0 - x) / eps is used directly as a
    physical offset from the anchor, saturating at the far end of the
    domain: eval(x) = x0 - clip((x0 - x) / eps, -L, L) with L the domain
    length.  Near the anchor the channel therefore sweeps the whole of f
    across a window of width L * eps (layer-local resolution); in the
    eps -> infinity limit it degenerates to the constant f(x0).
    """
    f_values = np.asarray(f_values, dtype=np.float64)
    nodes = np.asarray(nodes, dtype=np.float64)
    if f_values.ndim != 2 or f_values.shape[1] != nodes.size:
        raise ShapeError(f"stretch: samples {f_values.shape} do not match {nodes.size} nodes")
    length = nodes[-1] - nodes[0]
    eps_arr = np.broadcast_to(np.asarray(eps, dtype=np.float64), (f_values.shape[0],))
    if np.any(eps_arr <= 0.0):
        raise ValueError("eps must be positive")
    out = np.empty_like(f_values)
    for i in range(f_values.shape[0]):
        xi = (x0 - nodes) / eps_arr[i]
        eval_pts = x0 - np.clip(xi, -length, length)
        eval_pts = np.clip(eval_pts, nodes[0], nodes[-1])
        out[i] = np.interp(eval_pts, nodes, f_values[i])
    return out


def _stretched_stack(a_data, blk, eps, mesh, ndim):
    """Re-sample every input channel at the block's stretched coordinates.

    Interpolating the coordinate channel reproduces the (clamped) evaluation
    points themselves, so the stack carries the stretched coordinate along
    with the re-sampled function values.
    """
    if ndim == 1:
        nodes = mesh.nodes if isinstance(mesh, Mesh1D) else np.asarray(mesh)
        chans = [stretch_coordinates(a_data[..., c], blk.location, eps, nodes)
                 for c in range(a_data.shape[-1])]
        return np.stack(chans, axis=-1)
    if not isinstance(mesh, Mesh2D):
        raise ValueError("2-d stretching needs a Mesh2D")
    batch, ny, nx, n_chan = a_data.shape
    eps_b = np.broadcast_to(np.asarray(eps, dtype=np.float64), (batch,))
    out = np.empty_like(a_data)
    if blk.axis == 0:
        nodes = mesh.mesh_x.nodes
        reps = np.repeat(eps_b, ny)
        for c in range(n_chan):
            flat = a_data[..., c].reshape(batch * ny, nx)
            out[..., c] = stretch_coordinates(
                flat, blk.location, reps, nodes).reshape(batch, ny, nx)
        return out
    nodes = mesh.mesh_y.nodes
    reps = np.repeat(eps_b, nx)
    for c in range(n_chan):
        flat = a_data[..., c].transpose(0, 2, 1).reshape(batch * nx, ny)
        out[..., c] = stretch_coordinates(
            flat, blk.location, reps, nodes).reshape(batch, nx, ny).transpose(0, 2, 1)
    return out


def comfno_forward(params, config, a, eps, mesh):
    """Composite forward pass: base trunk plus exponential correction blocks.

    `eps` is a scalar or per-sample (batch,) array used for the coordinate
    stretch; `mesh` supplies node locations for the re-sampling.
    """
    t = _as_input_tensor(a, config.base)
    out = fno_forward(params, config.base, t, prefix="fno0.")
    for i, blk in enumerate(config.blocks):
        stretched = _stretched_stack(t.data, blk, eps, mesh, config.base.ndim)
        a_blk = ad.concat([t, ad.Tensor(stretched)], axis=-1)
        g = fno_forward(params, config.extra_config(blk), a_blk, prefix=f"block{i}.fno.")
        try:
            grower = ad.exp(ad.clip(g, -EXP_CLIP, EXP_CLIP))
        except NonFiniteError as exc:
            raise NonFiniteError(f"block {i}: {exc}") from exc
        n_dense = len(config.dense_widths(blk)) - 1
        coeff = _dense_forward(params, f"block{i}.", t, n_dense)
        out = ad.add(out, ad.mul(coeff, grower))
    return out

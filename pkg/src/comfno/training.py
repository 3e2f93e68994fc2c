"""Dataset generation, binary artifact formats, loss, Adam, and the training loop.

Ground truth is produced by the classical solvers on a fine layer-adapted
mesh and interpolated down to the dataset resolution; inputs are GRF draws
at the dataset resolution plus a coordinate channel (and the per-sample
eps as an extra constant channel in multi-eps mode).

Everything here is deterministic given its seeds: GRF draws are keyed by
(dataset seed, sample index), parameter init by the train seed, and the
batch order of epoch e by (train seed, e), so reruns are bit-identical and
sampling is invariant to partitioning.

Binary formats (little-endian, float64 payloads):

* dataset, magic ``SPDS``: version u32, equation id u32, count u64,
  spatial dims u32, one u64 per-dimension resolution, eps-mode u8
  (0 shared / 1 per-sample), channel count u32, a metadata block of
  length-prefixed UTF-8 key=value entries, then eps values (count), inputs
  and targets, row-major.
* checkpoint, magic ``SPCK``: version u32, a config-echo metadata block,
  loss history (u64 count + float64s), RNG state entry, then named
  parameter tensors (name, dtype tag 0=float64 / 1=complex128, dims, raw
  bytes).  The training RNG is counter-based, so its state is the
  (seed, next epoch) pair recorded in the echo.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (CorruptionError, DegenerateSampleError, DivergedError,
                     FormatError, NonFiniteError, ShapeError)
from .grf import GrfSampler
from .grids import GridFunction, Mesh2D, TimeGrid, interpolate_linear, shishkin_mesh, uniform_mesh
from .models import ComFnoConfig, FnoConfig, comfno_forward, fno_forward, init_params
from .solvers import (EllipticProblem2D, ParabolicProblem, ScalarField, SteadyProblem1D,
                      _elliptic_factorized, _elliptic_solve, solve_parabolic_cn,
                      solve_steady_1d)

DATASET_MAGIC = b"SPDS"
CHECKPOINT_MAGIC = b"SPCK"
FORMAT_VERSION = 1

EQUATION_IDS = {"1d-plain": 1, "1d-turning": 2, "parabolic": 3, "elliptic-2d": 4}
EQUATION_NAMES = {v: k for k, v in EQUATION_IDS.items()}
EQUATION_DOMAINS = {
    "1d-plain": (0.0, 1.0),
    "1d-turning": (-1.0, 1.0),
    "parabolic": (0.0, 1.0),
    "elliptic-2d": (0.0, 1.0),
}


def input_mesh_for(equation, resolution):
    """Uniform dataset-resolution mesh for an equation family."""
    a, b = EQUATION_DOMAINS[equation]
    if equation == "elliptic-2d":
        res = resolution if isinstance(resolution, tuple) else (resolution, resolution)
        return Mesh2D(uniform_mesh(res[1] - 1, a, b), uniform_mesh(res[0] - 1, a, b))
    n = resolution[0] if isinstance(resolution, tuple) else resolution
    return uniform_mesh(n - 1, a, b)


def stack_channels(f_values, mesh, eps=None):
    """Stack model input channels [f, coords..., eps?] along the last axis.

    `f_values` is (count, nodes...) or (count, flat-nodes); `eps`, when
    given, is a scalar or (count,) array appended as a constant channel.
    """
    f_values = np.asarray(f_values, dtype=np.float64)
    if f_values.ndim < 2:
        raise ShapeError("f_values must have a leading sample axis")
    count = f_values.shape[0]
    if isinstance(mesh, Mesh2D):
        ny, nx = mesh.shape
        f_values = f_values.reshape(count, ny, nx)
        coords = mesh.node_coords()
        chans = [f_values,
                 np.broadcast_to(coords[:, 0].reshape(ny, nx), f_values.shape),
                 np.broadcast_to(coords[:, 1].reshape(ny, nx), f_values.shape)]
    else:
        n = mesh.nodes.size
        f_values = f_values.reshape(count, n)
        chans = [f_values, np.broadcast_to(mesh.nodes, f_values.shape)]
    if eps is not None:
        eps_arr = np.asarray(eps, dtype=np.float64).reshape(-1)
        if eps_arr.size == 1:
            eps_arr = np.full(count, float(eps_arr[0]))
        elif eps_arr.size != count:
            raise ShapeError("eps channel needs one value per sample")
        shape = (count,) + (1,) * (f_values.ndim - 1)
        chans.append(np.broadcast_to(eps_arr.reshape(shape), f_values.shape))
    return np.stack(chans, axis=-1)


def _steady_plain_problem(f_field, eps):
    return SteadyProblem1D(eps, b=lambda x: x + 1.0, c=0.0, f=f_field)


def _steady_turning_problem(f_field, eps):
    return SteadyProblem1D(eps, b=lambda x: x * (x + 2.0), c=1.0, f=f_field,
                           a=-1.0, b_end=1.0)


def solve_ground_truth(equation, f_values, input_mesh, eps, fine_n=4096,
                       fine_steps=2048, _cache=None):
    """Fine-mesh classical solve of one sample, interpolated to input_mesh."""
    if equation == "1d-plain":
        f_field = ScalarField.from_nodes(input_mesh, f_values)
        problem = _steady_plain_problem(f_field, eps)
        fine = shishkin_mesh(fine_n, eps, beta=1.0, layers="right")
        u = solve_steady_1d(problem, fine)
    elif equation == "1d-turning":
        f_field = ScalarField.from_nodes(input_mesh, f_values)
        problem = _steady_turning_problem(f_field, eps)
        fine = shishkin_mesh(fine_n, eps, beta=1.0, layers="both", a=-1.0, b=1.0)
        u = solve_steady_1d(problem, fine)
    elif equation == "parabolic":
        s_field = ScalarField.from_nodes(input_mesh, f_values)
        problem = ParabolicProblem(eps, b=1.0, d=lambda x, t: x, f=0.0, s=s_field)
        fine = shishkin_mesh(fine_n, eps, beta=1.0, layers="right")
        u = solve_parabolic_cn(problem, fine, TimeGrid(fine_steps, problem.horizon))
    elif equation == "elliptic-2d":
        f_field = ScalarField.from_nodes(input_mesh, f_values)
        problem = EllipticProblem2D(eps, b1=1.0, b2=1.0, c=1.0, f=f_field)
        fine_1d = shishkin_mesh(min(fine_n, 256), eps, beta=1.0, layers="right")
        fine = Mesh2D(fine_1d, fine_1d)
        if _cache is not None and "lu" in _cache:
            lu, rhs_fn = _cache["lu"]
        else:
            lu, rhs_fn, _ = _elliptic_factorized(problem, fine)
            if _cache is not None:
                _cache["lu"] = (lu, rhs_fn)
        u = GridFunction(fine, _elliptic_solve(lu, rhs_fn(problem.f), fine))
    else:
        raise ValueError(f"unknown equation family {equation!r}")
    return interpolate_linear(u, input_mesh).values


@dataclass
class Dataset:
    """In-memory view of one generated dataset."""

    equation: str
    inputs: np.ndarray    # (count, nodes..., channels)
    targets: np.ndarray   # (count, nodes..., 1)
    eps: np.ndarray       # (count,)
    eps_mode: str         # 'shared' or 'per-sample'
    meta: dict = field(default_factory=dict)
    # set when the nodes are not the family's default uniform grid;
    # such datasets are in-memory only (the file format derives its mesh)
    mesh_override: object = field(default=None, repr=False)

    @property
    def count(self):
        return self.inputs.shape[0]

    @property
    def resolution(self):
        return self.inputs.shape[1:-1]

    @property
    def channels(self):
        return self.inputs.shape[-1]

    @property
    def mesh(self):
        if self.mesh_override is not None:
            return self.mesh_override
        res = self.resolution
        return input_mesh_for(self.equation, res if len(res) == 2 else res[0])


def build_dataset(equation, count, resolution, eps, seed, lengthscale=1.0,
                  fine_n=4096, fine_steps=2048, eps_as_input=False,
                  f_indices=None, index_start=0):
    """Generate `count` (input, solution) pairs for an equation family.

    `eps` is a scalar (shared mode) or a (count,) array (per-sample mode).
    GRF draw i is keyed by (seed, f_indices[i]); by default f_indices is
    index_start + arange(count), so regenerating any sub-range reproduces
    the same functions.
    """
    if equation not in EQUATION_IDS:
        raise ValueError(f"unknown equation family {equation!r}")
    if count < 1:
        raise ValueError("count must be positive")
    mesh = input_mesh_for(equation, resolution)
    eps_arr = np.asarray(eps, dtype=np.float64)
    if eps_arr.ndim == 0:
        eps_mode = "shared"
        eps_arr = np.full(count, float(eps_arr))
    elif eps_arr.shape == (count,):
        eps_mode = "per-sample"
    else:
        raise ShapeError("eps must be a scalar or a (count,) array")
    if np.any(eps_arr <= 0.0) or not np.all(np.isfinite(eps_arr)):
        raise ValueError("eps values must be finite and positive")
    if f_indices is None:
        f_indices = index_start + np.arange(count)
    f_indices = np.asarray(f_indices)
    if f_indices.shape != (count,):
        raise ShapeError("f_indices must have one entry per sample")

    sampler = GrfSampler(mesh, lengthscale)
    is_2d = equation == "elliptic-2d"
    node_shape = mesh.shape if is_2d else (mesh.nodes.size,)
    f_all = np.empty((count,) + node_shape)
    targets = np.empty((count,) + node_shape + (1,))

    cache = {} if (is_2d and eps_mode == "shared") else None
    for i in range(count):
        f = sampler.sample(seed, int(f_indices[i]))
        u = solve_ground_truth(equation, f, mesh, float(eps_arr[i]),
                               fine_n=fine_n, fine_steps=fine_steps, _cache=cache)
        f_all[i] = f.reshape(node_shape)
        targets[i, ..., 0] = u.reshape(node_shape)
    inputs = stack_channels(f_all, mesh, eps_arr if eps_as_input else None)

    meta = {
        "seed": str(int(seed)),
        "kernel": "rbf",
        "lengthscale": repr(float(lengthscale)),
        "fine_mesh": str(int(fine_n if not is_2d else min(fine_n, 256))),
        "eps_as_input": "1" if eps_as_input else "0",
    }
    if equation == "parabolic":
        meta["fine_steps"] = str(int(fine_steps))
    return Dataset(equation, inputs, targets, eps_arr, eps_mode, meta)


# ---------------------------------------------------------------------------
# binary formats


def _write_meta(fh, meta):
    fh.write(struct.pack("<I", len(meta)))
    for key, val in meta.items():
        kb = key.encode("utf-8")
        vb = str(val).encode("utf-8")
        fh.write(struct.pack("<I", len(kb)))
        fh.write(kb)
        fh.write(struct.pack("<I", len(vb)))
        fh.write(vb)


def _read_exact(fh, size, what):
    buf = fh.read(size)
    if len(buf) != size:
        raise CorruptionError(f"truncated file while reading {what}")
    return buf


def _read_meta(fh):
    (n,) = struct.unpack("<I", _read_exact(fh, 4, "metadata count"))
    meta = {}
    for _ in range(n):
        (klen,) = struct.unpack("<I", _read_exact(fh, 4, "metadata key length"))
        key = _read_exact(fh, klen, "metadata key").decode("utf-8")
        (vlen,) = struct.unpack("<I", _read_exact(fh, 4, "metadata value length"))
        meta[key] = _read_exact(fh, vlen, "metadata value").decode("utf-8")
    return meta


def save_dataset(path, dataset):
    if dataset.equation not in EQUATION_IDS or dataset.mesh_override is not None:
        raise FormatError("only datasets on a family's default grid can be saved")
    res = dataset.resolution
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", EQUATION_IDS[dataset.equation]))
        fh.write(struct.pack("<Q", dataset.count))
        fh.write(struct.pack("<I", len(res)))
        for r in res:
            fh.write(struct.pack("<Q", r))
        fh.write(struct.pack("<B", 0 if dataset.eps_mode == "shared" else 1))
        fh.write(struct.pack("<I", dataset.channels))
        _write_meta(fh, dataset.meta)
        fh.write(np.ascontiguousarray(dataset.eps, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dataset.inputs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dataset.targets, dtype="<f8").tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != DATASET_MAGIC:
            raise FormatError(f"bad dataset magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported dataset version {version}")
        (eq_id,) = struct.unpack("<I", _read_exact(fh, 4, "equation id"))
        if eq_id not in EQUATION_NAMES:
            raise FormatError(f"unknown equation id {eq_id}")
        (count,) = struct.unpack("<Q", _read_exact(fh, 8, "count"))
        (sdims,) = struct.unpack("<I", _read_exact(fh, 4, "spatial dims"))
        res = tuple(struct.unpack("<Q", _read_exact(fh, 8, "resolution"))[0]
                    for _ in range(sdims))
        (mode,) = struct.unpack("<B", _read_exact(fh, 1, "eps mode"))
        (channels,) = struct.unpack("<I", _read_exact(fh, 4, "channel count"))
        meta = _read_meta(fh)
        nodes = int(np.prod(res))
        eps = np.frombuffer(_read_exact(fh, 8 * count, "eps values"), dtype="<f8").copy()
        inputs = np.frombuffer(
            _read_exact(fh, 8 * count * nodes * channels, "inputs"), dtype="<f8"
        ).reshape((count, *res, channels)).copy()
        targets = np.frombuffer(
            _read_exact(fh, 8 * count * nodes, "targets"), dtype="<f8"
        ).reshape((count, *res, 1)).copy()
        extra = fh.read(1)
        if extra:
            raise CorruptionError("trailing bytes after dataset payload")
    return Dataset(EQUATION_NAMES[eq_id], inputs, targets, eps,
                   "shared" if mode == 0 else "per-sample", meta)


_DTYPE_TAGS = {0: np.float64, 1: np.complex128}


def save_checkpoint(path, config_echo, params, loss_history, rng_state):
    """Write a trained-model artifact; params is a dict name -> Tensor/ndarray."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        _write_meta(fh, config_echo)
        history = np.asarray(loss_history, dtype="<f8")
        fh.write(struct.pack("<Q", history.size))
        fh.write(history.tobytes())
        state = json.dumps(rng_state).encode("utf-8")
        fh.write(struct.pack("<I", len(state)))
        fh.write(state)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = params[name]
            arr = arr.data if isinstance(arr, ad.Tensor) else np.asarray(arr)
            tag = 1 if np.iscomplexobj(arr) else 0
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", tag))
            fh.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(np.ascontiguousarray(arr, dtype="<c16" if tag else "<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint: (config echo, trainable params, loss history, rng state)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        echo = _read_meta(fh)
        (hn,) = struct.unpack("<Q", _read_exact(fh, 8, "history length"))
        history = np.frombuffer(_read_exact(fh, 8 * hn, "loss history"), dtype="<f8").copy()
        (sn,) = struct.unpack("<I", _read_exact(fh, 4, "rng state length"))
        rng_state = json.loads(_read_exact(fh, sn, "rng state").decode("utf-8"))
        (pn,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        params = {}
        for _ in range(pn):
            (nlen,) = struct.unpack("<I", _read_exact(fh, 4, "tensor name length"))
            name = _read_exact(fh, nlen, "tensor name").decode("utf-8")
            (tag,) = struct.unpack("<B", _read_exact(fh, 1, "dtype tag"))
            if tag not in _DTYPE_TAGS:
                raise FormatError(f"unknown dtype tag {tag}")
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, "tensor rank"))
            shape = tuple(struct.unpack("<Q", _read_exact(fh, 8, "tensor dim"))[0]
                          for _ in range(ndim))
            nbytes = int(np.prod(shape)) * (16 if tag else 8)
            arr = np.frombuffer(_read_exact(fh, nbytes, f"tensor {name}"),
                                dtype="<c16" if tag else "<f8").reshape(shape).copy()
            params[name] = ad.Tensor(arr, requires_grad=True, name=name)
        extra = fh.read(1)
        if extra:
            raise CorruptionError("trailing bytes after checkpoint payload")
    return echo, params, history, rng_state


# ---------------------------------------------------------------------------
# loss, optimizer, loop


def l2_relative_loss(pred, truth):
    """Mean over samples of ||pred - truth||_2 / ||truth||_2 (differentiable)."""
    truth = np.asarray(truth, dtype=np.float64)
    pred_t = pred if isinstance(pred, ad.Tensor) else ad.Tensor(pred)
    if pred_t.data.shape != truth.shape:
        raise ShapeError(f"loss shapes differ: {pred_t.data.shape} vs {truth.shape}")
    b = truth.shape[0]
    denom = np.linalg.norm(truth.reshape(b, -1), axis=1)
    if np.any(denom == 0.0):
        raise DegenerateSampleError("a truth sample has zero norm")
    d = ad.sub(pred_t, ad.Tensor(truth))
    d = ad.reshape(d, (b, -1))
    ssq = ad.tsum(ad.mul(d, d), axis=1)
    return ad.mean(ad.mul(ad.sqrt(ssq), 1.0 / denom))


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.lr and 0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0
                and self.eps_hat > 0.0):
            raise ValueError("invalid Adam hyperparameters")


class AdamState:
    """First/second moments per parameter; complex tensors are updated
    through their float64 views, so the recursion is the standard real one."""

    def __init__(self, params):
        self.m = {}
        self.v = {}
        self.t = 0
        for name, p in params.items():
            view = p.data.view(np.float64)
            self.m[name] = np.zeros_like(view)
            self.v[name] = np.zeros_like(view)


def adam_step(params, state, cfg):
    """One bias-corrected Adam update, in place; returns (params, state)."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name} has no gradient")
        g = p.grad.view(np.float64) if np.iscomplexobj(p.grad) else p.grad
        if not np.all(np.isfinite(g)):
            raise DivergedError(f"non-finite gradient in {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta = p.data.view(np.float64)
        theta -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps_hat)
    return params, state


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 500
    batch_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def model_forward(params, cfg, a, eps, mesh):
    if isinstance(cfg, ComFnoConfig):
        return comfno_forward(params, cfg, a, eps, mesh)
    return fno_forward(params, cfg, a)


def predict(params, cfg, inputs, eps, mesh, batch_size=50):
    """Batched inference; returns an ndarray shaped like the targets."""
    outs = []
    with ad.no_grad():
        for s in range(0, inputs.shape[0], batch_size):
            sl = slice(s, min(s + batch_size, inputs.shape[0]))
            e = eps if np.ndim(eps) == 0 else eps[sl]
            outs.append(model_forward(params, cfg, inputs[sl], e, mesh).data)
    return np.concatenate(outs, axis=0)


def train_loop(model_cfg, dataset, tc):
    """Train a model on a Dataset; returns (params, per-epoch loss history).

    Batch order for epoch e depends only on (tc.seed, e).  A non-finite
    loss aborts with DivergedError carrying the history so far.
    """
    params = init_params(model_cfg, tc.seed)
    state = AdamState(params)
    opt = AdamConfig(lr=tc.lr)
    mesh = dataset.mesh
    inputs, targets, eps = dataset.inputs, dataset.targets, dataset.eps
    count = dataset.count
    shared_eps = float(eps[0]) if dataset.eps_mode == "shared" else None
    history = []
    for epoch in range(tc.epochs):
        perm = np.random.default_rng([tc.seed, epoch]).permutation(count)
        epoch_losses = []
        for s in range(0, count, tc.batch_size):
            idx = perm[s:s + tc.batch_size]
            batch_eps = shared_eps if shared_eps is not None else eps[idx]
            ad.zero_grads(params)
            try:
                pred = model_forward(params, model_cfg, inputs[idx], batch_eps, mesh)
                loss = l2_relative_loss(pred, targets[idx])
                value = float(loss.data)
                if not np.isfinite(value):
                    raise DivergedError("training loss became non-finite", history)
                loss.backward()
                adam_step(params, state, opt)
            except (NonFiniteError, DivergedError) as exc:
                raise DivergedError(f"training diverged: {exc}", history) from exc
            epoch_losses.append(value)
        history.append(float(np.mean(epoch_losses)))
    return params, np.asarray(history)


def rng_state_echo(tc):
    """Counter-based training RNG state: everything needed to resume."""
    return {"scheme": "per-epoch-counter", "seed": int(tc.seed), "next_epoch": int(tc.epochs)}

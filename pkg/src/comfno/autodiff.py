"""Minimal reverse-mode engine over float64 / complex128 numpy arrays.

Ops record their parents on a dynamic tape as they execute; calling
`backward` on the output walks the tape once in reverse topological order
and then frees it.  Gradients of complex tensors follow the real-pairing
convention g = dL/dRe + i dL/dIm, so every linear spectral op backpropagates
through its conjugate transpose: the adjoint of a forward FFT is the inverse
transform scaled by n, and a complex multiply sends the upstream gradient
through conjugated factors.

FFT normalization matches numpy: unnormalized forward, 1/n inverse.
The op set is exactly what the operator models and their training loss
need: dense affine maps, elementwise arithmetic, exp/GELU/clip, channel
concatenation, real FFTs in one and two dimensions, spectral mode
truncation / padding, and the complex modal multiply.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import NonFiniteError, ShapeError, StateError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """Array node on the tape; leaves with requires_grad are parameters."""

    def __init__(self, data, requires_grad=False, name=None):
        data = np.asarray(data)
        if data.dtype == np.complex128:
            pass
        elif np.iscomplexobj(data):
            data = data.astype(np.complex128)
        else:
            data = data.astype(np.float64, copy=False)
        self.data = data
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._op = None
        self._parents = ()
        self._backward_fn = None
        self._exp_peak = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = self.name or self._op or "leaf"
        return f"Tensor({tag}, shape={self.data.shape}, dtype={self.data.dtype})"

    def item(self):
        return self.data.item()

    def backward(self, seed=None):
        """Reverse sweep from this tensor; consumes the tape.

        Raises StateError when no forward tape is recorded (a bare leaf) or
        when this output's tape was already consumed by a previous backward.
        """
        if self._op is None:
            raise StateError("backward called before any recorded forward")
        if self._backward_fn is None:
            raise StateError("backward called twice: tape already consumed")
        if seed is None:
            if self.data.size != 1:
                raise ValueError("non-scalar output needs an explicit seed")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=self.data.dtype)
            if seed.shape != self.data.shape:
                raise ShapeError("seed shape does not match the output shape")

        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p._op is not None:
                    stack.append((p, False))

        for node in topo:
            node.grad = np.zeros_like(node.data)
        self.grad = seed.copy()

        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)
            node._parents = ()
            node._backward_fn = None

    # light operator sugar; constants are wrapped as non-grad leaves
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out, op, parents, backward_fn):
    if _GRAD_ENABLED and any(p.requires_grad or p._op is not None for p in parents):
        out._op = op
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _wants(p):
    return p.requires_grad or p._op is not None


def _accum(p, g):
    if p.grad is None:
        p.grad = np.zeros_like(p.data)
    if g.dtype != p.data.dtype:
        g = g.real.astype(np.float64) if p.data.dtype == np.float64 else g.astype(np.complex128)
    p.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data)

    def backward(g):
        if _wants(a):
            _accum(a, _unbroadcast(g, a.data.shape))
        if _wants(b):
            _accum(b, _unbroadcast(g, b.data.shape))

    return _record(out, "add", (a, b), backward)


def neg(a):
    out = Tensor(-a.data)

    def backward(g):
        if _wants(a):
            _accum(a, -g)

    return _record(out, "neg", (a,), backward)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data - b.data)

    def backward(g):
        if _wants(a):
            _accum(a, _unbroadcast(g, a.data.shape))
        if _wants(b):
            _accum(b, _unbroadcast(-g, b.data.shape))

    return _record(out, "sub", (a, b), backward)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data)

    def backward(g):
        if _wants(a):
            _accum(a, _unbroadcast(g * np.conj(b.data), a.data.shape))
        if _wants(b):
            _accum(b, _unbroadcast(g * np.conj(a.data), b.data.shape))

    return _record(out, "mul", (a, b), backward)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data / b.data)
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError("div produced a non-finite value")

    def backward(g):
        if _wants(a):
            _accum(a, _unbroadcast(g * np.conj(1.0 / b.data), a.data.shape))
        if _wants(b):
            _accum(b, _unbroadcast(g * np.conj(-a.data / b.data**2), b.data.shape))

    return _record(out, "div", (a, b), backward)


def matmul(a, w):
    """(..., k) @ (k, m) dense contraction over the trailing axis."""
    a, w = _wrap(a), _wrap(w)
    if a.data.ndim < 1 or w.data.ndim != 2 or a.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(
            f"matmul: {a.data.shape} @ {w.data.shape} trailing dimensions disagree"
        )
    out = Tensor(a.data @ w.data)

    def backward(g):
        if _wants(a):
            _accum(a, g @ w.data.T)
        if _wants(w):
            k, m = w.data.shape
            _accum(w, a.data.reshape(-1, k).T @ g.reshape(-1, m))

    return _record(out, "matmul", (a, w), backward)


def affine(a, w, b):
    """Pointwise dense layer a @ w + b over the channel axis."""
    return add(matmul(a, w), b)


def exp(a):
    a = _wrap(a)
    if np.iscomplexobj(a.data):
        raise ShapeError("exp is defined for real tensors only")
    with np.errstate(over="ignore"):
        out = Tensor(np.exp(a.data))
    out._exp_peak = float(np.max(np.abs(a.data))) if a.data.size else 0.0
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError("exp overflowed to a non-finite value")

    def backward(g):
        if _wants(a):
            _accum(a, g * out.data)

    return _record(out, "exp", (a,), backward)


def clip(a, lo, hi):
    """Clamp values; gradient passes unchanged inside (lo, hi), zero outside."""
    a = _wrap(a)
    out = Tensor(np.clip(a.data, lo, hi))
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        if _wants(a):
            _accum(a, g * mask)

    return _record(out, "clip", (a,), backward)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a):
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    a = _wrap(a)
    if np.iscomplexobj(a.data):
        raise ShapeError("gelu is defined for real tensors only")
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out = Tensor(a.data * cdf)

    def backward(g):
        if _wants(a):
            pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data**2)
            _accum(a, g * (cdf + a.data * pdf))

    return _record(out, "gelu", (a,), backward)


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    base = list(tensors[0].data.shape)
    ax = axis % len(base)
    for t in tensors[1:]:
        s = list(t.data.shape)
        if len(s) != len(base) or any(s[i] != base[i] for i in range(len(base)) if i != ax):
            raise ShapeError("concat: shapes differ off the concatenation axis")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=ax))
    sizes = [t.data.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=ax)
        for t, piece in zip(tensors, pieces):
            if _wants(t):
                _accum(t, piece)

    return _record(out, "concat", tuple(tensors), backward)


def tsum(a, axis=None, keepdims=False):
    a = _wrap(a)
    out = Tensor(np.sum(a.data, axis=axis, keepdims=keepdims))

    def backward(g):
        if _wants(a):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape).copy())

    return _record(out, "sum", (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = _wrap(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    a = _wrap(a)
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        if _wants(a):
            _accum(a, g.reshape(a.data.shape))

    return _record(out, "reshape", (a,), backward)


def sqrt(a):
    a = _wrap(a)
    if np.iscomplexobj(a.data):
        raise ShapeError("sqrt is defined for real tensors only")
    out = Tensor(np.sqrt(a.data))
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError("sqrt produced a non-finite value")

    def backward(g):
        if _wants(a):
            _accum(a, g * (0.5 / out.data))

    return _record(out, "sqrt", (a,), backward)


# ---------------------------------------------------------------------------
# spectral primitives


def rfft(a, axis):
    """Real FFT along `axis`, unnormalized forward."""
    a = _wrap(a)
    if np.iscomplexobj(a.data):
        raise ShapeError("rfft expects a real tensor")
    n = a.data.shape[axis]
    out = Tensor(np.fft.rfft(a.data, axis=axis))

    def backward(g):
        if _wants(a):
            full = list(a.data.shape)
            pad = np.zeros(full, dtype=np.complex128)
            sl = [slice(None)] * len(full)
            sl[axis] = slice(0, g.shape[axis])
            pad[tuple(sl)] = g
            _accum(a, n * np.real(np.fft.ifft(pad, axis=axis)))

    return _record(out, "rfft", (a,), backward)


def _half_weights(n, m, ndim, axis):
    c = np.full(m, 2.0)
    c[0] = 1.0
    if n % 2 == 0:
        c[-1] = 1.0
    shape = [1] * ndim
    shape[axis] = m
    return c.reshape(shape)


def irfft(a, n, axis):
    """Inverse real FFT along `axis` with output length n (1/n normalization)."""
    a = _wrap(a)
    m = a.data.shape[axis]
    if m != n // 2 + 1:
        raise ShapeError(f"irfft: spectrum length {m} does not match output length {n}")
    out = Tensor(np.fft.irfft(a.data, n=n, axis=axis))
    c = _half_weights(n, m, a.data.ndim, axis)

    def backward(g):
        if _wants(a):
            _accum(a, np.fft.rfft(g, axis=axis) * (c / n))

    return _record(out, "irfft", (a,), backward)


def rfft2(a, axes):
    """Real FFT over two axes (full transform on axes[0], real on axes[1])."""
    a = _wrap(a)
    if np.iscomplexobj(a.data):
        raise ShapeError("rfft2 expects a real tensor")
    ax0, ax1 = axes
    n0, n1 = a.data.shape[ax0], a.data.shape[ax1]
    out = Tensor(np.fft.rfft2(a.data, axes=axes))

    def backward(g):
        if _wants(a):
            pad_shape = list(g.shape)
            pad_shape[ax1] = n1
            pad = np.zeros(pad_shape, dtype=np.complex128)
            sl = [slice(None)] * len(pad_shape)
            sl[ax1] = slice(0, g.shape[ax1])
            pad[tuple(sl)] = g
            _accum(a, n0 * n1 * np.real(np.fft.ifft2(pad, axes=axes)))

    return _record(out, "rfft2", (a,), backward)


def irfft2(a, s, axes):
    """Inverse of rfft2 with spatial output lengths s = (n0, n1)."""
    a = _wrap(a)
    ax0, ax1 = axes
    n0, n1 = s
    if a.data.shape[ax0] != n0 or a.data.shape[ax1] != n1 // 2 + 1:
        raise ShapeError("irfft2: spectrum shape does not match output lengths")
    out = Tensor(np.fft.irfft2(a.data, s=s, axes=axes))
    c = _half_weights(n1, n1 // 2 + 1, a.data.ndim, ax1)

    def backward(g):
        if _wants(a):
            half = np.fft.rfft(g, axis=ax1) * (c / n1)
            _accum(a, np.fft.fft(half, axis=ax0) / n0)

    return _record(out, "irfft2", (a,), backward)


def take_front(a, k, axis):
    """Keep the first k entries along axis (low-frequency truncation)."""
    a = _wrap(a)
    if k > a.data.shape[axis]:
        raise ShapeError(f"take_front: k={k} exceeds axis length {a.data.shape[axis]}")
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(0, k)
    sl = tuple(sl)
    out = Tensor(a.data[sl])

    def backward(g):
        if _wants(a):
            pad = np.zeros_like(a.data)
            pad[sl] = g
            _accum(a, pad)

    return _record(out, "take_front", (a,), backward)


def take_back(a, k, axis):
    """Keep the last k entries along axis (negative-frequency rows)."""
    a = _wrap(a)
    n = a.data.shape[axis]
    if k > n:
        raise ShapeError(f"take_back: k={k} exceeds axis length {n}")
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(n - k, n)
    sl = tuple(sl)
    out = Tensor(a.data[sl])

    def backward(g):
        if _wants(a):
            pad = np.zeros_like(a.data)
            pad[sl] = g
            _accum(a, pad)

    return _record(out, "take_back", (a,), backward)


def pad_front(a, target, axis):
    """Zero-pad along axis up to length target (entries appended at the end)."""
    a = _wrap(a)
    k = a.data.shape[axis]
    if target < k:
        raise ShapeError(f"pad_front: target {target} shorter than input {k}")
    shape = list(a.data.shape)
    shape[axis] = target
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(0, k)
    sl = tuple(sl)
    out_data = np.zeros(shape, dtype=a.data.dtype)
    out_data[sl] = a.data
    out = Tensor(out_data)

    def backward(g):
        if _wants(a):
            _accum(a, g[sl])

    return _record(out, "pad_front", (a,), backward)


def modal_multiply(v, r):
    """Complex per-mode channel mixing.

    1-d: v (batch, modes, cin) x r (modes, cin, cout) -> (batch, modes, cout).
    2-d: v (batch, m1, m2, cin) x r (m1, m2, cin, cout).
    Backpropagates through conjugated products in both directions.
    """
    v, r = _wrap(v), _wrap(r)
    if r.data.ndim == 3:
        if v.data.ndim != 3 or v.data.shape[1:] != r.data.shape[:2]:
            raise ShapeError(
                f"modal_multiply: {v.data.shape} incompatible with {r.data.shape}"
            )
        spec = ("bki,kio->bko", "bko,kio->bki", "bki,bko->kio")
    elif r.data.ndim == 4:
        if v.data.ndim != 4 or v.data.shape[1:] != r.data.shape[:3]:
            raise ShapeError(
                f"modal_multiply: {v.data.shape} incompatible with {r.data.shape}"
            )
        spec = ("bxyi,xyio->bxyo", "bxyo,xyio->bxyi", "bxyi,bxyo->xyio")
    else:
        raise ShapeError("modal_multiply weights must have 3 or 4 dimensions")
    fwd, back_v, back_r = spec
    out = Tensor(np.einsum(fwd, v.data, r.data))

    def backward(g):
        if _wants(v):
            _accum(v, np.einsum(back_v, g, np.conj(r.data)))
        if _wants(r):
            _accum(r, np.einsum(back_r, np.conj(v.data), g))

    return _record(out, "modal_multiply", (v, r), backward)


def spectral_conv(v, r, modes):
    """1-d spectral convolution: irfft(R . truncate(rfft(v))).

    v has shape (batch, n, channels); r is complex (modes, cin, cout).
    Equivalent to a circulant convolution whose frequency response is r on
    the first `modes` bins and zero above.
    """
    v = _wrap(v)
    n = v.data.shape[1]
    half = n // 2 + 1
    if modes > half:
        raise ShapeError(f"spectral_conv: modes={modes} exceeds rfft bins {half}")
    vf = rfft(v, axis=1)
    vk = take_front(vf, modes, axis=1)
    yk = modal_multiply(vk, r)
    yf = pad_front(yk, half, axis=1)
    return irfft(yf, n, axis=1)


def spectral_conv2d(v, r_low, r_high, modes):
    """2-d spectral convolution with corner-mode weights.

    v has shape (batch, n1, n2, channels); r_low mixes rows [0, m1) and
    r_high rows [n1 - m1, n1), both over columns [0, m2); each is complex
    (m1, m2, cin, cout).
    """
    v = _wrap(v)
    m1, m2 = modes
    _, n1, n2, _ = v.data.shape
    half = n2 // 2 + 1
    if m1 > n1 // 2 or m2 > half:
        raise ShapeError(f"spectral_conv2d: modes {modes} too large for grid ({n1}, {n2})")
    vf = rfft2(v, axes=(1, 2))
    cols = take_front(vf, m2, axis=2)
    low = modal_multiply(take_front(cols, m1, axis=1), r_low)
    high = modal_multiply(take_back(cols, m1, axis=1), r_high)
    gap = Tensor(np.zeros((v.data.shape[0], n1 - 2 * m1, m2, low.data.shape[-1]),
                          dtype=np.complex128))
    rows = concat([low, gap, high], axis=1)
    yf = pad_front(rows, half, axis=2)
    return irfft2(yf, s=(n1, n2), axes=(1, 2))


# ---------------------------------------------------------------------------
# verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict
    overflow_risk: bool
    worst_param: str = ""
    details: dict = field(default_factory=dict)


def zero_grads(params):
    """Reset parameter gradients before a fresh backward pass."""
    for p in params.values():
        p.grad = None


def _tape_overflow_risk(out, threshold=30.0):
    seen = set()
    stack = [out]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node._op == "exp" and node._exp_peak is not None and node._exp_peak >= threshold:
            return True
        stack.extend(node._parents)
    return False


def gradient_check(fn, params, step=1e-5):
    """Compare reverse-mode gradients of a scalar fn(params) to central FD.

    `params` is a dict name -> Tensor with requires_grad set.  Every element
    of every parameter is perturbed both ways; complex parameters are
    checked separately in their real and imaginary parts.  The report's
    relative error is per-tensor: max |ad - fd| / max(max |fd|, 1e-12);
    overflow_risk flags any exp on the tape whose input magnitude
    reached 30.
    """
    zero_grads(params)
    out = fn(params)
    if out.data.size != 1:
        raise ValueError("gradient_check needs a scalar-valued function")
    risk = _tape_overflow_risk(out)
    out.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}

    def loss_value():
        with no_grad():
            return float(fn(params).data)

    per_param = {}
    worst = ("", 0.0)
    for name, p in params.items():
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        fd = np.zeros(flat.shape, dtype=p.data.dtype)
        for i in range(flat.size):
            orig = flat[i]
            if np.iscomplexobj(p.data):
                flat[i] = orig + step
                up = loss_value()
                flat[i] = orig - step
                down = loss_value()
                re = (up - down) / (2 * step)
                flat[i] = orig + 1j * step
                up = loss_value()
                flat[i] = orig - 1j * step
                down = loss_value()
                im = (up - down) / (2 * step)
                fd[i] = re + 1j * im
            else:
                flat[i] = orig + step
                up = loss_value()
                flat[i] = orig - step
                down = loss_value()
                fd[i] = (up - down) / (2 * step)
            flat[i] = orig
        fd = fd.reshape(p.data.shape)
        scale = max(float(np.max(np.abs(fd))), 1e-12)
        rel = float(np.max(np.abs(analytic[name] - fd))) / scale
        per_param[name] = rel
        if rel > worst[1]:
            worst = (name, rel)
    return GradCheckReport(worst[1], per_param, risk, worst[0])

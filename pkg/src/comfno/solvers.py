"""Layer-adapted finite-difference solvers for singularly perturbed problems.

The equations handled here share the pattern of a small parameter eps
multiplying the highest derivative, which produces exponential boundary
layers.  Ground truth is computed with simple upwind discretizations on
Shishkin meshes:

* steady 1-d convection-diffusion(-reaction), tridiagonal upwind solve;
* initial-boundary 1-d problems, Crank-Nicolson in time over the same
  spatial operator;
* steady 2-d problems on tensor Shishkin meshes, 5-point upwind with a
  direct sparse solve (sized for meshes up to 257 x 257);
* the eps = 0 reduced problems used by the asymptotic expansions.

Second derivatives on nonuniform meshes use the standard three-point
formula; first derivatives are upwinded against the local convection sign,
which keeps the system matrices M-matrices and the schemes monotone.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import DomainError, NumericError
from .grids import GridFunction, Mesh1D, Mesh2D, interp1d_values, interp2d_values, uniform_mesh


class ScalarField:
    """Real-valued field over x, (x, t) or (x, y), callable on numpy arrays.

    Wraps either a closed-form callable or nodal samples with an attached
    mesh (evaluated by linear / bilinear interpolation).
    """

    def __init__(self, fn, nvars=1):
        if nvars not in (1, 2):
            raise ValueError("fields take one or two coordinates")
        self.fn = fn
        self.nvars = nvars

    @classmethod
    def from_constant(cls, value, nvars=1):
        value = float(value)
        if not np.isfinite(value):
            raise ValueError("constant field value must be finite")
        return cls(lambda *coords: np.full_like(np.asarray(coords[0], dtype=np.float64), value), nvars)

    @classmethod
    def from_nodes(cls, mesh, values):
        gf = values if isinstance(values, GridFunction) else GridFunction(mesh, values)
        if isinstance(mesh, Mesh2D):
            grid = gf.reshape2d()
            return cls(lambda x, y: interp2d_values(mesh, grid, x, y), 2)
        return cls(lambda x: interp1d_values(mesh.nodes, gf.values, x), 1)

    def __call__(self, *coords):
        if len(coords) != self.nvars:
            raise ValueError(f"field expects {self.nvars} coordinate(s)")
        out = np.asarray(self.fn(*[np.asarray(c, dtype=np.float64) for c in coords]), dtype=np.float64)
        return out


def as_field(obj, nvars=1):
    """Coerce a ScalarField, callable, or finite scalar into a ScalarField."""
    if isinstance(obj, ScalarField):
        if obj.nvars != nvars:
            raise ValueError("field has the wrong number of coordinates")
        return obj
    if callable(obj):
        return ScalarField(obj, nvars)
    return ScalarField.from_constant(obj, nvars)


def _check_eps(eps):
    eps = float(eps)
    if not (np.isfinite(eps) and eps > 0.0):
        raise ValueError("eps must be finite and positive")
    return eps


@dataclass
class SteadyProblem1D:
    """-eps u'' + b(x) u' + c(x) u = f(x) on (a, b), Dirichlet traces.

    For turning-point problems pass the full convection x * b(x) as b.
    """

    eps: float
    b: object
    c: object
    f: object
    a: float = 0.0
    b_end: float = 1.0
    u_a: float = 0.0
    u_b: float = 0.0

    def __post_init__(self):
        self.eps = _check_eps(self.eps)
        if not (np.isfinite(self.a) and np.isfinite(self.b_end) and self.a < self.b_end):
            raise ValueError("invalid domain")
        self.b = as_field(self.b, 1)
        self.c = as_field(self.c, 1)
        self.f = as_field(self.f, 1)


@dataclass
class ParabolicProblem:
    """u_t - eps u_xx + b(x,t) u_x + d(x,t) u = f(x,t) with initial s(x)."""

    eps: float
    b: object
    d: object
    f: object
    s: object
    q0: object = 0.0
    q1: object = 0.0
    a: float = 0.0
    b_end: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        self.eps = _check_eps(self.eps)
        if not (np.isfinite(self.horizon) and self.horizon > 0.0):
            raise ValueError("horizon must be positive")
        self.b = as_field(self.b, 2)
        self.d = as_field(self.d, 2)
        self.f = as_field(self.f, 2)
        self.s = as_field(self.s, 1)
        self.q0 = self.q0 if callable(self.q0) else (lambda t, v=float(self.q0): np.full_like(np.asarray(t, dtype=np.float64), v))
        self.q1 = self.q1 if callable(self.q1) else (lambda t, v=float(self.q1): np.full_like(np.asarray(t, dtype=np.float64), v))


@dataclass
class EllipticProblem2D:
    """-eps lap(u) + b1 u_x + b2 u_y + c u = f on a rectangle, u = 0 on the boundary."""

    eps: float
    b1: object
    b2: object
    c: object
    f: object
    ax: float = 0.0
    bx: float = 1.0
    ay: float = 0.0
    by: float = 1.0

    def __post_init__(self):
        self.eps = _check_eps(self.eps)
        self.b1 = as_field(self.b1, 2)
        self.b2 = as_field(self.b2, 2)
        self.c = as_field(self.c, 2)
        self.f = as_field(self.f, 2)


def _check_mesh_covers(mesh, a, b):
    if abs(mesh.a - a) > 1e-12 or abs(mesh.b - b) > 1e-12:
        raise DomainError("mesh does not cover the problem domain")


def _upwind_rows(eps, bvals, cvals, hl, hr):
    """Interior tridiagonal coefficients (lower, diag, upper) on a nonuniform mesh."""
    bpos = np.maximum(bvals, 0.0)
    bneg = np.minimum(bvals, 0.0)
    lower = -2.0 * eps / ((hl + hr) * hl) - bpos / hl
    upper = -2.0 * eps / ((hl + hr) * hr) + bneg / hr
    diag = 2.0 * eps / (hl * hr) + bpos / hl - bneg / hr + cvals
    return lower, diag, upper


def _solve_tridiag(lower, diag, upper, rhs):
    """Solve with boundary identity rows already included in the bands."""
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    try:
        sol = scipy.linalg.solve_banded((1, 1), ab, rhs)
    except scipy.linalg.LinAlgError as exc:
        row = int(np.argmin(np.abs(diag)))
        raise NumericError(f"singular tridiagonal system near row {row}", row=row) from exc
    if not np.all(np.isfinite(sol)):
        row = int(np.argmax(~np.isfinite(sol)))
        raise NumericError(f"non-finite solver output at row {row}", row=row)
    return sol


def steady_operator_bands(problem, mesh):
    """Full tridiagonal bands and boundary data for a steady problem."""
    _check_mesh_covers(mesh, problem.a, problem.b_end)
    x = mesh.nodes
    h = mesh.widths
    hl, hr = h[:-1], h[1:]
    xi = x[1:-1]
    low_i, diag_i, up_i = _upwind_rows(
        problem.eps, problem.b(xi), problem.c(xi), hl, hr
    )
    n = x.size
    lower = np.zeros(n - 1)
    diag = np.ones(n)
    upper = np.zeros(n - 1)
    lower[:-1] = low_i
    diag[1:-1] = diag_i
    upper[1:] = up_i
    return lower, diag, upper


def solve_steady_1d(problem, mesh):
    """Upwind solve of a steady problem on the given (possibly layer-adapted) mesh."""
    lower, diag, upper = steady_operator_bands(problem, mesh)
    rhs = np.empty(mesh.nodes.size)
    rhs[0] = problem.u_a
    rhs[-1] = problem.u_b
    rhs[1:-1] = problem.f(mesh.nodes[1:-1])
    return GridFunction(mesh, _solve_tridiag(lower, diag, upper, rhs))


def _parabolic_interior_rows(problem, mesh, t):
    x = mesh.nodes[1:-1]
    h = mesh.widths
    tcol = np.full_like(x, t)
    return _upwind_rows(problem.eps, problem.b(x, tcol), problem.d(x, tcol), h[:-1], h[1:])


def _fields_time_invariant(problem, mesh, horizon):
    probes = [0.0, 0.37 * horizon, horizon]
    x = mesh.nodes[1:-1]
    for fld in (problem.b, problem.d):
        ref = fld(x, np.full_like(x, probes[0]))
        for t in probes[1:]:
            if not np.array_equal(ref, fld(x, np.full_like(x, t))):
                return False
    return True


def solve_parabolic_cn(problem, mesh, tgrid, keep_history=False):
    """Crank-Nicolson stepping of an initial-boundary problem.

    Each step averages the upwind spatial operator at the old and new time
    levels; Dirichlet traces are imposed on the boundary rows.  Returns the
    final-time GridFunction, or (final, history) with history of shape
    (steps + 1, nodes) when keep_history is set.
    """
    _check_mesh_covers(mesh, problem.a, problem.b_end)
    x = mesh.nodes
    n = x.size
    dt = tgrid.dt
    u = problem.s(x).copy()
    u[0] = float(problem.q0(np.asarray(0.0)))
    u[-1] = float(problem.q1(np.asarray(0.0)))
    history = [u.copy()] if keep_history else None

    frozen = _fields_time_invariant(problem, mesh, tgrid.horizon)
    if frozen:
        low0, diag0, up0 = _parabolic_interior_rows(problem, mesh, 0.0)

    lower = np.zeros(n - 1)
    diag = np.ones(n)
    upper = np.zeros(n - 1)
    xi = x[1:-1]
    for m in range(tgrid.steps):
        t_old = tgrid.t[m]
        t_new = tgrid.t[m + 1]
        if frozen:
            low_o = low_n = low0
            diag_o = diag_n = diag0
            up_o = up_n = up0
        else:
            low_o, diag_o, up_o = _parabolic_interior_rows(problem, mesh, t_old)
            low_n, diag_n, up_n = _parabolic_interior_rows(problem, mesh, t_new)

        f_old = problem.f(xi, np.full_like(xi, t_old))
        f_new = problem.f(xi, np.full_like(xi, t_new))
        au = low_o * u[:-2] + diag_o * u[1:-1] + up_o * u[2:]
        rhs = np.empty(n)
        rhs[1:-1] = u[1:-1] - 0.5 * dt * au + 0.5 * dt * (f_old + f_new)
        rhs[0] = float(problem.q0(np.asarray(t_new)))
        rhs[-1] = float(problem.q1(np.asarray(t_new)))

        lower[:-1] = 0.5 * dt * low_n
        diag[1:-1] = 1.0 + 0.5 * dt * diag_n
        upper[1:] = 0.5 * dt * up_n
        u = _solve_tridiag(lower, diag, upper, rhs)
        if history is not None:
            history.append(u.copy())

    final = GridFunction(mesh, u)
    if keep_history:
        return final, np.asarray(history)
    return final


def solve_elliptic_2d(problem, mesh):
    """5-point upwind solve on a tensor mesh with a direct sparse factorization.

    Suitable for meshes up to about 257 x 257 nodes, where sparse LU is
    still cheap.  Returns the flat row-major GridFunction (x fastest).
    """
    _check_mesh_covers(mesh.mesh_x, problem.ax, problem.bx)
    _check_mesh_covers(mesh.mesh_y, problem.ay, problem.by)
    lu, rhs_fn, _ = _elliptic_factorized(problem, mesh)
    return GridFunction(mesh, _elliptic_solve(lu, rhs_fn(problem.f), mesh))


def _elliptic_factorized(problem, mesh):
    """Sparse LU of the 2-d upwind operator, reusable across source fields."""
    ny, nx = mesh.shape
    xs = mesh.mesh_x.nodes
    ys = mesh.mesh_y.nodes
    hx = mesh.mesh_x.widths
    hy = mesh.mesh_y.widths

    xx, yy = np.meshgrid(xs[1:-1], ys[1:-1])
    b1 = problem.b1(xx, yy)
    b2 = problem.b2(xx, yy)
    cc = problem.c(xx, yy)
    eps = problem.eps

    hxl = hx[:-1][None, :]
    hxr = hx[1:][None, :]
    hyl = hy[:-1][:, None]
    hyr = hy[1:][:, None]

    b1p, b1n = np.maximum(b1, 0.0), np.minimum(b1, 0.0)
    b2p, b2n = np.maximum(b2, 0.0), np.minimum(b2, 0.0)

    west = -2.0 * eps / ((hxl + hxr) * hxl) - b1p / hxl
    east = -2.0 * eps / ((hxl + hxr) * hxr) + b1n / hxr
    south = -2.0 * eps / ((hyl + hyr) * hyl) - b2p / hyl
    north = -2.0 * eps / ((hyl + hyr) * hyr) + b2n / hyr
    center = (2.0 * eps / (hxl * hxr) + 2.0 * eps / (hyl * hyr)
              + b1p / hxl - b1n / hxr + b2p / hyl - b2n / hyr + cc)

    ii, jj = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1))
    k = (jj * nx + ii).ravel()

    rows = [k, k, k, k, k]
    cols = [k, k - 1, k + 1, k - nx, k + nx]
    vals = [center.ravel(), west.ravel(), east.ravel(), south.ravel(), north.ravel()]

    boundary = np.ones(ny * nx, dtype=bool)
    boundary[k] = False
    bidx = np.nonzero(boundary)[0]
    rows.append(bidx)
    cols.append(bidx)
    vals.append(np.ones(bidx.size))

    mat = scipy.sparse.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ny * nx, ny * nx),
    )
    try:
        lu = scipy.sparse.linalg.splu(mat)
    except RuntimeError as exc:
        raise NumericError(f"singular 2-d operator: {exc}") from exc

    def rhs_fn(f_field):
        rhs = np.zeros(ny * nx)
        rhs[k] = f_field(xx, yy).ravel()
        return rhs

    return lu, rhs_fn, k


def _elliptic_solve(lu, rhs, mesh):
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        row = int(np.argmax(~np.isfinite(sol)))
        raise NumericError(f"non-finite 2-d solver output at row {row}", row=row)
    return sol


def _central_derivative(fn, x, h=1e-6):
    return (float(fn(np.asarray(x + h))) - float(fn(np.asarray(x - h)))) / (2.0 * h)


def _rk4_sweep(xgrid, u0, deriv):
    """Classic fourth-order Runge-Kutta along the given node sequence."""
    u = np.empty(xgrid.size)
    u[0] = u0
    for i in range(xgrid.size - 1):
        x0, x1 = xgrid[i], xgrid[i + 1]
        h = x1 - x0
        y = u[i]
        k1 = deriv(x0, y)
        k2 = deriv(x0 + 0.5 * h, y + 0.5 * h * k1)
        k3 = deriv(x0 + 0.5 * h, y + 0.5 * h * k2)
        k4 = deriv(x1, y + h * k3)
        u[i + 1] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u


def solve_reduced(problem, kind, n=4096):
    """Solve the eps = 0 reduced problem on a fine uniform mesh.

    kind='right-layer': b u0' + c u0 = f integrated from the inflow end
    (requires the convection to stay positive).  kind='turning-point':
    x b(x) u0' + c u0 = f seeded at the interior zero of the convection
    with u0(0) = f(0) / c(0) and integrated outward.  kind='elliptic-2d':
    the first-order transport problem b1 u_x + b2 u_y + c u = f with zero
    inflow data, marched with upwind differences.
    """
    if kind == "elliptic-2d":
        return _solve_reduced_transport(problem, n if n != 4096 else 256)
    if kind not in ("right-layer", "turning-point"):
        raise ValueError(f"unknown reduced kind {kind!r}")

    mesh = uniform_mesh(n, problem.a, problem.b_end)
    x = mesh.nodes
    conv, c, f = problem.b, problem.c, problem.f

    if kind == "right-layer":
        cv = conv(x)
        if np.min(cv) <= 0.0:
            raise ValueError("right-layer reduced solve needs positive convection")
        deriv = lambda xx, u: (float(f(np.asarray(xx))) - float(c(np.asarray(xx))) * u) / float(conv(np.asarray(xx)))
        vals = _rk4_sweep(x, problem.u_a, deriv)
        return GridFunction(mesh, vals)

    c0 = float(c(np.asarray(0.0)))
    if c0 == 0.0:
        raise ValueError("turning-point reduced solve undefined when c(0) = 0")
    if not (problem.a < 0.0 < problem.b_end):
        raise ValueError("turning-point domain must contain the origin")
    u_origin = float(f(np.asarray(0.0))) / c0
    b0 = _central_derivative(conv, 0.0)
    if b0 + c0 == 0.0:
        raise ValueError("degenerate turning point: b(0) + c(0) = 0")
    fp0 = _central_derivative(f, 0.0)
    cp0 = _central_derivative(c, 0.0)
    slope_origin = (fp0 - cp0 * u_origin) / (b0 + c0)

    def deriv(xx, u):
        if xx == 0.0:
            return slope_origin
        return (float(f(np.asarray(xx))) - float(c(np.asarray(xx))) * u) / float(conv(np.asarray(xx)))

    if not np.any(np.isclose(x, 0.0, atol=1e-14)):
        raise ValueError("reduced mesh must contain the turning point x = 0")
    i0 = int(np.argmin(np.abs(x)))
    up = _rk4_sweep(x[i0:], u_origin, deriv)
    down = _rk4_sweep(x[i0::-1], u_origin, deriv)
    vals = np.concatenate([down[::-1], up[1:]])
    return GridFunction(mesh, vals)


def _solve_reduced_transport(problem, n):
    mx = uniform_mesh(n, problem.ax, problem.bx)
    my = uniform_mesh(n, problem.ay, problem.by)
    mesh = Mesh2D(mx, my)
    hx = (problem.bx - problem.ax) / n
    hy = (problem.by - problem.ay) / n
    xx, yy = np.meshgrid(mx.nodes, my.nodes)
    b1 = problem.b1(xx, yy)
    b2 = problem.b2(xx, yy)
    if np.min(b1) <= 0.0 or np.min(b2) <= 0.0:
        raise ValueError("reduced transport march needs positive convection components")
    cc = problem.c(xx, yy)
    ff = problem.f(xx, yy)

    u = np.zeros((n + 1, n + 1))
    denom = b1 / hx + b2 / hy + cc
    for j in range(1, n + 1):
        row = u[j]
        prev = u[j - 1]
        for i in range(1, n + 1):
            row[i] = (ff[j, i] + b1[j, i] / hx * row[i - 1] + b2[j, i] / hy * prev[i]) / denom[j, i]
    return GridFunction(mesh, u.ravel())

"""One- and two-dimensional meshes, layer-adapted (Shishkin) grids, and
nodal grid functions.

A Shishkin mesh concentrates half (or, with two layers, a quarter per side)
of the intervals inside transition zones of width

    tau = min(cap, sigma * (eps / beta) * ln n)

next to the outflow boundaries, which is what makes the simple upwind scheme
converge eps-uniformly at rate n^-1 ln n.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError


def _freeze(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Mesh1D:
    """Strictly increasing nodes on [a, b]; kind is 'uniform' or 'shishkin'."""

    nodes: np.ndarray
    kind: str = "uniform"
    tau: float | None = None

    def __post_init__(self):
        nodes = _freeze(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("mesh needs at least two 1-d nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("mesh nodes must be finite")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("mesh nodes must be strictly increasing")

    @property
    def a(self):
        return float(self.nodes[0])

    @property
    def b(self):
        return float(self.nodes[-1])

    @property
    def n(self):
        """Number of intervals."""
        return self.nodes.size - 1

    @property
    def widths(self):
        return np.diff(self.nodes)


@dataclass(frozen=True)
class Mesh2D:
    """Tensor product of two 1-d meshes (x varies fastest in flat ordering)."""

    mesh_x: Mesh1D
    mesh_y: Mesh1D

    @property
    def shape(self):
        """(ny, nx) node counts, matching the row-major value layout."""
        return (self.mesh_y.nodes.size, self.mesh_x.nodes.size)

    @property
    def size(self):
        return self.shape[0] * self.shape[1]

    def node_coords(self):
        """Flat (size, 2) array of (x, y) coordinates, x fastest."""
        xx, yy = np.meshgrid(self.mesh_x.nodes, self.mesh_y.nodes)
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time levels 0 = t_0 < ... < t_nt = horizon."""

    steps: int
    horizon: float
    t: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("time grid needs at least one step")
        if not (np.isfinite(self.horizon) and self.horizon > 0.0):
            raise ValueError("horizon must be finite and positive")
        object.__setattr__(self, "t", _freeze(np.linspace(0.0, self.horizon, self.steps + 1)))

    @property
    def dt(self):
        return self.horizon / self.steps


def uniform_mesh(n, a=0.0, b=1.0):
    """Uniform mesh with n intervals on [a, b]."""
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError("invalid interval [a, b]")
    if n < 1:
        raise ValueError("n must be a positive interval count")
    return Mesh1D(np.linspace(a, b, n + 1), kind="uniform")


def shishkin_mesh(n, eps, beta=1.0, sigma=2.0, layers="right", a=0.0, b=1.0):
    """Piecewise-uniform layer-adapted mesh with n intervals on [a, b].

    layers='right' places n/2 intervals in [b - tau, b]; layers='both'
    places n/4 in each of [a, a + tau] and [b - tau, b].  The transition
    parameter is tau = min(cap, sigma * (eps / beta) * ln n) with cap
    (b - a)/2 for a single layer and (b - a)/4 for two.
    """
    if n < 4 or n % 4 != 0:
        raise ValueError("n must be a positive multiple of 4")
    if not (np.isfinite(eps) and 0.0 < eps <= 1.0):
        raise ValueError("eps must lie in (0, 1]")
    if beta <= 0.0 or sigma <= 0.0:
        raise ValueError("beta and sigma must be positive")
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError("invalid interval [a, b]")
    if layers not in ("right", "both"):
        raise ValueError("layers must be 'right' or 'both'")

    length = b - a
    cap = length / 2.0 if layers == "right" else length / 4.0
    tau = min(cap, sigma * (eps / beta) * float(np.log(n)))

    if layers == "right":
        half = n // 2
        left = np.linspace(a, b - tau, half + 1)
        right = np.linspace(b - tau, b, half + 1)
        nodes = np.concatenate([left, right[1:]])
    else:
        quarter = n // 4
        lo = np.linspace(a, a + tau, quarter + 1)
        mid = np.linspace(a + tau, b - tau, n // 2 + 1)
        hi = np.linspace(b - tau, b, quarter + 1)
        nodes = np.concatenate([lo, mid[1:], hi[1:]])
    return Mesh1D(nodes, kind="shishkin", tau=float(tau))


@dataclass(frozen=True)
class GridFunction:
    """Finite nodal values attached to a mesh (flat row-major for 2-d)."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values)
        object.__setattr__(self, "values", vals)
        expected = self.mesh.size if isinstance(self.mesh, Mesh2D) else self.mesh.nodes.size
        if vals.ndim != 1 or vals.size != expected:
            raise ShapeError(
                f"grid function has {vals.size} values for {expected} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must all be finite")

    def reshape2d(self):
        if not isinstance(self.mesh, Mesh2D):
            raise ValueError("reshape2d needs a 2-d mesh")
        return self.values.reshape(self.mesh.shape)


def _check_inside(points, lo, hi, slack=1e-12):
    points = np.asarray(points, dtype=np.float64)
    if points.size and (points.min() < lo - slack or points.max() > hi + slack):
        raise DomainError(
            f"interpolation points outside [{lo}, {hi}]"
        )
    return np.clip(points, lo, hi)


def interp1d_values(src_nodes, src_values, dst_points):
    """Piecewise-linear interpolation with domain checking."""
    pts = _check_inside(dst_points, src_nodes[0], src_nodes[-1])
    return np.interp(pts, src_nodes, src_values)


def _axis_weights(src_nodes, dst_points):
    pts = _check_inside(dst_points, src_nodes[0], src_nodes[-1])
    hi = np.clip(np.searchsorted(src_nodes, pts, side="left"), 1, src_nodes.size - 1)
    lo = hi - 1
    w = (pts - src_nodes[lo]) / (src_nodes[hi] - src_nodes[lo])
    return lo, hi, w


def interp2d_values(mesh, grid_values, x_points, y_points):
    """Bilinear tensor-product interpolation of (ny, nx) nodal values."""
    ix0, ix1, wx = _axis_weights(mesh.mesh_x.nodes, x_points)
    iy0, iy1, wy = _axis_weights(mesh.mesh_y.nodes, y_points)
    g = grid_values
    return ((1 - wy) * ((1 - wx) * g[iy0, ix0] + wx * g[iy0, ix1])
            + wy * ((1 - wx) * g[iy1, ix0] + wx * g[iy1, ix1]))


def interpolate_linear(gf, dst_mesh):
    """Interpolate a GridFunction onto dst_mesh (linear / bilinear).

    Exact at shared nodes and for affine data; raises DomainError when
    dst_mesh reaches outside the source domain.
    """
    src = gf.mesh
    if isinstance(src, Mesh2D):
        if not isinstance(dst_mesh, Mesh2D):
            raise ValueError("2-d grid functions interpolate onto 2-d meshes")
        coords = dst_mesh.node_coords()
        vals = interp2d_values(src, gf.reshape2d(), coords[:, 0], coords[:, 1])
        return GridFunction(dst_mesh, vals)
    if isinstance(dst_mesh, Mesh2D):
        raise ValueError("1-d grid functions interpolate onto 1-d meshes")
    return GridFunction(dst_mesh, interp1d_values(src.nodes, gf.values, dst_mesh.nodes))

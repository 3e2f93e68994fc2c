"""Order-zero matched asymptotic expansions and layer diagnostics.

The expansion u_as = u0 + boundary-layer corrections satisfies
|u - u_as| <= C * eps with C independent of eps; `verify_expansion`
reports sup-norm error and the fitted C = sup / eps, and
`layer_decay_check` fits the exponential decay rate of u - u0 near an
outflow boundary.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError
from .grids import GridFunction, Mesh2D, interp1d_values, interpolate_linear
from .solvers import solve_reduced


@dataclass
class LayerTerm:
    """One exponential boundary-layer correction term.

    Edge terms evaluate amplitude * exp(-rate * dist / eps) with dist the
    distance from the anchor; the 2-d corner term uses the product
    exp(-rate * dist_x * dist_y / eps^2).  Amplitude and rate are scalars,
    or callables of the tangential coordinate for 2-d edge terms.
    """

    kind: str  # 'edge' or 'corner'
    location: float
    eps: float
    amplitude: object
    rate: object
    direction: int = 1  # +1: domain lies below location, -1: above
    axis: int | None = None  # 2-d edge terms: 0 = layer in x, 1 = layer in y
    location_y: float | None = None  # corner only

    def _dist(self, coord, location):
        d = self.direction * (location - np.asarray(coord, dtype=np.float64))
        return np.maximum(d, 0.0)

    def evaluate(self, x, y=None):
        if self.kind == "corner":
            dx = np.maximum(self.location - np.asarray(x, dtype=np.float64), 0.0)
            dy = np.maximum(self.location_y - np.asarray(y, dtype=np.float64), 0.0)
            return self.amplitude * np.exp(-self.rate * dx * dy / self.eps**2)
        if y is None:
            dist = self._dist(x, self.location)
            return self.amplitude * np.exp(-self.rate * dist / self.eps)
        tangent = np.asarray(y if self.axis == 0 else x, dtype=np.float64)
        normal = x if self.axis == 0 else y
        amp = self.amplitude(tangent) if callable(self.amplitude) else self.amplitude
        rate = self.rate(tangent) if callable(self.rate) else self.rate
        dist = self._dist(normal, self.location)
        return amp * np.exp(-rate * dist / self.eps)

    def peak_magnitude(self):
        if callable(self.amplitude):
            raise ValueError("trace amplitudes have no single peak value")
        return abs(self.amplitude)


@dataclass
class Expansion0:
    """Reduced solution plus layer terms, evaluable on any mesh in-domain."""

    u0: GridFunction
    terms: list
    eps: float
    kind: str

    def evaluate(self, mesh):
        base = interpolate_linear(self.u0, mesh)
        vals = base.values.copy()
        if isinstance(mesh, Mesh2D):
            coords = mesh.node_coords()
            for term in self.terms:
                vals = vals + term.evaluate(coords[:, 0], coords[:, 1])
        else:
            for term in self.terms:
                vals = vals + term.evaluate(mesh.nodes)
        return GridFunction(mesh, vals)


@dataclass
class ExpansionReport:
    sup_error: float
    fitted_c: float
    eps: float
    argmax_node: int


@dataclass
class LayerDecayReport:
    fitted_rate: float
    expected_rate: float
    nodes_used: int
    passed: bool


def build_expansion0(problem, kind, reduced_n=4096):
    """Assemble the order-zero expansion for a problem of the given kind.

    kind='right': u_as = u0 - (u0(b) - u(b)) exp(-b(b)(b - x)/eps).
    kind='turning': corrections at both endpoints with decay set by the
    magnitude of the full convection there.  kind='elliptic-2d': two edge
    corrections with trace amplitudes plus the corner product term.
    """
    eps = problem.eps
    if kind == "right":
        u0 = solve_reduced(problem, "right-layer", n=reduced_n)
        end = problem.b_end
        amp = problem.u_b - float(u0.values[-1])
        rate = float(problem.b(np.asarray(end)))
        if rate <= 0.0:
            raise ValueError("right layer needs positive convection at the outflow end")
        term = LayerTerm("edge", end, eps, amp, rate, direction=1)
        return Expansion0(u0, [term], eps, kind)

    if kind == "turning":
        u0 = solve_reduced(problem, "turning-point", n=reduced_n)
        right_rate = float(problem.b(np.asarray(problem.b_end)))
        left_rate = abs(float(problem.b(np.asarray(problem.a))))
        if right_rate <= 0.0 or left_rate <= 0.0:
            raise ValueError("turning-point layers need nonzero convection at both ends")
        right = LayerTerm("edge", problem.b_end, eps,
                          problem.u_b - float(u0.values[-1]), right_rate, direction=1)
        left = LayerTerm("edge", problem.a, eps,
                         problem.u_a - float(u0.values[0]), left_rate, direction=-1)
        return Expansion0(u0, [right, left], eps, kind)

    if kind == "elliptic-2d":
        u0 = solve_reduced(problem, "elliptic-2d", n=min(reduced_n, 256))
        mesh = u0.mesh
        grid = u0.reshape2d()
        xs = mesh.mesh_x.nodes
        ys = mesh.mesh_y.nodes
        bx, by = problem.bx, problem.by
        trace_x = grid[:, -1].copy()   # u0(bx, y) over y
        trace_y = grid[-1, :].copy()   # u0(x, by) over x
        term_x = LayerTerm(
            "edge", bx, eps,
            amplitude=lambda y, t=trace_x, yy=ys: -interp1d_values(yy, t, y),
            rate=lambda y, f=problem.b1, b=bx: f(np.full_like(np.asarray(y, dtype=np.float64), b), y),
            direction=1, axis=0,
        )
        term_y = LayerTerm(
            "edge", by, eps,
            amplitude=lambda x, t=trace_y, xx=xs: -interp1d_values(xx, t, x),
            rate=lambda x, f=problem.b2, b=by: f(x, np.full_like(np.asarray(x, dtype=np.float64), b)),
            direction=1, axis=1,
        )
        corner_rate = float(problem.b1(np.asarray(bx), np.asarray(by))) * float(
            problem.b2(np.asarray(bx), np.asarray(by))
        )
        corner = LayerTerm("corner", bx, eps, float(grid[-1, -1]), corner_rate,
                           location_y=by)
        return Expansion0(u0, [term_x, term_y, corner], eps, kind)

    raise ValueError(f"unknown expansion kind {kind!r}")


def verify_expansion(u_ref, expansion, eps=None):
    """Sup-norm error of the expansion against a reference grid function."""
    eps = expansion.eps if eps is None else float(eps)
    ref_mesh = u_ref.mesh
    exp_mesh = expansion.u0.mesh
    if isinstance(ref_mesh, Mesh2D) != isinstance(exp_mesh, Mesh2D):
        raise ValueError("reference and expansion dimensionality differ")
    if isinstance(ref_mesh, Mesh2D):
        same = (abs(ref_mesh.mesh_x.a - exp_mesh.mesh_x.a) < 1e-12
                and abs(ref_mesh.mesh_x.b - exp_mesh.mesh_x.b) < 1e-12
                and abs(ref_mesh.mesh_y.a - exp_mesh.mesh_y.a) < 1e-12
                and abs(ref_mesh.mesh_y.b - exp_mesh.mesh_y.b) < 1e-12)
    else:
        same = abs(ref_mesh.a - exp_mesh.a) < 1e-12 and abs(ref_mesh.b - exp_mesh.b) < 1e-12
    if not same:
        raise ValueError("reference mesh does not match the expansion domain")
    approx = expansion.evaluate(ref_mesh)
    diff = np.abs(u_ref.values - approx.values)
    idx = int(np.argmax(diff))
    sup = float(diff[idx])
    return ExpansionReport(sup, sup / eps, eps, idx)


def layer_decay_check(u_ref, u0, x0, beta, eps, collar=2.0, floor=1e-12, min_nodes=4):
    """Fit the exponential decay rate of |u_ref - u0| away from x0.

    Nodes within `collar * eps` of the anchor or with difference below
    `floor` are excluded; fewer than `min_nodes` usable nodes raises
    InsufficientDataError.  Passes when the fitted rate reaches 80% of
    beta / eps.
    """
    if beta <= 0.0 or eps <= 0.0:
        raise ValueError("beta and eps must be positive")
    mesh = u_ref.mesh
    u0_on_ref = interpolate_linear(u0, mesh)
    diff = np.abs(u_ref.values - u0_on_ref.values)
    dist = np.abs(x0 - mesh.nodes)
    keep = (dist >= collar * eps) & (diff > floor)
    if int(keep.sum()) < min_nodes:
        raise InsufficientDataError(
            f"only {int(keep.sum())} usable nodes for the decay fit (need {min_nodes})"
        )
    slope = np.polyfit(dist[keep], np.log(diff[keep]), 1)[0]
    fitted = -float(slope)
    expected = beta / eps
    return LayerDecayReport(fitted, expected, int(keep.sum()), fitted >= 0.8 * expected)

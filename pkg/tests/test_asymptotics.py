import numpy as np
import pytest

from comfno.asymptotics import (Expansion0, LayerTerm, build_expansion0,
                                layer_decay_check, verify_expansion)
from comfno.errors import InsufficientDataError
from comfno.grids import GridFunction, Mesh2D, shishkin_mesh, uniform_mesh
from comfno.solvers import EllipticProblem2D, SteadyProblem1D, solve_steady_1d


def closed_form(x, eps):
    return x - (np.exp(-(1.0 - x) / eps) - np.exp(-1.0 / eps)) / (1.0 - np.exp(-1.0 / eps))


def test_layer_term_peak_at_anchor():
    term = LayerTerm("edge", location=1.0, eps=1e-2, amplitude=-1.0, rate=1.0)
    x = np.linspace(0.0, 1.0, 101)
    vals = term.evaluate(x)
    assert vals[-1] == pytest.approx(-1.0)
    assert np.all(np.abs(vals) <= 1.0 + 1e-15)
    assert abs(vals[0]) < 1e-40


def test_layer_term_direction_flips_decay_side():
    term = LayerTerm("edge", location=-1.0, eps=1e-2, amplitude=2.0, rate=1.0,
                     direction=-1)
    x = np.linspace(-1.0, 1.0, 201)
    vals = term.evaluate(x)
    assert vals[0] == pytest.approx(2.0)
    assert vals[-1] < 1e-40


def test_corner_term_product_decay():
    term = LayerTerm("corner", location=1.0, location_y=1.0, eps=1e-1,
                     amplitude=1.0, rate=1.0)
    # product structure: exp(-dx*dy/eps^2)
    v = term.evaluate(np.array([0.9]), np.array([0.8]))
    assert v[0] == pytest.approx(np.exp(-0.1 * 0.2 / 1e-2))
    assert term.evaluate(np.array([1.0]), np.array([1.0]))[0] == pytest.approx(1.0)


def test_expansion_error_bounded_by_eps_closed_form():
    # u - (u0 + v0) for the constant-coefficient problem, where u0 = x and
    # v0 kills the layer jump; sup error stays a small multiple of eps
    for eps in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
        problem = SteadyProblem1D(eps, b=1.0, c=0.0, f=1.0)
        expansion = build_expansion0(problem, "right")
        mesh = shishkin_mesh(512, eps)
        u_ref = GridFunction(mesh, closed_form(mesh.nodes, eps))
        report = verify_expansion(u_ref, expansion)
        assert report.fitted_c <= 10.0
        assert report.eps == eps


def test_expansion_right_layer_anchors_to_boundary_value():
    eps = 1e-3
    problem = SteadyProblem1D(eps, b=lambda x: x + 1.0, c=0.0, f=1.0)
    expansion = build_expansion0(problem, "right")
    mesh = uniform_mesh(200)
    vals = expansion.evaluate(mesh).values
    # layer term restores the outflow boundary condition u(1) = 0
    assert vals[-1] == pytest.approx(problem.u_b, abs=1e-10)


def test_expansion_turning_point_has_two_terms():
    problem = SteadyProblem1D(1e-3, b=lambda x: x * (x + 2.0), c=1.0, f=1.0,
                              a=-1.0, b_end=1.0)
    expansion = build_expansion0(problem, "turning")
    assert len(expansion.terms) == 2
    locs = sorted(t.location for t in expansion.terms)
    assert locs == [-1.0, 1.0]
    mesh = uniform_mesh(400, -1.0, 1.0)
    vals = expansion.evaluate(mesh).values
    assert vals[0] == pytest.approx(problem.u_a, abs=1e-8)
    assert vals[-1] == pytest.approx(problem.u_b, abs=1e-8)


def test_expansion_matches_turning_point_solver():
    eps = 1e-3
    problem = SteadyProblem1D(eps, b=lambda x: x * (x + 2.0), c=1.0, f=1.0,
                              a=-1.0, b_end=1.0)
    mesh = shishkin_mesh(1024, eps, layers="both", a=-1.0, b=1.0)
    u = solve_steady_1d(problem, mesh)
    expansion = build_expansion0(problem, "turning")
    report = verify_expansion(u, expansion)
    # order-0 expansion error is a modest multiple of eps
    assert report.sup_error < 0.2
    assert report.fitted_c < 100.0


def test_expansion_elliptic_terms():
    problem = EllipticProblem2D(1e-2, b1=1.0, b2=1.0, c=1.0, f=1.0)
    expansion = build_expansion0(problem, "elliptic-2d")
    kinds = sorted(t.kind for t in expansion.terms)
    assert kinds == ["corner", "edge", "edge"]
    m1 = uniform_mesh(32)
    mesh = Mesh2D(m1, m1)
    vals = expansion.evaluate(mesh).values
    assert vals.shape == (33 * 33,)
    assert np.all(np.isfinite(vals))
    # outflow corner is pinned back to the boundary value 0
    assert vals.reshape(33, 33)[-1, -1] == pytest.approx(0.0, abs=1e-8)


def test_verify_expansion_domain_mismatch():
    problem = SteadyProblem1D(1e-2, b=1.0, c=0.0, f=1.0)
    expansion = build_expansion0(problem, "right")
    other = GridFunction(uniform_mesh(16, -1.0, 1.0), np.zeros(17))
    with pytest.raises(ValueError):
        verify_expansion(other, expansion)


def test_layer_decay_check_recovers_rate():
    eps = 1e-2
    mesh = shishkin_mesh(512, eps)
    x = mesh.nodes
    u0 = x.copy()
    u = u0 - np.exp(-(1.0 - x) / eps)
    report = layer_decay_check(GridFunction(mesh, u), GridFunction(mesh, u0),
                               x0=1.0, beta=1.0, eps=eps)
    assert report.passed
    assert report.fitted_rate == pytest.approx(1.0 / eps, rel=0.05)
    assert report.expected_rate == pytest.approx(1.0 / eps)


def test_layer_decay_check_needs_enough_nodes():
    eps = 1e-2
    mesh = uniform_mesh(4)
    u = GridFunction(mesh, np.zeros(5))
    with pytest.raises(InsufficientDataError):
        layer_decay_check(u, u, x0=1.0, beta=1.0, eps=eps)


def test_expansion0_plain_dataclass_evaluate():
    mesh = uniform_mesh(10)
    term = LayerTerm("edge", location=1.0, eps=0.1, amplitude=1.0, rate=2.0)
    exp0 = Expansion0(u0=GridFunction(mesh, mesh.nodes), terms=(term,),
                      eps=0.1, kind="right")
    vals = exp0.evaluate(mesh).values
    assert vals[-1] == pytest.approx(2.0)  # u0(1) + amplitude

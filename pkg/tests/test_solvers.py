import numpy as np
import pytest

from comfno.errors import DomainError, NumericError
from comfno.grids import GridFunction, Mesh2D, TimeGrid, shishkin_mesh, uniform_mesh
from comfno.solvers import (EllipticProblem2D, ParabolicProblem, ScalarField,
                            SteadyProblem1D, solve_elliptic_2d, solve_parabolic_cn,
                            solve_reduced, solve_steady_1d, steady_operator_bands)


def closed_form(x, eps):
    """u for -eps u'' + u' = 1, u(0)=u(1)=0."""
    return x - (np.exp(-(1.0 - x) / eps) - np.exp(-1.0 / eps)) / (1.0 - np.exp(-1.0 / eps))


def test_closed_form_midpoint_frozen():
    assert closed_form(0.5, 0.1) == pytest.approx(0.49330714907571516, abs=1e-16)


def test_scalar_field_coercion():
    f = ScalarField.from_constant(2.0)
    assert f(np.array([0.1, 0.9])).tolist() == [2.0, 2.0]
    m = uniform_mesh(4)
    g = ScalarField.from_nodes(m, m.nodes**2)
    assert g(np.array([0.5])) == pytest.approx(0.25, abs=0.05)
    with pytest.raises(TypeError):
        ScalarField(lambda x, y: x, nvars=1)(np.zeros(3))


def test_steady_solver_matches_closed_form():
    eps = 0.1
    problem = SteadyProblem1D(eps, b=1.0, c=0.0, f=1.0)
    mesh = shishkin_mesh(1024, eps)
    u = solve_steady_1d(problem, mesh)
    err = np.max(np.abs(u.values - closed_form(mesh.nodes, eps)))
    assert err < 3e-3
    mid = np.searchsorted(mesh.nodes, 0.5)
    assert u.values[mid] == pytest.approx(closed_form(mesh.nodes[mid], eps), abs=3e-3)


def test_steady_solver_boundary_values():
    problem = SteadyProblem1D(1e-3, b=lambda x: x + 1.0, c=0.0, f=1.0,
                              u_a=0.3, u_b=-0.2)
    mesh = shishkin_mesh(64, 1e-3)
    u = solve_steady_1d(problem, mesh)
    assert u.values[0] == pytest.approx(0.3, abs=1e-12)
    assert u.values[-1] == pytest.approx(-0.2, abs=1e-12)


def test_steady_eps_uniform_convergence():
    # max error <= C n^{-1} ln n with C stable across eps: the layer is resolved
    for eps in (1e-2, 1e-3, 1e-4):
        problem = SteadyProblem1D(eps, b=1.0, c=0.0, f=1.0)
        cs = []
        for n in (64, 256, 1024):
            mesh = shishkin_mesh(n, eps)
            u = solve_steady_1d(problem, mesh)
            err = np.max(np.abs(u.values - closed_form(mesh.nodes, eps)))
            cs.append(err * n / np.log(n))
        assert max(cs) < 1.2
        assert max(cs) / min(cs) < 1.5


def test_steady_negative_convection_layer_at_left():
    # b < 0 puts the outflow (and the layer) at x = 0
    eps = 1e-3
    problem = SteadyProblem1D(eps, b=-1.0, c=0.0, f=1.0)
    mesh = shishkin_mesh(256, eps, layers="both", a=0.0, b=1.0)
    u = solve_steady_1d(problem, mesh)
    assert np.all(np.isfinite(u.values))
    grad_left = abs(u.values[1] - u.values[0]) / mesh.widths[0]
    grad_mid = abs(np.diff(u.values)[mesh.n // 2]) / mesh.widths[mesh.n // 2]
    assert grad_left > 10 * grad_mid


def test_operator_bands_identity_rows():
    problem = SteadyProblem1D(1e-2, b=1.0, c=0.0, f=1.0)
    mesh = uniform_mesh(8)
    lower, diag, upper = steady_operator_bands(problem, mesh)
    assert diag[0] == 1.0 and diag[-1] == 1.0
    assert upper[0] == 0.0 and lower[-1] == 0.0
    assert lower.size == diag.size - 1 == upper.size


def test_steady_reaction_term_shifts_solution():
    eps = 1e-2
    base = SteadyProblem1D(eps, b=1.0, c=0.0, f=1.0)
    withc = SteadyProblem1D(eps, b=1.0, c=5.0, f=1.0)
    mesh = shishkin_mesh(256, eps)
    ub = solve_steady_1d(base, mesh).values
    uc = solve_steady_1d(withc, mesh).values
    assert np.max(uc) < np.max(ub)


def test_parabolic_manufactured_solution():
    # choose f so that u(x,t) = t * sin(pi x) solves u_t - eps u_xx + u_x = f
    eps = 0.05
    problem = ParabolicProblem(
        eps, b=1.0, d=0.0,
        f=ScalarField(lambda x, t: (np.sin(np.pi * x)
                                    + eps * t * np.pi**2 * np.sin(np.pi * x)
                                    + t * np.pi * np.cos(np.pi * x)), nvars=2),
        s=0.0, q0=0.0, q1=0.0)
    errs = []
    for n, steps in ((128, 256), (256, 512)):
        mesh = uniform_mesh(n)
        u = solve_parabolic_cn(problem, mesh, TimeGrid(steps, 1.0))
        exact = 1.0 * np.sin(np.pi * mesh.nodes)
        errs.append(np.max(np.abs(u.values - exact)))
    assert errs[1] < 1e-2
    # upwind convection limits the pair to first order in h
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.15)


def test_parabolic_history_and_initial_condition():
    eps = 1e-2
    problem = ParabolicProblem(eps, b=1.0, d=0.0, f=0.0, s=1.0)
    mesh = shishkin_mesh(64, eps)
    tgrid = TimeGrid(32, 1.0)
    final, hist = solve_parabolic_cn(problem, mesh, tgrid, keep_history=True)
    assert hist.shape == (33, 65)
    # initial slice is s with the boundary traces stamped on
    assert np.allclose(hist[0, 1:-1], 1.0) and hist[0, 0] == 0.0
    assert np.array_equal(final.values, hist[-1])
    assert np.all(np.isfinite(hist))


def test_parabolic_layer_at_outflow():
    eps = 1e-3
    f = np.sin(np.linspace(0, np.pi, 65))
    mesh_in = uniform_mesh(64)
    problem = ParabolicProblem(eps, b=1.0, d=lambda x, t: x, f=0.0,
                               s=ScalarField.from_nodes(mesh_in, f))
    mesh = shishkin_mesh(512, eps)
    u = solve_parabolic_cn(problem, mesh, TimeGrid(512, 1.0))
    interior = np.abs(u.values[mesh.nodes < 1.0 - mesh.tau])
    assert u.values[-1] == 0.0
    assert interior.max() > 0.01  # transport built up something to damp


def test_elliptic_matches_1d_when_separable():
    # b2=0 and y-independent data make each horizontal slice obey the 1D op
    eps = 1e-2
    problem2 = EllipticProblem2D(eps, b1=1.0, b2=0.0, c=0.0, f=1.0)
    m1 = shishkin_mesh(64, eps)
    mesh = Mesh2D(m1, uniform_mesh(8))
    u2 = solve_elliptic_2d(problem2, mesh).reshape2d()
    problem1 = SteadyProblem1D(eps, b=1.0, c=0.0, f=1.0)
    u1 = solve_steady_1d(problem1, m1).values
    mid = u2[4, :]
    assert np.max(np.abs(mid - u1)) < 2e-2


def test_elliptic_dirichlet_boundary():
    eps = 1e-2
    problem = EllipticProblem2D(eps, b1=1.0, b2=1.0, c=1.0, f=1.0)
    m1 = shishkin_mesh(32, eps)
    u = solve_elliptic_2d(problem, Mesh2D(m1, m1)).reshape2d()
    for edge in (u[0, :], u[-1, :], u[:, 0], u[:, -1]):
        assert np.max(np.abs(edge)) < 1e-12


def test_elliptic_corner_layer_structure():
    eps = 1e-2
    problem = EllipticProblem2D(eps, b1=1.0, b2=1.0, c=0.0, f=1.0)
    m1 = shishkin_mesh(64, eps)
    u = solve_elliptic_2d(problem, Mesh2D(m1, m1)).reshape2d()
    # interior plateau well above the clamped outflow edges
    k = np.searchsorted(m1.nodes, 0.5)
    assert u[k, k] > 0.2
    assert abs(u[-1, -1]) < 1e-12


def test_reduced_right_layer_matches_integration():
    # eps=0, b=x+1, f=1: u0' = 1/(x+1) with u0(0)=0 -> log(1+x)
    problem = SteadyProblem1D(1e-3, b=lambda x: x + 1.0, c=0.0, f=1.0)
    u0 = solve_reduced(problem, "right-layer")
    x = u0.mesh.nodes
    assert np.max(np.abs(u0.values - np.log1p(x))) < 1e-8


def test_reduced_turning_point_seed():
    # b = x(x+2), c=1, f=1: at the turning point u0(0) = f/c = 1
    problem = SteadyProblem1D(1e-3, b=lambda x: x * (x + 2.0), c=1.0, f=1.0,
                              a=-1.0, b_end=1.0)
    u0 = solve_reduced(problem, "turning-point")
    x = u0.mesh.nodes
    i0 = np.argmin(np.abs(x))
    assert u0.values[i0] == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.isfinite(u0.values))


def test_reduced_turning_point_balances_ode():
    problem = SteadyProblem1D(1e-3, b=lambda x: x * (x + 2.0), c=1.0, f=1.0,
                              a=-1.0, b_end=1.0)
    u0 = solve_reduced(problem, "turning-point", n=2048)
    x = u0.mesh.nodes
    du = np.gradient(u0.values, x)
    resid = x * (x + 2.0) * du + u0.values - 1.0
    keep = np.abs(x) > 0.05  # derivative of the seed is least accurate at 0
    assert np.max(np.abs(resid[keep])) < 1e-3


def test_reduced_transport_matches_characteristics():
    # the reduced problem drops eps: u_x + u_y + u = f with zero inflow
    problem = EllipticProblem2D(1e-3, b1=1.0, b2=1.0, c=1.0, f=1.0)
    u0 = solve_reduced(problem, "elliptic-2d", n=256)
    grid = u0.reshape2d()
    # along x=y: d/dt u(t,t) = u_x + u_y = 1 - u, u(0)=0 -> u = 1 - exp(-t)
    m = u0.mesh.mesh_x.nodes
    diag = np.diag(grid)
    exact = 1.0 - np.exp(-m)
    # first-order upwind: modest tolerance
    assert np.max(np.abs(diag - exact)) < 2e-2


def test_solver_rejects_mesh_outside_problem_domain():
    problem = SteadyProblem1D(1e-2, b=1.0, c=0.0, f=1.0)
    with pytest.raises(DomainError):
        solve_steady_1d(problem, uniform_mesh(16, -1.0, 1.0))


def test_singular_tridiagonal_reports_row():
    from comfno.solvers import _solve_tridiag

    n = 6
    diag = np.ones(n)
    diag[3] = 0.0  # exact zero pivot row
    with pytest.raises(NumericError) as info:
        _solve_tridiag(np.zeros(n - 1), diag, np.zeros(n - 1), np.ones(n))
    assert info.value.row == 3

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinfilm import fem1d
from thinfilm.errors import MismatchedGridsError, NewtonDivergedError
from thinfilm.state import (ModelParams, NewtonParams, TimeGrid, Trajectory, energy, entropy,
                            initial_pressure, mobility_integrals, newton_step_system, solve_forward,
                            step)


def bump(x, offset=0.2, center=2.5):
    return offset + np.exp(-2 * (x - center)**2)


def test_constant_state_is_fixed_point():
    mesh = fem1d.build_mesh(0, 5, 10)
    Y = np.ones(11)
    res, _ = newton_step_system(mesh, Y, np.zeros(11), Y, np.zeros(11), ModelParams(eps=0.1), 0.01)
    np.testing.assert_array_equal(res, 0.0)
    for eps in (0.0, 0.3):
        Yn, Pn, its = step(mesh, Y, np.zeros(11), np.zeros(11), ModelParams(eps=eps), NewtonParams(), 0.01)
        np.testing.assert_allclose(Yn, 1.0, atol=1e-14)
        np.testing.assert_allclose(Pn, 0.0, atol=1e-14)
        assert its <= 2


def test_initial_pressure_examples():
    mesh = fem1d.build_mesh(0, 1, 8)
    np.testing.assert_allclose(initial_pressure(mesh, np.full(9, 0.7)), 0.0, atol=1e-14)
    Y0 = mesh.nodes.copy()
    P0 = initial_pressure(mesh, Y0)
    M, A = fem1d.mass_matrix(mesh), fem1d.stiffness_matrix(mesh)
    load = A @ Y0
    np.testing.assert_allclose(load[1:-1], 0.0, atol=1e-13)
    np.testing.assert_allclose(load[[0, -1]], [-1.0, 1.0])
    assert np.max(np.abs(M @ P0 - load)) <= 1e-12


def test_initial_pressure_converges_second_order():
    # P0 approximates -Y0'' in the interior; compare away from the boundary layer
    errors = []
    for n in (20, 40, 80, 160):
        mesh = fem1d.build_mesh(0, 5, n)
        x = mesh.nodes
        P0 = initial_pressure(mesh, np.cos(2 * np.pi * x / 5))
        exact = (2 * np.pi / 5)**2 * np.cos(2 * np.pi * x / 5)
        inner = (x > 1) & (x < 4)
        errors.append(np.sqrt(mesh.h * np.sum((P0 - exact)[inner]**2)))
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(rates > 1.8), rates


def test_mobility_integrals_against_fine_quadrature():
    mesh = fem1d.build_mesh(0, 1, 4)
    Y = np.array([0.3, -0.2, 0.5, 1.0, 0.1])
    params = ModelParams(lam=1.5, beta=3.0, eps=0.2)
    W, dW = mobility_integrals(mesh, Y, params, fem1d.QuadratureRule.gauss(3, split_kinks=True))
    for e in range(4):
        xi = np.linspace(0, 1, 400001)
        y = Y[e] * (1 - xi) + Y[e + 1] * xi
        mob = 1.5 * np.abs(y)**3 + 0.2
        dmob = 4.5 * y * np.abs(y)
        tr = getattr(np, "trapezoid", None) or np.trapz
        assert W[e] == pytest.approx(mesh.h * tr(mob, xi), rel=1e-9)
        assert dW[e, 0] == pytest.approx(mesh.h * tr(dmob * (1 - xi), xi), rel=1e-8, abs=1e-12)
        assert dW[e, 1] == pytest.approx(mesh.h * tr(dmob * xi, xi), rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("beta", [3.0, 2.5])
def test_jacobian_matches_finite_differences(seed, beta):
    rng = np.random.default_rng(seed)
    mesh = fem1d.build_mesh(0, 5, 9)
    params = ModelParams(lam=1.0, beta=beta, eps=0.05)
    Y = bump(mesh.nodes) + 0.1 * rng.standard_normal(10)
    P = rng.standard_normal(10)
    Y_prev = bump(mesh.nodes)
    U = np.r_[0, rng.standard_normal(8), 0]
    k = 0.01
    _, jac = newton_step_system(mesh, Y, P, Y_prev, U, params, k)
    z = fem1d.interleave(Y, P)
    scale = np.max(np.abs(z))
    for _ in range(3):
        d = rng.standard_normal(20)
        eps = 1e-6 * scale

        def R(zz):
            y, p = fem1d.deinterleave(zz)
            return newton_step_system(mesh, y, p, Y_prev, U, params, k)[0]

        fd = (R(z + eps * d) - R(z - eps * d)) / (2 * eps)
        exact = jac @ d
        assert np.linalg.norm(fd - exact) <= 1e-6 * np.linalg.norm(exact)


def test_linear_problem_converges_in_one_iteration():
    mesh = fem1d.build_mesh(0, 5, 12)
    Y0 = bump(mesh.nodes)
    P0 = initial_pressure(mesh, Y0)
    U = 0.2 * np.sin(np.pi * mesh.nodes / 5)
    params = ModelParams(lam=0.0, eps=0.5)
    Y1, P1, its = step(mesh, Y0, P0, U, params, NewtonParams(tol=1e-12), 0.01)
    assert its == 1
    res, _ = newton_step_system(mesh, Y1, P1, Y0, U, params, 0.01)
    assert np.linalg.norm(res) < 1e-12


def test_newton_converges_quadratically():
    mesh = fem1d.build_mesh(0, 5, 20)
    Y0 = bump(mesh.nodes)
    history = []
    step(mesh, Y0, initial_pressure(mesh, Y0), np.zeros(21), ModelParams(eps=0.05),
         NewtonParams(tol=1e-14), 0.05, history=history)
    h = np.array(history)
    assert len(h) >= 3
    # error ratio e_{j+1} / e_j^2 stays bounded while iterates are not yet at round-off
    ratios = [h[j + 1] / h[j]**2 for j in range(len(h) - 1) if h[j + 1] > 1e-13]
    assert max(ratios) < 1e3


def test_newton_failure_reports_step():
    mesh = fem1d.build_mesh(0, 5, 10)
    grid = TimeGrid(1.0, 3)
    U = Trajectory.static(mesh, grid, np.r_[0, 1e3 * np.ones(9), 0])
    with pytest.raises(NewtonDivergedError) as info:
        solve_forward(bump(mesh.nodes), U, ModelParams(eps=0.0), NewtonParams(max_iter=3))
    assert info.value.step == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5))
def test_mass_conserved_for_any_control(seed, eps):
    rng = np.random.default_rng(seed)
    mesh = fem1d.build_mesh(0, 5, 12)
    grid = TimeGrid(0.05, 5)
    U = Trajectory.zeros(mesh, grid)
    U.values[:, 1:-1] = 0.3 * rng.standard_normal((6, 11))
    Y0 = bump(mesh.nodes) + 0.05 * rng.standard_normal(13)
    fwd = solve_forward(Y0, U, ModelParams(eps=eps))
    mass = fwd.diagnostics.mass
    assert np.max(np.abs(mass - mass[0])) <= 1e-10 * abs(mass[0])


def test_uncontrolled_energy_decreases_and_symmetry():
    mesh = fem1d.build_mesh(0, 5, 20)
    grid = TimeGrid(0.5, 100)
    Y0 = bump(mesh.nodes)
    fwd = solve_forward(Y0, Trajectory.zeros(mesh, grid), ModelParams(eps=0.05))
    E = fwd.diagnostics.energy
    assert np.all(np.diff(E) <= 1e-12)
    np.testing.assert_allclose(fwd.Y.values, fwd.Y.values[:, ::-1], atol=1e-9)
    np.testing.assert_array_equal(fwd.Y[0], Y0)
    assert np.median(fwd.iterations) <= 5 and fwd.iterations.max() <= 30


def test_larger_eps_dissipates_faster():
    mesh = fem1d.build_mesh(0, 5, 20)
    grid = TimeGrid(1.0, 200)
    Y0 = bump(mesh.nodes)
    E = {eps: solve_forward(Y0, Trajectory.zeros(mesh, grid), ModelParams(eps=eps)).diagnostics.energy
         for eps in (0.5, 0.05)}
    assert np.all(E[0.5][1:] <= E[0.05][1:])


def test_entropy_and_energy_values():
    mesh = fem1d.build_mesh(0, 2, 4)
    assert energy(mesh, mesh.nodes) == pytest.approx(1.0)
    assert entropy(mesh, np.full(5, 2.0), 3.0) == pytest.approx(2.0 * 0.5 / 2.0)
    assert np.isnan(entropy(mesh, np.r_[1, 1, 0, 1, 1.0], 3.0))
    assert np.isnan(entropy(mesh, np.ones(5), 2.0))


def test_trajectory_shape_and_compatibility():
    mesh = fem1d.build_mesh(0, 1, 4)
    grid = TimeGrid(1.0, 3)
    with pytest.raises(MismatchedGridsError):
        Trajectory(mesh, grid, np.zeros((3, 5)))
    a = Trajectory.zeros(mesh, grid)
    with pytest.raises(MismatchedGridsError):
        a.check_compatible(Trajectory.zeros(fem1d.build_mesh(0, 1, 5), grid))
    assert grid.k == pytest.approx(1 / 3)
    assert grid.nearest_index(0.5) == 2 and grid.nearest_index(7.0) == 3


@pytest.mark.parametrize("kwargs", [dict(lam=-1), dict(beta=0.5), dict(eps=-0.1)])
def test_model_params_validation(kwargs):
    with pytest.raises(ValueError):
        ModelParams(**kwargs)

"""
Acceptance criteria 1-9, each checked at its stated tolerance.

Every test records one PASS/FAIL line which ``conftest.py`` prints in the
terminal summary. Expensive preset runs are shared through module-level
caches.
"""

from functools import lru_cache

import numpy as np
import pytest
import scipy.optimize

from thinfilm import fem1d
from thinfilm.adjoint import ObjectiveParams, solve_backward
from thinfilm.optimizer import BUDGET_EXHAUSTED, CONVERGED
from thinfilm.runner import e3_config, gradcheck, preset_configs, run_forward, run_optimize
from thinfilm.state import ModelParams, NewtonParams, TimeGrid, Trajectory, solve_forward

RESULTS = {}


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    RESULTS[number] = line
    print(line)
    return passed


@lru_cache(maxsize=None)
def forward_preset(name):
    _, members = preset_configs(name)
    return {member: run_forward(cfg) for member, cfg in members.items()}


@lru_cache(maxsize=None)
def reduced_e3(gamma):
    return run_optimize(e3_config(gamma, reduced=True), progress=lambda rec: None)


def forward_runs():
    return {f"{p}/{m}": res for p in ("E1", "E2") for m, res in forward_preset(p).items()}


# 1 ------------------------------------------------------------------------
def test_criterion_1_mass_conservation():
    worst = 0.0
    ok = True
    for res in forward_runs().values():
        mass = res.forward.diagnostics.mass
        drift = np.max(np.abs(mass - mass[0]))
        ok &= drift <= 1e-8 * (1 + abs(mass[0]))
        worst = max(worst, drift / (1 + abs(mass[0])))
    assert record(1, ok, f"max scaled mass drift {worst:.2e} (tol 1e-8) over {len(forward_runs())} preset runs")


# 2 ------------------------------------------------------------------------
def test_criterion_2_energy_dissipation():
    worst = -np.inf
    for res in forward_preset("E2").values():
        worst = max(worst, float(np.max(np.diff(res.forward.diagnostics.energy))))
    assert record(2, worst <= 1e-12, f"max energy increase per step {worst:.2e} (tol 1e-12), E2 both eps")


# 3 ------------------------------------------------------------------------
def test_criterion_3_eps_ordering():
    runs = forward_preset("E2")
    hi, lo = runs["eps0.5"].forward, runs["eps0.05"].forward
    grid = hi.Y.grid
    rows = []
    ok = True
    for t in (0.1, 0.2, 0.5, 0.75, 1.0):
        n = grid.nearest_index(t)
        e_hi, e_lo = hi.diagnostics.energy[n], lo.diagnostics.energy[n]
        ok &= e_hi <= e_lo
        rows.append(f"t={t}: {e_hi:.4g}<={e_lo:.4g}")
    assert record(3, ok, "E[eps=0.5] <= E[eps=0.05]; " + ", ".join(rows))


# 4 ------------------------------------------------------------------------
def test_criterion_4_gradient_check():
    worst = 0.0
    ok = True
    for norm_mode in ("l2", "euclidean"):
        for gamma in (0.0, 0.02):
            cfg = {
                "domain": {"n_space": 10},
                "time": {"t_final": 1.0, "n_time": 20},
                # C0 above part of the state so the penalty is active when gamma > 0
                "objective": {"gamma": gamma, "c0": 0.5, "norm_mode": norm_mode},
                "control": {"kind": "sine", "amplitude": 0.05},
            }
            rep = gradcheck(cfg, n_directions=5, seed=0)
            ok &= all(r["relative_error"] <= 1e-4 for r in rep["directions"])
            worst = max(worst, rep["max_relative_error"])
    assert record(4, ok, f"max directional relative error {worst:.2e} (tol 1e-4), gamma in {{0, 0.02}}, both norms")


# 5 ------------------------------------------------------------------------
def test_criterion_5_newton_iterations():
    med, mx = 0.0, 0
    for res in forward_runs().values():
        its = res.forward.iterations
        med, mx = max(med, float(np.median(its))), max(mx, int(its.max()))
    assert record(5, med <= 5 and mx <= 30, f"largest median {med:g} (<= 5), max {mx} (<= 30) per step")


# 6 ------------------------------------------------------------------------
@pytest.mark.parametrize("gamma", [0.02, 0.0])
def test_criterion_6_armijo_descent(gamma):
    res = reduced_e3(gamma)
    hist = res.optimization.history
    J = np.array([r.J for r in hist])
    decreasing = bool(np.all(np.diff(J) < 0))
    status = res.status
    if status == CONVERGED:
        stop_ok = hist[-1].grad_norm_sq <= 5e-5
    else:
        stop_ok = status == BUDGET_EXHAUSTED and J[-1] <= 0.5 * J[0]
    ok = decreasing and stop_ok
    detail = (f"gamma={gamma}: {len(hist) - 1} iterations, J strictly decreasing={decreasing}, "
              f"status {status}, |g|^2={hist[-1].grad_norm_sq:.2e}, J {J[0]:.4g}->{J[-1]:.4g}")
    key = 6 if gamma else 6.1
    record(key, ok, detail)
    assert ok


# 7 ------------------------------------------------------------------------
def test_criterion_7_penalty_enforcement():
    min_pen = reduced_e3(0.02).manifest["summary"]["min_Y"]
    min_free = reduced_e3(0.0).manifest["summary"]["min_Y"]
    viol = {g: reduced_e3(g).manifest["summary"]["penalty_violation"] for g in (0.1, 0.02, 0.004)}
    monotone = viol[0.1] >= viol[0.02] >= viol[0.004]
    ok = min_pen >= -0.02 and min_free < min_pen and monotone
    detail = (f"min Y gamma=0.02: {min_pen:.4g} (>= -0.02), gamma=0: {min_free:.4g}; violation "
              + ", ".join(f"gamma={g}: {v:.3g}" for g, v in viol.items()))
    assert record(7, ok, detail)


# 8 ------------------------------------------------------------------------
def test_criterion_8_forced_sign_change():
    runs = forward_preset("E1")
    forced = runs["sine_eps0.03"]
    free = runs["zero_eps0.03"]
    min_forced = float(forced.forward.Y.values.min())
    min_free = float(free.forward.Y.values.min())
    y0 = forced.manifest["config"]["initial_condition"]
    ok = min_forced < 0 and min_free >= 0
    assert record(8, ok, f"min Y with 0.35 sin control {min_forced:.4g} (< 0), uncontrolled {min_free:.4g} "
                         f"(>= 0); Y0 {y0['kind']} offset {y0['offset']}")


# 9 ------------------------------------------------------------------------
def _dense_pair(n_space, a=0.0, b=1.5):
    """Element-by-element dense mass and stiffness matrices."""
    h = (b - a) / n_space
    M = np.zeros((n_space + 1,) * 2)
    A = np.zeros_like(M)
    for e in range(n_space):
        idx = np.ix_([e, e + 1], [e, e + 1])
        M[idx] += h / 6 * np.array([[2, 1], [1, 2]])
        A[idx] += np.array([[1, -1], [-1, 1]]) / h
    return h, M, A


def _dense_residual(z, Y_prev, U, h, M, A, lam, beta, eps, k):
    """R1 = M (Y - Y_prev)/k + (w(Y) P_x, phi_x) - (U_x, phi), R2 = A Y - M P, by 8-point Gauss."""
    n = len(Y_prev)
    Y, P = z[:n], z[n:]
    xg, wg = np.polynomial.legendre.leggauss(8)
    xg, wg = 0.5 * (xg + 1), 0.5 * wg
    r1 = M @ (Y - Y_prev) / k
    for e in range(n - 1):
        y = Y[e] * (1 - xg) + Y[e + 1] * xg
        w_int = h * np.sum(wg * (lam * y**beta + eps))
        flux = w_int * (P[e + 1] - P[e]) / h**2
        r1[e] -= flux
        r1[e + 1] += flux
        ux_int = (U[e + 1] - U[e]) / h * h / 2  # (U_x, phi) on one element
        r1[e] -= ux_int
        r1[e + 1] -= ux_int
    r2 = A @ Y - M @ P
    return np.concatenate([r1, r2])


def _complex_step_jacobian(f, z):
    n = len(z)
    J = np.empty((n, n))
    for j in range(n):
        zc = z.astype(complex)
        zc[j] += 1e-30j
        J[:, j] = f(zc).imag / 1e-30
    return J


@pytest.mark.parametrize("norm_mode, gamma", [("l2", 0.0), ("euclidean", 0.1)])
def test_criterion_9_dense_oracle(norm_mode, gamma):
    n_space, T = 6, 0.05
    lam, beta, eps = 1.0, 3.0, 0.1
    mesh = fem1d.build_mesh(0.0, 1.5, n_space)
    grid = TimeGrid(T, 1)
    x = mesh.nodes
    Y0 = 0.3 + np.exp(-4 * (x - 0.75)**2)
    U = Trajectory.zeros(mesh, grid)
    U.values[1] = 0.4 * np.sin(np.pi * x / 1.5)
    params = ModelParams(lam, beta, eps)
    fwd = solve_forward(Y0, U, params, NewtonParams(tol=1e-14))

    h, M, A = _dense_pair(n_space)
    P0 = np.linalg.solve(M, A @ Y0)
    f = lambda z: _dense_residual(z, Y0, U[1], h, M, A, lam, beta, eps, T)  # noqa: E731
    jac = lambda z: _complex_step_jacobian(f, z)  # noqa: E731
    sol = scipy.optimize.root(f, np.concatenate([Y0, P0]), jac=jac, method="hybr", tol=1e-15)
    z = sol.x
    for _ in range(3):  # polish with dense Newton
        z = z - np.linalg.solve(jac(z), f(z))
    ref_state = z
    got_state = np.concatenate([fwd.Y[1], fwd.P[1]])
    err_state = np.linalg.norm(got_state - ref_state) / np.linalg.norm(ref_state)

    # adjoint: transpose of the dense Jacobian at the converged state, source = -dPhi/dY1 with
    # Phi = 1/2 |Y1 - Ytilde|^2 + 1/(2 gamma) |(C0 - Y1)^+|^2 in the chosen norm
    c0 = 0.6
    Ytilde = Trajectory.static(mesh, grid, 0.5 + 0.2 * x)
    obj = ObjectiveParams(alpha=1e-7, gamma=gamma, c0=c0, norm_mode=norm_mode)
    G = M if norm_mode == "l2" else np.eye(len(x))
    Y1 = ref_state[:len(x)]
    src = G @ (Ytilde[1] - Y1)
    if gamma > 0:
        src += np.maximum(c0 - Y1, 0.0) / gamma
    ref_adj = np.linalg.solve(jac(ref_state).T, np.concatenate([src, np.zeros(len(x))]))
    Z, S = solve_backward(fwd.Y, fwd.P, Ytilde, params, obj)
    got_adj = np.concatenate([Z[0], S[0]])
    err_adj = np.linalg.norm(got_adj - ref_adj) / np.linalg.norm(ref_adj)

    ok = err_state <= 1e-10 and err_adj <= 1e-10 and np.linalg.norm(ref_adj) > 0
    key = 9 if norm_mode == "l2" else 9.1
    detail = f"{norm_mode}, gamma={gamma}: forward rel. error {err_state:.1e}, adjoint rel. error {err_adj:.1e} (tol 1e-10)"
    record(key, ok, detail)
    assert ok

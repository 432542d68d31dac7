"""
Forward solver for the regularized thin-film equation

    y_t = -([lam |y|^beta + eps] y_xxx)_x + u_x,   y_x = y_xxx = 0 at a, b,

written as a mixed system for the height Y and the pressure P ~ -y_xx and
discretized with P1 elements and implicit Euler in time. Each time step is
a nonlinear 2-field system solved by Newton's method with the exact
Jacobian.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fem1d
from .errors import MismatchedGridsError, NewtonDivergedError, SingularMatrixError

__all__ = [
    "ModelParams", "NewtonParams", "TimeGrid", "Trajectory", "Diagnostics",
    "ForwardResult", "mobility_integrals", "initial_pressure",
    "newton_step_system", "step", "solve_forward", "energy", "entropy",
]


@dataclass(frozen=True)
class ModelParams:
    lam: float = 1.0
    beta: float = 3.0
    eps: float = 0.0
    c0: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if not self.beta >= 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")


@dataclass(frozen=True)
class NewtonParams:
    tol: float = 1e-10
    max_iter: int = 1000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    n_time: int

    def __post_init__(self):
        if not self.t_final > 0 or self.n_time < 1:
            raise ValueError(f"invalid time grid T={self.t_final}, n_time={self.n_time}")

    @property
    def k(self):
        return self.t_final / self.n_time

    @property
    def times(self):
        return self.k * np.arange(self.n_time + 1)

    def nearest_index(self, t):
        return int(np.clip(round(t / self.k), 0, self.n_time))


@dataclass
class Trajectory:
    """Nodal values at every time level, ``values[n]`` belongs to ``t_n``."""

    mesh: fem1d.Mesh1D
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_time + 1, self.mesh.n_nodes)
        if self.values.shape != expected:
            raise MismatchedGridsError(f"trajectory shape {self.values.shape}, expected {expected}")

    @classmethod
    def zeros(cls, mesh, grid):
        return cls(mesh, grid, np.zeros((grid.n_time + 1, mesh.n_nodes)))

    @classmethod
    def static(cls, mesh, grid, field):
        return cls(mesh, grid, np.tile(np.asarray(field, dtype=float), (grid.n_time + 1, 1)))

    def __getitem__(self, n):
        return self.values[n]

    def __len__(self):
        return len(self.values)

    def like(self, values):
        return Trajectory(self.mesh, self.grid, values)

    def check_compatible(self, other):
        if other.mesh != self.mesh or other.grid != self.grid:
            raise MismatchedGridsError("trajectories live on different meshes or time grids")


@dataclass
class Diagnostics:
    time: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    entropy: np.ndarray
    min_value: np.ndarray


@dataclass
class ForwardResult:
    Y: Trajectory
    P: Trajectory
    diagnostics: Diagnostics
    iterations: np.ndarray = field(repr=False)


def _linear_at(left, right, xi):
    return left[:, None] * (1.0 - xi) + right[:, None] * xi


def mobility_integrals(mesh, Y, params, rule=fem1d.DEFAULT_RULE):
    """Element integrals of the mobility and of its derivative.

    Returns ``W`` with ``W[e] = int_e (lam |Y|^beta + eps) dx`` and ``dW``
    with ``dW[e, l] = int_e lam beta |Y|^(beta-1) sign(Y) phi_l dx``.
    """
    yl, yr = Y[:-1], Y[1:]
    xi, wq = rule.element_points(yl, yr, kink=0.0)
    yq = _linear_at(yl, yr, xi)
    ay = np.abs(yq)
    mob = params.lam * ay**params.beta + params.eps
    dmob = params.lam * params.beta * ay**(params.beta - 1.0) * np.sign(yq)
    W = mesh.h * np.sum(wq * mob, axis=1)
    dW = mesh.h * np.stack([np.sum(wq * dmob * (1.0 - xi), axis=1),
                            np.sum(wq * dmob * xi, axis=1)], axis=1)
    return W, dW


def control_load(mesh, U):
    """Load vector ``(U_x, phi_i)``."""
    half = 0.5 * np.diff(U)
    c = np.zeros(mesh.n_nodes)
    c[:-1] += half
    c[1:] += half
    return c


_STIFF = np.array([[1.0, -1.0], [-1.0, 1.0]])
_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_SIGN = np.array([-1.0, 1.0])


def _mats(mesh):
    return fem1d.mass_matrix(mesh), fem1d.stiffness_matrix(mesh)


def initial_pressure(mesh, Y0):
    """Solve ``(Y0_x, phi_x) - (P0, phi) = 0``, i.e. ``M P0 = A Y0``."""
    M, A = _mats(mesh)
    return fem1d.solve_banded(M, A.matvec(Y0))


def newton_step_system(mesh, Y, P, Y_prev, U_next, params, k, rule=fem1d.DEFAULT_RULE, mats=None):
    """Residual and exact Jacobian of one implicit step.

    Unknowns and equations are interleaved: ``(Y_0, P_0, Y_1, P_1, ...)``
    and ``(R1_0, R2_0, R1_1, R2_1, ...)`` with

        R1 = (Y - Y_prev, phi)/k + ((lam|Y|^beta + eps) P_x, phi_x) - (U_x, phi)
        R2 = (Y_x, phi_x) - (P, phi)
    """
    M, A = _mats(mesh) if mats is None else mats
    h = mesh.h
    W, dW = mobility_integrals(mesh, Y, params, rule)
    dP = np.diff(P)
    flux = W * dP / h**2
    r1 = M.matvec(Y - Y_prev) / k - control_load(mesh, U_next)
    r1[:-1] -= flux
    r1[1:] += flux
    r2 = A.matvec(Y) - M.matvec(P)
    residual = fem1d.interleave(r1, r2)

    n_el = mesh.n_space
    local = np.empty((n_el, 4, 4))
    # rows/cols 0, 2 belong to Y (resp. R1), 1, 3 to P (resp. R2)
    d_mob = _SIGN[None, :, None] * (dP / h**2)[:, None, None] * dW[:, None, :]
    local[:, 0::2, 0::2] = h * _MASS / k + d_mob
    local[:, 0::2, 1::2] = (W / h**2)[:, None, None] * _STIFF
    local[:, 1::2, 0::2] = _STIFF / h
    local[:, 1::2, 1::2] = -h * _MASS
    return residual, fem1d.assemble_interleaved(mesh.n_nodes, local)


def step(mesh, Y_prev, P_guess, U_next, params, newton, k, rule=fem1d.DEFAULT_RULE,
         mats=None, history=None):
    """Advance one time level; returns ``(Y_next, P_next, iterations)``.

    Newton starts from ``(Y_prev, P_guess)`` and stops once the update or
    the residual drops below ``newton.tol``. ``history``, if given, receives
    the max-norm of every Newton update.
    """
    mats = _mats(mesh) if mats is None else mats
    Y, P = np.array(Y_prev, dtype=float), np.array(P_guess, dtype=float)
    residual, jac = newton_step_system(mesh, Y, P, Y_prev, U_next, params, k, rule, mats)
    if np.linalg.norm(residual) <= newton.tol:
        return Y, P, 0
    for it in range(1, newton.max_iter + 1):
        delta = fem1d.solve_banded(jac, -residual)
        dY, dP = fem1d.deinterleave(delta)
        Y += dY
        P += dP
        change = float(np.max(np.abs(delta)))
        if history is not None:
            history.append(change)
        if not np.isfinite(change):
            raise NewtonDivergedError("Newton iterates became non-finite", iterations=it)
        residual, jac = newton_step_system(mesh, Y, P, Y_prev, U_next, params, k, rule, mats)
        if change <= newton.tol or np.linalg.norm(residual) <= newton.tol:
            return Y, P, it
    raise NewtonDivergedError(f"Newton did not converge in {newton.max_iter} iterations",
                              iterations=newton.max_iter)


def energy(mesh, Y, A=None):
    """``E[Y] = 1/2 int |Y_x|^2``; ``Y`` may be a stack of levels."""
    Y = np.asarray(Y, dtype=float)
    return 0.5 * np.sum(np.diff(Y, axis=-1)**2, axis=-1) / mesh.h


def entropy(mesh, Y, beta, rule=fem1d.DEFAULT_RULE):
    """``H[Y] = int Y^(2-beta) dx / ((beta-1)(beta-2))``, NaN unless Y > 0 and beta not in {1, 2}."""
    Y = np.asarray(Y, dtype=float)
    if beta in (1.0, 2.0) or np.any(Y <= 0):
        return np.nan
    xi, wq = rule.element_points(Y[:-1], Y[1:])
    yq = _linear_at(Y[:-1], Y[1:], xi)
    return mesh.h * np.sum(wq * yq**(2.0 - beta)) / ((beta - 1.0) * (beta - 2.0))


def _diagnostics(mesh, grid, Y, beta, rule):
    return Diagnostics(
        time=grid.times,
        mass=fem1d.integrate(mesh, Y),
        energy=energy(mesh, Y),
        entropy=np.array([entropy(mesh, y, beta, rule) for y in Y]),
        min_value=Y.min(axis=1),
    )


def solve_forward(Y0, U, params, newton=NewtonParams(), rule=fem1d.DEFAULT_RULE):
    """Run the scheme over the whole time grid of the control ``U``.

    Step ``n -> n+1`` uses ``U[n+1]``; ``U[0]`` never enters.
    Errors carry the index of the failing step in ``exc.step``.
    """
    mesh, grid = U.mesh, U.grid
    k = grid.k
    mats = _mats(mesh)
    Y = np.empty((grid.n_time + 1, mesh.n_nodes))
    P = np.empty_like(Y)
    iterations = np.zeros(grid.n_time, dtype=int)
    Y[0] = Y0
    P[0] = fem1d.solve_banded(mats[0], mats[1].matvec(Y[0]))
    for n in range(grid.n_time):
        try:
            Y[n + 1], P[n + 1], iterations[n] = step(
                mesh, Y[n], P[n], U[n + 1], params, newton, k, rule, mats)
        except (NewtonDivergedError, SingularMatrixError) as exc:
            exc.step = n + 1
            exc.args = (f"{exc.args[0]} (step {n + 1}, t={(n + 1) * k:.6g})",)
            raise
    return ForwardResult(
        Y=Trajectory(mesh, grid, Y),
        P=Trajectory(mesh, grid, P),
        diagnostics=_diagnostics(mesh, grid, Y, params.beta, rule),
        iterations=iterations,
    )

"""
Discrete adjoint of the implicit mixed scheme.

For every level ``n = N-1, ..., 0`` the multipliers ``(Z^n, S^n)`` solve,
for all test functions phi,

    (phi, Z)/k + (w'(Y) phi P_x, Z_x) + (phi_x, S_x)
        = (phi, Z^{n+1})/k + (phi, Ytilde - Y) + (phi, (C0 - Y)^+)/gamma
    ([lam |Y|^beta + eps] phi_x, Z_x) - (phi, S) = 0

with ``Y, P, Ytilde`` taken at level ``n+1`` and ``Z^N = 0``. The operator
is the transpose of the state Newton Jacobian at the converged state, so
the resulting gradient is the exact derivative of the discrete objective.
"""

from dataclasses import dataclass

import numpy as np

from . import fem1d
from .errors import SingularMatrixError
from .state import Trajectory, mobility_integrals

__all__ = ["ObjectiveParams", "adjoint_operator", "adjoint_source", "adjoint_step", "solve_backward",
           "penalty_load"]

NORM_MODES = ("l2", "euclidean")


@dataclass(frozen=True)
class ObjectiveParams:
    """Weights of the discrete objective.

    ``gamma = 0`` switches the penalty off. ``norm_mode`` selects between
    L2(Omega) norms of the P1 functions (``"l2"``) and plain coefficient
    vector norms (``"euclidean"``).
    """

    alpha: float = 1e-7
    gamma: float = 0.0
    c0: float = 0.0
    norm_mode: str = "l2"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")


_STIFF = np.array([[1.0, -1.0], [-1.0, 1.0]])
_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_SIGN = np.array([-1.0, 1.0])


def penalty_load(mesh, Y, c0, rule=fem1d.DEFAULT_RULE):
    """``((C0 - Y)^+, phi_i)`` by element quadrature."""
    yl, yr = Y[:-1], Y[1:]
    xi, wq = rule.element_points(yl, yr, kink=c0)
    gap = np.maximum(c0 - (yl[:, None] * (1.0 - xi) + yr[:, None] * xi), 0.0)
    load = np.zeros(mesh.n_nodes)
    load[:-1] += mesh.h * np.sum(wq * gap * (1.0 - xi), axis=1)
    load[1:] += mesh.h * np.sum(wq * gap * xi, axis=1)
    return load


def adjoint_source(mesh, Y, Ytilde, obj, rule=fem1d.DEFAULT_RULE, M=None):
    """Right-hand side contributed by the objective at one level (without the Z^{n+1} part)."""
    if obj.norm_mode == "l2":
        M = fem1d.mass_matrix(mesh) if M is None else M
        src = M.matvec(Ytilde - Y)
        if obj.gamma > 0:
            src += penalty_load(mesh, Y, obj.c0, rule) / obj.gamma
    else:
        src = Ytilde - Y
        if obj.gamma > 0:
            src += np.maximum(obj.c0 - Y, 0.0) / obj.gamma
    return src


def adjoint_operator(mesh, Y, P, params, k, rule=fem1d.DEFAULT_RULE):
    """Matrix of the coupled (Z, S) system, interleaved like the state system.

    Rows ``2j``/``2j+1`` hold the first/second adjoint equation tested
    with ``phi_j``; columns ``2i``/``2i+1`` multiply ``Z_i``/``S_i``.
    """
    h = mesh.h
    W, dW = mobility_integrals(mesh, Y, params, rule)
    slope_p = np.diff(P) / h
    local = np.empty((mesh.n_space, 4, 4))
    # (w'(Y) phi_l P_x, phi_m'): test function undifferentiated, trial differentiated
    coupling = (slope_p[:, None] * dW)[:, :, None] * (_SIGN / h)[None, None, :]
    local[:, 0::2, 0::2] = h * _MASS / k + coupling
    local[:, 0::2, 1::2] = _STIFF / h
    local[:, 1::2, 0::2] = (W / h**2)[:, None, None] * _STIFF
    local[:, 1::2, 1::2] = -h * _MASS
    return fem1d.assemble_interleaved(mesh.n_nodes, local)


def adjoint_step(mesh, Z_next, Y_next, P_next, Ytilde_next, params, obj, k,
                 rule=fem1d.DEFAULT_RULE, M=None):
    """One backward level; returns ``(Z, S)``."""
    M = fem1d.mass_matrix(mesh) if M is None else M
    rhs1 = M.matvec(Z_next) / k + adjoint_source(mesh, Y_next, Ytilde_next, obj, rule, M)
    rhs = fem1d.interleave(rhs1, np.zeros(mesh.n_nodes))
    sol = fem1d.solve_banded(adjoint_operator(mesh, Y_next, P_next, params, k, rule), rhs)
    return fem1d.deinterleave(sol)


def solve_backward(Y, P, Ytilde, params, obj, rule=fem1d.DEFAULT_RULE):
    """Backward sweep from ``Z^N = 0``; returns trajectories ``(Z, S)``.

    ``S^N`` is unused by the gradient and set to zero.
    """
    Y.check_compatible(P)
    Y.check_compatible(Ytilde)
    mesh, grid = Y.mesh, Y.grid
    M = fem1d.mass_matrix(mesh)
    Z = np.zeros((grid.n_time + 1, mesh.n_nodes))
    S = np.zeros_like(Z)
    for n in range(grid.n_time - 1, -1, -1):
        try:
            Z[n], S[n] = adjoint_step(mesh, Z[n + 1], Y[n + 1], P[n + 1], Ytilde[n + 1],
                                      params, obj, grid.k, rule, M)
        except SingularMatrixError as exc:
            exc.step = n
            exc.args = (f"{exc.args[0]} (adjoint level {n})",)
            raise
    return Trajectory(mesh, grid, Z), Trajectory(mesh, grid, S)

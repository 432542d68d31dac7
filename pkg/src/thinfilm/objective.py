"""
Discrete penalized tracking objective and its reduced gradient.

    J = k/2 sum_n |Y^n - Ytilde^n|^2 + alpha k/2 sum_n |U^n_x|^2
        + k/(2 gamma) sum_n |(C0 - Y^n)^+|^2

The sums run over all levels ``n = 0..N``; the penalty is dropped for
``gamma = 0``. Norms are L2(Omega) norms of the P1 functions in ``"l2"``
mode and plain coefficient norms in ``"euclidean"`` mode (where ``U_x`` is
the vector of element slopes).
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import fem1d
from .adjoint import ObjectiveParams, solve_backward
from .errors import MismatchedGridsError
from .state import ForwardResult, ModelParams, NewtonParams, Trajectory, solve_forward

__all__ = [
    "ObjectiveValue", "ControlProblem", "eval_objective", "penalty_norm_sq",
    "assemble_gradient", "riesz_map", "grad_norm_sq", "penalty_violation",
]


class ObjectiveValue(NamedTuple):
    total: float
    tracking: float
    control: float
    penalty: float


def penalty_norm_sq(mesh, Y, c0, norm_mode="l2", rule=fem1d.DEFAULT_RULE):
    """``|(C0 - Y)^+|^2`` for every row of ``Y``."""
    Y = np.atleast_2d(Y)
    if norm_mode == "euclidean":
        return np.sum(np.maximum(c0 - Y, 0.0)**2, axis=1)
    out = np.empty(len(Y))
    for n, y in enumerate(Y):
        xi, wq = rule.element_points(y[:-1], y[1:], kink=c0)
        gap = np.maximum(c0 - (y[:-1, None] * (1.0 - xi) + y[1:, None] * xi), 0.0)
        out[n] = mesh.h * np.sum(wq * gap**2)
    return out


def _norm_sq_levels(mesh, V, norm_mode, M):
    if norm_mode == "euclidean":
        return np.sum(V**2, axis=1)
    return np.einsum("ij,ij->i", V, (M @ V.T).T)


def _slope_norm_sq_levels(mesh, U, norm_mode):
    slopes_sq = np.sum(np.diff(U, axis=1)**2, axis=1) / mesh.h**2
    # l2: int |U_x|^2 = h * sum of squared slopes
    return slopes_sq if norm_mode == "euclidean" else mesh.h * slopes_sq


def eval_objective(Y, U, Ytilde, obj, rule=fem1d.DEFAULT_RULE):
    """Evaluate the objective; returns an :class:`ObjectiveValue`."""
    Y.check_compatible(U)
    Y.check_compatible(Ytilde)
    mesh, k = Y.mesh, Y.grid.k
    M = fem1d.mass_matrix(mesh)
    tracking = 0.5 * k * np.sum(_norm_sq_levels(mesh, Y.values - Ytilde.values, obj.norm_mode, M))
    control = 0.5 * obj.alpha * k * np.sum(_slope_norm_sq_levels(mesh, U.values, obj.norm_mode))
    penalty = 0.0
    if obj.gamma > 0:
        penalty = 0.5 * k / obj.gamma * np.sum(
            penalty_norm_sq(mesh, Y.values, obj.c0, obj.norm_mode, rule))
    tracking, control, penalty = float(tracking), float(control), float(penalty)
    return ObjectiveValue(tracking + control + penalty, tracking, control, penalty)


def penalty_violation(Y, c0, rule=fem1d.DEFAULT_RULE):
    """``(k sum_n |(C0 - Y^n)^+|^2_{L2})^(1/2)``."""
    return float(np.sqrt(Y.grid.k * np.sum(penalty_norm_sq(Y.mesh, Y.values, c0, "l2", rule))))


def assemble_gradient(U, Z, obj):
    """Derivative of the reduced objective with respect to the nodal controls.

    Level ``n+1`` gets ``alpha k A U^{n+1} + k (Z^n_x, phi)``, level 0 only
    the regularization part. Boundary entries are zero since controls
    vanish there. The directional derivative along ``V`` is
    ``sum(g.values * V.values)``.
    """
    U.check_compatible(Z)
    mesh, k = U.mesh, U.grid.k
    dU = np.diff(U.values, axis=1)
    reg = np.zeros_like(U.values)
    reg[:, :-1] -= dU
    reg[:, 1:] += dU
    # reg = h * A U; euclidean mode differentiates sum of squared slopes instead
    scale = obj.alpha * k / mesh.h
    if obj.norm_mode == "euclidean":
        scale /= mesh.h
    g = scale * reg
    zx = np.zeros_like(U.values)
    zx[:, 1:-1] = 0.5 * (Z.values[:, 2:] - Z.values[:, :-2])
    g[1:] += k * zx[:-1]
    g[:, 0] = 0.0
    g[:, -1] = 0.0
    return U.like(g)


def riesz_map(g, norm_mode):
    """Gradient representative in the control inner product of ``norm_mode``.

    ``"euclidean"``: the plain coefficient inner product, so ``g`` itself.
    ``"l2"``: ``k sum_n (G^n, V^n)_{L2}`` over interior nodes, i.e.
    ``G^n = (k M_int)^{-1} g^n``.
    """
    if norm_mode == "euclidean":
        return g.like(g.values.copy())
    mesh, k = g.mesh, g.grid.k
    M = fem1d.mass_matrix(mesh)
    m_int = fem1d.BandedMatrix(M.ab[:, 1:-1].copy(), 1, 1)
    G = np.zeros_like(g.values)
    G[:, 1:-1] = fem1d.solve_banded(m_int, g.values[:, 1:-1].T / k).T
    return g.like(G)


def grad_norm_sq(g, norm_mode):
    """Squared gradient norm: ``k sum_n |G^n|^2_{L2}`` in l2 mode, plain sum otherwise."""
    if norm_mode == "euclidean":
        return float(np.sum(g.values**2))
    return float(np.sum(g.values * riesz_map(g, norm_mode).values))


@dataclass
class ControlProblem:
    """Everything needed to evaluate the reduced objective ``U -> J(Y(U), U)``."""

    Y0: np.ndarray
    Ytilde: Trajectory
    params: ModelParams
    obj: ObjectiveParams
    newton: NewtonParams = field(default_factory=NewtonParams)
    rule: fem1d.QuadratureRule = fem1d.DEFAULT_RULE

    def __post_init__(self):
        self.Y0 = np.asarray(self.Y0, dtype=float)
        if self.Y0.shape != (self.mesh.n_nodes,):
            raise MismatchedGridsError("initial condition does not match the mesh")

    @property
    def mesh(self):
        return self.Ytilde.mesh

    @property
    def grid(self):
        return self.Ytilde.grid

    def zero_control(self):
        return Trajectory.zeros(self.mesh, self.grid)

    def forward(self, U) -> ForwardResult:
        self.Ytilde.check_compatible(U)
        return solve_forward(self.Y0, U, self.params, self.newton, self.rule)

    def objective(self, U, fwd=None):
        fwd = self.forward(U) if fwd is None else fwd
        return eval_objective(fwd.Y, U, self.Ytilde, self.obj, self.rule)

    def value(self, U):
        return self.objective(U).total

    def gradient(self, U, fwd=None):
        fwd = self.forward(U) if fwd is None else fwd
        Z, _ = solve_backward(fwd.Y, fwd.P, self.Ytilde, self.params, self.obj, self.rule)
        return assemble_gradient(U, Z, self.obj)

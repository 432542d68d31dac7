"""
Piecewise-linear finite elements on a uniform 1D mesh.

Fields on the mesh are plain float arrays of nodal values (length
``n_space + 1``). Matrices are kept in LAPACK band storage so that the
tridiagonal mass/stiffness matrices and the interleaved 2x2-block Newton
systems can all go through :func:`solve_banded`.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg

from .errors import InvalidDomainError, SingularMatrixError

__all__ = [
    "Mesh1D", "QuadratureRule", "BandedMatrix", "build_mesh", "mass_matrix",
    "stiffness_matrix", "weighted_stiffness", "stiffness_from_element_weights",
    "derivative_pairing", "l2_project", "interpolate", "solve_banded",
    "integrate", "l2_norm_sq", "interleave", "deinterleave", "assemble_interleaved",
]


@dataclass(frozen=True)
class Mesh1D:
    a: float
    b: float
    n_space: int

    @property
    def h(self):
        return (self.b - self.a) / self.n_space

    @property
    def n_nodes(self):
        return self.n_space + 1

    @cached_property
    def nodes(self):
        x = self.a + self.h * np.arange(self.n_nodes)
        x[-1] = self.b
        return x


def build_mesh(a, b, n_space):
    """Uniform mesh of ``n_space`` elements on ``[a, b]``."""
    if not np.isfinite(a) or not np.isfinite(b) or b <= a:
        raise InvalidDomainError(f"need a < b, got a={a}, b={b}")
    if int(n_space) != n_space or n_space < 2:
        raise InvalidDomainError(f"n_space must be an integer >= 2, got {n_space}")
    return Mesh1D(float(a), float(b), int(n_space))


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on the reference element [0, 1].

    With ``split_kinks`` set, an element on which the linear interpolant
    crosses the kink level is integrated as two sub-intervals joined at
    the crossing, so piecewise polynomials such as ``|Y|**3`` or
    ``(C0 - Y)^+`` are still integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    split_kinks: bool = False

    @classmethod
    def gauss(cls, n=5, split_kinks=False):
        x, w = np.polynomial.legendre.leggauss(n)
        return cls(0.5 * (x + 1.0), 0.5 * w, split_kinks)

    @property
    def n_points(self):
        return len(self.points)

    def element_points(self, left, right, kink=None):
        """Reference coordinates and weights per element.

        ``left``/``right`` hold nodal values of a linear function at the
        element ends. Returns ``(xi, w)`` of shape ``(n_el, m)`` with the
        weights of each row summing to 1.
        """
        left = np.asarray(left, dtype=float)
        n_el = left.shape[0]
        if kink is None or not self.split_kinks:
            xi = np.broadcast_to(self.points, (n_el, self.n_points))
            w = np.broadcast_to(self.weights, (n_el, self.n_points))
            return xi, w
        right = np.asarray(right, dtype=float)
        dl, dr = left - kink, right - kink
        crossing = dl * dr < 0
        cut = np.full(n_el, 0.5)
        cut[crossing] = dl[crossing] / (dl[crossing] - dr[crossing])
        c = cut[:, None]
        xi = np.hstack([c * self.points, c + (1.0 - c) * self.points])
        w = np.hstack([c * self.weights, (1.0 - c) * self.weights])
        return xi, w


DEFAULT_RULE = QuadratureRule.gauss(5)


class BandedMatrix:
    """Square matrix in LAPACK band storage: ``ab[u + i - j, j] = A[i, j]``."""

    def __init__(self, ab, lower, upper):
        self.ab = np.asarray(ab, dtype=float)
        self.lower = int(lower)
        self.upper = int(upper)
        if self.ab.shape[0] != self.lower + self.upper + 1:
            raise ValueError("band storage has the wrong number of rows")

    @property
    def n(self):
        return self.ab.shape[1]

    @property
    def shape(self):
        return (self.n, self.n)

    @classmethod
    def from_triplets(cls, n, lower, upper, rows, cols, vals):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        band = upper + rows - cols
        if np.any(band < 0) or np.any(band > lower + upper):
            raise ValueError("entry outside of the declared bandwidth")
        flat = np.bincount(band * n + cols, weights=np.asarray(vals, dtype=float).ravel(),
                           minlength=(lower + upper + 1) * n)
        return cls(flat.reshape(lower + upper + 1, n), lower, upper)

    @classmethod
    def from_dense(cls, a, lower, upper):
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        ab = np.zeros((lower + upper + 1, n))
        for d in range(-lower, upper + 1):
            diag = np.diagonal(a, d)
            if d >= 0:
                ab[upper - d, d:] = diag
            else:
                ab[upper - d, :n + d] = diag
        return cls(ab, lower, upper)

    def diagonal(self, d=0):
        if d >= 0:
            return self.ab[self.upper - d, d:]
        return self.ab[self.upper - d, :self.n + d]

    def todense(self):
        a = np.zeros(self.shape)
        for d in range(-self.lower, self.upper + 1):
            idx = np.arange(self.n - abs(d))
            if d >= 0:
                a[idx, idx + d] = self.diagonal(d)
            else:
                a[idx - d, idx] = self.diagonal(d)
        return a

    @property
    def T(self):
        ab = np.zeros((self.lower + self.upper + 1, self.n))
        for d in range(-self.lower, self.upper + 1):
            # diagonal d of A is diagonal -d of A^T
            if d >= 0:
                ab[self.lower + d, :self.n - d] = self.diagonal(d)
            else:
                ab[self.lower + d, -d:] = self.diagonal(d)
        return BandedMatrix(ab, self.upper, self.lower)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        y = self.diagonal(0) * x
        for d in range(1, self.upper + 1):
            y[:-d] += self.diagonal(d) * x[d:]
        for d in range(1, self.lower + 1):
            y[d:] += self.diagonal(-d) * x[:-d]
        return y

    def __matmul__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.matvec(x)
        return np.column_stack([self.matvec(col) for col in x.T])

    def _widen(self, lower, upper):
        ab = np.zeros((lower + upper + 1, self.n))
        ab[upper - self.upper:upper - self.upper + self.ab.shape[0]] = self.ab
        return ab

    def __add__(self, other):
        lo, up = max(self.lower, other.lower), max(self.upper, other.upper)
        return BandedMatrix(self._widen(lo, up) + other._widen(lo, up), lo, up)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, c):
        return BandedMatrix(c * self.ab, self.lower, self.upper)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def __repr__(self):
        return f"BandedMatrix(n={self.n}, lower={self.lower}, upper={self.upper})"


def _element_triplets(n_el, local):
    """Scatter per-element 2x2 blocks ``local`` (n_el, 2, 2) to triplets."""
    e = np.arange(n_el)
    nodes = np.stack([e, e + 1], axis=1)
    rows = np.repeat(nodes, 2, axis=1)
    cols = np.tile(nodes, (1, 2))
    return rows, cols, np.asarray(local).reshape(n_el, 4)


def _assemble_tridiagonal(mesh, local):
    local = np.broadcast_to(local, (mesh.n_space, 2, 2))
    rows, cols, vals = _element_triplets(mesh.n_space, local)
    return BandedMatrix.from_triplets(mesh.n_nodes, 1, 1, rows, cols, vals)


def mass_matrix(mesh):
    """Consistent P1 mass matrix ``M_ij = (phi_i, phi_j)``."""
    return _assemble_tridiagonal(mesh, mesh.h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]]))


def stiffness_matrix(mesh):
    """P1 stiffness matrix ``A_ij = (phi_i', phi_j')``."""
    return _assemble_tridiagonal(mesh, np.array([[1.0, -1.0], [-1.0, 1.0]]) / mesh.h)


def stiffness_from_element_weights(mesh, weights):
    """Weighted stiffness from element integrals ``W_e = int_e w dx``."""
    weights = np.asarray(weights, dtype=float)
    local = weights[:, None, None] / mesh.h**2 * np.array([[1.0, -1.0], [-1.0, 1.0]])
    return _assemble_tridiagonal(mesh, local)


def _physical_points(mesh, xi):
    return mesh.nodes[:-1, None] + mesh.h * xi


def weighted_stiffness(mesh, w, rule=DEFAULT_RULE):
    """``K_ij = int w(x) phi_i' phi_j' dx`` with ``w`` evaluated at quadrature points.

    ``w`` is a callable of the physical coordinate, or a scalar.
    """
    if np.isscalar(w):
        return float(w) * stiffness_matrix(mesh)
    xi, wq = rule.element_points(np.zeros(mesh.n_space), np.zeros(mesh.n_space))
    vals = np.asarray(w(_physical_points(mesh, xi)), dtype=float)
    return stiffness_from_element_weights(mesh, mesh.h * np.sum(wq * vals, axis=1))


def derivative_pairing(mesh, c):
    """``B_ij = int c phi_j phi_i' dx`` for a piecewise-linear ``c`` given per element.

    ``c`` has shape ``(n_el, 2)``: the integrals ``int_e c phi_left`` and
    ``int_e c phi_right`` of each element, already multiplied by h.
    With ``c = int_e phi_l`` this is the transpose of the control coupling
    ``(phi_j', phi_i)``.
    """
    c = np.asarray(c, dtype=float)
    sign = np.array([-1.0, 1.0]) / mesh.h
    local = sign[None, :, None] * c[:, None, :]
    return _assemble_tridiagonal(mesh, local)


def integrate(mesh, values):
    """Exact integral of a P1 function."""
    v = np.asarray(values, dtype=float)
    return 0.5 * mesh.h * np.sum(v[..., :-1] + v[..., 1:], axis=-1)


def l2_norm_sq(mesh, values, M=None):
    M = mass_matrix(mesh) if M is None else M
    v = np.asarray(values, dtype=float)
    return float(v @ M.matvec(v))


def interpolate(mesh, f):
    return np.asarray(f(mesh.nodes), dtype=float) * np.ones(mesh.n_nodes)


def l2_project(mesh, f, rule=DEFAULT_RULE):
    """L2 projection onto the P1 space: solve ``M c = (f, phi_i)``."""
    xi, wq = rule.element_points(np.zeros(mesh.n_space), np.zeros(mesh.n_space))
    fx = np.asarray(f(_physical_points(mesh, xi)), dtype=float) * np.ones_like(xi)
    load = np.zeros(mesh.n_nodes)
    load[:-1] += mesh.h * np.sum(wq * fx * (1.0 - xi), axis=1)
    load[1:] += mesh.h * np.sum(wq * fx * xi, axis=1)
    return solve_banded(mass_matrix(mesh), load)


def solve_banded(matrix, rhs):
    """Solve ``matrix @ x = rhs`` by banded LU with partial pivoting.

    Raises :class:`SingularMatrixError` on a zero pivot or a non-finite
    solution. One step of iterative refinement is applied when the
    residual is above ``1e-12 * (|rhs| + 1)``.
    """
    rhs = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(matrix.ab)) or not np.all(np.isfinite(rhs)):
        raise SingularMatrixError("non-finite entries in linear system")
    lu = (matrix.lower, matrix.upper)
    try:
        x = scipy.linalg.solve_banded(lu, matrix.ab, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrixError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("linear solve produced non-finite values")
    if rhs.ndim == 1:
        r = rhs - matrix.matvec(x)
        if np.linalg.norm(r) > 1e-12 * (np.linalg.norm(rhs) + 1.0):
            x = x + scipy.linalg.solve_banded(lu, matrix.ab, r, check_finite=False)
    return x


def interleave(y, p):
    z = np.empty(2 * len(y))
    z[0::2] = y
    z[1::2] = p
    return z


def deinterleave(z):
    return z[0::2].copy(), z[1::2].copy()


def assemble_interleaved(n_nodes, local):
    """Assemble per-element 4x4 blocks into the interleaved 2-field system.

    Unknowns are ordered ``(u_0, v_0, u_1, v_1, ...)``; ``local[e]`` couples
    the dofs ``2e .. 2e+3`` of element ``e``. The result has bandwidth 3.
    """
    local = np.asarray(local, dtype=float)
    n_el = local.shape[0]
    n = 2 * n_nodes
    ab = np.bincount(_interleaved_slots(n_el), weights=local.ravel(), minlength=7 * n)
    return BandedMatrix(ab.reshape(7, n), 3, 3)


@lru_cache(maxsize=32)
def _interleaved_slots(n_el):
    dofs = 2 * np.arange(n_el)[:, None] + np.arange(4)[None, :]
    rows = np.repeat(dofs, 4, axis=1)
    cols = np.tile(dofs, (1, 4))
    return ((3 + rows - cols) * 2 * (n_el + 1) + cols).ravel()

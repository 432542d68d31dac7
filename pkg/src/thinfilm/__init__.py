"""Optimal control of the 1D thin-film equation with a state-constraint penalty."""

__version__ = "0.1.0"

from .errors import (ConfigError, InvalidDomainError, LineSearchError, MismatchedGridsError,
                     NewtonDivergedError, ProfileError, SingularMatrixError, ThinFilmError)
from .fem1d import Mesh1D, QuadratureRule, build_mesh
from .state import ModelParams, NewtonParams, TimeGrid, Trajectory, solve_forward
from .adjoint import ObjectiveParams, solve_backward
from .objective import ControlProblem, assemble_gradient, eval_objective, grad_norm_sq
from .optimizer import ArmijoParams, steepest_descent
from .profiles import ProfileSpec, realize

"""
Steepest descent with Armijo backtracking for the reduced objective.

Starting from ``U = 0``, each outer iteration evaluates the gradient by a
forward and a backward sweep, then tries ``U - rho^s G`` for
``s = 0, 1, ...`` until

    J(U - rho^s G) - J(U) <= -sigma_star rho^s |grad J|^2.

``G`` is the gradient representative in the control inner product of the
objective's norm mode, so ``rho^s |grad J|^2`` is exactly the first-order
decrease of the trial step.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import LineSearchError, NewtonDivergedError, SingularMatrixError
from .objective import ObjectiveValue, riesz_map
from .state import ForwardResult, Trajectory

__all__ = ["ArmijoParams", "IterationRecord", "OptimizationResult", "armijo_search", "steepest_descent"]

CONVERGED = "converged"
BUDGET_EXHAUSTED = "max-outer-reached"
LINE_SEARCH_FAILED = "line-search-failed"


@dataclass(frozen=True)
class ArmijoParams:
    sigma_star: float = 1e-5
    rho: float = 0.15
    delta_tol: float = 5e-5
    max_outer: int = 50000
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.sigma_star > 0:
            raise ValueError("sigma_star must be positive")
        if not self.delta_tol > 0:
            raise ValueError("delta_tol must be positive")
        if self.max_outer < 0 or self.max_backtracks < 0:
            raise ValueError("iteration budgets must be non-negative")


class LineSearchResult(NamedTuple):
    U: Trajectory
    forward: ForwardResult
    value: ObjectiveValue
    s: int
    failed_solves: int


class IterationRecord(NamedTuple):
    iteration: int
    J: float
    tracking: float
    control: float
    penalty: float
    grad_norm_sq: float
    backtracks: int
    min_Y: float
    wall_time: float


@dataclass
class OptimizationResult:
    U: Trajectory
    forward: ForwardResult
    value: ObjectiveValue
    status: str
    history: list = field(default_factory=list)

    @property
    def Y(self):
        return self.forward.Y

    @property
    def converged(self):
        return self.status == CONVERGED


def armijo_search(problem, U, direction, J_r, norm_sq, armijo):
    """Backtrack along ``-direction`` from ``U``.

    A trial control for which the forward solver fails counts as a
    rejected step. Raises :class:`LineSearchError` after
    ``armijo.max_backtracks`` reductions.
    """
    failed = 0
    for s in range(armijo.max_backtracks + 1):
        t = armijo.rho**s
        trial = U.like(U.values - t * direction.values)
        try:
            fwd = problem.forward(trial)
        except (NewtonDivergedError, SingularMatrixError):
            failed += 1
            continue
        value = problem.objective(trial, fwd)
        if value.total - J_r <= -armijo.sigma_star * t * norm_sq:
            return LineSearchResult(trial, fwd, value, s, failed)
    raise LineSearchError(f"no acceptable step after {armijo.max_backtracks} backtracks "
                          f"({failed} trial solves failed)")


def steepest_descent(problem, armijo=ArmijoParams(), callback: Optional[Callable] = None, U0=None):
    """Minimize the reduced objective of ``problem`` from ``U0`` (default zero).

    Stops when the squared gradient norm drops to ``delta_tol`` or after
    ``max_outer`` accepted steps; ``result.status`` tells which. A failed
    line search ends the run with status ``"line-search-failed"`` and the
    last accepted state. ``callback`` receives every :class:`IterationRecord`.
    """
    norm_mode = problem.obj.norm_mode
    U = problem.zero_control() if U0 is None else U0
    fwd = problem.forward(U)
    value = problem.objective(U, fwd)
    history = []
    start = time.perf_counter()
    backtracks = 0
    iteration = 0
    while True:
        g = problem.gradient(U, fwd)
        direction = riesz_map(g, norm_mode)
        norm_sq = float(np.sum(g.values * direction.values))
        record = IterationRecord(iteration, value.total, value.tracking, value.control, value.penalty,
                                 norm_sq, backtracks, float(fwd.Y.values.min()),
                                 time.perf_counter() - start)
        history.append(record)
        if callback is not None:
            callback(record)
        if norm_sq <= armijo.delta_tol:
            status = CONVERGED
            break
        if iteration >= armijo.max_outer:
            status = BUDGET_EXHAUSTED
            break
        try:
            res = armijo_search(problem, U, direction, value.total, norm_sq, armijo)
        except LineSearchError:
            status = LINE_SEARCH_FAILED
            break
        U, fwd, value, backtracks = res.U, res.forward, res.value, res.s
        iteration += 1
    return OptimizationResult(U, fwd, value, status, history)


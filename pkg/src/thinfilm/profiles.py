"""
Closed-form initial conditions, targets and controls for experiments.
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import fem1d
from .errors import ProfileError
from .state import Trajectory

__all__ = ["ProfileSpec", "realize", "evaluate", "DEFAULT_INITIAL", "DEWETTING_TARGET"]

KINDS = ("constant", "sine", "cosine_bump", "gaussian_bump", "piecewise_linear_file")


@dataclass(frozen=True)
class ProfileSpec:
    """A parametric profile.

    constant        offset
    sine            offset + amplitude sin(frequency pi (x - a) / (b - a))
    cosine_bump     max(0, offset + amplitude |cos(pi (x - center) / width)|)
    gaussian_bump   offset + amplitude exp(-2 ((x - center) / width)^2)
    piecewise_linear_file
                    linear interpolation of a two-column (x, value) text file

    ``center`` defaults to the domain midpoint. ``projection`` is
    ``"interpolate"`` (nodal values) or ``"l2"``.
    """

    kind: str = "constant"
    amplitude: float = 1.0
    offset: float = 0.0
    center: Optional[float] = None
    width: float = 1.0
    frequency: float = 1.0
    path: Optional[str] = None
    time_dependence: str = "static"
    projection: str = "interpolate"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProfileError(f"unknown profile kind {self.kind!r}; expected one of {KINDS}")
        if self.time_dependence not in ("static", "none"):
            raise ProfileError(f"time_dependence must be 'static' or 'none', got {self.time_dependence!r}")
        if self.projection not in ("interpolate", "l2"):
            raise ProfileError(f"projection must be 'interpolate' or 'l2', got {self.projection!r}")
        if self.kind in ("cosine_bump", "gaussian_bump") and not self.width > 0:
            raise ProfileError("width must be positive")
        if self.kind == "piecewise_linear_file" and not self.path:
            raise ProfileError("piecewise_linear_file needs a path")

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


DEFAULT_INITIAL = ProfileSpec("gaussian_bump", amplitude=1.0, offset=0.2, center=2.5, width=1.0,
                              projection="l2")
DEWETTING_TARGET = ProfileSpec("cosine_bump", amplitude=0.8, offset=0.0, center=0.0, width=2.5)


def _load_table(path):
    try:
        data = np.loadtxt(path, ndmin=2)
    except FileNotFoundError:
        raise ProfileError(f"profile file not found: {path}") from None
    except ValueError as exc:
        raise ProfileError(f"malformed profile file {path}: {exc}") from None
    if data.shape[1] != 2 or data.shape[0] < 2:
        raise ProfileError(f"malformed profile file {path}: need at least two rows of (x, value)")
    x, v = data[:, 0], data[:, 1]
    if np.any(np.diff(x) <= 0):
        raise ProfileError(f"malformed profile file {path}: x must be strictly increasing")
    if not np.all(np.isfinite(data)):
        raise ProfileError(f"malformed profile file {path}: non-finite values")
    return x, v


def evaluate(spec, x, a, b):
    """Closed-form profile at physical points ``x`` of the domain ``[a, b]``."""
    x = np.asarray(x, dtype=float)
    center = 0.5 * (a + b) if spec.center is None else spec.center
    if spec.kind == "constant":
        return np.full_like(x, spec.offset)
    if spec.kind == "sine":
        return spec.offset + spec.amplitude * np.sin(spec.frequency * np.pi * (x - a) / (b - a))
    if spec.kind == "cosine_bump":
        return np.maximum(0.0, spec.offset + spec.amplitude * np.abs(np.cos(np.pi * (x - center) / spec.width)))
    if spec.kind == "gaussian_bump":
        return spec.offset + spec.amplitude * np.exp(-2.0 * ((x - center) / spec.width)**2)
    xs, vs = _load_table(Path(spec.path))
    if xs[0] > a + 1e-12 * (b - a) or xs[-1] < b - 1e-12 * (b - a):
        raise ProfileError(f"profile file {spec.path} does not cover [{a}, {b}]")
    return np.interp(x, xs, vs)


def realize(spec, mesh, grid=None, control=False, rule=fem1d.DEFAULT_RULE):
    """Nodal field of ``spec`` on ``mesh``, or a static :class:`Trajectory` when ``grid`` is given.

    With ``control=True`` both boundary values are set to zero.
    """
    def f(x):
        return evaluate(spec, x, mesh.a, mesh.b)

    if spec.projection == "l2":
        values = fem1d.l2_project(mesh, f, rule)
    else:
        values = f(mesh.nodes)
    if control:
        values[0] = values[-1] = 0.0
    if grid is None or spec.time_dependence == "none":
        return values
    return Trajectory.static(mesh, grid, values)

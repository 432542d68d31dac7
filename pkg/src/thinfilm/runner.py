"""
Experiment drivers: forward runs, optimization runs, gradient checks and
the E1/E2/E2c/E3 presets. Every run directory gets

    manifest.json       resolved configuration and run summary
    diagnostics.csv     mass, energy, entropy, min Y per time level
    Y_t<time>.dat       two-column (x, Y) snapshots
    convergence.csv     optimizer history (optimization runs only)
    U_t<time>.dat       optimal control snapshots (optimization runs only)
    target.dat          target at t = 0 (optimization runs only)
"""

import copy
import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import build, resolve
from .objective import ControlProblem, penalty_violation
from .optimizer import OptimizationResult, steepest_descent
from .profiles import realize
from .state import ForwardResult, Trajectory, solve_forward

__all__ = ["RunArtifacts", "run_forward", "run_optimize", "gradcheck", "PRESETS", "preset_configs",
           "run_experiment"]

log = logging.getLogger(__name__)

GRADCHECK_TOL = 1e-4


@dataclass
class RunArtifacts:
    directory: Optional[Path]
    manifest: dict
    forward: ForwardResult
    optimization: Optional[OptimizationResult] = None

    @property
    def status(self):
        return self.manifest["status"]


def _setup_fields(setup):
    Y0 = realize(setup.initial, setup.mesh, rule=setup.rule)
    U = realize(setup.control, setup.mesh, setup.grid, control=True, rule=setup.rule)
    return Y0, U


def _snapshot_map(cfg, grid):
    out = []
    for t in cfg["output"]["snapshot_times"]:
        n = grid.nearest_index(t)
        out.append({"requested": t, "index": n, "time": n * grid.k})
    return out


def _write_field(path, x, values):
    np.savetxt(path, np.column_stack([x, values]), fmt="%.16e")


def _write_snapshots(directory, prefix, traj, snapshots):
    for snap in snapshots:
        name = f"{prefix}_t{snap['time']:.6f}.dat"
        _write_field(directory / name, traj.mesh.nodes, traj[snap["index"]])
        snap.setdefault("files", {})[prefix] = name


def _write_diagnostics(directory, fwd):
    d = fwd.diagnostics
    with open(directory / "diagnostics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "mass", "energy", "entropy", "min_value", "newton_iterations"])
        iters = np.concatenate([[0], fwd.iterations])
        for row in zip(d.time, d.mass, d.energy, d.entropy, d.min_value, iters):
            w.writerow([repr(float(v)) for v in row[:-1]] + [int(row[-1])])


def _forward_summary(fwd):
    d = fwd.diagnostics
    return {
        "mass_initial": float(d.mass[0]),
        "max_mass_drift": float(np.max(np.abs(d.mass - d.mass[0]))),
        "min_Y": float(d.min_value.min()),
        "newton_median": float(np.median(fwd.iterations)),
        "newton_max": int(fwd.iterations.max()),
        "energy_final": float(d.energy[-1]),
    }


def _finish(directory, manifest):
    if directory is not None:
        with open(directory / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)


def _prepare(config, out_dir):
    cfg = resolve(config)
    directory = out_dir if out_dir is not None else cfg["output"]["directory"]
    directory = Path(directory) if directory is not None else None
    if directory is not None:
        directory.mkdir(parents=True, exist_ok=True)
    return cfg, build(cfg), directory


def run_forward(config, out_dir=None):
    """Solve the state equation for the configured control and write outputs.

    ``config`` is a raw or resolved configuration dict. Solver errors
    propagate with the failing step index in ``exc.step``.
    """
    cfg, setup, directory = _prepare(config, out_dir)
    Y0, U = _setup_fields(setup)
    start = time.perf_counter()
    fwd = solve_forward(Y0, U, setup.params, setup.newton, setup.rule)
    elapsed = time.perf_counter() - start
    snapshots = _snapshot_map(cfg, setup.grid)
    if directory is not None:
        _write_snapshots(directory, "Y", fwd.Y, snapshots)
        _write_diagnostics(directory, fwd)
    manifest = {
        "kind": "forward",
        "version": __version__,
        "config": cfg,
        "snapshots": snapshots,
        "summary": _forward_summary(fwd),
        "wall_time": elapsed,
        "status": "ok",
    }
    _finish(directory, manifest)
    return RunArtifacts(directory, manifest, fwd)


def make_problem(setup):
    Y0 = realize(setup.initial, setup.mesh, rule=setup.rule)
    Ytilde = realize(setup.target, setup.mesh, setup.grid, rule=setup.rule)
    if isinstance(Ytilde, np.ndarray):
        Ytilde = Trajectory.static(setup.mesh, setup.grid, Ytilde)
    return ControlProblem(Y0, Ytilde, setup.params, setup.obj, setup.newton, setup.rule)


def run_optimize(config, out_dir=None, progress=None):
    """Run steepest descent for the configured problem and write outputs.

    ``progress`` is called with every iteration record. The manifest's
    ``status`` is ``converged``, ``max-outer-reached`` or
    ``line-search-failed``.
    """
    cfg, setup, directory = _prepare(config, out_dir)
    problem = make_problem(setup)

    def sink(record):
        if progress is not None:
            progress(record)
        else:
            log.info("iter %d J=%.6e |g|^2=%.3e s=%d", record.iteration, record.J,
                     record.grad_norm_sq, record.backtracks)

    start = time.perf_counter()
    result = steepest_descent(problem, setup.armijo, sink)
    elapsed = time.perf_counter() - start
    fwd = result.forward
    snapshots = _snapshot_map(cfg, setup.grid)
    if directory is not None:
        _write_snapshots(directory, "Y", fwd.Y, snapshots)
        _write_snapshots(directory, "U", result.U, snapshots)
        _write_field(directory / "target.dat", setup.mesh.nodes, problem.Ytilde[0])
        _write_diagnostics(directory, fwd)
        with open(directory / "convergence.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "J", "tracking", "control", "penalty", "grad_norm_sq",
                        "backtracks", "min_Y", "wall_time"])
            for rec in result.history:
                w.writerow(list(rec))
        np.save(directory / "U_opt.npy", result.U.values)
    history = result.history
    manifest = {
        "kind": "optimize",
        "version": __version__,
        "config": cfg,
        "snapshots": snapshots,
        "summary": {
            **_forward_summary(fwd),
            "iterations": len(history) - 1,
            "J_initial": history[0].J,
            "J_final": result.value.total,
            "objective": result.value._asdict(),
            "grad_norm_sq_final": history[-1].grad_norm_sq,
            "penalty_violation": penalty_violation(fwd.Y, setup.obj.c0, setup.rule),
        },
        "wall_time": elapsed,
        "status": result.status,
    }
    _finish(directory, manifest)
    return RunArtifacts(directory, manifest, fwd, result)


def _fd_sweep(f, U, V, steps):
    vals = []
    for s in steps:
        vals.append((f(U.like(U.values + s * V)) - f(U.like(U.values - s * V))) / (2 * s))
    vals = np.array(vals)
    # the most self-consistent adjacent pair marks the usable step range
    i = int(np.argmin(np.abs(np.diff(vals))))
    return vals, i


def gradcheck(config, n_directions=5, seed=0, steps=(1e-4, 1e-5, 1e-6, 1e-7)):
    """Compare adjoint directional derivatives with central differences.

    Directions are random over interior nodes of all time levels. The FD
    step is taken from a sweep over ``steps * max(1, |U|_inf)``: the pair
    of neighbouring steps whose quotients agree best is used.
    """
    cfg = resolve(config)
    setup = build(cfg)
    problem = make_problem(setup)
    U = realize(setup.control, setup.mesh, setup.grid, control=True, rule=setup.rule)
    g = problem.gradient(U)
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(np.abs(U.values))))
    hs = np.asarray(steps) * scale
    rows = []
    for j in range(n_directions):
        V = np.zeros_like(U.values)
        V[:, 1:-1] = rng.standard_normal(V[:, 1:-1].shape)
        V /= np.linalg.norm(V)
        adjoint = float(np.sum(g.values * V))
        fd, i = _fd_sweep(problem.value, U, V, hs)
        chosen = float(fd[i])
        denom = max(abs(chosen), abs(adjoint), 1e-300)
        rows.append({
            "direction": j,
            "adjoint": adjoint,
            "finite_difference": chosen,
            "step": float(hs[i]),
            "relative_error": abs(chosen - adjoint) / denom,
            "sweep": [{"step": float(h), "fd": float(v), "relative_error": abs(v - adjoint) / max(abs(v), abs(adjoint), 1e-300)}
                      for h, v in zip(hs, fd)],
        })
    worst = max(r["relative_error"] for r in rows)
    return {
        "seed": seed,
        "n_directions": n_directions,
        "config": cfg,
        "directions": rows,
        "max_relative_error": worst,
        "tolerance": GRADCHECK_TOL,
        "passed": bool(worst <= GRADCHECK_TOL),
    }


def _cfg(**sections):
    return copy.deepcopy(sections)


E1_Y0 = {"kind": "gaussian_bump", "amplitude": 1.0, "offset": 0.2, "center": 2.5, "width": 1.0,
         "projection": "l2"}
# thinner film than the default so that the gamma = 0 optimum visibly dips below zero
E3_Y0 = {"kind": "gaussian_bump", "amplitude": 1.0, "offset": 0.1, "center": 2.5, "width": 1.0,
         "projection": "l2"}
E2C_TARGET = {"kind": "gaussian_bump", "amplitude": 0.6, "offset": 0.4, "center": 2.5, "width": 2.0}
DEWETTING = {"kind": "cosine_bump", "amplitude": 0.8, "offset": 0.0, "center": 0.0, "width": 2.5}
SINE_CONTROL = {"kind": "sine", "amplitude": 0.35, "offset": 0.0, "frequency": 1.0}
ZERO = {"kind": "constant", "offset": 0.0}


def _e1(reduced=False):
    base = dict(domain={"a": 0.0, "b": 5.0, "n_space": 48}, time={"t_final": 1.0, "n_time": 30000},
                initial_condition=E1_Y0, output={"snapshot_times": [0.0, 0.25, 0.9]})
    return {
        "sine_eps0.03": _cfg(**base, model={"eps": 0.03}, control=SINE_CONTROL),
        "zero_eps0.03": _cfg(**base, model={"eps": 0.03}, control=ZERO),
        "zero_eps0": _cfg(**base, model={"eps": 0.0}, control=ZERO),
    }


_E2_TIMES = [0.0, 0.1, 0.2, 0.5, 0.75, 1.0]


def _e2(reduced=False):
    # already desk scale; ``reduced`` is accepted for a uniform preset interface
    base = dict(domain={"a": 0.0, "b": 5.0, "n_space": 30}, time={"t_final": 1.0, "n_time": 5000},
                initial_condition=E1_Y0, control=ZERO, output={"snapshot_times": _E2_TIMES})
    return {f"eps{e}": _cfg(**base, model={"eps": e}) for e in (0.5, 0.05)}


def _reduce(cfg):
    cfg["domain"]["n_space"] = 20
    cfg["time"]["n_time"] = 200
    cfg.setdefault("armijo", {})["max_outer"] = 200
    return cfg


def _e2c(reduced=False):
    base = dict(domain={"a": 0.0, "b": 5.0, "n_space": 30}, time={"t_final": 1.0, "n_time": 5000},
                initial_condition=E1_Y0, target=E2C_TARGET, control=ZERO,
                objective={"alpha": 1e-7, "gamma": 0.0}, output={"snapshot_times": _E2_TIMES})
    runs = {f"eps{e}": _cfg(**base, model={"eps": e}) for e in (0.5, 0.05)}
    return {k: _reduce(v) for k, v in runs.items()} if reduced else runs


def e3_config(gamma, reduced=False):
    cfg = _cfg(domain={"a": 0.0, "b": 5.0, "n_space": 42}, time={"t_final": 1.0, "n_time": 5000},
               model={"eps": 0.1}, objective={"alpha": 1e-7, "gamma": gamma, "c0": 0.0},
               initial_condition=E3_Y0, target=DEWETTING, control=ZERO,
               output={"snapshot_times": [0.0, 0.03, 0.05, 0.1, 0.2, 1.0]})
    return _reduce(cfg) if reduced else cfg


def _e3(reduced=False):
    return {f"gamma{g}": e3_config(g, reduced) for g in (0.02, 0.0)}


PRESETS = {
    "E1": ("forward", _e1),
    "E2": ("forward", _e2),
    "E2c": ("optimize", _e2c),
    "E3": ("optimize", _e3),
}


def preset_configs(name, reduced=False):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kind, factory = PRESETS[name]
    return kind, factory(reduced)


def _run_member(args):
    kind, cfg, directory = args
    runner = run_forward if kind == "forward" else run_optimize
    return runner(cfg, directory)


def run_experiment(name, out_dir, reduced=False, jobs=1):
    """Run every member of a preset into ``out_dir/<member>``; returns ``{member: RunArtifacts}``."""
    kind, members = preset_configs(name, reduced)
    out_dir = Path(out_dir)
    tasks = [(kind, cfg, out_dir / member) for member, cfg in members.items()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_member, tasks))
    else:
        results = [_run_member(t) for t in tasks]
    summary = {"preset": name, "reduced": reduced, "members": {}}
    for member, res in zip(members, results):
        summary["members"][member] = {"status": res.status, "directory": str(res.directory)}
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "experiment.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return dict(zip(members, results))

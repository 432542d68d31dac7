"""
Command line interface.

    thinfilm forward   --config run.json --out DIR
    thinfilm optimize  --config run.json --out DIR
    thinfilm experiment {E1,E2,E2c,E3} --out DIR [--reduced] [--jobs N]
    thinfilm gradcheck --config run.json [--seed N] [--directions N]
"""

import argparse
import json
import logging
import sys

from .config import load, resolve
from .errors import ConfigError, NewtonDivergedError, SingularMatrixError
from .optimizer import BUDGET_EXHAUSTED, CONVERGED, LINE_SEARCH_FAILED
from .runner import PRESETS, gradcheck, run_experiment, run_forward, run_optimize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_BUDGET = 4
EXIT_GRADCHECK = 5
EXIT_LINE_SEARCH = 6

log = logging.getLogger("thinfilm")

GRADCHECK_DEFAULT = {
    "domain": {"n_space": 10},
    "time": {"t_final": 1.0, "n_time": 20},
    "objective": {"gamma": 0.02, "c0": 0.5},
    "control": {"kind": "sine", "amplitude": 0.05},
}


def _optimizer_exit(status):
    return {CONVERGED: EXIT_OK, BUDGET_EXHAUSTED: EXIT_BUDGET, LINE_SEARCH_FAILED: EXIT_LINE_SEARCH}[status]


def _cmd_forward(args):
    res = run_forward(load(args.config), args.out)
    s = res.manifest["summary"]
    print(f"forward run written to {res.directory}: min Y = {s['min_Y']:.6g}, "
          f"mass drift = {s['max_mass_drift']:.3e}, Newton median/max = {s['newton_median']:.0f}/{s['newton_max']}")
    return EXIT_OK


def _cmd_optimize(args):
    res = run_optimize(load(args.config), args.out)
    s = res.manifest["summary"]
    print(f"optimization {res.status} after {s['iterations']} iterations: "
          f"J {s['J_initial']:.6e} -> {s['J_final']:.6e}, |g|^2 = {s['grad_norm_sq_final']:.3e}")
    return _optimizer_exit(res.status)


def _cmd_experiment(args):
    results = run_experiment(args.preset, args.out, reduced=args.reduced, jobs=args.jobs)
    code = EXIT_OK
    for member, res in results.items():
        print(f"{args.preset}/{member}: {res.status}")
        if res.optimization is not None:
            code = max(code, _optimizer_exit(res.status))
    return code


def _cmd_gradcheck(args):
    cfg = load(args.config) if args.config else resolve(GRADCHECK_DEFAULT)
    report = gradcheck(cfg, n_directions=args.directions, seed=args.seed)
    print(f"{'dir':>4} {'adjoint':>22} {'finite diff':>22} {'step':>9} {'rel. error':>10}")
    for row in report["directions"]:
        print(f"{row['direction']:>4} {row['adjoint']:>22.14e} {row['finite_difference']:>22.14e} "
              f"{row['step']:>9.1e} {row['relative_error']:>10.2e}")
    print("step sweep (relative error per step):")
    for row in report["directions"]:
        print("  " + "  ".join(f"{s['step']:.0e}:{s['relative_error']:.1e}" for s in row["sweep"]))
    verdict = "PASS" if report["passed"] else "FAIL"
    print(f"{verdict}: max relative error {report['max_relative_error']:.3e} (tolerance {report['tolerance']:.0e})")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=2)
    return EXIT_OK if report["passed"] else EXIT_GRADCHECK


def build_parser():
    parser = argparse.ArgumentParser(prog="thinfilm", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log optimizer progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="solve the state equation for a fixed control")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_forward)

    p = sub.add_parser("optimize", help="run steepest descent with Armijo steps")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("experiment", help="run a preset experiment")
    p.add_argument("preset", choices=sorted(PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--reduced", action="store_true",
                   help="desk-scale grid for optimization presets (n_space=20, n_time=200, max_outer=200)")
    p.add_argument("--jobs", type=int, default=1, help="run preset members in parallel processes")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("gradcheck", help="compare adjoint gradient with finite differences")
    p.add_argument("--config", help="defaults to a coarse 10 x 20 problem")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--directions", type=int, default=5)
    p.add_argument("--report", help="write the full report as JSON")
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config-invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NewtonDivergedError, SingularMatrixError) as exc:
        step = getattr(exc, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"solver-failed{where}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``porovisc {run,validate,sweep,gradcheck,audit-material} CONFIG``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .audit import SamplingPlan, incremental_gradient_audit, validate_assumptions
from .config import RunConfig, build_grid, build_laws, validate_config
from .errors import ConfigInvalid
from .simulation import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, eta_tau_sweep, run_simulation

GRADCHECK_TOL = 1e-6


def _load(path):
    cfg = RunConfig.from_json(path)
    problems = validate_config(cfg)
    if problems:
        raise ConfigInvalid(problems)
    return cfg


def cmd_run(args):
    cfg = _load(args.config)
    out = args.output or cfg.output_dir or "run_output"
    res = run_simulation(cfg, output_dir=out)
    st = res.status
    print(f"status {st.code}: {st.message}")
    print(f"steps {res.trajectory.n_steps}, min EDI slack {min(res.ledger.slack):.6e}, "
          f"det lower bound {st.healey_kromer_bound:.6g}, wall time {st.wall_time:.2f} s")
    print(f"outputs in {out}")
    return st.code


def cmd_validate(args):
    try:
        cfg = RunConfig.from_json(args.config)
    except ConfigInvalid as exc:
        problems = exc.violations
    else:
        problems = validate_config(cfg)
    for p in problems:
        print(p)
    if problems:
        return EXIT_CONFIG
    print("configuration valid")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load(args.config)
    report = eta_tau_sweep(cfg, etas=args.eta, taus=args.tau, workers=args.workers)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = _load(args.config)
    errors = incremental_gradient_audit(build_grid(cfg), build_laws(cfg), n_states=args.samples, seed=args.seed)
    worst = float(errors.max())
    print(f"{len(errors)} states, worst relative error {worst:.3e} (tolerance {GRADCHECK_TOL:g})")
    return EXIT_OK if worst <= GRADCHECK_TOL else EXIT_INVARIANT


def cmd_audit(args):
    cfg = _load(args.config)
    laws = build_laws(cfg)
    plan = SamplingPlan(d=args.dim, n_samples=args.samples, seed=args.seed)
    report = validate_assumptions(laws.material, laws.hyper, laws.visc, laws.mobility, plan,
                                  kappa=[cfg.kappa_left, cfg.kappa_right])
    print(report.to_json(indent=2))
    return EXIT_OK if report.passed else EXIT_CONFIG


def build_parser():
    parser = argparse.ArgumentParser(prog="porovisc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a simulation")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides the config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="preflight a configuration")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="(eta, tau) refinement study")
    p.add_argument("config")
    p.add_argument("--eta", type=float, nargs="+")
    p.add_argument("--tau", type=float, nargs="+")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the incremental gradient")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("audit-material", help="sample the structural assumptions of the laws")
    p.add_argument("config")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        for p in exc.violations:
            print(p, file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 a check or experiment failed, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .errors import ConsistencyError, ConvergenceError, DomainError, PreconditionError
from .hamiltonian import FAILED, check_all
from .solver import solve
from .testfn import build_barriers, build_sub_test_function, build_super_test_function
from .verify import (
    run_comparison_experiment, run_convergence_study, run_testfn_suite, run_weak_strong_check,
)

OK, FAIL, USAGE = 0, 1, 2


def _write(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(cfg, args):
    problem = cfg.problem()
    try:
        sol = solve(problem, cfg.grid(), cfg.solver_config())
    except ConvergenceError as e:
        print(f"solve failed: {e}", file=sys.stderr)
        return FAIL
    _write(sol.to_csv(), args.out)
    (sys.stderr if not args.out else sys.stdout).write(sol.report())
    return OK


def cmd_check(cfg, args):
    problem = cfg.problem()
    H, F = problem.hamiltonians, problem.kirchhoff
    try:
        b = build_barriers(H, F, dirichlet=problem.dirichlet)
        M = max(args.M, b.A + b.B)
    except PreconditionError:
        M = args.M
    failed = False
    for rep in check_all(H, F, M=M, K=args.K, sample_budget=args.samples, seed=cfg.seed):
        print("\n".join(rep.lines()))
        print()
        failed |= rep.status == FAILED
    return FAIL if failed else OK


def cmd_testfn(cfg, args):
    """Bundle touching the computed solution at the vertex."""
    problem = cfg.problem()
    grid = cfg.grid()
    sol = solve(problem, grid, cfg.solver_config())
    eps = np.broadcast_to(np.asarray(args.eps, dtype=float), (cfg.rays,))
    if np.any(eps <= 0) or np.any(eps > cfg.length):
        raise DomainError(f"eps must lie in (0, {cfg.length}]")
    u0 = sol.vertex
    u_eps = np.array([np.interp(e, grid.x, row) for e, row in zip(eps, sol.values)])
    M = float(np.max(np.abs(sol.values))) + 1.0
    H = problem.hamiltonians
    C = H.growth_constant(M, args.K)
    order = "second" if cfg.order == "second" else "first"
    build = build_super_test_function if args.kind == "super" else build_sub_test_function
    b = build(u0, u_eps, eps, args.theta, H.lam, C, M, order=order)
    _write(b.to_csv(args.samples), args.out)
    bad = b.check(args.samples)
    log = sys.stdout if args.out else sys.stderr
    log.write(f"kind: {b.kind}\norder: {order}\nC: {b.C!r}\neta: "
              + ", ".join(repr(float(e)) for e in b.eta) + "\n")
    for item in bad:
        log.write(f"violation: {item}\n")
    return FAIL if bad else OK


def cmd_verify(cfg, args):
    problem = cfg.problem()
    grid = cfg.grid()
    config = cfg.solver_config()
    if args.suite == "comparison":
        rep = run_comparison_experiment(problem, args.delta, grid, config)
    elif args.suite == "weakstrong":
        rep = run_weak_strong_check(problem, grid, config)
    elif args.suite == "testfn":
        rep = run_testfn_suite(cfg.seed, args.trials, cfg.order)
    else:
        N_list = [int(s) for s in args.nodes_list.split(",")]
        rep = run_convergence_study(problem, N_list, args.min_order, config, cfg.stencil)
    _write(rep.to_csv() if args.csv else rep.to_text(), args.out)
    return OK if rep.passed else FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="starhjb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="problem description file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--tolerance", type=float, help="override the solver tolerance")
        return p

    p = common(sub.add_parser("solve", help="solve the discrete problem"))
    p.add_argument("--out", help="CSV output file (default stdout)")
    p.set_defaults(run=cmd_solve)

    p = common(sub.add_parser("check", help="assumption reports"))
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--M", type=float, default=10.0, help="value bound for the growth check")
    p.add_argument("--K", type=float, default=10.0, help="second-derivative bound")
    p.set_defaults(run=cmd_check)

    p = common(sub.add_parser("testfn", help="test-function bundle at the vertex"))
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--kind", choices=("super", "sub"), default="super")
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--K", type=float, default=10.0)
    p.add_argument("--out", help="CSV output file (default stdout)")
    p.set_defaults(run=cmd_testfn)

    p = common(sub.add_parser("verify", help="run an experiment"))
    p.add_argument("--suite", required=True,
                   choices=("comparison", "weakstrong", "testfn", "convergence"))
    p.add_argument("--delta", type=float, default=0.1, help="Dirichlet raise (comparison)")
    p.add_argument("--trials", type=int, default=1000, help="bundles drawn (testfn)")
    p.add_argument("--nodes-list", default="50,100,200,400", help="grids (convergence)")
    p.add_argument("--min-order", type=float, default=None, help="required order (convergence)")
    p.add_argument("--csv", action="store_true", help="CSV report instead of text")
    p.add_argument("--out", help="report file (default stdout)")
    p.set_defaults(run=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text).with_overrides(args.seed, args.tolerance)
    except (OSError, UnicodeDecodeError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    try:
        return args.run(cfg, args)
    except (PreconditionError, ConsistencyError, RuntimeError) as e:
        # failed certification, unmatched bundle, no root or no convergence
        print(f"failed: {e}", file=sys.stderr)
        return FAIL
    except ValueError as e:  # DomainError, ExprSyntaxError: bad arguments
        print(f"error: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())

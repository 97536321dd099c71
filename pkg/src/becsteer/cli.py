"""Command-line entry points.

``becsteer run --config run.toml [--seed S] [--trajectories N] [--dim D]
[--out DIR]`` executes the configured pipeline.  ``becsteer oracle ...``
prints exact two-mode reference numbers for desk checks.

Exit codes: 0 success, 2 configuration/usage error (message names the
offending field), 3 numerical failure (message names the stage).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import config as config_mod
from . import twomode
from .errors import (
    AmbiguousCondensateError,
    ConfigError,
    ConvergenceError,
    SimulationError,
)
from .grids import make_grid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="becsteer",
        description="Two-component BEC Ramsey sequences with stochastic "
                    "Wigner fields, plus exact two-mode reference numbers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a configured pipeline")
    run_p.add_argument("--config", required=True, help="TOML run configuration")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override sampling.master_seed")
    run_p.add_argument("--trajectories", type=int, default=None,
                       help="override sampling.n_traj")
    run_p.add_argument("--dim", type=int, choices=(1, 2, 3), default=None,
                       help="override grid.dims (first-axis points/extent "
                            "are broadcast)")
    run_p.add_argument("--out", default=None, help="override output.directory")

    oracle_p = sub.add_parser(
        "oracle", help="exact two-mode reference calculations"
    )
    oracle_sub = oracle_p.add_subparsers(dest="oracle_command", required=True)

    bin_p = oracle_sub.add_parser("binomial", help="ideal post-splitter state")
    bin_p.add_argument("--n", type=int, required=True, help="total atom number")
    bin_p.add_argument("--kerr", type=float, default=0.0,
                       help="number-dependent phase rate chi (rad/s)")
    bin_p.add_argument("--time", type=float, default=0.0,
                       help="evolution time under the kerr phase (s)")

    fock_p = oracle_sub.add_parser("fock", help="number state |n_a, n_b>")
    fock_p.add_argument("--n", type=int, required=True, help="atoms in mode a")
    fock_p.add_argument("--n-b", type=int, default=0, help="atoms in mode b")
    for p in (bin_p, fock_p):
        p.add_argument("--theta", type=float, default=None,
                       help="apply an extra splitter pulse of this area (rad)")
        p.add_argument("--phi", type=float, default=0.0,
                       help="phase of the extra splitter pulse (rad)")
    return parser


def _oracle_report(state):
    moment = twomode.cross_moment(state)
    report = twomode.steering_report(state)
    try:
        squeezing = f"{twomode.spin_squeezing(state):.12g}"
    except twomode.InvalidStateError:
        squeezing = "undefined (no transverse mean spin)"
    lines = [
        f"total atoms        {twomode.total_number(state)}",
        f"cross moment       {moment.real:+.12g} {moment.imag:+.12g}i "
        f"(|.| = {abs(moment):.12g})",
        f"visibility         {twomode.visibility(state):.12g}",
        f"entanglement entropy (bits) {twomode.entanglement_entropy(state):.12g}",
        f"spin squeezing     {squeezing}",
        f"steering depth     {report.steering_depth_bound:.12g}",
        f"verdict            {report.verdict.value}",
    ]
    return "\n".join(lines)


def _run_oracle(args) -> int:
    if args.n < 0 or args.n > 8192:
        print("oracle: --n must be in [0, 8192]", file=sys.stderr)
        return EXIT_CONFIG
    if args.oracle_command == "binomial":
        state = twomode.binomial_state(args.n)
        if args.kerr and args.time:
            state = twomode.kerr_evolve(state, args.kerr, args.time)
    else:
        if args.n_b < 0:
            print("oracle: --n-b must be >= 0", file=sys.stderr)
            return EXIT_CONFIG
        state = twomode.fock_state(args.n, args.n_b)
    if args.theta is not None:
        state = twomode.beam_splitter(state, args.theta, args.phi)
    print(_oracle_report(state))
    return EXIT_OK


def _run_pipeline(args) -> int:
    from . import runner

    cfg = config_mod.load(args.config)
    overrides = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("sampling.master_seed", "must be >= 0")
        overrides["master_seed"] = args.seed
    if args.trajectories is not None:
        if args.trajectories < 2:
            raise ConfigError("sampling.n_traj", "need at least 2 trajectories")
        overrides["n_traj"] = args.trajectories
    if args.dim is not None and args.dim != cfg.grid.dims:
        overrides["grid"] = make_grid(
            args.dim, cfg.grid.points[0], cfg.grid.extents[0]
        )
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)

    result = runner.run(cfg)
    final = result.rows[-1]
    print(f"run complete: {len(result.rows)} observation times -> "
          f"{result.out_dir}")
    print(f"final visibility {final['visibility']:.4f} "
          f"(depth bound {final['depth_bound']:.1f}, {final['verdict']})")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run_pipeline(args)
        return _run_oracle(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (twomode.InvalidStateError, twomode.OracleSizeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"numerical failure in stage '{exc.stage}': {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AmbiguousCondensateError as exc:
        print(f"numerical failure in stage 'analysis': {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

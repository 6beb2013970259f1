"""Command-line entry point: ``pfrg <subcommand> ...``.

Subcommands take a scenario file path or a preset name.  Exit status is 0
only when every flag of every experiment passes.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from pfrg import harness
from pfrg.channel import FADING_MODELS
from pfrg.oracle import InfeasibleError


def _scenario(args, config):
    sc = harness.resolve(config)
    opt = vars(args)
    return sc.with_overrides(seed=opt.get("seed"), n_slots=opt.get("slots"), decimate=opt.get("decimate"),
                             fading=opt.get("fading"))


def _out(args):
    return getattr(args, "out_dir", None)


def _print_flags(res) -> None:
    for k, v in res.flags.items():
        print(f"  {'PASS' if v else 'FAIL'}  {k}")


def cmd_run(args) -> int:
    ok = True
    for config in args.configs:
        sc = _scenario(args, config)
        res = harness.run_experiment(sc, out_dir=_out(args), region=not args.no_region, ode=not args.no_ode)
        s = res.run
        print(f"{sc.name}: tail theta {[round(float(v), 3) for v in s.tail_mean_theta]} "
              f"tail bias {[float(f'{v:.5g}') for v in s.tail_mean_bias]}")
        if res.oracle is not None:
            print(f"  oracle theta* {[round(float(v), 3) for v in res.oracle.theta_star]} "
                  f"nu* {[float(f'{v:.5g}') for v in res.oracle.nu_star]}")
        if res.oracle_error:
            print(f"  oracle: {res.oracle_error}")
        _print_flags(res)
        for f in res.files:
            print(f"  wrote {f}")
        ok &= res.passed
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    sc = _scenario(args, args.config)
    est = harness.sweep_region(sc)
    path = harness.output_dir(sc, _out(args)) / f"{sc.name}_boundary.csv"
    est.to_csv(path)
    print(f"{sc.name}: {est.boundary_points.shape[0]} boundary points from {est.slots_used} slots -> {path}")
    return 0


def cmd_oracle(args) -> int:
    sc = _scenario(args, args.config)
    try:
        sol = harness.solve_oracle(sc)
    except InfeasibleError as exc:
        print(f"{sc.name}: infeasible: {exc}", file=sys.stderr)
        return 1
    path = harness.output_dir(sc, _out(args)) / f"{sc.name}_oracle.json"
    sol.to_json(path)
    print(json.dumps(sol.to_dict(), indent=2))
    worst = max(sol.residuals.values())
    return 0 if worst <= 1e-6 else 1


def cmd_ode(args) -> int:
    sc = _scenario(args, args.config)
    traj = harness.solve_ode(sc)
    path = harness.output_dir(sc, _out(args)) / f"{sc.name}_ode.csv"
    traj.to_csv(path)
    print(f"{sc.name}: rest theta {[round(float(v), 3) for v in traj.theta_final]} "
          f"nu {[float(f'{v:.5g}') for v in traj.nu_final]} converged={traj.converged} -> {path}")
    return 0 if traj.converged else 1


def cmd_compare(args) -> int:
    scenarios = [_scenario(args, c) for c in args.configs]
    rows = harness.compare_algorithms(scenarios)
    print(harness.format_table(rows))
    path = harness.output_dir(scenarios[0], _out(args)) / "compare.json"
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)
    print(f"wrote {path}")
    return 0


def cmd_presets(args) -> int:
    for name in harness.preset_names():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sc = harness.load_preset(name)
        print(f"{name:<22}{sc.algorithm:<11}theta_min={list(sc.theta_min_mbps)} slots={sc.n_slots}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out-dir", help=f"output directory (default ${harness.OUT_DIR_ENV} or ./results)")
    common.add_argument("--slots", type=int, help="override the number of slots")
    common.add_argument("--decimate", type=int, help="keep every n-th slot in the time series")
    common.add_argument("--fading", choices=FADING_MODELS, help="override the fading model")

    p = argparse.ArgumentParser(prog="pfrg", parents=[common],
                                description="Proportional-fair scheduling with rate guarantees.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="simulate, solve the oracle and the ODE, emit results")
    r.add_argument("configs", nargs="+")
    r.add_argument("--no-region", action="store_true", help="skip the boundary sweep")
    r.add_argument("--no-ode", action="store_true", help="skip the coupled ODE")
    r.set_defaults(func=cmd_run)

    for name, func, text in (("sweep-region", cmd_sweep, "estimate the average rate region boundary"),
                             ("oracle", cmd_oracle, "solve for the optimal throughputs and multipliers"),
                             ("ode", cmd_ode, "integrate the coupled mean ODE to its rest point")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("config")
        s.set_defaults(func=func)

    c = sub.add_parser("compare", parents=[common], help="tabulate several algorithms on one channel")
    c.add_argument("configs", nargs="+")
    c.set_defaults(func=cmd_compare)

    pr = sub.add_parser("presets", help="shipped scenarios")
    pr.add_argument("action", choices=["list"])
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"pfrg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

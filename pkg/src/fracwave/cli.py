"""Command-line front end.

Commands
--------
simulate        one trajectory from a config file; snapshot norms as CSV
converge        coupled Monte Carlo ladder along --axis {space,time}
table {1,2,3}   canned reproduction of the convergence-rate tables
figures         canned reproduction of the temporal-order study
validate-noise  covariance oracle suite for one (H, M, tau)

Exit codes: 0 ok, 1 rate/oracle assertion failure, 2 configuration error,
3 numerical failure.
"""

import argparse
import sys
import time

from .errors import ConfigurationError, NumericalError
from .harness import (parse_config, plan_from_config, run_figures, run_ladder,
                      run_table1, run_table2, run_table3, validate_noise)
from .integrator import run
from .noise import NoiseConfig, sample_bundle, trajectory_seed
from .spectrum import l2_norm

_TABLES = {1: run_table1, 2: run_table2, 3: run_table3}


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w"), True


def _emit_reports(reports, out_path):
    fh, close = _open_out(out_path)
    try:
        for report in reports:
            report.write_csv(fh)
    finally:
        if close:
            fh.close()


def _cmd_simulate(args):
    cfg = parse_config(args.config)
    if cfg.get("M", 0) < 1 or cfg.get("n", 0) < 1:
        raise ConfigurationError("simulate needs both n and M")
    cfg.setdefault("levels", f"{cfg['M']},{2 * cfg['M']}")
    cfg.setdefault("K", 1)
    plan = plan_from_config(cfg, axis="time")
    from .harness import _prepare_cases
    table, cases, union = _prepare_cases(plan)
    problem, conv = cases[0]
    bundle = sample_bundle(NoiseConfig(plan.hurst, plan.steps, plan.horizon,
                                       union, rho=plan.rho,
                                       seed=trajectory_seed(plan.seed, 0)))
    stride = max(1, plan.steps // 200)
    snapshots = sorted(set(range(0, plan.steps + 1, stride)) | {plan.steps})
    t0 = time.perf_counter()
    snaps = run(problem, conv, bundle, scheme=plan.scheme, snapshots=snapshots)
    wall = (time.perf_counter() - t0) * 1e3
    fh, close = _open_out(args.out)
    try:
        for key in sorted(cfg):
            fh.write(f"# {key}={cfg[key]}\n")
        fh.write(f"# wall_ms={wall:.1f}\n")
        fh.write("step,time,u_norm,v_norm\n")
        tau = plan.horizon / plan.steps
        for m in snapshots:
            u, v = snaps[m]
            fh.write(f"{m},{m * tau:.17g},{l2_norm(u):.17g},{l2_norm(v):.17g}\n")
    finally:
        if close:
            fh.close()
    return 0


def _cmd_converge(args):
    cfg = parse_config(args.config)
    plan = plan_from_config(cfg, axis=args.axis)
    report = run_ladder(plan)
    _emit_reports([report], args.out)
    return 0


def _cmd_table(args):
    reports, results = _TABLES[args.which](scale=args.scale)
    _emit_reports(reports, args.out)
    return _assess(results)


def _cmd_figures(args):
    reports, results = run_figures(scale=args.scale)
    _emit_reports(reports, args.out)
    return _assess(results)


def _assess(results):
    failed = False
    for res in results:
        print(res.describe(), file=sys.stderr)
        failed = failed or not res.passed
    return 1 if failed else 0


def _cmd_validate_noise(args):
    report = validate_noise(args.hurst, args.steps, args.tau)
    fh, close = _open_out(args.out)
    try:
        report.write_csv(fh)
    finally:
        if close:
            fh.close()
    return 0 if report.passed else 1


def _build_parser():
    parser = argparse.ArgumentParser(prog="fracwave")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trajectory from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("converge", help="coupled Monte Carlo refinement ladder")
    p.add_argument("--axis", choices=("space", "time"), required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("table", help="reproduce a convergence-rate table")
    p.add_argument("which", type=int, choices=(1, 2, 3))
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_table)

    p = sub.add_parser("figures", help="reproduce the temporal-order study")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_figures)

    p = sub.add_parser("validate-noise", help="noise covariance oracle suite")
    p.add_argument("--H", dest="hurst", type=float, required=True)
    p.add_argument("--M", dest="steps", type=int, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_validate_noise)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

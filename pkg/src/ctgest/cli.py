"""Batch command line: simulate | estimate | test | montecarlo | xpsi.

Exit codes: 0 success, 2 input error, 3 solver non-convergence,
4 singular matrix.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._json import dumps_stable
from .errors import (
    CohortParseError,
    ConfigError,
    NoEventsError,
    NonConvergenceError,
    SingularityError,
)
from .estimation import (
    result_csv_header,
    result_to_csv_row,
    result_to_json_dict,
    solve,
    stacked,
)
from .harness import RunConfig, parse_config, run_montecarlo
from .intensity import weibull_mle
from .score_test import run_test
from .shift import SimpleAFT, dx_dpsi, x_closed_form, x_ode
from .simulate import achieved_fractions, save_latents, simulate_cohort
from .trajectory import load_cohort, save_cohort

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGENCE = 3
EXIT_SINGULAR = 4


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, dgp=replace(cfg.dgp, seed=args.seed))
    if getattr(args, "reps", None) is not None:
        cfg = replace(cfg, replications=args.reps)
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    cohort, latents = simulate_cohort(cfg.dgp)
    save_cohort(cohort, out / "cohort.csv")
    save_latents(latents, out / "latents.csv")
    fr = achieved_fractions(cohort)
    print(f"wrote {out / 'cohort.csv'} and {out / 'latents.csv'}")
    print(
        f"n={cfg.dgp.n} initiated={fr['initiated']:.4f} "
        f"died_before_tau={fr['died_before_tau']:.4f}"
    )
    return EXIT_OK


def _psi_scan(cohort, cfg, lo, hi, steps, out: Path):
    theta = weibull_mle(cohort)
    rows = []
    for psi in np.linspace(lo, hi, steps):
        resid = stacked(cohort, theta, [psi], SimpleAFT()).mean[4]
        rows.append((psi, resid))
    path = out / "psi_scan.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["psi", "effect_component"])
        for psi, resid in rows:
            writer.writerow([format(psi, ".17g"), format(resid, ".17g")])
    print(f"wrote {path}")
    for psi, resid in rows:
        print(f"psi={psi: .6f} effect_component={resid: .6e}")


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    cohort = load_cohort(args.cohort)
    if len(cohort) == 0:
        print("error: empty cohort", file=sys.stderr)
        return EXIT_INPUT
    if args.psi_scan is not None:
        lo, hi, steps = args.psi_scan
        _psi_scan(cohort, cfg, float(lo), float(hi), int(float(steps)), out)
        return EXIT_OK
    result = solve(cohort, SimpleAFT(), opts=cfg.solve_options())
    path = out / "result.json"
    path.write_text(dumps_stable(result_to_json_dict(result)), encoding="utf-8")
    print(f"wrote {path}")
    print(f"{'parameter':<10}{'estimate':>14}{'se':>14}"
          f"{'ci_lo':>14}{'ci_hi':>14}")
    for name, est, se, (lo, hi) in zip(
        result.names, result.params, result.se, result.ci
    ):
        print(f"{name:<10}{est:>14.6f}{se:>14.6f}{lo:>14.6f}{hi:>14.6f}")
    return EXIT_OK if result.diagnostics["converged"] else EXIT_NONCONVERGENCE


def cmd_test(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    cohort = load_cohort(args.cohort)
    if len(cohort) == 0:
        print("error: empty cohort", file=sys.stderr)
        return EXIT_INPUT
    if args.h_extra != "outcome":
        print(f"error: unknown h_extra {args.h_extra!r}", file=sys.stderr)
        return EXIT_INPUT
    tr = run_test(cohort, h_extra=args.h_extra)
    payload = tr.as_dict()
    payload["h_extra"] = args.h_extra
    path = out / "test.json"
    path.write_text(dumps_stable(payload), encoding="utf-8")
    print(f"wrote {path}")
    print(f"statistic={tr.statistic:.6f} dof={tr.dof} p_value={tr.p_value:.6g}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    summary, records = run_montecarlo(cfg)
    (out / "mc_summary.json").write_text(dumps_stable(summary), encoding="utf-8")
    if "csv" in cfg.formats:
        _write_per_rep(records, out / "per_rep.csv")
    print(f"wrote {out / 'mc_summary.json'}")
    print(
        f"replications={summary['replications']} converged={summary['converged']} "
        f"failed={summary['failed']}"
    )
    if "bias" in summary:
        print(f"bias(psi)={summary['bias']['psi']:+.5f} "
              f"sd(psi)={summary['empirical_sd']['psi']:.5f} "
              f"mean_se(psi)={summary['mean_se']['psi']:.5f} "
              f"coverage(psi)={summary['coverage']['psi']:.4f}")
    if "test_rejection_rate_05" in summary:
        print(f"test rejection rate at 0.05: {summary['test_rejection_rate_05']:.4f}")
    return EXIT_OK


_PER_REP_NAMES = ("xi", "gamma", "theta1", "theta2", "psi")


def _write_per_rep(records, path) -> None:
    cols = ["rep", "seed", "frac_initiated", "frac_died_before_tau", "error"]
    cols += result_csv_header(_PER_REP_NAMES)
    cols += ["test_statistic", "test_p_value"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in records:
            row = [
                r["rep"],
                r["seed"],
                r.get("frac_initiated", ""),
                r.get("frac_died_before_tau", ""),
                r.get("error", ""),
            ]
            if "params" in r:
                row += [None, int(r.get("converged", False)), r.get("residual_norm")]
                row += r["params"] + r["se"]
                for lo, hi in r["ci"]:
                    row += [lo, hi]
            else:
                row += [""] * len(result_csv_header(_PER_REP_NAMES))
            row += [r.get("test_statistic", ""), r.get("test_p_value", "")]
            writer.writerow(
                [format(v, ".17g") if isinstance(v, float) else v for v in row]
            )


def cmd_xpsi(args) -> int:
    cfg = _load_config(args)
    cohort = load_cohort(args.cohort)
    match = [p for p in cohort if p.id == args.id]
    if not match:
        print(f"error: unknown patient id {args.id!r}", file=sys.stderr)
        return EXIT_INPUT
    traj = match[0]
    model = SimpleAFT()
    psi = args.psi
    if args.grid:
        ts = [float(x) for x in args.grid.split(",")]
    else:
        ts = np.linspace(0.0, traj.tau, args.grid_n).tolist()
    writer = csv.writer(sys.stdout)
    writer.writerow(["t", "x_psi", "closed_form", "ode", "dx_dpsi"])
    for t in ts:
        closed = x_closed_form(traj, psi, model, t)
        ode = x_ode(traj, psi, model, t)
        grad = dx_dpsi(traj, psi, model, t)[0]
        writer.writerow(
            [format(v, ".17g") for v in (t, closed, closed, ode, grad)]
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctgest",
        description=(
            "Continuous-time g-estimation toolkit: simulate confounded "
            "survival cohorts, estimate treatment effects, test for any "
            "effect, and validate by Monte Carlo."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, cohort_arg=False):
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--seed", type=int, help="override dgp.seed")
        p.add_argument("--out", help="output directory")
        if cohort_arg:
            p.add_argument("cohort", help="cohort CSV path")

    p_sim = sub.add_parser("simulate", help="write cohort.csv and latents.csv")
    common(p_sim)
    p_sim.set_defaults(fn=cmd_simulate)

    p_est = sub.add_parser("estimate", help="fit all parameters on a cohort")
    common(p_est, cohort_arg=True)
    p_est.add_argument(
        "--psi-scan",
        nargs=3,
        metavar=("LO", "HI", "STEPS"),
        help="tabulate the effect estimating component over a grid instead",
    )
    p_est.set_defaults(fn=cmd_estimate)

    p_test = sub.add_parser("test", help="model-free treatment-effect test")
    common(p_test, cohort_arg=True)
    p_test.add_argument("--h-extra", default="outcome", help="extra weight name")
    p_test.set_defaults(fn=cmd_test)

    p_mc = sub.add_parser("montecarlo", help="replicated validation harness")
    common(p_mc)
    p_mc.add_argument("--reps", type=int, help="override mc.replications")
    p_mc.set_defaults(fn=cmd_montecarlo)

    p_x = sub.add_parser("xpsi", help="tabulate the mimicking value for one patient")
    common(p_x, cohort_arg=True)
    p_x.add_argument("--id", required=True, help="patient id")
    p_x.add_argument("--psi", type=float, required=True)
    p_x.add_argument("--grid", help="comma-separated times")
    p_x.add_argument("--grid-n", type=int, default=11, help="linspace size")
    p_x.set_defaults(fn=cmd_xpsi)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CohortParseError, ConfigError, FileNotFoundError, NoEventsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except SingularityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

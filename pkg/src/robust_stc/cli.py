"""Command-line entry point: ``simulate``, ``tune`` and ``experiment``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_json, parse_policy, scenario_from_config, scenario_kwargs
from .errors import StcError
from .experiments import run_table_experiment
from .samplers import SelfTrigGlobal, SelfTrigNonlinear, SelfTrigUniversal
from .simulation import simulate
from .tuning import (perturbation_sup_asymptotic, perturbation_sup_exponential,
                     perturbation_sup_global, suggest_nu)


def _plot_svg(trace, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_x, ax_h) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for i in range(trace.states.shape[1]):
        ax_x.plot(trace.times, trace.states[:, i], lw=1, label=f"x{i + 1}")
    ax_x.set_ylabel("state")
    ax_x.legend(loc="upper right")
    if len(trace.sample_instants) > 1:
        gaps = np.diff(trace.sample_instants)
        ax_h.stem(trace.sample_instants[:-1], gaps, markerfmt=" ", basefmt=" ")
    ax_h.set_xlabel("t [s]")
    ax_h.set_ylabel("interval [s]")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_simulate(args):
    scenario = scenario_from_config(load_json(args.config))
    trace = simulate(scenario)
    trace.to_csv(args.out)
    if args.svg:
        _plot_svg(trace, args.svg)
    msg = f"{len(trace.times)} rows, {len(trace.sample_instants)} samples"
    if trace.diverged:
        msg += f", diverged at t={trace.divergence_time:g}"
    print(msg, file=sys.stderr)
    return 0


def tuning_report(cfg):
    """Tuning report for the policy of a scenario config, plus suggested coefficients if asked."""
    kw = scenario_kwargs({k: v for k, v in cfg.items() if k not in ("policy", "x0")})
    extra = {}
    targets = cfg.get("tuning")
    if targets is not None:
        from .bounds import ExpCertificate

        cert = ExpCertificate.from_dict(targets.get("certificate") or cfg["policy"]["certificate"])
        nu, report = suggest_nu(cert, float(targets["h_mid"]), float(targets["h_max"]),
                                float(targets["b"]), float(targets.get("nu2", 10.0)),
                                targets.get("nu1"))
        extra["nu"] = nu.to_dict()
        return report, extra
    spec = dict(cfg["policy"])
    spec["waive_check"] = True
    policy = parse_policy(spec, kw["dt"], kw["nominal_eta"], kw["model"], kw["eta_box"])
    if isinstance(policy, SelfTrigUniversal):
        report = perturbation_sup_exponential(policy.cert, policy.nu)
    elif isinstance(policy, SelfTrigNonlinear):
        report = perturbation_sup_asymptotic(policy.cert, policy.nu, policy.delta)
    elif isinstance(policy, SelfTrigGlobal):
        report = perturbation_sup_global(policy.cert, policy.envelope, policy.nu, policy.delta)
    else:
        raise StcError(f"policy kind {policy.kind!r} has no tuning constraint")
    return report, extra


def cmd_tune(args):
    report, extra = tuning_report(load_json(args.config))
    print(json.dumps({**report.to_dict(), **extra}, indent=2))
    return 0 if report.feasible else 1


def cmd_experiment(args):
    report = run_table_experiment(load_json(args.config), csv_dir=args.csv_dir)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
    for row in report.to_dict(include_runs=False)["table"]:
        avg = row["avg_interval"]
        print(f"{row['case']:>10} {row['policy']:>22}  J_avg={row['J_avg']:.4f}  "
              f"avg_h={'-' if avg is None else f'{avg * 1e3:.4f} ms'}"
              + (f"  diverged={row['diverged_runs']}" if row["diverged_runs"] else ""))
    for check in report.checks:
        print(f"[{'PASS' if check.passed else 'FAIL'}] {check.spec.get('kind')}: {check.detail}")
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="robust-stc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one scenario and write its trace as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", help="also write a plot of states and intervals")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune", help="check the tuning constraint of a scenario's policy")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("experiment", help="run a table experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv-dir", help="write every trace to this directory")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

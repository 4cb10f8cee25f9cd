"""Command-line front end: simulate, sweep, verify, converse.

Every command writes CSV to ``--out`` (stdout by default) and a short
summary to stderr.  Validation problems exit with status 2; ``verify``
exits with status 1 when a bound report fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

from . import __version__
from .bounds import bound_setup, format_reports, reports_csv, reports_from_ensemble
from .curve import (
    CONVERSE_CASES,
    build_curve,
    converse_min_time,
    converse_scan,
    h_of_mu,
    locate_segment,
    three_state_channel,
)
from .ensemble import ensemble
from .errors import EnergySchedError, LambdaOutOfRange, PreconditionViolated
from .models import mean_rate
from .policies import DppConfig, design_omega_only
from .scenario import BUNDLED, Scenario, load
from .sim import delay_stats, run

DEFAULT_EPSILONS = tuple(2.0**-k for k in range(7, 13))
SWEEP_HEADER = ["policy", "v", "delta", "p_bar", "q_bar", "q_real_bar", "mu_bar", "se_p", "se_q", "p_expected"]
CONVERSE_HEADER = ["case", "y", "z", "epsilon", "t_min", "eps_t_min", "mu0", "p0"]


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        out = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None
    return out


def _write(out: str, text: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _scenario(args) -> Scenario:
    scen = load(args.scenario)
    return scen.with_overrides(
        horizon=getattr(args, "horizon", None),
        n_runs=getattr(args, "runs", None),
        base_seed=getattr(args, "seed", None),
        discipline=getattr(args, "discipline", None),
        trim_fraction=getattr(args, "trim", None),
    )


def _jobs(args) -> int:
    return args.jobs if args.jobs else (os.cpu_count() or 1)


def _check_horizon(scen: Scenario) -> None:
    if scen.horizon < 1:
        raise UsageError("--horizon must be at least 1")
    if scen.horizon > scen.schedule.total_slots:
        raise UsageError(f"horizon {scen.horizon} exceeds the {scen.schedule.total_slots:.0f}-slot schedule")
    if scen.n_runs < 1:
        raise UsageError("--runs must be at least 1")


# -- commands -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    scen = _scenario(args)
    _check_horizon(scen)
    policy = scen.build_policy(args.v)
    ens = ensemble(
        scen.schedule, policy, scen.horizon, scen.n_runs, scen.base_seed, q0=scen.q0, jobs=_jobs(args)
    )
    stride = args.every or max(1, scen.horizon // 1000)
    _write(args.out, ens.to_csv(stride))
    H = scen.horizon
    _log(
        f"{scen.name}: t={H} runs={scen.n_runs} p_bar={ens.p_bar[-1]:.6f} "
        f"mu_bar={ens.mu_bar[-1]:.6f} E[Q(t)]={ens.q_mean[H]:.4f}"
    )
    if args.delays_out:
        trace = run(scen.schedule, policy, H, scen.discipline, scen.q0, scen.base_seed, track_delays=True)
        stats = delay_stats(trace)
        Path(args.delays_out).write_text(stats.histogram_csv())
        _log(
            f"{scen.discipline} delays (seed {scen.base_seed}): trimmed({scen.trim_fraction})="
            f"{stats.trimmed_mean(scen.trim_fraction):.4f} undelivered={stats.undelivered:.1f}"
        )
    return 0


def cmd_sweep(args) -> int:
    scen = _scenario(args)
    _check_horizon(scen)
    v_list = args.v_list if args.v_list is not None else list(scen.v_sweep)
    if not v_list:
        raise UsageError("sweep needs a nonempty V list (--v-list or v_sweep in the scenario)")
    if scen.policy.kind not in ("dpp", "dpp-place"):
        raise UsageError("sweep needs a dpp or dpp-place scenario policy")
    deltas = args.deltas if args.deltas is not None else list(scen.delta_sweep)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    jobs = _jobs(args)

    def row(kind, v, delta, policy, expected):
        ens = ensemble(scen.schedule, policy, scen.horizon, scen.n_runs, scen.base_seed, q0=scen.q0, jobs=jobs)
        w.writerow(
            [
                kind,
                "" if v is None else repr(float(v)),
                "" if delta is None else repr(float(delta)),
                repr(float(ens.p_bar[-1])),
                repr(float(ens.q_bar[-1])),
                repr(float(ens.q_real_mean[:-1].mean())),
                repr(float(ens.mu_bar[-1])),
                repr(float(ens.p_bar_se[-1])),
                repr(float(ens.q_bar_se[-1])),
                "" if expected is None else repr(float(expected)),
            ]
        )
        _log(f"{kind} v={v} delta={delta}: p_bar={ens.p_bar[-1]:.5f} q_bar={ens.q_bar[-1]:.3f}")

    for v in v_list:
        row(scen.policy.kind, v, None, scen.build_policy(v), None)
    if deltas:
        if len(scen.schedule.phases) != 1:
            raise UsageError("omega-only baselines need a single-phase scenario")
        phase = scen.schedule.phases[0]
        curve = build_curve(phase.channel)
        for delta in deltas:
            target = phase.arrivals.lam + delta
            policy = design_omega_only(curve, min(target, curve.mean_rate))
            row("omega-only", None, delta, policy, h_of_mu(curve, min(target, curve.mean_rate)))
    _write(args.out, buf.getvalue())
    return 0


def cmd_verify(args) -> int:
    scen = _scenario(args)
    _check_horizon(scen)
    if len(scen.schedule.phases) != 1:
        raise UsageError("verify needs a single-phase scenario")
    phase = scen.schedule.phases[0]
    lam, top = phase.arrivals.lam, mean_rate(phase.channel)
    if lam > top:
        raise LambdaOutOfRange(f"infeasible scenario: arrival rate {lam} exceeds E[omega] = {top}")
    if scen.policy.kind not in ("dpp", "dpp-place"):
        raise UsageError("verify needs a dpp or dpp-place scenario policy")
    policy = scen.build_policy(args.v)
    assert isinstance(policy, DppConfig)
    wm = scen.schedule.omega_max
    if policy.v < wm**2:
        raise PreconditionViolated(f"V={policy.v} is below omega_max^2={wm**2}; the bounds do not apply")
    locate_segment(build_curve(phase.channel), lam)
    setup = bound_setup(scen.schedule, policy, scen.q0)
    r = setup.right.r * (2 if args.negative_control else 1)
    level = 1.5 * policy.v / setup.ts.omega_b
    ens = ensemble(
        scen.schedule,
        policy,
        scen.horizon,
        scen.n_runs,
        scen.base_seed,
        q0=scen.q0,
        exp_rs=(r,),
        tail_levels=(level,),
        jobs=_jobs(args),
    )
    reports = reports_from_ensemble(setup, ens, corrupt_r=args.negative_control)
    _write(args.out, reports_csv(reports))
    _log(format_reports(reports))
    return 0 if all(rep.passed for rep in reports) else 1


def cmd_converse(args) -> int:
    eps_list = args.epsilon if args.epsilon is not None else list(DEFAULT_EPSILONS)
    if not eps_list:
        raise UsageError("need at least one epsilon")
    for eps in eps_list:
        if not 0 < eps < 1 / 64:
            raise UsageError(f"epsilon values must lie in (0, 1/64), got {eps}")
    if (args.y is None) != (args.z is None):
        raise UsageError("give both --y and --z, or neither")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERSE_HEADER)
    if args.y is None:
        setups = [(case, spec["y"], spec["z"], spec["theta2"]) for case, spec in CONVERSE_CASES.items()]
    else:
        setups = [("custom", args.y, args.z, (0.0, 1.0))]
    for case, y, z, th2 in setups:
        for eps in eps_list:
            if args.initial is not None:
                curve = build_curve(three_state_channel(y, z))
                initial = tuple(args.initial)
                t_min = converse_min_time(curve, 1.0, eps, initial)
            else:
                res = converse_scan(y, z, eps, th2, grid=args.grid)
                initial, t_min = res.initial, res.t_min
            w.writerow([case, repr(y), repr(z), repr(eps), t_min, repr(eps * t_min), repr(initial[0]), repr(initial[1])])
            _log(f"case {case} eps={eps:g}: t_min={t_min} eps*t_min={eps * t_min:.4f}")
    _write(args.out, buf.getvalue())
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="energysched",
        description="Simulate and analyse drift-plus-penalty power scheduling.",
        epilog=f"Bundled scenarios: {', '.join(BUNDLED)}",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, v=True):
        p.add_argument("--scenario", required=True, help="scenario JSON file or bundled scenario name")
        if v:
            p.add_argument("--v", type=float, help="override the scenario's V")
        p.add_argument("--horizon", type=int, help="slots per run")
        p.add_argument("--runs", type=int, help="number of independent runs")
        p.add_argument("--seed", type=int, help="base seed; run i uses seed + i")
        p.add_argument("--out", default="-", help="output CSV path (default stdout)")
        p.add_argument("--jobs", type=int, default=0, help="worker processes (default: all cores)")

    p = sub.add_parser("simulate", help="ensemble time averages versus t")
    common(p)
    p.add_argument("--discipline", choices=["fifo", "lifo"])
    p.add_argument("--trim", type=float, help="trim fraction for the delay summary")
    p.add_argument("--every", type=int, default=0, help="CSV row stride (default horizon/1000)")
    p.add_argument("--delays-out", help="write the delay histogram of the base-seed run here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="power and backlog versus V, plus omega-only baselines")
    common(p, v=False)
    p.add_argument("--v-list", type=_float_list, help="V values, comma or space separated")
    p.add_argument("--deltas", type=_float_list, help="omega-only service margins")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="compare ensemble statistics with the analytic bounds")
    common(p)
    p.add_argument("--negative-control", action="store_true", help="double r in the exponential-moment check")
    p.set_defaults(func=cmd_verify, horizon_default=500, runs_default=10000)

    p = sub.add_parser("converse", help="minimum time to recover from one bad first slot")
    p.add_argument("--y", type=float, help="P(rate 3) of a custom three-state channel")
    p.add_argument("--z", type=float, help="P(rate 2) of a custom three-state channel")
    p.add_argument("--epsilon", type=_float_list, help="epsilon values (default 2^-7 .. 2^-12)")
    p.add_argument("--initial", type=_float_list, help="fixed first-slot point 'mu,p' instead of a scan")
    p.add_argument("--grid", type=int, default=21, help="grid points per decision variable")
    p.add_argument("--out", default="-", help="output CSV path (default stdout)")
    p.set_defaults(func=cmd_converse)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify":
        if args.horizon is None:
            args.horizon = args.horizon_default
        if args.runs is None:
            args.runs = args.runs_default
    if getattr(args, "initial", None) is not None and len(args.initial) != 2:
        parser.error("--initial takes two numbers: mu,p")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (EnergySchedError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 2
    return 0  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())

"""Analytic drift constants and finite-time bounds, checked against ensembles.

Every bound here is the explicit expression behind an asymptotic claim, so
it can be compared with a Monte Carlo estimate slot by slot.  A
:class:`BoundReport` passes when the estimate does not exceed the bound by
more than three standard errors.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .curve import TimeshareSolution, build_curve, locate_segment
from .ensemble import EnsembleResult, ensemble
from .errors import (
    BetaExceedsDelta,
    EnergySchedError,
    GammaNonpositive,
    InvalidWindow,
    PreconditionViolated,
)
from .policies import DppConfig
from .sim import as_schedule

R_CHOICE_TOL = 1e-12
SE_FACTOR = 3.0
REPORT_HEADER = ["quantity", "analytic", "empirical", "se", "verdict", "slack", "t"]


@dataclass(frozen=True)
class DriftParams:
    """Constants of the exponential-moment drift bound for one process Z(t)."""

    delta_max: float
    beta: float
    theta_threshold: float
    r: float
    rho: float
    d_const: float


def drift_constants(ts: TimeshareSolution) -> tuple[float, float]:
    """(beta_L, beta_R): guaranteed drift left and right of V/w_b."""
    return ts.lam - ts.mu_b_plus_1, ts.mu_b - ts.lam


def r_choice_gap(r: float, beta: float, delta_max: float) -> float:
    """rb/2 minus the quadratic remainder term; nonnegative for a valid r."""
    rd = r * delta_max
    return r * beta / 2 - rd * rd / (2 * (1 - rd / 3))


def drift_params(beta: float, delta_max: float, theta_threshold: float) -> DriftParams:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not delta_max > 0:
        raise ValueError(f"delta_max must be positive, got {delta_max}")
    if beta > delta_max:
        raise BetaExceedsDelta(f"beta={beta} exceeds delta_max={delta_max}")
    r = beta / (delta_max**2 + delta_max * beta / 3)
    rho = 1 - r * beta / 2
    log_d = math.log(math.exp(r * delta_max) - rho) + r * theta_threshold - math.log(1 - rho)
    d_const = math.exp(log_d) if log_d < 709 else math.inf
    if not 0 < r * delta_max < 3:
        raise AssertionError(f"r*delta_max={r * delta_max} outside (0, 3)")
    if r_choice_gap(r, beta, delta_max) < -R_CHOICE_TOL:
        raise AssertionError("exponent r violates the quadratic-remainder condition")
    return DriftParams(delta_max, beta, theta_threshold, r, rho, d_const)


def exp_moment_bound(params: DriftParams, z0: float, t):
    """D + (e^{r z0} - D) rho^t; ``t`` may be an array."""
    D = params.d_const
    if math.isinf(D):
        return D if np.ndim(t) == 0 else np.full(np.shape(t), D)
    return D + (math.exp(params.r * z0) - D) * np.power(params.rho, t)


def occupancy_bound(params: DriftParams, c: float, big_t: int, t, z0: float):
    """Bound on the expected fraction of slots 0..t-1 with Z >= theta + c.

    With z0 <= theta and ``big_t`` = 0 the tighter closed form is used.
    """
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    t_arr = np.asarray(t, dtype=float)
    if big_t < 0 or np.any(big_t >= t_arr):
        raise InvalidWindow(f"need 0 <= T < t, got T={big_t}, t={t}")
    r, rho, delta = params.r, params.rho, params.delta_max
    if big_t == 0 and z0 <= params.theta_threshold:
        out = math.exp(-r * c) * (math.exp(r * delta) - rho + 1 / t_arr) / (1 - rho)
    else:
        steady = (math.exp(r * delta) - rho) * math.exp(-r * c) / (1 - rho)
        transient = big_t / t_arr + math.exp(r * (z0 - c - params.theta_threshold)) * rho**big_t / (
            t_arr * (1 - rho)
        )
        out = steady + transient
    return float(out) if np.ndim(out) == 0 else out


def _check_v(v: float, omega_max: float | None) -> None:
    if omega_max is not None and v < omega_max**2:
        raise PreconditionViolated(f"V={v} is below omega_max^2={omega_max**2}")


def queue_mean_bound(v: float, omega_b: float, params_right: DriftParams, omega_max: float | None = None) -> float:
    """Time-uniform bound on E[Q(t)] for 0 <= Q(0) <= V/w_b."""
    _check_v(v, omega_max)
    r, rho, delta = params_right.r, params_right.rho, params_right.delta_max
    return v / omega_b + math.log(1 + (math.exp(r * delta) - rho) / (1 - rho)) / r


def right_params(v: float, ts: TimeshareSolution, delta_max: float) -> DriftParams:
    """Parameters for Z = Q with threshold V/w_b and drift beta_R."""
    return drift_params(drift_constants(ts)[1], delta_max, v / ts.omega_b)


def left_params(ts: TimeshareSolution, delta_max: float) -> DriftParams:
    """Parameters for Z = V/w_b - Q in the limit of a zero threshold."""
    return drift_params(drift_constants(ts)[0], delta_max, 0.0)


def i4_bound(v: float, ts: TimeshareSolution, params_right: DriftParams, t, q0: float = 0.0, omega_max: float | None = None):
    """Bound on the fraction of time spent in I(4); zero when I(4) is empty."""
    _check_v(v, omega_max)
    if q0 > v / ts.omega_b:
        raise PreconditionViolated(f"initial backlog {q0} exceeds V/w_b={v / ts.omega_b}")
    if ts.omega_b_minus_1 == 0:
        return 0.0 if np.ndim(t) == 0 else np.zeros(np.shape(t))
    c = v * (1 / ts.omega_b_minus_1 - 1 / ts.omega_b)
    r, rho = params_right.r, params_right.rho
    t_arr = np.asarray(t, dtype=float)
    out = math.exp(-r * c) * (math.exp(r * params_right.delta_max) - rho + 1 / t_arr) / (1 - rho)
    return float(out) if np.ndim(out) == 0 else out


def i1_window(v: float, ts: TimeshareSolution, params_left: DriftParams) -> int:
    """Transient length T = ceil(xV) used in the I(1) bound."""
    x = params_left.r / (ts.omega_b_plus_1 * math.log(1 / params_left.rho))
    return math.ceil(x * v)


def i1_bound(v: float, ts: TimeshareSolution, params_left: DriftParams, t, q0: float = 0.0, omega_max: float | None = None):
    """Bound on the fraction of time spent in I(1).

    Evaluates the windowed occupancy bound for Z = V/w_b - Q with
    c = V/w_b - V/w_{b+1}, z0 = V/w_b - q0 and T = ceil(xV).  Where T >= t
    the window is unusable and the trivial bound 1 is returned.
    """
    _check_v(v, omega_max)
    if q0 < 0:
        raise PreconditionViolated("initial backlog must be nonnegative")
    t_arr = np.asarray(t, dtype=float)
    if math.isinf(ts.omega_b_plus_1):
        out = np.zeros(t_arr.shape)
    else:
        c = v / ts.omega_b - v / ts.omega_b_plus_1
        big_t = i1_window(v, ts, params_left)
        z0 = v / ts.omega_b - q0
        r, rho = params_left.r, params_left.rho
        steady = (math.exp(r * params_left.delta_max) - rho) * math.exp(-r * c) / (1 - rho)
        with np.errstate(divide="ignore"):
            out = steady + big_t / t_arr + math.exp(r * (z0 - c)) * rho**big_t / (t_arr * (1 - rho))
        out = np.where(t_arr > big_t, out, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def i1_bound_split(v: float, ts: TimeshareSolution, params_left: DriftParams, t: float) -> tuple[float, float]:
    """(steady-state term, O(V)/t transient term) of the simplified I(1) bound."""
    if math.isinf(ts.omega_b_plus_1):
        return 0.0, 0.0
    c = v / ts.omega_b - v / ts.omega_b_plus_1
    r, rho = params_left.r, params_left.rho
    steady = (math.exp(r * params_left.delta_max) - rho) * math.exp(-r * c) / (1 - rho)
    return steady, (i1_window(v, ts, params_left) + 1 / (1 - rho)) / t


def occupancy_timeshare_bounds(ts: TimeshareSolution, occ1: float, occ4: float, psi: float) -> tuple[float, float]:
    """Bracket on the fraction of time in I(2) around the timeshare theta."""
    gap = ts.mu_b - ts.mu_b_plus_1
    lower = ts.theta - (ts.mu_b * occ1 - psi) / gap
    upper = ts.theta + (occ4 * ts.mean_rate + psi) / gap
    return lower, upper


def gamma(ts: TimeshareSolution, params_left: DriftParams, params_right: DriftParams) -> float:
    inv = lambda w: 0.0 if math.isinf(w) else (math.inf if w == 0 else 1 / w)  # noqa: E731
    first = math.inf if ts.omega_b_minus_1 == 0 else params_right.r * (inv(ts.omega_b_minus_1) - inv(ts.omega_b))
    second = params_left.r * (inv(ts.omega_b) - inv(ts.omega_b_plus_1))
    return min(first, second)


def tuning(epsilon: float, gamma_value: float, omega_max: float) -> tuple[float, float]:
    """(V, T_eps) for a target accuracy epsilon, natural logs."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not gamma_value > 0:
        raise GammaNonpositive(f"gamma must be positive, got {gamma_value}")
    log_inv = math.log(1 / epsilon)
    return max(log_inv / gamma_value, omega_max**2), log_inv / epsilon


# -- reports ------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    quantity: str
    analytic: float
    empirical: float
    se: float
    t: int | None = None

    @property
    def slack(self) -> float:
        return self.analytic - self.empirical

    @property
    def passed(self) -> bool:
        return bool(self.empirical <= self.analytic + SE_FACTOR * self.se)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


def _worst(quantity: str, analytic, empirical, se, ts: np.ndarray) -> BoundReport:
    """Report at the slot where the estimate comes closest to violating."""
    analytic, empirical, se = (np.broadcast_to(np.asarray(x, dtype=float), ts.shape) for x in (analytic, empirical, se))
    margin = analytic + SE_FACTOR * np.nan_to_num(se) - empirical
    i = int(np.argmin(margin))
    return BoundReport(quantity, float(analytic[i]), float(empirical[i]), float(se[i]), int(ts[i]))


def _paired(quantity: str, empirical_runs: np.ndarray, analytic_runs: np.ndarray, t: int) -> BoundReport:
    """Report whose analytic side is itself estimated from the same runs."""
    n = empirical_runs.size
    diff = empirical_runs - analytic_runs
    se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return BoundReport(quantity, float(analytic_runs.mean()), float(empirical_runs.mean()), se, t)


@dataclass(frozen=True)
class BoundSetup:
    ts: TimeshareSolution
    v: float
    q_start: float  # Q(0) including any place-holder
    omega_max: float
    delta_max: float
    right: DriftParams
    left: DriftParams


def bound_setup(scenario, policy: DppConfig, q0: float = 0.0) -> BoundSetup:
    """Check preconditions and compute the drift parameters for a scenario."""
    schedule = as_schedule(scenario)
    if len(schedule.phases) != 1:
        raise PreconditionViolated("bounds apply to a single stationary phase")
    phase = schedule.phases[0]
    try:
        ts = locate_segment(build_curve(phase.channel), phase.arrivals.lam)
    except EnergySchedError as exc:
        raise PreconditionViolated(f"arrival rate must lie strictly inside a segment of h: {exc}") from exc
    omega_max = schedule.omega_max
    _check_v(policy.v, omega_max)
    q_start = policy.q_place(omega_max) + q0
    if q_start > policy.v / ts.omega_b:
        raise PreconditionViolated(f"initial backlog {q_start} exceeds V/w_b={policy.v / ts.omega_b}")
    delta_max = max(omega_max, phase.arrivals.a_max)
    return BoundSetup(
        ts, policy.v, q_start, omega_max, delta_max, right_params(policy.v, ts, delta_max), left_params(ts, delta_max)
    )


def reports_from_ensemble(
    setup: BoundSetup, ens: EnsembleResult, corrupt_r: bool = False
) -> list[BoundReport]:
    ts, v, q_start = setup.ts, setup.v, setup.q_start
    H = ens.horizon
    slots = np.arange(1, H + 1)
    qs = slots  # E[Q(t)] indices 1..H
    out: list[BoundReport] = []

    out.append(
        _worst(
            "mean_backlog",
            queue_mean_bound(v, ts.omega_b, setup.right, setup.omega_max),
            ens.q_mean[qs],
            ens.q_se[qs],
            slots,
        )
    )

    params = setup.right
    name = "exp_moment"
    if corrupt_r:
        params = replace(params, r=2 * params.r)
        name = "exp_moment_corrupted_r"
    k = _exp_index(ens, params.r)
    out.append(
        _worst(name, exp_moment_bound(params, q_start, slots), ens.exp_mean[k, qs], ens.exp_se[k, qs], slots)
    )

    c_tail = v / (2 * ts.omega_b)
    level = v / ts.omega_b + c_tail
    j = _tail_index(ens, level)
    out.append(
        _worst(
            "occupancy_tail",
            occupancy_bound(setup.right, c_tail, 0, slots, q_start),
            ens.tail_bar[j],
            0.0,
            slots,
        )
    )

    out.append(
        _worst(
            "occupancy_I4",
            i4_bound(v, ts, setup.right, slots, q_start, setup.omega_max),
            ens.occ_bar[3],
            ens.occ_bar_se[3],
            slots,
        )
    )
    # slots inside the transient window only carry the trivial bound 1
    live = slots > (0 if math.isinf(ts.omega_b_plus_1) else i1_window(v, ts, setup.left))
    if not live.any():
        live[-1] = True
    out.append(
        _worst(
            "occupancy_I1",
            i1_bound(v, ts, setup.left, slots[live], q_start, setup.omega_max),
            ens.occ_bar[0][live],
            ens.occ_bar_se[0][live],
            slots[live],
        )
    )

    f = ens.final
    occ = f["occ_bar"]
    gap = ts.mu_b - ts.mu_b_plus_1
    psi_runs = (f["q_end"] - q_start) / H
    out.append(
        _paired("timeshare_lower", ts.theta - occ[1], (ts.mu_b * occ[0] - psi_runs) / gap, H)
    )
    out.append(
        _paired("timeshare_upper", occ[1] - ts.theta, (occ[3] * ts.mean_rate + psi_runs) / gap, H)
    )

    mean_r, se_r = ens.drift.right
    beta_l, beta_r = drift_constants(ts)
    out.append(BoundReport("drift_right", -beta_r, mean_r, se_r))
    mean_l, se_l = ens.drift.left
    out.append(BoundReport("drift_left", -beta_l, -mean_l, se_l))

    decomposition = (occ[0] + occ[1]) * ts.h_b_plus_1 + occ[2] * ts.h_b + occ[3]
    out.append(_paired("power_decomposition", f["p_bar"], decomposition, H))

    gap_bound = (
        ts.p_star
        + (ts.mu_b_plus_1 * i1_bound(v, ts, setup.left, H, q_start) + q_start / H) / ts.omega_b
        + (1 - ts.h_b) * i4_bound(v, ts, setup.right, H, q_start)
    )
    out.append(BoundReport("power_gap", gap_bound, float(ens.p_bar[-1]), float(ens.p_bar_se[-1]), H))
    return out


def _exp_index(ens: EnsembleResult, r: float) -> int:
    for i, x in enumerate(ens.exp_rs):
        if math.isclose(x, r, rel_tol=1e-12):
            return i
    raise ValueError(f"ensemble has no exponential moment for r={r}")


def _tail_index(ens: EnsembleResult, level: float) -> int:
    for i, x in enumerate(ens.tail_levels):
        if math.isclose(x, level, rel_tol=1e-12):
            return i
    raise ValueError(f"ensemble has no tail occupancy at level {level}")


def verify_bounds(
    scenario,
    v: float,
    horizon: int,
    n_runs: int,
    base_seed: int = 0,
    place_holder: bool = False,
    q0: float = 0.0,
    jobs: int = 1,
    corrupt_r: bool = False,
) -> list[BoundReport]:
    """Run a DPP ensemble and compare it with every bound."""
    policy = DppConfig(v, place_holder)
    setup = bound_setup(scenario, policy, q0)
    r = setup.right.r * (2 if corrupt_r else 1)
    level = v / setup.ts.omega_b * 1.5
    ens = ensemble(
        scenario, policy, horizon, n_runs, base_seed, q0=q0, exp_rs=(r,), tail_levels=(level,), jobs=jobs
    )
    return reports_from_ensemble(setup, ens, corrupt_r)


def reports_csv(reports: list[BoundReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for rep in reports:
        nums = (rep.analytic, rep.empirical, rep.se)
        w.writerow(
            [rep.quantity, *(repr(float(x)) for x in nums), rep.verdict, repr(float(rep.slack)), "" if rep.t is None else rep.t]
        )
    return buf.getvalue()


def format_reports(reports: list[BoundReport]) -> str:
    lines = [f"{'quantity':<22} {'analytic':>14} {'empirical':>14} {'se':>10}  verdict"]
    for rep in reports:
        lines.append(f"{rep.quantity:<22} {rep.analytic:>14.6g} {rep.empirical:>14.6g} {rep.se:>10.3g}  {rep.verdict}")
    return "\n".join(lines)


__all__ = [
    "DriftParams",
    "drift_constants",
    "drift_params",
    "exp_moment_bound",
    "occupancy_bound",
    "queue_mean_bound",
    "right_params",
    "left_params",
    "i4_bound",
    "i1_bound",
    "i1_window",
    "i1_bound_split",
    "occupancy_timeshare_bounds",
    "gamma",
    "tuning",
    "BoundReport",
    "BoundSetup",
    "bound_setup",
    "reports_from_ensemble",
    "verify_bounds",
    "reports_csv",
    "format_reports",
]

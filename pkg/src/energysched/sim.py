"""Single-path slotted queue simulation.

Within a slot the controller sees Q(t) and omega(t), service departs, and
only then do the slot's arrivals join.  A unit arriving in slot t therefore
leaves at slot t + 1 at the earliest and has delay at least 1.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .curve import TimeshareSolution, build_curve, locate_segment
from .errors import EnergySchedError, HorizonExceeded, NoArrivals
from .models import PhaseSchedule, draw_path
from .policies import DppConfig, OmegaOnlyPolicy

Policy = Union[DppConfig, OmegaOnlyPolicy]


class Discipline(str, Enum):
    FIFO = "fifo"
    LIFO = "lifo"


def as_schedule(scenario) -> PhaseSchedule:
    if isinstance(scenario, PhaseSchedule):
        return scenario
    channel, arrivals = scenario
    return PhaseSchedule.single(channel, arrivals)


# -- per-slot state machine ---------------------------------------------------


@dataclass
class QueueState:
    """Backlog plus the real data it holds.

    ``q_total`` follows the plain max[Q + a - mu, 0] recursion and drives
    decisions; ``q_real`` follows the same recursion for real data only.
    ``chunks`` holds [amount, arrival_slot] for real data when delays are
    tracked (arrival_slot None marks initial backlog, excluded from stats).
    """

    q_total: float
    q_place: float = 0.0
    q_real: float = field(init=False)
    chunks: deque = field(default_factory=deque)
    t: int = 0

    def __post_init__(self) -> None:
        self.q_real = self.q_total - self.q_place

    @classmethod
    def initial(cls, q0: float = 0.0, q_place: float = 0.0, track: bool = True) -> "QueueState":
        state = cls(q_total=q_place + q0, q_place=q_place)
        state.q_real = q0
        if track and q0 > 0:
            state.chunks.append([q0, None])
        return state

    @property
    def chunk_total(self) -> float:
        return math.fsum(c[0] for c in self.chunks)


@dataclass(frozen=True)
class StepRecord:
    t: int
    omega: float
    a: float
    p: int
    mu_offered: float
    mu_served: float
    q_before: float
    q_after: float
    interval: int = 0


class DelayLog:
    """Histogram of per-unit delays, weighted by departed amount."""

    def __init__(self) -> None:
        self.hist: dict[int, float] = {}

    def add(self, delay: int, amount: float) -> None:
        self.hist[delay] = self.hist.get(delay, 0.0) + amount


def _depart(chunks: deque, amount: float, t: int, lifo: bool, log: DelayLog | None) -> None:
    while amount > 0 and chunks:
        chunk = chunks[-1] if lifo else chunks[0]
        take = chunk[0] if chunk[0] <= amount else amount
        if log is not None and chunk[1] is not None:
            log.add(t - chunk[1], take)
        amount -= take
        if take == chunk[0]:
            if lifo:
                chunks.pop()
            else:
                chunks.popleft()
        else:
            chunk[0] -= take


def step(
    state: QueueState,
    a: float,
    omega: float,
    p: int,
    discipline: Discipline | str = Discipline.FIFO,
    log: DelayLog | None = None,
) -> StepRecord:
    """Advance one slot: serve min(real backlog, p * omega), then admit ``a``."""
    lifo = Discipline(discipline) is Discipline.LIFO
    q_before = state.q_total
    offered = p * omega
    served = offered if state.q_real >= offered else state.q_real
    _depart(state.chunks, served, state.t, lifo, log)
    if a > 0:
        state.chunks.append([a, state.t])
    state.q_total = max(state.q_total + a - offered, 0.0)
    state.q_real = max(state.q_real + a - offered, 0.0)
    rec = StepRecord(state.t, omega, a, p, offered, served, q_before, state.q_total)
    state.t += 1
    return rec


def classify_interval(q: float, v: float, ts: TimeshareSolution) -> int:
    """Index i in 1..4 of the backlog interval containing ``q``.

    Intervals are left-closed: [0, V/w_{b+1}), [V/w_{b+1}, V/w_b),
    [V/w_b, V/w_{b-1}), [V/w_{b-1}, inf).
    """
    l1, l2, l3 = ts.thresholds(v)
    return 1 + int(q >= l1) + int(q >= l2) + int(q >= l3)


def classify_array(q: np.ndarray, v: float, ts: TimeshareSolution | None) -> np.ndarray:
    if ts is None:
        return np.zeros(q.shape, dtype=np.int8)
    l1, l2, l3 = ts.thresholds(v)
    return (1 + (q >= l1) + (q >= l2) + (q >= l3)).astype(np.int8)


# -- full runs ----------------------------------------------------------------


def phase_timeshares(schedule: PhaseSchedule) -> list[TimeshareSolution | None]:
    """Timeshare solution per phase, None where lam sits on a vertex or outside."""
    out = []
    for ph in schedule.phases:
        try:
            out.append(locate_segment(build_curve(ph.channel), ph.arrivals.lam))
        except EnergySchedError:
            out.append(None)
    return out


def policy_probabilities(policy: OmegaOnlyPolicy, omega: np.ndarray) -> np.ndarray:
    out = np.zeros_like(omega)
    for state in np.unique(omega):
        out[omega == state] = policy.prob(float(state))
    return out


@dataclass
class Trace:
    """Per-slot record of one path.

    ``q`` and ``q_real`` have horizon + 1 entries (Q(0) .. Q(horizon)); every
    other array has one entry per slot.
    """

    omega: np.ndarray
    a: np.ndarray
    p: np.ndarray
    mu: np.ndarray  # offered p * omega
    served: np.ndarray
    q: np.ndarray
    q_real: np.ndarray
    interval: np.ndarray
    phase: np.ndarray
    meta: dict
    delays: DelayLog | None = None
    undelivered: float = 0.0

    def __post_init__(self) -> None:
        zero = np.zeros(1)
        self.cum_mu = np.concatenate([zero, np.cumsum(self.mu)])
        self.cum_a = np.concatenate([zero, np.cumsum(self.a)])
        self.cum_p = np.concatenate([zero, np.cumsum(self.p)])
        self.cum_q = np.concatenate([zero, np.cumsum(self.q[:-1])])
        self.cum_q_real = np.concatenate([zero, np.cumsum(self.q_real[:-1])])
        occ = np.stack([self.interval == i for i in (1, 2, 3, 4)]).astype(float)
        self.cum_occ = np.concatenate([np.zeros((4, 1)), np.cumsum(occ, axis=1)], axis=1)

    @property
    def horizon(self) -> int:
        return len(self.omega)

    def record(self, t: int) -> StepRecord:
        return StepRecord(
            t,
            float(self.omega[t]),
            float(self.a[t]),
            int(self.p[t]),
            float(self.mu[t]),
            float(self.served[t]),
            float(self.q[t]),
            float(self.q[t + 1]),
            int(self.interval[t]),
        )


def _run_untracked(q_tot, q_real, omega, arrivals, decide_v, p_fixed):
    """Fast loop without per-unit delay bookkeeping."""
    n = len(omega)
    qs, qr, ps, served = [q_tot], [q_real], [0] * n, [0.0] * n
    for t in range(n):
        w = omega[t]
        a = arrivals[t]
        if p_fixed is None:
            p = 1 if q_tot * w >= decide_v else 0
        else:
            p = p_fixed[t]
        mu = w if p else 0.0
        served[t] = mu if q_real >= mu else q_real
        q_tot = q_tot + a - mu
        if q_tot < 0.0:
            q_tot = 0.0
        q_real = q_real + a - mu
        if q_real < 0.0:
            q_real = 0.0
        ps[t] = p
        qs.append(q_tot)
        qr.append(q_real)
    return qs, qr, ps, served


def _run_tracked(state: QueueState, omega, arrivals, decide_v, p_fixed, lifo: bool, log: DelayLog):
    n = len(omega)
    qs, qr, ps, served = [state.q_total], [state.q_real], [0] * n, [0.0] * n
    chunks = state.chunks
    q_tot, q_real = state.q_total, state.q_real
    for t in range(n):
        w = omega[t]
        a = arrivals[t]
        if p_fixed is None:
            p = 1 if q_tot * w >= decide_v else 0
        else:
            p = p_fixed[t]
        mu = w if p else 0.0
        out = mu if q_real >= mu else q_real
        served[t] = out
        if out > 0:
            _depart(chunks, out, t, lifo, log)
        if a > 0:
            chunks.append([a, t])
        q_tot = q_tot + a - mu
        if q_tot < 0.0:
            q_tot = 0.0
        q_real = q_real + a - mu
        if q_real < 0.0:
            q_real = 0.0
        ps[t] = p
        qs.append(q_tot)
        qr.append(q_real)
    state.q_total, state.q_real, state.t = q_tot, q_real, n
    return qs, qr, ps, served


def run(
    scenario,
    policy: Policy,
    horizon: int,
    discipline: Discipline | str = Discipline.FIFO,
    q0: float = 0.0,
    seed: int = 0,
    track_delays: bool = False,
) -> Trace:
    """Simulate one seeded path of ``horizon`` slots."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if q0 < 0:
        raise ValueError("initial backlog must be nonnegative")
    schedule = as_schedule(scenario)
    discipline = Discipline(discipline)
    draws = draw_path(schedule, horizon, seed)
    omega_max = schedule.omega_max

    if isinstance(policy, DppConfig):
        q_place = policy.q_place(omega_max)
        decide_v, p_fixed = policy.v, None
        v_classify = policy.v
    else:
        q_place = 0.0
        decide_v = None
        probs = policy_probabilities(policy, draws.omega)
        p_fixed = (draws.u_policy < probs).astype(int).tolist()
        v_classify = None

    omega_l = draws.omega.tolist()
    a_l = draws.arrivals.tolist()
    log = None
    if track_delays:
        log = DelayLog()
        state = QueueState.initial(q0, q_place)
        qs, qr, ps, served = _run_tracked(
            state, omega_l, a_l, decide_v, p_fixed, discipline is Discipline.LIFO, log
        )
        undelivered = math.fsum(c[0] for c in state.chunks if c[1] is not None)
    else:
        qs, qr, ps, served = _run_untracked(q_place + q0, q0, omega_l, a_l, decide_v, p_fixed)
        undelivered = 0.0

    q = np.asarray(qs)
    p = np.asarray(ps, dtype=np.int8)
    timeshares = phase_timeshares(schedule)
    interval = np.zeros(horizon, dtype=np.int8)
    if v_classify is not None:
        for i, (start, end, _) in enumerate(schedule.segments(horizon)):
            interval[start:end] = classify_array(q[start:end], v_classify, timeshares[i])

    meta = {
        "policy": policy.to_dict(),
        "seed": int(seed),
        "q0": float(q0),
        "q_place": float(q_place),
        "discipline": discipline.value,
        "omega_max": omega_max,
        "analytic_regime": bool(isinstance(policy, DppConfig) and policy.analytic_regime(omega_max)),
        "timeshares": timeshares,
    }
    return Trace(
        omega=draws.omega,
        a=draws.arrivals,
        p=p,
        mu=draws.omega * p,
        served=np.asarray(served),
        q=q,
        q_real=np.asarray(qr),
        interval=interval,
        phase=draws.phase,
        meta=meta,
        delays=log,
        undelivered=undelivered,
    )


# -- summaries ----------------------------------------------------------------


@dataclass(frozen=True)
class TimeAverages:
    t: int
    mu_bar: float
    p_bar: float
    q_bar: float
    occupancy: tuple[float, float, float, float]
    a_bar: float = 0.0
    q_real_bar: float = 0.0


def time_averages(trace: Trace, t: int) -> TimeAverages:
    """Averages over slots 0..t-1 of one path."""
    if not 1 <= t <= trace.horizon:
        raise HorizonExceeded(f"t={t} outside 1..{trace.horizon}")
    return TimeAverages(
        t=t,
        mu_bar=trace.cum_mu[t] / t,
        p_bar=trace.cum_p[t] / t,
        q_bar=trace.cum_q[t] / t,
        occupancy=tuple(float(x) for x in trace.cum_occ[:, t] / t),
        a_bar=trace.cum_a[t] / t,
        q_real_bar=trace.cum_q_real[t] / t,
    )


@dataclass(frozen=True)
class DelayStats:
    """Delay histogram of one path, weighted by data amount."""

    delays: np.ndarray  # sorted distinct delays (slots)
    amounts: np.ndarray  # data departing with each delay
    undelivered: float

    @property
    def delivered(self) -> float:
        return float(self.amounts.sum())

    @property
    def total(self) -> float:
        return self.delivered + self.undelivered

    @property
    def mean_delivered(self) -> float:
        return float(self.delays @ self.amounts / self.delivered)

    def trimmed_mean(self, fraction: float) -> float:
        """Mean delay of the smallest-delay ``fraction`` of all arrived data.

        Undelivered data counts as infinitely delayed, so the result is inf
        when the fraction reaches into it.
        """
        if not 0 < fraction <= 1:
            raise ValueError(f"trim fraction must lie in (0, 1], got {fraction}")
        target = fraction * self.total
        cum = np.cumsum(self.amounts)
        if target > cum[-1] * (1 + 1e-12):
            return math.inf
        j = int(np.searchsorted(cum, target, side="left"))
        j = min(j, len(cum) - 1)
        before = cum[j - 1] if j > 0 else 0.0
        weighted = float(self.delays[:j] @ self.amounts[:j]) + self.delays[j] * (target - before)
        return weighted / target

    def histogram_csv(self) -> str:
        lines = ["delay,amount"]
        lines += [f"{int(d)},{float(a)!r}" for d, a in zip(self.delays, self.amounts)]
        return "\n".join(lines) + "\n"


def delay_stats(trace: Trace) -> DelayStats:
    if trace.delays is None:
        raise ValueError("trace was recorded without delay tracking")
    hist = trace.delays.hist
    if not hist and trace.undelivered == 0:
        raise NoArrivals("no data arrived during the run")
    delays = np.array(sorted(hist), dtype=float)
    amounts = np.array([hist[int(d)] for d in delays], dtype=float)
    if delays.size == 0:
        delays, amounts = np.zeros(1), np.zeros(1)
    return DelayStats(delays, amounts, float(trace.undelivered))


def trimmed_delay(trace: Trace, trim_fraction: float) -> float:
    return delay_stats(trace).trimmed_mean(trim_fraction)


@dataclass(frozen=True)
class EpsilonCheck:
    passed: bool
    power_slack: float  # p* + eps - p_bar
    rate_slack: float  # eps - (lam - mu_bar)


def epsilon_check(p_bar: float, mu_bar: float, p_star: float, lam: float, epsilon: float) -> EpsilonCheck:
    power_slack = p_star + epsilon - p_bar
    rate_slack = epsilon - (lam - mu_bar)
    return EpsilonCheck(power_slack >= 0 and rate_slack >= 0, power_slack, rate_slack)


__all__ = [
    "Discipline",
    "QueueState",
    "StepRecord",
    "DelayLog",
    "step",
    "classify_interval",
    "run",
    "Trace",
    "TimeAverages",
    "time_averages",
    "DelayStats",
    "delay_stats",
    "trimmed_delay",
    "EpsilonCheck",
    "epsilon_check",
]

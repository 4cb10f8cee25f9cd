"""Vectorised ensembles of independent seeded runs.

Run ``i`` uses seed ``base_seed + i`` and consumes its generator exactly as
:func:`energysched.sim.run` does, so an ensemble of one run reproduces the
single-path trace.  Runs are processed in fixed-size batches; each batch
returns sums and sums of squares, and batches are merged in index order so
the result does not depend on how many worker processes were used.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .models import DRAWS_PER_SLOT, PhaseSchedule, map_uniforms
from .policies import DppConfig
from .sim import Policy, as_schedule, phase_timeshares, policy_probabilities, run

BATCH_RUNS = 4096
CHUNK_SLOTS = 256
SCALAR_BELOW = 32  # batches smaller than this run path by path

CSV_HEADER = ["t", "mean_mu_bar", "mean_p_bar", "mean_Q", "se_mu", "se_p", "se_Q", "occ1", "occ2", "occ3", "occ4"]


@dataclass
class _Moments:
    """Running sum and sum of squares over runs, one entry per index."""

    s: np.ndarray
    ss: np.ndarray

    @classmethod
    def zeros(cls, *shape: int) -> "_Moments":
        return cls(np.zeros(shape), np.zeros(shape))

    def merge(self, other: "_Moments") -> None:
        self.s += other.s
        self.ss += other.ss


@dataclass
class DriftStats:
    """Pooled one-slot increments Q(t+1) - Q(t), split at Q(t) = V/w_b."""

    left_sum: float = 0.0
    left_sumsq: float = 0.0
    left_n: int = 0
    right_sum: float = 0.0
    right_sumsq: float = 0.0
    right_n: int = 0

    def merge(self, other: "DriftStats") -> None:
        for name in ("left_sum", "left_sumsq", "left_n", "right_sum", "right_sumsq", "right_n"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    @staticmethod
    def _mean_se(s: float, ss: float, n: int) -> tuple[float, float]:
        if n == 0:
            return math.nan, math.nan
        mean = s / n
        if n == 1:
            return mean, math.nan
        var = max(ss - s * s / n, 0.0) / (n - 1)
        return mean, math.sqrt(var / n)

    @property
    def left(self) -> tuple[float, float]:
        """(mean, standard error) of the increment when Q(t) < V/w_b."""
        return self._mean_se(self.left_sum, self.left_sumsq, self.left_n)

    @property
    def right(self) -> tuple[float, float]:
        """(mean, standard error) of the increment when Q(t) >= V/w_b."""
        return self._mean_se(self.right_sum, self.right_sumsq, self.right_n)


@dataclass
class _BatchResult:
    n: int
    mu: _Moments
    p: _Moments
    q: _Moments
    q_real: _Moments
    occ: np.ndarray  # (4, H) counts
    mu_bar: _Moments
    p_bar: _Moments
    q_bar: _Moments
    occ_bar: _Moments  # (4, H)
    exp: list[_Moments]
    tails: np.ndarray  # (len(levels), H) counts
    drift: DriftStats
    final: dict[str, np.ndarray]

    def merge(self, other: "_BatchResult") -> None:
        self.n += other.n
        for name in ("mu", "p", "q", "q_real", "mu_bar", "p_bar", "q_bar", "occ_bar"):
            getattr(self, name).merge(getattr(other, name))
        self.occ += other.occ
        self.tails += other.tails
        for mine, theirs in zip(self.exp, other.exp):
            mine.merge(theirs)
        self.drift.merge(other.drift)
        for key, arr in other.final.items():
            self.final[key] = np.concatenate([self.final[key], arr], axis=-1)


def _mean_se(m: _Moments, n: int, scale: np.ndarray | float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    mean = m.s / n * scale
    if n < 2:
        return mean, np.full_like(mean, math.nan)
    var = np.maximum(m.ss - m.s * m.s / n, 0.0) / (n - 1)
    return mean, np.sqrt(var / n) * scale


@dataclass
class EnsembleResult:
    """Pointwise and prefix-average statistics over independent runs.

    Pointwise arrays indexed by slot t in 0..H-1 describe E[mu(t)], E[p(t)]
    and interval occupancy; ``q_mean`` and ``exp_mean`` have H + 1 entries
    for Q(0)..Q(H).  Prefix arrays ``*_bar`` are indexed by t - 1 for
    t in 1..H and hold expectations of the averages over slots 0..t-1.
    """

    horizon: int
    n_runs: int
    base_seed: int
    q0: float
    q_place: float
    mu_mean: np.ndarray
    mu_se: np.ndarray
    p_mean: np.ndarray
    p_se: np.ndarray
    q_mean: np.ndarray
    q_se: np.ndarray
    q_real_mean: np.ndarray
    q_real_se: np.ndarray
    occ_mean: np.ndarray
    mu_bar: np.ndarray
    mu_bar_se: np.ndarray
    p_bar: np.ndarray
    p_bar_se: np.ndarray
    q_bar: np.ndarray
    q_bar_se: np.ndarray
    occ_bar: np.ndarray
    occ_bar_se: np.ndarray
    exp_rs: tuple[float, ...]
    exp_mean: np.ndarray  # (len(exp_rs), H + 1)
    exp_se: np.ndarray
    tail_levels: tuple[float, ...]
    tail_bar: np.ndarray  # (len(tail_levels), H)
    drift: DriftStats
    final: dict[str, np.ndarray] = field(repr=False)

    def psi(self, t: int) -> float:
        """Estimate of E[Q(t) - Q(0)] / t (Q includes any place-holder)."""
        return (self.q_mean[t] - self.q_mean[0]) / t

    def to_csv(self, stride: int = 1) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        ts = list(range(stride, self.horizon + 1, stride))
        if not ts or ts[-1] != self.horizon:
            ts.append(self.horizon)
        for t in ts:
            i = t - 1
            w.writerow(
                [t]
                + [repr(float(x)) for x in (self.mu_bar[i], self.p_bar[i], self.q_mean[t])]
                + [repr(float(x)) for x in (self.mu_bar_se[i], self.p_bar_se[i], self.q_se[t])]
                + [repr(float(x)) for x in self.occ_bar[:, i]]
            )
        return buf.getvalue()


@dataclass(frozen=True)
class _Job:
    schedule: PhaseSchedule
    policy: Policy
    horizon: int
    seeds: tuple[int, ...]
    q0: float
    exp_rs: tuple[float, ...]
    tail_levels: tuple[float, ...]
    engine: str = "auto"


def _thresholds(schedule: PhaseSchedule, policy: Policy, horizon: int) -> np.ndarray | None:
    """Per-slot interval boundaries (3, H); NaN where no timeshare applies."""
    if not isinstance(policy, DppConfig):
        return None
    out = np.full((3, horizon), math.nan)
    timeshares = phase_timeshares(schedule)
    for i, (start, end, _) in enumerate(schedule.segments(horizon)):
        if timeshares[i] is not None:
            out[:, start:end] = np.array(timeshares[i].thresholds(policy.v))[:, None]
    return out


def _empty(job: _Job) -> _BatchResult:
    H = job.horizon
    return _BatchResult(
        n=len(job.seeds),
        mu=_Moments.zeros(H),
        p=_Moments.zeros(H),
        q=_Moments.zeros(H + 1),
        q_real=_Moments.zeros(H + 1),
        occ=np.zeros((4, H)),
        mu_bar=_Moments.zeros(H),
        p_bar=_Moments.zeros(H),
        q_bar=_Moments.zeros(H),
        occ_bar=_Moments.zeros(4, H),
        exp=[_Moments.zeros(H + 1) for _ in job.exp_rs],
        tails=np.zeros((len(job.tail_levels), H)),
        drift=DriftStats(),
        final={},
    )


def _add(m: _Moments, x: np.ndarray) -> None:
    m.s += x
    m.ss += x * x


def _simulate_paths(job: _Job) -> _BatchResult:
    """Batch built from individual :func:`run` traces."""
    H = job.horizon
    res = _empty(job)
    bounds = _thresholds(job.schedule, job.policy, H)
    finals: dict[str, list] = {k: [] for k in ("mu_bar", "p_bar", "q_bar", "a_bar", "q_end", "occ_bar")}
    for seed in job.seeds:
        tr = run(job.schedule, job.policy, H, q0=job.q0, seed=seed)
        pf = tr.p.astype(float)
        _add(res.mu, tr.mu)
        _add(res.p, pf)
        _add(res.q, tr.q)
        _add(res.q_real, tr.q_real)
        _add(res.mu_bar, tr.cum_mu[1:])
        _add(res.p_bar, tr.cum_p[1:])
        _add(res.q_bar, tr.cum_q[1:])
        _add(res.occ_bar, tr.cum_occ[:, 1:])
        for i in range(4):
            res.occ[i] += tr.interval == i + 1
        for r, m in zip(job.exp_rs, res.exp):
            _add(m, np.exp(r * tr.q))
        for i, level in enumerate(job.tail_levels):
            res.tails[i] += tr.q[:-1] >= level
        if bounds is not None:
            valid = ~np.isnan(bounds[1])
            inc = np.diff(tr.q)[valid]
            right = tr.q[:-1][valid] >= bounds[1][valid]
            d = res.drift
            d.right_sum += float(inc[right].sum())
            d.right_sumsq += float(inc[right] @ inc[right])
            d.right_n += int(right.sum())
            d.left_sum += float(inc[~right].sum())
            d.left_sumsq += float(inc[~right] @ inc[~right])
            d.left_n += int((~right).sum())
        finals["mu_bar"].append(tr.cum_mu[H] / H)
        finals["p_bar"].append(tr.cum_p[H] / H)
        finals["q_bar"].append(tr.cum_q[H] / H)
        finals["a_bar"].append(tr.cum_a[H] / H)
        finals["q_end"].append(tr.q[H])
        finals["occ_bar"].append(tr.cum_occ[:, H] / H)
    res.final = {k: np.asarray(v, dtype=float) for k, v in finals.items()}
    res.final["occ_bar"] = res.final["occ_bar"].T
    return res


def _simulate_batch(job: _Job) -> _BatchResult:
    B = len(job.seeds)
    if job.engine == "scalar" or (job.engine == "auto" and B < SCALAR_BELOW):
        return _simulate_paths(job)
    return _simulate_vector(job)


def _simulate_vector(job: _Job) -> _BatchResult:
    schedule, policy, H = job.schedule, job.policy, job.horizon
    B = len(job.seeds)
    gens = [np.random.Generator(np.random.PCG64(int(s))) for s in job.seeds]
    dpp = isinstance(policy, DppConfig)
    q_place = policy.q_place(schedule.omega_max) if dpp else 0.0
    bounds = _thresholds(schedule, policy, H)

    res = _empty(job)
    q = np.full(B, q_place + job.q0)
    q_real = np.full(B, float(job.q0))
    cum_mu, cum_p, cum_q, cum_a = np.zeros(B), np.zeros(B), np.zeros(B), np.zeros(B)
    cum_occ = np.zeros((B, 4))
    eye = np.eye(4)
    levels = np.asarray(job.tail_levels, dtype=float)
    drift = res.drift

    def record_q(t: int) -> None:
        res.q.s[t] += q.sum()
        res.q.ss[t] += q @ q
        res.q_real.s[t] += q_real.sum()
        res.q_real.ss[t] += q_real @ q_real
        for r, m in zip(job.exp_rs, res.exp):
            e = np.exp(r * q)
            m.s[t] += e.sum()
            m.ss[t] += e @ e

    record_q(0)
    for t0 in range(0, H, CHUNK_SLOTS):
        n = min(CHUNK_SLOTS, H - t0)
        u = np.stack([g.random((n, DRAWS_PER_SLOT)) for g in gens])
        draws = map_uniforms(schedule, u, t0)
        if not dpp:
            fixed = draws.u_policy < policy_probabilities(policy, draws.omega)
        for j in range(n):
            t = t0 + j
            w = draws.omega[:, j]
            a = draws.arrivals[:, j]
            p = (q * w >= policy.v) if dpp else fixed[:, j]
            mu = np.where(p, w, 0.0)
            pf = p.astype(float)

            if bounds is not None and not math.isnan(bounds[0, t]):
                l1, l2, l3 = bounds[:, t]
                cls = (q >= l1).astype(np.intp) + (q >= l2) + (q >= l3)
                onehot = eye[cls]
                res.occ[:, t] += onehot.sum(axis=0)
                cum_occ += onehot
                right = q >= l2
            else:
                right = None
            if levels.size:
                res.tails[:, t] += (q[None, :] >= levels[:, None]).sum(axis=1)

            res.mu.s[t] += mu.sum()
            res.mu.ss[t] += mu @ mu
            psum = pf.sum()
            res.p.s[t] += psum
            res.p.ss[t] += psum  # p is 0/1

            cum_mu += mu
            cum_p += pf
            cum_q += q
            cum_a += a
            res.mu_bar.s[t] += cum_mu.sum()
            res.mu_bar.ss[t] += cum_mu @ cum_mu
            res.p_bar.s[t] += cum_p.sum()
            res.p_bar.ss[t] += cum_p @ cum_p
            res.q_bar.s[t] += cum_q.sum()
            res.q_bar.ss[t] += cum_q @ cum_q
            res.occ_bar.s[:, t] += cum_occ.sum(axis=0)
            res.occ_bar.ss[:, t] += np.einsum("bk,bk->k", cum_occ, cum_occ)

            q_next = np.maximum(q + a - mu, 0.0)
            q_real = np.maximum(q_real + a - mu, 0.0)
            if right is not None:
                inc = q_next - q
                inc_r, inc_l = inc[right], inc[~right]
                drift.right_sum += float(inc_r.sum())
                drift.right_sumsq += float(inc_r @ inc_r)
                drift.right_n += int(inc_r.size)
                drift.left_sum += float(inc_l.sum())
                drift.left_sumsq += float(inc_l @ inc_l)
                drift.left_n += int(inc_l.size)
            q = q_next
            record_q(t + 1)

    res.final = {
        "mu_bar": cum_mu / H,
        "p_bar": cum_p / H,
        "q_bar": cum_q / H,
        "a_bar": cum_a / H,
        "q_end": q.copy(),
        "occ_bar": cum_occ.T / H,
    }
    return res


def ensemble(
    scenario,
    policy: Policy,
    horizon: int,
    n_runs: int,
    base_seed: int = 0,
    q0: float = 0.0,
    exp_rs: Sequence[float] = (),
    tail_levels: Sequence[float] = (),
    jobs: int = 1,
    batch_runs: int = BATCH_RUNS,
    engine: str = "auto",
) -> EnsembleResult:
    """Statistics over runs seeded ``base_seed .. base_seed + n_runs - 1``.

    ``exp_rs`` adds E[exp(r Q(t))] curves; ``tail_levels`` adds the expected
    fraction of slots with Q at or above each level.  ``engine`` selects
    the vectorised loop ("vector"), per-path simulation ("scalar"), or the
    scalar path for small batches ("auto"); all give the same numbers.
    """
    if engine not in ("auto", "vector", "scalar"):
        raise ValueError(f"unknown engine {engine!r}")
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if q0 < 0:
        raise ValueError("initial backlog must be nonnegative")
    schedule = as_schedule(scenario)
    schedule.segments(horizon)  # raises SlotBeyondSchedule early
    seeds = [base_seed + i for i in range(n_runs)]
    batches = [
        _Job(schedule, policy, horizon, tuple(seeds[i : i + batch_runs]), float(q0), tuple(exp_rs), tuple(tail_levels), engine)
        for i in range(0, n_runs, batch_runs)
    ]
    if jobs > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_simulate_batch, batches))
    else:
        parts = [_simulate_batch(b) for b in batches]
    total = parts[0]
    for part in parts[1:]:
        total.merge(part)
    return _summarise(total, horizon, base_seed, q0, schedule, policy, tuple(exp_rs), tuple(tail_levels))


def _summarise(res, H, base_seed, q0, schedule, policy, exp_rs, tail_levels) -> EnsembleResult:
    n = res.n
    t = np.arange(1, H + 1, dtype=float)
    mu_mean, mu_se = _mean_se(res.mu, n)
    p_mean, p_se = _mean_se(res.p, n)
    q_mean, q_se = _mean_se(res.q, n)
    qr_mean, qr_se = _mean_se(res.q_real, n)
    mu_bar, mu_bar_se = _mean_se(res.mu_bar, n, 1 / t)
    p_bar, p_bar_se = _mean_se(res.p_bar, n, 1 / t)
    q_bar, q_bar_se = _mean_se(res.q_bar, n, 1 / t)
    occ_bar, occ_bar_se = _mean_se(res.occ_bar, n, 1 / t)
    if exp_rs:
        pairs = [_mean_se(m, n) for m in res.exp]
        exp_mean = np.stack([m for m, _ in pairs])
        exp_se = np.stack([s for _, s in pairs])
    else:
        exp_mean = exp_se = np.zeros((0, H + 1))
    tail_bar = np.cumsum(res.tails, axis=1) / n / t
    q_place = policy.q_place(schedule.omega_max) if isinstance(policy, DppConfig) else 0.0
    return EnsembleResult(
        horizon=H,
        n_runs=n,
        base_seed=base_seed,
        q0=float(q0),
        q_place=q_place,
        mu_mean=mu_mean,
        mu_se=mu_se,
        p_mean=p_mean,
        p_se=p_se,
        q_mean=q_mean,
        q_se=q_se,
        q_real_mean=qr_mean,
        q_real_se=qr_se,
        occ_mean=res.occ / n,
        mu_bar=mu_bar,
        mu_bar_se=mu_bar_se,
        p_bar=p_bar,
        p_bar_se=p_bar_se,
        q_bar=q_bar,
        q_bar_se=q_bar_se,
        occ_bar=occ_bar,
        occ_bar_se=occ_bar_se,
        exp_rs=exp_rs,
        exp_mean=exp_mean,
        exp_se=exp_se,
        tail_levels=tail_levels,
        tail_bar=tail_bar,
        drift=res.drift,
        final=res.final,
    )


__all__ = ["ensemble", "EnsembleResult", "DriftStats", "CSV_HEADER"]

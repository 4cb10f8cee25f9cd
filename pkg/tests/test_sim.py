from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from energysched.curve import build_curve, locate_segment
from energysched.errors import HorizonExceeded, NoArrivals, SlotBeyondSchedule
from energysched.models import ArrivalModel, Phase, PhaseSchedule, validate_channel
from energysched.policies import DppConfig, design_omega_only
from energysched.sim import (
    DelayLog,
    DelayStats,
    Discipline,
    QueueState,
    classify_interval,
    delay_stats,
    epsilon_check,
    run,
    step,
    time_averages,
)

TWO = (validate_channel([1, 2], [0.75, 0.25]), ArrivalModel((0, 1, 2), (0.4, 0.2, 0.4)))


def test_step_serves_then_admits():
    state = QueueState.initial(5.0)
    rec = step(state, a=2, omega=3, p=1)
    assert rec.q_after == 4 and rec.mu_served == 3 and rec.mu_offered == 3
    assert state.q_total == 4 and state.chunk_total == 4


def test_step_clamps_at_zero():
    state = QueueState.initial(1.0)
    rec = step(state, a=0, omega=2, p=1)
    assert rec.q_after == 0 and rec.mu_offered == 2 and rec.mu_served == 1


def test_step_fifo_delay_one():
    state = QueueState.initial(0.0)
    log = DelayLog()
    step(state, a=3, omega=2, p=0, log=log)
    step(state, a=0, omega=3, p=1, log=log)
    assert log.hist == {1: 3.0}


def test_step_lifo_serves_newest_first():
    state = QueueState.initial(0.0)
    log = DelayLog()
    step(state, a=1, omega=1, p=0, log=log)
    step(state, a=1, omega=1, p=0, log=log)
    step(state, a=0, omega=1, p=1, discipline="lifo", log=log)
    assert log.hist == {1: 1.0}


def test_step_initial_backlog_excluded_from_delays():
    state = QueueState.initial(2.0)
    log = DelayLog()
    step(state, a=0, omega=2, p=1, log=log)
    assert log.hist == {}


def _nine_ts():
    ch = validate_channel([0, 3, 7, 11, 18, 22, 24, 36, 46], [1 / 15] * 3 + [2 / 9] * 3 + [2 / 45] * 3)
    return locate_segment(build_curve(ch), 11.6)


def test_classify_nine_channel_boundaries():
    ts = _nine_ts()
    l1, l2, l3 = ts.thresholds(1000)
    assert (round(l1, 2), round(l2, 2), round(l3, 2)) == (45.45, 55.56, 90.91)
    assert [classify_interval(q, 1000, ts) for q in (0, 50, 100)] == [1, 2, 4]
    assert classify_interval(l2, 1000, ts) == 3
    assert classify_interval(l1, 1000, ts) == 2


def test_classify_two_channel_has_no_fourth_interval():
    ts = locate_segment(build_curve(TWO[0]), 1.0)
    assert classify_interval(1e6, 40, ts) == 3
    assert classify_interval(40, 40, ts) == 3
    assert classify_interval(19.9, 40, ts) == 1


def test_zero_arrivals_drains_queue():
    sched = (TWO[0], ArrivalModel((0,), (1,)))
    tr = run(sched, DppConfig(8), 300, q0=50, seed=1)
    assert np.all(np.diff(tr.q) <= 0)
    assert tr.q[-1] < 50
    assert time_averages(tr, 300).p_bar < 0.2


def test_constant_trace_keeps_backlog():
    sched = (TWO[0], ArrivalModel((0,), (1,)))
    tr = run(sched, DppConfig(1000), 50, q0=7, seed=0)
    assert all(time_averages(tr, t).q_bar == 7 for t in (1, 10, 50))


def test_time_averages_first_slot():
    tr = run(TWO, DppConfig(40), 20, seed=3)
    avg = time_averages(tr, 1)
    assert avg.mu_bar == tr.mu[0] and avg.p_bar == tr.p[0] and avg.q_bar == tr.q[0]
    with pytest.raises(HorizonExceeded):
        time_averages(tr, 21)


def test_run_rejects_bad_arguments():
    with pytest.raises(ValueError):
        run(TWO, DppConfig(4), 0)
    with pytest.raises(ValueError):
        run(TWO, DppConfig(4), 10, q0=-1)


def test_run_past_finite_schedule():
    sched = PhaseSchedule((Phase(10, *TWO),))
    with pytest.raises(SlotBeyondSchedule):
        run(sched, DppConfig(4), 11)


def test_run_is_deterministic():
    a = run(TWO, DppConfig(40), 1000, seed=9)
    b = run(TWO, DppConfig(40), 1000, seed=9)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.p, b.p)


def test_long_run_power_near_optimum():
    tr = run(TWO, DppConfig(40), 10**6, seed=0)
    avg = time_averages(tr, 10**6)
    assert abs(avg.p_bar - 0.75) <= 0.01
    # per-path rate identity: mu_bar = a_bar - (Q(t) - q0) / t
    assert avg.mu_bar == pytest.approx(avg.a_bar - (tr.q[-1] - tr.q[0]) / 10**6, abs=1e-12)


def test_omega_only_run_matches_expectation():
    pol = design_omega_only(build_curve(TWO[0]), 1.1)
    tr = run(TWO, pol, 200_000, seed=4)
    avg = time_averages(tr, 200_000)
    assert avg.mu_bar == pytest.approx(1.1, abs=0.01)
    assert avg.p_bar == pytest.approx(0.85, abs=0.01)


@given(st.integers(4, 200), st.integers(0, 2**32), st.integers(0, 30), st.booleans())
def test_conservation_and_full_service(v, seed, q0, place):
    tr = run(TWO, DppConfig(v, place_holder=place), 400, q0=q0, seed=seed)
    start = tr.q[0]
    expected = start + np.concatenate([[0], np.cumsum(tr.a - tr.mu)])
    assert np.array_equal(tr.q, expected)
    assert np.array_equal(tr.served, tr.mu)


@given(st.integers(5, 400), st.integers(0, 2**32))
def test_place_holder_floor_and_equivalence(v, seed):
    cfg = DppConfig(v, place_holder=True)
    q_place = cfg.q_place(2.0)
    placed = run(TWO, cfg, 400, seed=seed)
    plain = run(TWO, DppConfig(v), 400, q0=q_place, seed=seed)
    assert placed.q.min() >= q_place
    assert np.array_equal(placed.q, plain.q)
    assert np.array_equal(placed.p, plain.p)


@given(st.integers(1, 100), st.integers(0, 2**32), st.integers(1, 300))
def test_occupancy_partition(v, seed, t):
    tr = run(TWO, DppConfig(v), 300, seed=seed)
    assert math.fsum(time_averages(tr, t).occupancy) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(4, 400), st.integers(0, 2**32))
def test_discipline_changes_only_delays(v, seed):
    fifo = run(TWO, DppConfig(v, True), 300, discipline="fifo", seed=seed, track_delays=True)
    lifo = run(TWO, DppConfig(v, True), 300, discipline="lifo", seed=seed, track_delays=True)
    assert np.array_equal(fifo.q, lifo.q) and np.array_equal(fifo.p, lifo.p)
    assert delay_stats(fifo).total == pytest.approx(delay_stats(lifo).total)


@given(st.integers(4, 400), st.integers(0, 2**32), st.booleans())
def test_chunks_track_real_backlog(v, seed, lifo):
    tr = run(TWO, DppConfig(v, True), 300, discipline=Discipline.LIFO if lifo else Discipline.FIFO,
             seed=seed, track_delays=True)
    stats = delay_stats(tr)
    assert stats.undelivered == pytest.approx(tr.q_real[-1], abs=1e-9)
    assert stats.delivered == pytest.approx(tr.a.sum() - tr.q_real[-1], abs=1e-9)


def test_single_chunk_delay_one():
    stats = DelayStats(np.array([1.0]), np.array([5.0]), 0.0)
    assert stats.trimmed_mean(1.0) == 1.0 and stats.mean_delivered == 1.0


def test_undelivered_counts_as_infinite():
    stats = DelayStats(np.array([1.0, 3.0]), np.array([1.0, 1.0]), 2.0)
    assert math.isinf(stats.trimmed_mean(1.0))
    assert stats.trimmed_mean(0.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        stats.trimmed_mean(0)


def test_delay_stats_requires_data():
    sched = (TWO[0], ArrivalModel((0,), (1,)))
    with pytest.raises(NoArrivals):
        delay_stats(run(sched, DppConfig(4), 10, track_delays=True))
    with pytest.raises(ValueError):
        delay_stats(run(TWO, DppConfig(4), 10))


@given(
    st.lists(st.tuples(st.integers(1, 500), st.floats(0.1, 50)), min_size=1, max_size=30),
    st.floats(0, 20), st.floats(0.01, 1), st.floats(0.01, 1),
)
def test_trimmed_mean_nondecreasing(pairs, undelivered, f1, f2):
    hist = {}
    for d, a in pairs:
        hist[d] = hist.get(d, 0.0) + a
    delays = np.array(sorted(hist), dtype=float)
    stats = DelayStats(delays, np.array([hist[int(d)] for d in delays]), undelivered)
    lo, hi = sorted((f1, f2))
    assert stats.trimmed_mean(lo) <= stats.trimmed_mean(hi) * (1 + 1e-12)


def test_histogram_csv():
    stats = DelayStats(np.array([1.0, 4.0]), np.array([2.0, 3.0]), 0.0)
    assert stats.histogram_csv() == "delay,amount\n1,2.0\n4,3.0\n"


@pytest.mark.parametrize(
    "p_bar, mu_bar, eps, passed, power_slack",
    [(0.75, 1.0, 0.0, True, 0.0), (0.75, 1.0, 0.1, True, 0.1), (0.95, 1.0, 0.1, False, -0.1)],
)
def test_epsilon_check(p_bar, mu_bar, eps, passed, power_slack):
    res = epsilon_check(p_bar, mu_bar, 0.75, 1.0, eps)
    assert res.passed is passed
    assert res.power_slack == pytest.approx(power_slack)

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from energysched.errors import (
    DuplicateState,
    ModelError,
    NegativeRate,
    NonPositiveProbabilitySum,
    ProbabilitySumMismatch,
    SlotBeyondSchedule,
)
from energysched.models import (
    ArrivalModel,
    ChannelModel,
    Phase,
    PhaseSchedule,
    RandomSource,
    active_phase,
    draw_path,
    mean_rate,
    sample_arrival,
    sample_channel,
    validate_channel,
)

from .conftest import NINE_PROBS, NINE_STATES


def test_validate_keeps_valid_model():
    ch = validate_channel([1, 2], [0.75, 0.25])
    assert ch.states == (1.0, 2.0)
    assert ch.probs == (0.75, 0.25)


def test_validate_keeps_zero_state_with_zero_mass():
    ch = validate_channel([0, 5], [0, 1])
    assert ch.states == (0.0, 5.0)
    assert ch.prob_zero == 0.0


def test_validate_sorts_states():
    ch = validate_channel([2, 1], [0.5, 0.5])
    assert ch.states == (1.0, 2.0)
    assert ch.probs == (0.5, 0.5)


def test_validate_drops_massless_positive_state():
    ch = validate_channel([1, 2, 3], [0.75, 0.25, 0.0])
    assert ch.states == (1.0, 2.0)


@pytest.mark.parametrize(
    "states, probs, err",
    [
        ([1, 2], [0.0, 0.0], NonPositiveProbabilitySum),
        ([1, 1], [0.5, 0.5], DuplicateState),
        ([-1, 2], [0.5, 0.5], NegativeRate),
        ([1, 2], [0.5, 0.6], ProbabilitySumMismatch),
        ([1, 2], [1.5, -0.5], ModelError),
        ([1, 2], [1.0], ModelError),
    ],
)
def test_validate_rejects(states, probs, err):
    with pytest.raises(err):
        validate_channel(states, probs)


def test_channel_constructor_requires_sorted_states():
    with pytest.raises(ModelError):
        ChannelModel((2.0, 1.0), (0.5, 0.5))


def test_arrival_rejects_amount_above_cap():
    with pytest.raises(ModelError):
        ArrivalModel((0, 5), (0.5, 0.5), a_max=4)


def test_sample_channel_point_mass():
    ch = validate_channel([3], [1])
    rng = RandomSource(1)
    assert {sample_channel(ch, rng) for _ in range(200)} == {3.0}


def test_sample_channel_frequency(two_channel):
    n = 10**6
    idx = two_channel.sample_index(RandomSource(7).uniform(n))
    freq = float(np.mean(idx == 1))
    assert abs(freq - 0.25) <= 0.005


def test_sampling_is_deterministic(two_channel):
    streams = []
    for _ in range(2):
        rng = RandomSource(42)
        streams.append([sample_channel(two_channel, rng) for _ in range(500)])
    assert streams[0] == streams[1]


@pytest.mark.parametrize(
    "amounts, probs, mean, tol",
    [
        ((0, 1, 2), (0.4, 0.2, 0.4), 1.0, 0.01),
        ((0, 20), (0.42, 0.58), 11.6, 0.1),
    ],
)
def test_sample_arrival_mean(amounts, probs, mean, tol):
    model = ArrivalModel(amounts, probs)
    assert model.lam == pytest.approx(mean, abs=1e-12)
    idx = model.sample_index(RandomSource(3).uniform(10**6))
    assert abs(float(np.asarray(amounts)[idx].mean()) - mean) <= tol


def test_sample_arrival_point_mass():
    model = ArrivalModel((0,), (1,))
    rng = RandomSource(0)
    assert all(sample_arrival(model, rng) == 0 for _ in range(100))


def test_mean_rate_values(two_channel, nine_channel):
    assert mean_rate(two_channel) == pytest.approx(1.25, abs=1e-15)
    exact = sum(s * p for s, p in zip(NINE_STATES, NINE_PROBS))
    assert exact == Fraction(752, 45)
    assert mean_rate(nine_channel) == pytest.approx(752 / 45, abs=1e-12)
    assert mean_rate(validate_channel([0], [1])) == 0.0


def _three_phase(two_channel, two_arrivals):
    return PhaseSchedule(tuple(Phase(2000, two_channel, two_arrivals) for _ in range(3)))


@pytest.mark.parametrize("t, phase", [(0, 0), (1999, 0), (2000, 1), (3999, 1), (4000, 2), (5999, 2)])
def test_active_phase_boundaries(two_channel, two_arrivals, t, phase):
    sched = _three_phase(two_channel, two_arrivals)
    assert sched.phase_index(t) == phase
    assert active_phase(sched, t)[0] is two_channel


def test_active_phase_past_end(two_channel, two_arrivals):
    sched = _three_phase(two_channel, two_arrivals)
    with pytest.raises(SlotBeyondSchedule):
        active_phase(sched, 6000)


def test_single_phase_any_slot(two_schedule):
    assert two_schedule.phase_index(10**9) == 0


def test_only_last_phase_unbounded(two_channel, two_arrivals):
    with pytest.raises(ModelError):
        PhaseSchedule((Phase(None, two_channel, two_arrivals), Phase(5, two_channel, two_arrivals)))


@st.composite
def channels(draw):
    n = draw(st.integers(1, 6))
    states = sorted(draw(st.sets(st.integers(0, 60), min_size=n, max_size=n)))
    weights = draw(st.lists(st.integers(1, 50), min_size=n, max_size=n))
    total = sum(weights)
    return states, [w / total for w in weights]


@given(channels())
def test_channel_probabilities_normalised(raw):
    states, probs = raw
    if abs(math.fsum(probs) - 1) > 1e-12:
        return
    ch = validate_channel(states, probs)
    assert abs(math.fsum(ch.probs) - 1) <= 1e-12
    assert mean_rate(ch) >= 0


@given(st.integers(0, 2**63 - 1), st.integers(1, 300), st.integers(1, 300))
def test_shorter_horizon_is_prefix(seed, n1, n2):
    sched = PhaseSchedule.single(validate_channel([1, 2], [0.75, 0.25]), ArrivalModel((0, 1, 2), (0.4, 0.2, 0.4)))
    short, long = sorted((n1, n2))
    a = draw_path(sched, short, seed)
    b = draw_path(sched, long, seed)
    assert np.array_equal(a.omega, b.omega[:short])
    assert np.array_equal(a.arrivals, b.arrivals[:short])
    assert np.array_equal(a.u_policy, b.u_policy[:short])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_empirical_distribution_converges(nine_channel, seed):
    n = 10**5
    idx = nine_channel.sample_index(RandomSource(seed).uniform(n))
    freq = np.bincount(idx, minlength=len(nine_channel.states)) / n
    assert np.max(np.abs(freq - np.asarray(nine_channel.probs))) <= 5 * math.sqrt(1 / n)

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from energysched.curve import build_curve, h_of_mu
from energysched.errors import IndexOutOfRange, MissingState, RateOutOfRange
from energysched.models import validate_channel
from energysched.policies import (
    DppConfig,
    OmegaOnlyPolicy,
    design_omega_only,
    dpp_decide,
    omega_only_for_margin,
    place_holder_backlog,
    policy_expectations,
    threshold_policy,
)


@pytest.mark.parametrize(
    "q, omega, v, expected",
    [(0, 2, 40, 0), (0, 46, 1, 0), (20, 2, 40, 1), (19, 2, 40, 0), (10, 4, 40, 1), (0, 0, 0, 1)],
)
def test_dpp_decide(q, omega, v, expected):
    assert dpp_decide(q, omega, v) == expected


@pytest.mark.parametrize(
    "v, omega_max, expected",
    [(10, 2, 3.0), (4, 2, 0.0), (1, 2, 0.0), (80000, 46, 80000 / 46 - 46)],
)
def test_place_holder_backlog(v, omega_max, expected):
    assert place_holder_backlog(v, omega_max) == pytest.approx(expected, abs=1e-12)


def test_place_holder_large_value():
    assert place_holder_backlog(80000, 46) == pytest.approx(1693.13, abs=0.005)


def test_dpp_config():
    cfg = DppConfig(10, place_holder=True)
    assert cfg.q_place(2) == 3.0
    assert DppConfig(10).q_place(2) == 0.0
    assert cfg.analytic_regime(2) and not DppConfig(3).analytic_regime(2)
    assert cfg.to_dict() == {"kind": "dpp-place", "v": 10}
    with pytest.raises(ValueError):
        DppConfig(-1)


def test_threshold_policy_two_channel(two_channel):
    curve = build_curve(two_channel)
    pol = threshold_policy(curve, 2)
    assert pol.transmit_prob == {1.0: 0.0, 2.0: 1.0}
    assert policy_expectations(pol, two_channel) == pytest.approx((0.5, 0.25), abs=1e-15)
    pol1 = threshold_policy(curve, 1)
    assert policy_expectations(pol1, two_channel) == pytest.approx((1.25, 1.0), abs=1e-15)


def test_threshold_policy_nine_channel(nine_channel):
    pol = threshold_policy(build_curve(nine_channel), 5)
    mu, p = policy_expectations(pol, nine_channel)
    assert mu == pytest.approx(9.6, abs=1e-12)
    assert p == pytest.approx(16 / 45, abs=1e-12)


@pytest.mark.parametrize("k", [0, 3])
def test_threshold_index_range(two_channel, k):
    with pytest.raises(IndexOutOfRange):
        threshold_policy(build_curve(two_channel), k)


def test_design_two_channel(two_channel):
    pol = design_omega_only(build_curve(two_channel), 1.0)
    assert pol.transmit_prob[2.0] == 1.0
    assert pol.transmit_prob[1.0] == pytest.approx(2 / 3, abs=1e-15)
    assert policy_expectations(pol, two_channel) == pytest.approx((1.0, 0.75), abs=1e-15)


@pytest.mark.parametrize("k", [1, 2])
def test_design_at_vertex_is_threshold(two_channel, k):
    curve = build_curve(two_channel)
    assert design_omega_only(curve, curve.vertex(k).mu) == threshold_policy(curve, k)


def test_design_zero_target(two_channel):
    pol = design_omega_only(build_curve(two_channel), 0.0)
    assert set(pol.transmit_prob.values()) == {0.0}


def test_design_out_of_range(two_channel):
    with pytest.raises(RateOutOfRange):
        design_omega_only(build_curve(two_channel), 2.0)


def test_margin_clips_to_mean_rate(two_channel):
    pol = omega_only_for_margin(build_curve(two_channel), 1.0, 0.5)
    assert policy_expectations(pol, two_channel)[0] == pytest.approx(1.25)


def test_all_zero_expectations(two_channel):
    assert policy_expectations(OmegaOnlyPolicy({1: 0, 2: 0}), two_channel) == (0.0, 0.0)


def test_policy_validation(two_channel):
    with pytest.raises(ValueError):
        OmegaOnlyPolicy({1: 1.5})
    with pytest.raises(MissingState):
        policy_expectations(OmegaOnlyPolicy({1: 1.0}), two_channel)


@given(
    st.floats(0, 1e4), st.floats(0, 50), st.floats(0, 1e4),
    st.floats(0, 100), st.floats(0, 10), st.floats(0, 100),
)
def test_dpp_monotone(q, omega, v, dq, domega, dv):
    if dpp_decide(q, omega, v) == 1:
        assert dpp_decide(q + dq, omega + domega, max(v - dv, 0.0)) == 1


@given(st.integers(1, 50), st.floats(0, 1), st.floats(0, 1))
def test_no_transmission_below_omega_max(omega_max, qfrac, wfrac):
    v = omega_max**2 * 1.0
    q = qfrac * omega_max * 0.999999
    omega = wfrac * omega_max
    assert dpp_decide(q, omega, v) == 0


@st.composite
def channels(draw):
    n = draw(st.integers(1, 6))
    states = sorted(draw(st.sets(st.integers(1, 50), min_size=n, max_size=n)))
    weights = draw(st.lists(st.integers(1, 40), min_size=n + 1, max_size=n + 1))
    total = sum(weights)
    probs = [w / total for w in weights]
    probs[-1] = 1.0 - sum(probs[:-1])
    return validate_channel([0] + states, probs)


@given(channels(), st.floats(0, 1))
def test_design_reproduces_curve(ch, frac):
    curve = build_curve(ch)
    target = frac * curve.mean_rate
    mu, p = policy_expectations(design_omega_only(curve, target), ch)
    assert mu == pytest.approx(target, abs=1e-10)
    assert p == pytest.approx(h_of_mu(curve, target), abs=1e-10)

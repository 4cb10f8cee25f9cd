"""Scheduling rules: drift-plus-penalty, place-holder backlog, omega-only baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .curve import RatePowerCurve
from .errors import IndexOutOfRange, MissingState, RateOutOfRange
from .models import ChannelModel


def dpp_decide(q_effective: float, omega: float, v: float) -> int:
    """Transmit iff Q * omega >= V (ties transmit)."""
    return 1 if q_effective * omega >= v else 0


def place_holder_backlog(v: float, omega_max: float) -> float:
    return max(v / omega_max - omega_max, 0.0)


@dataclass(frozen=True)
class DppConfig:
    """Drift-plus-penalty parameters.

    With ``place_holder`` the queue starts with max[V/w_M - w_M, 0] units of
    fake backlog that the decision rule sees but that is never served.
    """

    v: float
    place_holder: bool = False

    def __post_init__(self) -> None:
        if self.v < 0 or math.isnan(self.v):
            raise ValueError(f"V must be nonnegative, got {self.v}")

    def q_place(self, omega_max: float) -> float:
        return place_holder_backlog(self.v, omega_max) if self.place_holder else 0.0

    def analytic_regime(self, omega_max: float) -> bool:
        """True when V >= w_M^2, the regime covered by the backlog bounds."""
        return self.v >= omega_max**2

    def to_dict(self) -> dict:
        return {"kind": "dpp-place" if self.place_holder else "dpp", "v": self.v}


@dataclass(frozen=True)
class OmegaOnlyPolicy:
    """Stationary per-state transmit probabilities."""

    transmit_prob: Mapping[float, float]

    def __post_init__(self) -> None:
        probs = {float(k): float(v) for k, v in dict(self.transmit_prob).items()}
        for state, prob in probs.items():
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"transmit probability {prob} for state {state} outside [0, 1]")
        object.__setattr__(self, "transmit_prob", probs)

    def prob(self, omega: float) -> float:
        try:
            return self.transmit_prob[float(omega)]
        except KeyError:
            raise MissingState(f"policy has no entry for channel state {omega}") from None

    def to_dict(self) -> dict:
        return {
            "kind": "omega-only",
            "probs": {repr(k): v for k, v in sorted(self.transmit_prob.items())},
        }

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.transmit_prob.items())))


def threshold_policy(curve: RatePowerCurve, k: int) -> OmegaOnlyPolicy:
    """Transmit exactly when omega >= omega_k."""
    w = curve.channel.positive_states
    if not 1 <= k <= len(w):
        raise IndexOutOfRange(f"threshold index {k} outside 1..{len(w)}")
    cut = w[k - 1]
    return OmegaOnlyPolicy({s: 1.0 if s >= cut and s > 0 else 0.0 for s in curve.channel.states})


def design_omega_only(curve: RatePowerCurve, target_mu: float) -> OmegaOnlyPolicy:
    """Omega-only policy with E[mu] = target and E[p] = h(target).

    States above the bracketing threshold always transmit; the threshold
    state transmits with the fractional probability that closes the gap.
    """
    top = curve.mean_rate
    if not -1e-12 <= target_mu <= top * (1 + 1e-12):
        raise RateOutOfRange(f"target rate {target_mu} outside [0, {top}]")
    target_mu = min(max(target_mu, 0.0), top)
    channel = curve.channel
    w, pi = channel.positive_states, channel.positive_probs
    probs = {s: 0.0 for s in channel.states}
    served = 0.0
    for i in range(len(w) - 1, -1, -1):
        full = w[i] * pi[i]
        if served + full <= target_mu:
            probs[w[i]] = 1.0
            served += full
            if served == target_mu:
                break
        else:
            probs[w[i]] = (target_mu - served) / full
            break
    return OmegaOnlyPolicy(probs)


def policy_expectations(policy: OmegaOnlyPolicy, channel: ChannelModel) -> tuple[float, float]:
    mu = math.fsum(p * s * policy.prob(s) for s, p in zip(channel.states, channel.probs))
    power = math.fsum(p * policy.prob(s) for s, p in zip(channel.states, channel.probs))
    return mu, power


def omega_only_for_margin(curve: RatePowerCurve, lam: float, delta: float) -> OmegaOnlyPolicy:
    """Baseline designed for E[mu] = lam + delta (clipped to the curve's range)."""
    return design_omega_only(curve, min(lam + delta, curve.mean_rate))


__all__ = [
    "dpp_decide",
    "place_holder_backlog",
    "DppConfig",
    "OmegaOnlyPolicy",
    "threshold_policy",
    "design_omega_only",
    "policy_expectations",
    "omega_only_for_margin",
]

"""Channel and arrival processes, phase schedules, and seeded sampling.

Every slot of a simulated path consumes exactly three uniforms from the
run's generator, in this order: channel state, arrival amount, policy
randomisation.  Draws are laid out slot-major, so a shorter horizon is a
prefix of a longer one under the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateState,
    ModelError,
    NegativeRate,
    NonPositiveProbabilitySum,
    ProbabilitySumMismatch,
    SlotBeyondSchedule,
)

PROB_TOL = 1e-12
DRAWS_PER_SLOT = 3


def _check_probs(probs: Sequence[float]) -> None:
    if any(not math.isfinite(p) or p < 0 for p in probs):
        raise ModelError(f"probabilities must be finite and nonnegative: {list(probs)}")
    total = math.fsum(probs)
    if total <= 0:
        raise NonPositiveProbabilitySum(f"probabilities sum to {total}")
    if abs(total - 1.0) > PROB_TOL:
        raise ProbabilitySumMismatch(f"probabilities sum to {total!r}, expected 1")


def _cdf(probs: Sequence[float]) -> np.ndarray:
    cdf = np.cumsum(np.asarray(probs, dtype=float))
    cdf[-1] = 1.0
    return cdf


@dataclass(frozen=True)
class ChannelModel:
    """Distribution of the per-slot transmission opportunity omega(t).

    ``states`` are strictly increasing nonnegative rates.  A zero state may
    carry zero probability; every positive state must have positive mass.
    When no zero state is listed, the zero-rate state is implicit with
    probability zero.
    """

    states: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        states = tuple(float(s) for s in self.states)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs)
        if not states or len(states) != len(probs):
            raise ModelError("states and probs must be nonempty and equally long")
        if any(s < 0 or not math.isfinite(s) for s in states):
            raise NegativeRate(f"rates must be finite and nonnegative: {list(states)}")
        if any(b <= a for a, b in zip(states, states[1:])):
            raise ModelError("states must be strictly increasing (use validate_channel)")
        _check_probs(probs)
        for s, p in zip(states, probs):
            if s > 0 and p <= 0:
                raise ModelError(f"positive state {s} has zero probability (use validate_channel)")
        object.__setattr__(self, "_cdf", _cdf(probs))

    @property
    def positive_states(self) -> tuple[float, ...]:
        """The rates omega_1 < ... < omega_M (zero state excluded)."""
        return tuple(s for s in self.states if s > 0)

    @property
    def positive_probs(self) -> tuple[float, ...]:
        return tuple(p for s, p in zip(self.states, self.probs) if s > 0)

    @property
    def prob_zero(self) -> float:
        """Probability of the zero-rate state."""
        return math.fsum(p for s, p in zip(self.states, self.probs) if s == 0)

    @property
    def omega_max(self) -> float:
        return self.states[-1]

    def index_of(self, omega: float) -> int:
        return self.states.index(float(omega))

    def sample_index(self, u: np.ndarray | float) -> np.ndarray | int:
        """Inverse-CDF map of uniforms in [0, 1) to state indices."""
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, len(self.states) - 1)

    def to_dict(self) -> dict:
        return {"states": list(self.states), "probs": list(self.probs)}


def validate_channel(states: Iterable[float], probs: Iterable[float]) -> ChannelModel:
    """Build a ChannelModel from raw lists.

    States are sorted ascending and positive states with zero probability are
    dropped; a zero-rate state is kept even when its probability is zero.
    """
    states = [float(s) for s in states]
    probs = [float(p) for p in probs]
    if len(states) != len(probs) or not states:
        raise ModelError("states and probs must be nonempty and equally long")
    if any(s < 0 for s in states):
        raise NegativeRate(f"rates must be nonnegative: {states}")
    if len(set(states)) != len(states):
        raise DuplicateState(f"duplicate channel states: {states}")
    _check_probs(probs)
    pairs = sorted(zip(states, probs))
    kept = [(s, p) for s, p in pairs if s == 0 or p > 0]
    return ChannelModel(tuple(s for s, _ in kept), tuple(p for _, p in kept))


@dataclass(frozen=True)
class ArrivalModel:
    """Finite-support i.i.d. arrival distribution."""

    amounts: tuple[float, ...]
    probs: tuple[float, ...]
    a_max: float | None = None
    lam: float = field(init=False)

    def __post_init__(self) -> None:
        amounts = tuple(float(a) for a in self.amounts)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "amounts", amounts)
        object.__setattr__(self, "probs", probs)
        if not amounts or len(amounts) != len(probs):
            raise ModelError("amounts and probs must be nonempty and equally long")
        if any(a < 0 or not math.isfinite(a) for a in amounts):
            raise ModelError(f"arrival amounts must be finite and nonnegative: {list(amounts)}")
        _check_probs(probs)
        a_max = max(amounts) if self.a_max is None else float(self.a_max)
        if any(a > a_max for a in amounts):
            raise ModelError(f"arrival amount exceeds a_max={a_max}")
        object.__setattr__(self, "a_max", a_max)
        object.__setattr__(self, "lam", math.fsum(a * p for a, p in zip(amounts, probs)))
        object.__setattr__(self, "_cdf", _cdf(probs))

    def sample_index(self, u: np.ndarray | float) -> np.ndarray | int:
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, len(self.amounts) - 1)

    def to_dict(self) -> dict:
        return {"amounts": list(self.amounts), "probs": list(self.probs), "a_max": self.a_max}


@dataclass(frozen=True)
class Phase:
    duration: int | None  # None: lasts forever
    channel: ChannelModel
    arrivals: ArrivalModel


@dataclass(frozen=True)
class PhaseSchedule:
    """Piecewise-in-time sequence of (channel, arrival) models."""

    phases: tuple[Phase, ...]

    def __post_init__(self) -> None:
        phases = tuple(self.phases)
        object.__setattr__(self, "phases", phases)
        if not phases:
            raise ModelError("schedule needs at least one phase")
        for i, ph in enumerate(phases):
            if ph.duration is None:
                if i != len(phases) - 1:
                    raise ModelError("only the final phase may have unbounded duration")
            elif int(ph.duration) != ph.duration or ph.duration <= 0:
                raise ModelError(f"phase durations must be positive integers, got {ph.duration}")

    @classmethod
    def single(cls, channel: ChannelModel, arrivals: ArrivalModel) -> "PhaseSchedule":
        return cls((Phase(None, channel, arrivals),))

    @property
    def starts(self) -> list[int]:
        out, t = [], 0
        for ph in self.phases:
            out.append(t)
            if ph.duration is not None:
                t += int(ph.duration)
        return out

    @property
    def total_slots(self) -> float:
        if self.phases[-1].duration is None:
            return math.inf
        return float(sum(int(ph.duration) for ph in self.phases))

    def phase_index(self, t: int) -> int:
        if t < 0:
            raise SlotBeyondSchedule(f"slot {t} is negative")
        if t >= self.total_slots:
            raise SlotBeyondSchedule(f"slot {t} is past the end of a {self.total_slots:.0f}-slot schedule")
        starts = self.starts
        for i in range(len(starts) - 1, -1, -1):
            if t >= starts[i]:
                return i
        return 0  # pragma: no cover

    def segments(self, horizon: int) -> list[tuple[int, int, Phase]]:
        """Phases clipped to ``[0, horizon)`` as (start, end, phase)."""
        if horizon > self.total_slots:
            raise SlotBeyondSchedule(
                f"horizon {horizon} exceeds the {self.total_slots:.0f}-slot schedule"
            )
        out = []
        for start, ph in zip(self.starts, self.phases):
            if start >= horizon:
                break
            end = horizon if ph.duration is None else min(horizon, start + int(ph.duration))
            out.append((start, end, ph))
        return out

    @property
    def omega_max(self) -> float:
        return max(ph.channel.omega_max for ph in self.phases)

    @property
    def a_max(self) -> float:
        return max(ph.arrivals.a_max for ph in self.phases)


def active_phase(schedule: PhaseSchedule, t: int) -> tuple[ChannelModel, ArrivalModel]:
    ph = schedule.phases[schedule.phase_index(t)]
    return ph.channel, ph.arrivals


class RandomSource:
    """Seeded PCG64 stream owned by one run."""

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, size=None):
        return self.generator.random(size)


def sample_channel(model: ChannelModel, rng: RandomSource) -> float:
    return model.states[int(model.sample_index(rng.uniform()))]


def sample_arrival(model: ArrivalModel, rng: RandomSource) -> float:
    return model.amounts[int(model.sample_index(rng.uniform()))]


def mean_rate(model: ChannelModel) -> float:
    return math.fsum(s * p for s, p in zip(model.states, model.probs))


@dataclass
class SlotDraws:
    """Per-slot realised randomness for one path."""

    omega: np.ndarray
    arrivals: np.ndarray
    u_policy: np.ndarray
    phase: np.ndarray  # phase index of each slot


def draw_path(schedule: PhaseSchedule, horizon: int, seed: int) -> SlotDraws:
    """Sample omega(t), a(t) and the policy uniform for slots 0..horizon-1."""
    u = RandomSource(seed).uniform((horizon, DRAWS_PER_SLOT))
    return map_uniforms(schedule, u)


def map_uniforms(schedule: PhaseSchedule, u: np.ndarray, t0: int = 0) -> SlotDraws:
    """Map uniforms of shape (..., n, 3) covering slots t0..t0+n-1 to slot draws."""
    n = u.shape[-2]
    omega = np.empty(u.shape[:-1])
    arrivals = np.empty(u.shape[:-1])
    phase = np.empty(n, dtype=np.int64)
    for i, (start, end, ph) in enumerate(schedule.segments(t0 + n)):
        lo, hi = max(start, t0) - t0, end - t0
        if hi <= 0:
            continue
        states = np.asarray(ph.channel.states)
        amounts = np.asarray(ph.arrivals.amounts)
        omega[..., lo:hi] = states[ph.channel.sample_index(u[..., lo:hi, 0])]
        arrivals[..., lo:hi] = amounts[ph.arrivals.sample_index(u[..., lo:hi, 1])]
        phase[lo:hi] = i
    return SlotDraws(omega, arrivals, np.ascontiguousarray(u[..., 2]), phase)

"""Minimum-power rate curve h(mu), timesharing, and the minimum-time converse."""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleTarget, LambdaAtVertex, LambdaOutOfRange, RateOutOfRange
from .models import ChannelModel, validate_channel

VERTEX_RTOL = 1e-9
RANGE_TOL = 1e-12
CONVERSE_T_CAP = 10**8
TIE_TOL = 1e-12  # exact ties with the target corner count as reached


@dataclass(frozen=True)
class VertexPoint:
    k: int  # threshold index; M + 1 marks the origin
    mu: float
    power: float


@dataclass(frozen=True)
class RatePowerCurve:
    """Vertices of h(mu), ordered by increasing rate, origin first."""

    vertices: tuple[VertexPoint, ...]
    channel: ChannelModel

    @property
    def mus(self) -> np.ndarray:
        return np.array([v.mu for v in self.vertices])

    @property
    def powers(self) -> np.ndarray:
        return np.array([v.power for v in self.vertices])

    @property
    def M(self) -> int:
        return len(self.vertices) - 1

    @property
    def mean_rate(self) -> float:
        return self.vertices[-1].mu

    def vertex(self, k: int) -> VertexPoint:
        """Vertex for threshold index k in 1..M+1."""
        return self.vertices[self.M + 1 - k]

    def slopes(self) -> list[float]:
        v = self.vertices
        return [(b.power - a.power) / (b.mu - a.mu) for a, b in zip(v, v[1:])]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "mu", "power"])
        for v in self.vertices:
            w.writerow([v.k, repr(v.mu), repr(v.power)])
        return buf.getvalue()


@dataclass(frozen=True)
class TimeshareSolution:
    """Segment of h containing lam and the mix of its two end vertices.

    ``omega_b_minus_1`` is 0.0 when b == 1 and ``omega_b_plus_1`` is inf
    when b == M, so V / omega gives inf and 0 respectively.
    """

    lam: float
    b: int
    theta: float
    p_star: float
    mu_b: float
    mu_b_plus_1: float
    h_b: float
    h_b_plus_1: float
    omega_b: float
    omega_b_minus_1: float
    omega_b_plus_1: float
    mean_rate: float

    def thresholds(self, v: float) -> tuple[float, float, float]:
        """Backlog boundaries (V/w_{b+1}, V/w_b, V/w_{b-1})."""
        return (
            _ratio(v, self.omega_b_plus_1),
            _ratio(v, self.omega_b),
            _ratio(v, self.omega_b_minus_1),
        )


def _ratio(v: float, omega: float) -> float:
    if omega == 0:
        return math.inf
    if math.isinf(omega):
        return 0.0
    return v / omega


def build_curve(channel: ChannelModel) -> RatePowerCurve:
    w = channel.positive_states
    pi = channel.positive_probs
    M = len(w)
    verts = [VertexPoint(M + 1, 0.0, 0.0)]
    for k in range(M, 0, -1):
        tail = range(k - 1, M)
        mu = math.fsum(w[i] * pi[i] for i in tail)
        power = math.fsum(pi[i] for i in tail)
        verts.append(VertexPoint(k, mu, power))
    return RatePowerCurve(tuple(verts), channel)


def h_of_mu(curve: RatePowerCurve, mu: float) -> float:
    """Minimum average power for average service rate ``mu``."""
    top = curve.mean_rate
    if mu < -RANGE_TOL * max(1.0, top) or mu > top + RANGE_TOL * max(1.0, top) or math.isnan(mu):
        raise RateOutOfRange(f"rate {mu} outside [0, {top}]")
    mu = min(max(mu, 0.0), top)
    mus = [v.mu for v in curve.vertices]
    j = bisect.bisect_right(mus, mu) - 1
    left = curve.vertices[j]
    if mu == left.mu or j == len(mus) - 1:
        return left.power
    right = curve.vertices[j + 1]
    frac = (mu - left.mu) / (right.mu - left.mu)
    return left.power + frac * (right.power - left.power)


def locate_segment(curve: RatePowerCurve, lam: float) -> TimeshareSolution:
    top = curve.mean_rate
    if not (0.0 <= lam <= top * (1 + VERTEX_RTOL)):
        raise LambdaOutOfRange(f"arrival rate {lam} outside [0, {top}]")
    for v in curve.vertices:
        if abs(lam - v.mu) <= VERTEX_RTOL * max(abs(v.mu), 1e-300):
            raise LambdaAtVertex(f"arrival rate {lam} sits on vertex k={v.k} (mu={v.mu})")
    M = curve.M
    w = curve.channel.positive_states
    for b in range(1, M + 1):
        upper, lower = curve.vertex(b), curve.vertex(b + 1)
        if lower.mu < lam < upper.mu:
            theta = (upper.mu - lam) / (upper.mu - lower.mu)
            return TimeshareSolution(
                lam=lam,
                b=b,
                theta=theta,
                p_star=theta * lower.power + (1 - theta) * upper.power,
                mu_b=upper.mu,
                mu_b_plus_1=lower.mu,
                h_b=upper.power,
                h_b_plus_1=lower.power,
                omega_b=w[b - 1],
                omega_b_minus_1=w[b - 2] if b >= 2 else 0.0,
                omega_b_plus_1=w[b] if b < M else math.inf,
                mean_rate=top,
            )
    raise LambdaOutOfRange(f"arrival rate {lam} not inside any segment")  # pragma: no cover


def in_region(curve: RatePowerCurve, point: tuple[float, float], tol: float = 1e-12) -> bool:
    """Whether (mu, p) lies on or above h with power at most one."""
    mu, p = point
    if mu < -tol or mu > curve.mean_rate + tol or p > 1 + tol:
        return False
    return h_of_mu(curve, min(max(mu, 0.0), curve.mean_rate)) <= p + tol


def converse_min_time(
    curve: RatePowerCurve,
    lam: float,
    epsilon: float,
    initial: tuple[float, float],
    t_cap: int = CONVERSE_T_CAP,
) -> int:
    """Fewest slots after which one bad first slot can be averaged away.

    Returns the smallest t >= 1 for which some point (mu1, h(mu1)) on the
    curve makes ``initial / t + (1 - 1/t) * (mu1, h(mu1))`` an
    epsilon-approximation of ``(lam, h(lam))``.  Because h is nondecreasing,
    the best mu1 for a given t is the smallest rate meeting the service
    constraint, so each t is settled by one evaluation of h.
    """
    if not 0 < epsilon < 1 / 64:
        raise ValueError(f"epsilon must lie in (0, 1/64), got {epsilon}")
    if not in_region(curve, initial):
        raise ValueError(f"initial point {initial} is not achievable in one slot")
    mu0, p0 = initial
    mu_target = lam - epsilon
    p_target = h_of_mu(curve, lam) + epsilon
    if mu0 >= mu_target and p0 <= p_target:
        return 1

    xs, ys, top = curve.mus, curve.powers, curve.mean_rate
    start, chunk = 2, 1024
    while start <= t_cap:
        t = np.arange(start, min(start + chunk, t_cap + 1), dtype=float)
        mu1 = np.maximum((t * mu_target - mu0) / (t - 1), 0.0)
        p_allowed = (t * p_target - p0) / (t - 1)
        ok = (mu1 <= top * (1 + TIE_TOL)) & (
            np.interp(np.minimum(mu1, top), xs, ys) <= p_allowed + TIE_TOL
        )
        hit = np.flatnonzero(ok)
        if hit.size:
            return int(t[hit[0]])
        start += chunk
        chunk = min(chunk * 4, 1 << 20)
    raise InfeasibleTarget(f"no t <= {t_cap} reaches the epsilon={epsilon} target")


# -- the two worst-case channel families --------------------------------------

CONVERSE_CASES = {
    1: {"y": 0.0, "z": 0.25, "theta2": (0.0, 0.5)},
    2: {"y": 0.5, "z": 0.5, "theta2": (0.5, 1.0)},
}


def three_state_channel(y: float, z: float) -> ChannelModel:
    """Channel on rates {1, 2, 3} with P(3) = y, P(2) = z."""
    return validate_channel([1.0, 2.0, 3.0], [1.0 - y - z, z, y])


def first_slot_point(y: float, z: float, theta: Sequence[float]) -> tuple[float, float]:
    """Expected (service, power) of slot 0 given per-state transmit probabilities
    ``theta = (theta_1, theta_2, theta_3)`` for rates 1, 2, 3."""
    probs = (1.0 - y - z, z, y)
    mu = math.fsum(pi * rate * th for pi, rate, th in zip(probs, (1, 2, 3), theta))
    p = math.fsum(pi * th for pi, th in zip(probs, theta))
    return mu, p


@dataclass(frozen=True)
class ConverseResult:
    case: int | None
    y: float
    z: float
    epsilon: float
    t_min: int
    initial: tuple[float, float]
    theta: tuple[float, float, float] | None

    @property
    def scaled(self) -> float:
        return self.epsilon * self.t_min


def converse_scan(
    y: float,
    z: float,
    epsilon: float,
    theta2_range: tuple[float, float],
    lam: float = 1.0,
    grid: int = 21,
    case: int | None = None,
) -> ConverseResult:
    """Minimum of converse_min_time over first-slot decisions.

    theta_1 and theta_3 range over [0, 1]; theta_2 over ``theta2_range``.
    The minimum over the grid is the time achievable from the most favourable
    admissible first-slot mistake.
    """
    curve = build_curve(three_state_channel(y, z))
    lo, hi = theta2_range
    best: ConverseResult | None = None
    seen: set[tuple[float, float]] = set()
    axis = np.linspace(0.0, 1.0, grid)
    for th2 in np.linspace(lo, hi, grid):
        for th1 in axis:
            for th3 in axis:
                theta = (float(th1), float(th2), float(th3))
                point = first_slot_point(y, z, theta)
                key = (round(point[0], 15), round(point[1], 15))
                if key in seen:
                    continue
                seen.add(key)
                t = converse_min_time(curve, lam, epsilon, point)
                if best is None or t < best.t_min:
                    best = ConverseResult(case, y, z, epsilon, t, point, theta)
    assert best is not None
    return best


def converse_case(case: int, epsilon: float, grid: int = 21) -> ConverseResult:
    spec = CONVERSE_CASES[case]
    return converse_scan(spec["y"], spec["z"], epsilon, spec["theta2"], grid=grid, case=case)


__all__ = [
    "VertexPoint",
    "RatePowerCurve",
    "TimeshareSolution",
    "build_curve",
    "h_of_mu",
    "locate_segment",
    "converse_min_time",
    "converse_scan",
    "converse_case",
    "three_state_channel",
    "first_slot_point",
]

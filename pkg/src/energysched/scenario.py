"""JSON scenario files: parsing, validation, serialisation, bundled fixtures.

Probabilities may be written as numbers or as exact fraction strings such as
``"2/45"``.  Unknown keys are rejected at every level.  A scenario looks
like::

    {
      "name": "two_channel",
      "phases": [
        {"duration": null,
         "channel": {"states": [1, 2], "probs": ["3/4", "1/4"]},
         "arrivals": {"amounts": [0, 1, 2], "probs": ["2/5", "1/5", "2/5"]}}
      ],
      "policy": {"kind": "dpp", "v": 40},
      "horizon": 1000000,
      "n_runs": 1
    }

``policy.kind`` is ``dpp``, ``dpp-place`` or ``omega-only``; an omega-only
policy takes either explicit per-state ``probs`` or a service ``target``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

from .curve import build_curve
from .errors import ModelError, ScenarioError
from .models import ArrivalModel, Phase, PhaseSchedule, validate_channel
from .policies import DppConfig, OmegaOnlyPolicy, design_omega_only
from .sim import Discipline, Policy

POLICY_KINDS = ("dpp", "dpp-place", "omega-only")
BUNDLED = ("two_channel", "nine_channel", "nonergodic_3phase", "lifo_comparison")

_TOP_KEYS = {
    "name",
    "description",
    "phases",
    "policy",
    "v_sweep",
    "delta_sweep",
    "horizon",
    "n_runs",
    "base_seed",
    "discipline",
    "trim_fraction",
    "q0",
}
_PHASE_KEYS = {"duration", "channel", "arrivals"}
_CHANNEL_KEYS = {"states", "probs"}
_ARRIVAL_KEYS = {"amounts", "probs", "a_max"}
_POLICY_KEYS = {"kind", "v", "probs", "target"}


def parse_number(value: Any, where: str) -> float:
    """A JSON number or an exact ``"p/q"`` fraction string."""
    if isinstance(value, bool):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        try:
            out = float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise ScenarioError(f"{where}: cannot parse {value!r} as a number") from None
    else:
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(out):
        raise ScenarioError(f"{where}: value must be finite")
    return out


def _numbers(values: Any, where: str) -> list[float]:
    if not isinstance(values, list) or not values:
        raise ScenarioError(f"{where}: expected a nonempty list")
    return [parse_number(v, f"{where}[{i}]") for i, v in enumerate(values)]


def _check_keys(obj: Any, allowed: set[str], where: str, required: tuple[str, ...] = ()) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ScenarioError(f"{where}: missing keys {missing}")
    return obj


def _int(value: Any, where: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise ScenarioError(f"{where}: expected an integer, got {value!r}")
    if value < minimum:
        raise ScenarioError(f"{where}: must be at least {minimum}")
    return int(value)


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    v: float | None = None
    probs: tuple[tuple[float, float], ...] | None = None
    target: float | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.v is not None:
            out["v"] = self.v
        if self.probs is not None:
            out["probs"] = {repr(s): p for s, p in self.probs}
        if self.target is not None:
            out["target"] = self.target
        return out


@dataclass(frozen=True)
class Scenario:
    name: str
    schedule: PhaseSchedule
    policy: PolicySpec
    horizon: int
    n_runs: int = 1
    base_seed: int = 0
    discipline: str = "fifo"
    trim_fraction: float = 0.98
    q0: float = 0.0
    v_sweep: tuple[float, ...] = ()
    delta_sweep: tuple[float, ...] = ()
    description: str = field(default="", compare=False)

    @property
    def v(self) -> float | None:
        return self.policy.v

    def build_policy(self, v: float | None = None) -> Policy:
        """Policy object, with ``v`` overriding the file's weight for DPP kinds."""
        spec = self.policy
        if spec.kind in ("dpp", "dpp-place"):
            weight = spec.v if v is None else v
            if weight is None:
                raise ScenarioError("DPP policy needs a V value (in the file or via --v)")
            return DppConfig(weight, place_holder=spec.kind == "dpp-place")
        if spec.probs is not None:
            return OmegaOnlyPolicy(dict(spec.probs))
        return design_omega_only(build_curve(self.schedule.phases[0].channel), spec.target)

    def with_overrides(self, **changes) -> "Scenario":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update({k: v for k, v in changes.items() if v is not None})
        return Scenario(**data)

    def to_dict(self) -> dict:
        phases = []
        for ph in self.schedule.phases:
            phases.append(
                {
                    "duration": ph.duration,
                    "channel": {"states": list(ph.channel.states), "probs": list(ph.channel.probs)},
                    "arrivals": {
                        "amounts": list(ph.arrivals.amounts),
                        "probs": list(ph.arrivals.probs),
                        "a_max": ph.arrivals.a_max,
                    },
                }
            )
        out: dict[str, Any] = {"name": self.name}
        if self.description:
            out["description"] = self.description
        out.update(
            {
                "phases": phases,
                "policy": self.policy.to_dict(),
                "horizon": self.horizon,
                "n_runs": self.n_runs,
                "base_seed": self.base_seed,
                "discipline": self.discipline,
                "trim_fraction": self.trim_fraction,
                "q0": self.q0,
            }
        )
        if self.v_sweep:
            out["v_sweep"] = list(self.v_sweep)
        if self.delta_sweep:
            out["delta_sweep"] = list(self.delta_sweep)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _parse_phase(obj: Any, i: int, last: bool) -> Phase:
    where = f"phases[{i}]"
    obj = _check_keys(obj, _PHASE_KEYS, where, ("channel", "arrivals"))
    duration = obj.get("duration")
    if duration is not None:
        duration = _int(duration, f"{where}.duration", 1)
    elif not last:
        raise ScenarioError(f"{where}: only the final phase may omit its duration")
    ch = _check_keys(obj["channel"], _CHANNEL_KEYS, f"{where}.channel", ("states", "probs"))
    ar = _check_keys(obj["arrivals"], _ARRIVAL_KEYS, f"{where}.arrivals", ("amounts", "probs"))
    try:
        channel = validate_channel(_numbers(ch["states"], f"{where}.channel.states"), _numbers(ch["probs"], f"{where}.channel.probs"))
        a_max = ar.get("a_max")
        arrivals = ArrivalModel(
            tuple(_numbers(ar["amounts"], f"{where}.arrivals.amounts")),
            tuple(_numbers(ar["probs"], f"{where}.arrivals.probs")),
            None if a_max is None else parse_number(a_max, f"{where}.arrivals.a_max"),
        )
    except ModelError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc
    return Phase(duration, channel, arrivals)


def _parse_policy(obj: Any) -> PolicySpec:
    obj = _check_keys(obj, _POLICY_KEYS, "policy", ("kind",))
    kind = obj["kind"]
    if kind not in POLICY_KINDS:
        raise ScenarioError(f"policy.kind must be one of {POLICY_KINDS}, got {kind!r}")
    if kind in ("dpp", "dpp-place"):
        if "probs" in obj or "target" in obj:
            raise ScenarioError("policy: probs/target only apply to omega-only policies")
        v = obj.get("v")
        v = None if v is None else parse_number(v, "policy.v")
        if v is not None and v < 0:
            raise ScenarioError("policy.v must be nonnegative")
        return PolicySpec(kind, v=v)
    if "v" in obj:
        raise ScenarioError("policy: omega-only policies take no V")
    if ("probs" in obj) == ("target" in obj):
        raise ScenarioError("policy: omega-only needs exactly one of probs or target")
    if "probs" in obj:
        raw = obj["probs"]
        if not isinstance(raw, dict) or not raw:
            raise ScenarioError("policy.probs must map channel states to probabilities")
        probs = tuple(
            sorted((parse_number(k, "policy.probs key"), parse_number(v, f"policy.probs[{k}]")) for k, v in raw.items())
        )
        return PolicySpec(kind, probs=probs)
    return PolicySpec(kind, target=parse_number(obj["target"], "policy.target"))


def parse_scenario(data: Any) -> Scenario:
    """Validate a decoded JSON object and build a :class:`Scenario`."""
    data = _check_keys(data, _TOP_KEYS, "scenario", ("name", "phases", "policy", "horizon"))
    name = data["name"]
    if not isinstance(name, str) or not name:
        raise ScenarioError("name must be a nonempty string")
    raw_phases = data["phases"]
    if not isinstance(raw_phases, list) or not raw_phases:
        raise ScenarioError("phases must be a nonempty list")
    phases = tuple(_parse_phase(p, i, i == len(raw_phases) - 1) for i, p in enumerate(raw_phases))
    try:
        schedule = PhaseSchedule(phases)
    except ModelError as exc:
        raise ScenarioError(str(exc)) from exc
    policy = _parse_policy(data["policy"])
    horizon = _int(data["horizon"], "horizon", 1)
    if horizon > schedule.total_slots:
        raise ScenarioError(f"horizon {horizon} exceeds the {schedule.total_slots:.0f}-slot schedule")
    discipline = data.get("discipline", "fifo")
    try:
        Discipline(discipline)
    except ValueError:
        raise ScenarioError(f"discipline must be 'fifo' or 'lifo', got {discipline!r}") from None
    trim = parse_number(data.get("trim_fraction", 0.98), "trim_fraction")
    if not 0 < trim <= 1:
        raise ScenarioError("trim_fraction must lie in (0, 1]")
    q0 = parse_number(data.get("q0", 0.0), "q0")
    if q0 < 0:
        raise ScenarioError("q0 must be nonnegative")
    v_sweep = tuple(_numbers(data["v_sweep"], "v_sweep")) if "v_sweep" in data else ()
    delta_sweep = tuple(_numbers(data["delta_sweep"], "delta_sweep")) if "delta_sweep" in data else ()
    if any(v < 0 for v in v_sweep):
        raise ScenarioError("v_sweep values must be nonnegative")
    description = data.get("description", "")
    if not isinstance(description, str):
        raise ScenarioError("description must be a string")
    return Scenario(
        name=name,
        schedule=schedule,
        policy=policy,
        horizon=horizon,
        n_runs=_int(data.get("n_runs", 1), "n_runs", 1),
        base_seed=_int(data.get("base_seed", 0), "base_seed", 0),
        discipline=discipline,
        trim_fraction=trim,
        q0=q0,
        v_sweep=v_sweep,
        delta_sweep=delta_sweep,
        description=description,
    )


def loads(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from exc
    return parse_scenario(data)


def load(path: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return bundled(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return loads(text)


def bundled(name: str) -> Scenario:
    if name not in BUNDLED:
        raise ScenarioError(f"no bundled scenario {name!r}; choose from {BUNDLED}")
    return loads(resources.files("energysched.scenarios").joinpath(f"{name}.json").read_text())


__all__ = ["Scenario", "PolicySpec", "parse_scenario", "parse_number", "loads", "load", "bundled", "BUNDLED"]

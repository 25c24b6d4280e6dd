"""Shared value types for the road-section federated learning model.

All times are seconds held as 64-bit floats, all counts are plain ints.
Every type validates its invariants at construction, so the numeric
modules never re-check inputs. Instances are frozen and may be shared
freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

DEFAULT_SAMPLES_PER_VEHICLE = 1024


class InvalidParameterError(ValueError):
    """A physical or statistical parameter violates its constraint."""


class InfeasibleScheduleError(ValueError):
    """The schedule leaves no window in which an upload can ever succeed."""


class InfeasibleEnvironmentError(ValueError):
    """No schedule at all can produce a successful upload here."""


class UnboundedSearchError(ValueError):
    """The round-length search interval has no finite upper bound."""


class DivergenceError(RuntimeError):
    """Training produced non-finite model weights."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidParameterError(message)


def _finite_float(value: object, name: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{name} must be a number")
    value = float(value)
    _require(math.isfinite(value), f"{name} must be finite")
    return value


@dataclass(frozen=True)
class SystemParams:
    """Physical and statistical environment of one road section.

    length        road section covered by the base station, meters
    speed         constant vehicle speed, meters/second
    arrival_rate  Poisson arrival rate of vehicles, 1/second
    tau_down      model download delay, seconds
    tau_up        model upload delay, seconds
    alpha         minimum computing time per local iteration, seconds
    beta          mean of the exponential computing-time tail per
                  iteration, seconds
    """

    length: float
    speed: float
    arrival_rate: float
    tau_down: float
    tau_up: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        for name in ("length", "speed", "arrival_rate", "tau_down",
                     "tau_up", "alpha", "beta"):
            object.__setattr__(self, name, _finite_float(getattr(self, name), name))
        _require(self.length > 0, "section length must be positive")
        _require(self.speed > 0, "speed must be positive")
        _require(self.arrival_rate >= 0, "arrival rate must be non-negative")
        _require(self.tau_down >= 0, "download delay must be non-negative")
        _require(self.tau_up >= 0, "upload delay must be non-negative")
        _require(self.alpha > 0, "alpha must be positive")
        _require(self.beta > 0, "beta must be positive")

    @property
    def dwell_time(self) -> float:
        """Time a vehicle spends inside the section: length / speed."""
        return self.length / self.speed


def validate_params(raw: Mapping[str, object]) -> SystemParams:
    """Build SystemParams from a mapping, rejecting unknown or missing keys.

    Raises InvalidParameterError naming the violated constraint.
    """
    fields = ("length", "speed", "arrival_rate", "tau_down", "tau_up", "alpha", "beta")
    unknown = sorted(set(raw) - set(fields))
    _require(not unknown, f"unknown parameter(s): {', '.join(unknown)}")
    missing = sorted(set(fields) - set(raw))
    _require(not missing, f"missing parameter(s): {', '.join(missing)}")
    return SystemParams(**{name: raw[name] for name in fields})  # type: ignore[arg-type]


@dataclass(frozen=True)
class Schedule:
    """One scheduling decision: local iteration count h and round length t."""

    h: int
    t: float

    def __post_init__(self) -> None:
        _require(isinstance(self.h, int) and not isinstance(self.h, bool),
                 "local iteration count must be an integer")
        _require(self.h >= 1, "local iteration count must be at least 1")
        t = _finite_float(self.t, "round duration")
        _require(t > 0, "round duration must be positive")
        object.__setattr__(self, "t", t)


@dataclass(frozen=True)
class AnalyticSnapshot:
    """All closed-form quantities for one (params, schedule) pair.

    Fields that only exist under feasibility (c0, c1, t_max when the
    iteration count fits inside the dwell time, dg_dt when xi > 0) hold
    NaN when undefined.
    """

    t0: float
    t_min: float
    xi: float
    lam: float
    c0: float
    c1: float
    t_max: float
    g: float
    dg_dt: float

    def __post_init__(self) -> None:
        _require(self.lam >= 0, "expected success count must be non-negative")
        _require(self.g >= 0, "update frequency must be non-negative")
        if self.xi <= 0:
            _require(self.lam == 0 and self.g == 0,
                     "infeasible schedule must have zero mean and zero frequency")


@dataclass(frozen=True)
class VehicleTrace:
    """One vehicle: arrival, departure and local dataset size."""

    id: int
    arrival_time: float
    departure_time: float
    dataset_size: int = DEFAULT_SAMPLES_PER_VEHICLE

    def __post_init__(self) -> None:
        _require(self.departure_time > self.arrival_time,
                 "departure must come after arrival")
        _require(self.dataset_size >= 1, "dataset size must be positive")

    @classmethod
    def from_arrival(cls, id: int, arrival_time: float, dwell_time: float,
                     dataset_size: int = DEFAULT_SAMPLES_PER_VEHICLE) -> "VehicleTrace":
        return cls(id, arrival_time, arrival_time + dwell_time, dataset_size)


@dataclass(frozen=True)
class UploadAttempt:
    """One vehicle's attempt to deliver its model within one round.

    completion is the instant the upload would finish; deadline is the
    earlier of round end and the vehicle's departure.
    """

    round_index: int
    vehicle_id: int
    start_time: float
    computing_delay: float
    completion: float
    deadline: float
    success: bool

    def __post_init__(self) -> None:
        _require(self.computing_delay >= 0, "computing delay must be non-negative")
        _require(self.success == (self.completion <= self.deadline),
                 "success flag must match completion <= deadline")


@dataclass(frozen=True)
class RoundRecord:
    """Participant and success counts of one simulated round."""

    round_index: int
    participants: int
    successes: int
    attempts: tuple[UploadAttempt, ...] = field(default=())

    def __post_init__(self) -> None:
        _require(0 <= self.successes <= self.participants,
                 "successes must lie between 0 and the participant count")
        if self.attempts:
            _require(len(self.attempts) == self.participants,
                     "attempt list must cover every participant")
            _require(sum(1 for a in self.attempts if a.success) == self.successes,
                     "success count must match the attempt list")

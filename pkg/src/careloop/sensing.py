"""Simulated sensor drivers.

Sensors replay scenario-defined signal traces. A time-based sensor emits on
its period; an event-based sensor watches the trace at a fixed evaluation
tick and emits only when its predicate fires.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Union

from .errors import BeforeTraceStart, InvalidField, InvalidPeriod

if TYPE_CHECKING:
    from .domain import SensorDescriptor

Value = Union[float, str]


class Interpolation(str, Enum):
    STEP = "step"
    LINEAR = "linear"


class Direction(str, Enum):
    ABOVE = "above"
    BELOW = "below"


@dataclass(frozen=True)
class ThresholdCross:
    level: float
    direction: Direction = Direction.ABOVE

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", Direction(self.direction))


@dataclass(frozen=True)
class DeltaExceeds:
    delta: float

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise InvalidField(f"DeltaExceeds.delta must be >= 0, got {self.delta}")


EventPredicate = Union[ThresholdCross, DeltaExceeds]


@dataclass(frozen=True)
class TimeBased:
    period_ms: int

    def __post_init__(self) -> None:
        if self.period_ms <= 0:
            raise InvalidPeriod(f"period must be > 0 ms, got {self.period_ms}")


@dataclass(frozen=True)
class EventBased:
    predicate: EventPredicate


SensorMode = Union[TimeBased, EventBased]


@dataclass(frozen=True)
class SignalTrace:
    """Piecewise signal used as the ground truth a simulated sensor reads.

    Points are ``(t_ms, value)`` pairs with strictly increasing ``t``.
    Text values (activity labels such as ``"moving@kitchen"``) are allowed
    with step interpolation only.
    """

    metric: str
    points: tuple[tuple[int, Value], ...]
    interpolation: Interpolation = Interpolation.STEP

    def __post_init__(self) -> None:
        pts = tuple((int(t), v) for t, v in self.points)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "interpolation", Interpolation(self.interpolation))
        if not pts:
            raise InvalidField(f"trace for {self.metric!r} has no points")
        for (t0, _), (t1, _) in zip(pts, pts[1:]):
            if t1 <= t0:
                raise InvalidField(f"trace for {self.metric!r}: times must strictly increase ({t0} -> {t1})")
        if self.interpolation is Interpolation.LINEAR and any(isinstance(v, str) for _, v in pts):
            raise InvalidField(f"trace for {self.metric!r}: text values need step interpolation")

    @property
    def start(self) -> int:
        return self.points[0][0]

    @property
    def categorical(self) -> bool:
        return isinstance(self.points[0][1], str)


def sample_trace(trace: SignalTrace, t: int) -> Value:
    """Value of ``trace`` at time ``t``; holds the last value past the end."""
    times = [p[0] for p in trace.points]
    if t < times[0]:
        raise BeforeTraceStart(f"t={t} precedes trace start {times[0]}")
    i = bisect.bisect_right(times, t) - 1
    t0, v0 = trace.points[i]
    if trace.interpolation is Interpolation.STEP or t == t0 or i == len(times) - 1:
        return v0
    t1, v1 = trace.points[i + 1]
    return v0 + (v1 - v0) * ((t - t0) / (t1 - t0))


@dataclass(frozen=True)
class Reading:
    sensor: str
    element: str | None
    metric: str
    value: Value
    timestamp: int
    seq: int
    category: str = "physiological"


@dataclass
class SensorState:
    """Mutable driver state for one sensor, owned by the simulation kernel."""

    descriptor: "SensorDescriptor"
    trace: SignalTrace
    last_emission: int | None = None  # None stands for -inf
    seq: int = 0
    previous: Value | None = None
    period_ms: int | None = field(default=None)

    def __post_init__(self) -> None:
        if self.period_ms is None and isinstance(self.descriptor.mode, TimeBased):
            self.period_ms = self.descriptor.mode.period_ms

    def _emit(self, t: int, value: Value, element: str | None) -> Reading:
        if self.last_emission is not None and t < self.last_emission:
            raise BeforeTraceStart(f"sensor {self.descriptor.id}: emission at {t} precedes {self.last_emission}")
        self.seq += 1
        self.last_emission = t
        d = self.descriptor
        return Reading(d.id, element, d.metric_name, value, t, self.seq, d.category.value)

    def next_due(self) -> int:
        """Earliest time a time-based poll would emit."""
        if self.last_emission is None:
            return self.trace.start
        return self.last_emission + self.period_ms

    def set_period(self, period_ms: int) -> None:
        if period_ms <= 0:
            raise InvalidPeriod(f"period must be > 0 ms, got {period_ms}")
        self.period_ms = period_ms


def poll(state: SensorState, now: int, element: str | None = None) -> Reading | None:
    """Time-based sensing: emit a reading iff a full period has elapsed."""
    if not isinstance(state.descriptor.mode, TimeBased):
        raise InvalidField(f"sensor {state.descriptor.id} is not time-based")
    if state.last_emission is not None and now < state.last_emission + state.period_ms:
        return None
    return state._emit(now, sample_trace(state.trace, now), element)


def _fires(predicate: EventPredicate, prev: Value, new: Value) -> bool:
    if isinstance(predicate, ThresholdCross):
        if isinstance(prev, str) or isinstance(new, str):
            return False
        if predicate.direction is Direction.ABOVE:
            return prev < predicate.level <= new
        return prev > predicate.level >= new
    if isinstance(prev, str) or isinstance(new, str):
        # categorical signals: any change counts as an unbounded delta
        return prev != new or predicate.delta == 0
    return abs(new - prev) >= predicate.delta


def on_change(state: SensorState, t: int, new_value: Value, element: str | None = None) -> Reading | None:
    """Event-based sensing; edge-triggered, the first value never emits."""
    mode = state.descriptor.mode
    if not isinstance(mode, EventBased):
        raise InvalidField(f"sensor {state.descriptor.id} is not event-based")
    prev, state.previous = state.previous, new_value
    if prev is None or not _fires(mode.predicate, prev, new_value):
        return None
    return state._emit(t, new_value, element)

"""Context assembly and bounded context histories."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import InvalidField, NonMonotoneTimestamp, NotFound
from .sensing import Reading, Value

DEFAULT_CAPACITY = 256
DEFAULT_MAX_STALENESS = 10


class ActivityState(str, Enum):
    MOVING = "moving"
    LAYING_IN_BED = "laying_in_bed"
    SITTING = "sitting"
    STANDING = "standing"
    UNKNOWN = "unknown"


_STATE_CODES = [ActivityState.UNKNOWN, ActivityState.MOVING, ActivityState.LAYING_IN_BED,
                ActivityState.SITTING, ActivityState.STANDING]


@dataclass(frozen=True)
class ActivityRecord:
    state: ActivityState = ActivityState.UNKNOWN
    location: str = ""
    since: int = 0

    @classmethod
    def parse(cls, value: Value, since: int) -> "ActivityRecord":
        """Decode an activity reading: ``"state@location"`` or a numeric state code."""
        if isinstance(value, str):
            state, _, location = value.partition("@")
            try:
                return cls(ActivityState(state), location, since)
            except ValueError:
                raise InvalidField(f"unknown activity state {state!r}") from None
        code = int(value)
        if not 0 <= code < len(_STATE_CODES):
            raise InvalidField(f"activity code {value!r} out of range")
        return cls(_STATE_CODES[code], "", since)


@dataclass(frozen=True)
class ContextSnapshot:
    """Physiological, environmental and activity context of one element."""

    element: str
    timestamp: int
    physiological: dict[str, float] = field(default_factory=dict)
    environmental: dict[str, float] = field(default_factory=dict)
    activity: ActivityRecord = field(default_factory=ActivityRecord)
    # assemblies since the metric was last observed fresh (0 = fresh)
    staleness: dict[str, int] = field(default_factory=dict)
    n_readings: int = 0

    def value(self, metric: str) -> float | None:
        if metric in self.physiological:
            return self.physiological[metric]
        return self.environmental.get(metric)

    def digest(self) -> tuple:
        """Content fingerprint, independent of timestamps and staleness."""
        return (
            tuple(sorted(self.physiological.items())),
            tuple(sorted(self.environmental.items())),
            self.activity.state.value,
            self.activity.location,
        )


def assemble_context(
    element: str,
    recent: Iterable[Reading],
    now: int,
    previous: ContextSnapshot | None = None,
    *,
    max_staleness: int = DEFAULT_MAX_STALENESS,
) -> ContextSnapshot:
    """Build the current context of ``element`` from readings received since
    the previous assembly.

    The latest reading wins per metric. Metrics without a new reading carry
    the previous value forward with their staleness incremented, and are
    dropped once staleness exceeds ``max_staleness``.
    """
    latest: dict[str, Reading] = {}
    activity_reading: Reading | None = None
    n = 0
    for r in recent:
        if r.element != element:
            continue
        n += 1
        if r.category == "activity":
            if activity_reading is None or (r.timestamp, r.seq) >= (activity_reading.timestamp, activity_reading.seq):
                activity_reading = r
            continue
        cur = latest.get(r.metric)
        if cur is None or (r.timestamp, r.seq) >= (cur.timestamp, cur.seq):
            latest[r.metric] = r

    phys: dict[str, float] = {}
    env: dict[str, float] = {}
    staleness: dict[str, int] = {}
    if previous is not None:
        for bucket, src in ((phys, previous.physiological), (env, previous.environmental)):
            for metric, value in src.items():
                if metric in latest:
                    continue
                age = previous.staleness.get(metric, 0) + 1
                if age <= max_staleness:
                    bucket[metric] = value
                    staleness[metric] = age
    for metric in sorted(latest):
        r = latest[metric]
        (env if r.category == "environmental" else phys)[metric] = float(r.value)
        staleness[metric] = 0

    prev_activity = previous.activity if previous is not None else None
    if activity_reading is not None:
        activity = ActivityRecord.parse(activity_reading.value, activity_reading.timestamp)
        if prev_activity is not None and (prev_activity.state, prev_activity.location) == (activity.state, activity.location):
            activity = prev_activity
    elif prev_activity is not None:
        activity = prev_activity
    else:
        activity = ActivityRecord(ActivityState.UNKNOWN, "", now)

    return ContextSnapshot(
        element=element,
        timestamp=now,
        physiological=dict(sorted(phys.items())),
        environmental=dict(sorted(env.items())),
        activity=activity,
        staleness=dict(sorted(staleness.items())),
        n_readings=n,
    )


class ContextHistory:
    """Bounded, strictly time-ordered ring of snapshots for one element."""

    def __init__(self, element: str, capacity: int = DEFAULT_CAPACITY,
                 snapshots: Iterable[ContextSnapshot] = ()):
        if capacity <= 0:
            raise InvalidField(f"history capacity must be positive, got {capacity}")
        self.element = element
        self.capacity = capacity
        self._snaps: deque[ContextSnapshot] = deque(maxlen=capacity)
        for s in snapshots:
            self.append(s)

    def append(self, snap: ContextSnapshot) -> None:
        if self._snaps and snap.timestamp <= self._snaps[-1].timestamp:
            raise NonMonotoneTimestamp(
                f"snapshot at {snap.timestamp} does not follow {self._snaps[-1].timestamp}")
        self._snaps.append(snap)

    def clear(self) -> None:
        self._snaps.clear()

    @property
    def latest(self) -> ContextSnapshot | None:
        return self._snaps[-1] if self._snaps else None

    @property
    def snapshots(self) -> tuple[ContextSnapshot, ...]:
        return tuple(self._snaps)

    def __len__(self) -> int:
        return len(self._snaps)

    def __iter__(self):
        return iter(self._snaps)

    def __repr__(self) -> str:
        return f"ContextHistory({self.element!r}, capacity={self.capacity}, size={len(self)})"


def append_history(history: ContextHistory, snap: ContextSnapshot) -> ContextHistory:
    history.append(snap)
    return history


def window(history: ContextHistory | Sequence[ContextSnapshot], n: int) -> tuple[ContextSnapshot, ...]:
    """The last ``min(n, len(history))`` snapshots, oldest first."""
    snaps = history.snapshots if isinstance(history, ContextHistory) else tuple(history)
    if n <= 0:
        return ()
    return snaps[-n:]


class ContextManager:
    """Owns the histories of the elements in one control loop's scope."""

    def __init__(self, elements: Iterable[str], capacity: int = DEFAULT_CAPACITY,
                 max_staleness: int = DEFAULT_MAX_STALENESS):
        self.capacity = capacity
        self.max_staleness = max_staleness
        self._histories = {e: ContextHistory(e, capacity) for e in sorted(elements)}

    @property
    def elements(self) -> tuple[str, ...]:
        return tuple(self._histories)

    def history(self, element: str) -> ContextHistory:
        try:
            return self._histories[element]
        except KeyError:
            raise NotFound(f"no context history for element {element!r}") from None

    def create_context(self, element: str, recent: Iterable[Reading], now: int) -> ContextSnapshot:
        previous = self.history(element).latest
        return assemble_context(element, recent, now, previous, max_staleness=self.max_staleness)

    def add_to_history(self, snap: ContextSnapshot) -> None:
        append_history(self.history(snap.element), snap)

    def clear_history(self, element: str) -> None:
        self.history(element).clear()

    delete_history = clear_history

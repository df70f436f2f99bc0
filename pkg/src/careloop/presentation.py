"""Presentation manager: per-element status model, role-personalized views
and observer notification.

The reasoning side acts as the controller: :func:`update_model` is the only
way a status model changes, and each version change is pushed once to every
party observing the element.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .context import ContextSnapshot
from .domain import DetailLevel, InterestedParty
from .reasoning import Horizon, Insight, Severity

_EMPTY_DIGEST = ((), (), "unknown", "")


def _signature(insights: Iterable[Insight]) -> tuple:
    return tuple(sorted((i.kind, i.horizon.value, i.lead_ms, i.severity.value) for i in insights))


@dataclass(frozen=True)
class StatusModel:
    element: str
    latest: ContextSnapshot | None = None
    active_insights: tuple[Insight, ...] = ()
    version: int = 0

    @property
    def digest(self) -> tuple:
        return self.latest.digest() if self.latest is not None else _EMPTY_DIGEST

    @property
    def signature(self) -> tuple:
        return _signature(self.active_insights)


def update_model(model: StatusModel, insights: Sequence[Insight], snap: ContextSnapshot) -> StatusModel:
    """Return ``model`` itself when nothing changed, else a successor version."""
    if snap.digest() == model.digest and _signature(insights) == model.signature:
        return model
    return StatusModel(model.element, snap, tuple(insights), model.version + 1)


def insight_line(ins: Insight) -> str:
    line = ins.label
    if ins.horizon is Horizon.PREDICTED:
        line += f" (predicted +{ins.lead_ms} ms)"
    return line


@dataclass(frozen=True)
class View:
    party: str
    detail: DetailLevel
    payload: tuple[str, ...]
    model_version: int

    @property
    def text(self) -> str:
        return "\n".join(self.payload)


def render(model: StatusModel, party: InterestedParty, detail: DetailLevel | str | None = None) -> View:
    level = DetailLevel(detail) if detail is not None else party.detail_level
    labels = [insight_line(i) for i in model.active_insights]
    if level is DetailLevel.ALERT_ONLY:
        payload = [insight_line(i) for i in model.active_insights if i.severity is Severity.CRITICAL]
    elif level is DetailLevel.SUMMARY:
        payload = labels
    else:
        payload = []
        snap = model.latest
        if snap is not None:
            payload += [f"{m}={v:g}" for m, v in snap.physiological.items()]
            payload += [f"{m}={v:g}" for m, v in snap.environmental.items()]
            act = snap.activity
            payload.append(f"activity={act.state.value}" + (f"@{act.location}" if act.location else ""))
        payload += labels
        for i in model.active_insights:
            payload.append(f"evidence {i.kind}: " + ", ".join(f"t={t}" for t in i.evidence))
            if i.explanation:
                payload.append(f"why {i.kind}: {i.explanation}")
    return View(party.id, level, tuple(payload), model.version)


@dataclass(frozen=True)
class Notification:
    party: str
    element: str
    view: View
    emitted_at: int
    cause: int  # model version


def notify_observers(model: StatusModel, observers: Iterable[InterestedParty], now: int) -> list[Notification]:
    """One notification per observer for the model's current version."""
    return [Notification(p.id, model.element, render(model, p), now, model.version) for p in observers]


@dataclass
class Subject:
    """Observable status of one element; publishes each version once."""

    model: StatusModel
    published: int = 0
    bumps: list[tuple[int, int]] = field(default_factory=list)  # (version, time)

    def update(self, insights: Sequence[Insight], snap: ContextSnapshot, now: int) -> bool:
        new = update_model(self.model, insights, snap)
        changed = new is not self.model
        if changed:
            self.model = new
            self.bumps.append((new.version, now))
        return changed

    def publish(self, observers: Iterable[InterestedParty], now: int) -> list[Notification]:
        if self.model.version <= self.published:
            return []
        self.published = self.model.version
        return notify_observers(self.model, observers, now)

"""Monitored elements, sensors, interested parties and their registries."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from datetime import date
from enum import Enum

from .errors import (
    AlreadyAssociated,
    DuplicateBaseline,
    DuplicateId,
    DuplicateInterest,
    InvalidField,
    NotFound,
)
from .sensing import EventBased, SensorMode, TimeBased

log = logging.getLogger(__name__)


class ElementKind(str, Enum):
    PATIENT = "Patient"
    ELDERLY = "Elderly"
    DISABLED = "Disabled"


class SensorCategory(str, Enum):
    PHYSIOLOGICAL = "physiological"
    ENVIRONMENTAL = "environmental"
    ACTIVITY = "activity"


class PartyRole(str, Enum):
    MEDICAL_PERSONNEL = "MedicalPersonnel"
    CARE_GIVER = "CareGiver"


class DetailLevel(str, Enum):
    FULL_CLINICAL = "full_clinical"
    SUMMARY = "summary"
    ALERT_ONLY = "alert_only"


DEFAULT_DETAIL = {
    PartyRole.MEDICAL_PERSONNEL: DetailLevel.FULL_CLINICAL,
    PartyRole.CARE_GIVER: DetailLevel.SUMMARY,
}


@dataclass(frozen=True)
class Condition:
    code: str
    onset: date


@dataclass(frozen=True)
class Baseline:
    metric: str
    value: float
    unit: str = ""


@dataclass(frozen=True)
class MedicalHistory:
    """Initial knowledge about a monitored element.

    Baselines are kept as a sequence so that a duplicated metric can be
    reported rather than silently overwritten; see :meth:`validate`.
    """

    conditions: tuple[Condition, ...] = ()
    baselines: tuple[Baseline, ...] = ()
    notes: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "baselines", tuple(self.baselines))

    def validate(self) -> None:
        seen: set[str] = set()
        for b in self.baselines:
            if b.metric in seen:
                raise DuplicateBaseline(f"two baselines for metric {b.metric!r}")
            seen.add(b.metric)

    def baseline(self, metric: str) -> float | None:
        for b in self.baselines:
            if b.metric == metric:
                return b.value
        return None


@dataclass(frozen=True)
class MonitoredElement:
    id: str
    kind: ElementKind
    display_name: str
    medical_history: MedicalHistory = field(default_factory=MedicalHistory)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ElementKind(self.kind))


@dataclass(frozen=True)
class SensorDescriptor:
    id: str
    category: SensorCategory
    metric_name: str
    unit: str
    mode: SensorMode
    host_node: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "category", SensorCategory(self.category))

    @property
    def metric(self) -> tuple[str, str]:
        return (self.metric_name, self.unit)

    @property
    def time_based(self) -> bool:
        return isinstance(self.mode, TimeBased)


@dataclass(frozen=True)
class InterestedParty:
    id: str
    role: PartyRole
    detail_level: DetailLevel | None = None
    node: str = ""

    def __post_init__(self) -> None:
        role = PartyRole(self.role)
        object.__setattr__(self, "role", role)
        level = DEFAULT_DETAIL[role] if self.detail_level is None else DetailLevel(self.detail_level)
        object.__setattr__(self, "detail_level", level)


class Registry:
    """Element, sensor and party registries plus the association and
    interest tables that link them.

    Ids are supplied by the caller. Unregistering an element cascades to its
    associations and interests.
    """

    def __init__(self) -> None:
        self._elements: dict[str, MonitoredElement] = {}
        self._sensors: dict[str, SensorDescriptor] = {}
        self._parties: dict[str, InterestedParty] = {}
        self._associations: dict[str, set[str]] = {}
        self._owner: dict[str, str] = {}
        self._interests: dict[str, set[str]] = {}

    # elements

    def register_element(self, element: MonitoredElement) -> str:
        if not element.id:
            raise InvalidField("element id must be non-empty")
        if not element.display_name:
            raise InvalidField(f"element {element.id!r}: display_name must be non-empty")
        if element.id in self._elements:
            raise DuplicateId(f"element {element.id!r} already registered")
        element.medical_history.validate()
        self._elements[element.id] = element
        return element.id

    def unregister_element(self, element_id: str) -> None:
        self._require_element(element_id)
        for sensor_id in self._associations.pop(element_id, set()):
            del self._owner[sensor_id]
        self._interests.pop(element_id, None)
        del self._elements[element_id]
        log.info("unregistered element %s with its associations and interests", element_id)

    def lookup_element(self, element_id: str) -> MonitoredElement:
        return self._require_element(element_id)

    def elements(self) -> tuple[MonitoredElement, ...]:
        return tuple(self._elements[k] for k in sorted(self._elements))

    def __contains__(self, element_id: object) -> bool:
        return element_id in self._elements

    def __len__(self) -> int:
        return len(self._elements)

    def set_medical_history(self, element_id: str, history: MedicalHistory) -> None:
        element = self._require_element(element_id)
        history.validate()
        self._elements[element_id] = replace(element, medical_history=history)

    def medical_history(self, element_id: str) -> MedicalHistory:
        return self._require_element(element_id).medical_history

    # sensors

    def register_sensor(self, desc: SensorDescriptor) -> str:
        if not desc.id:
            raise InvalidField("sensor id must be non-empty")
        if desc.id in self._sensors:
            raise DuplicateId(f"sensor {desc.id!r} already registered")
        if not isinstance(desc.mode, (TimeBased, EventBased)):
            raise InvalidField(f"sensor {desc.id!r}: unknown mode {desc.mode!r}")
        self._sensors[desc.id] = desc
        return desc.id

    def unregister_sensor(self, sensor_id: str) -> None:
        self.lookup_sensor(sensor_id)
        owner = self._owner.pop(sensor_id, None)
        if owner is not None:
            self._associations[owner].discard(sensor_id)
        del self._sensors[sensor_id]

    def lookup_sensor(self, sensor_id: str) -> SensorDescriptor:
        try:
            return self._sensors[sensor_id]
        except KeyError:
            raise NotFound(f"sensor {sensor_id!r} not registered") from None

    def sensors(self) -> tuple[SensorDescriptor, ...]:
        return tuple(self._sensors[k] for k in sorted(self._sensors))

    # associations

    def associate(self, element_id: str, sensor_id: str) -> None:
        self._require_element(element_id)
        self.lookup_sensor(sensor_id)
        owner = self._owner.get(sensor_id)
        if owner is not None:
            raise AlreadyAssociated(f"sensor {sensor_id!r} already associated with {owner!r}")
        self._associations.setdefault(element_id, set()).add(sensor_id)
        self._owner[sensor_id] = element_id

    def sensors_of(self, element_id: str) -> frozenset[str]:
        self._require_element(element_id)
        return frozenset(self._associations.get(element_id, ()))

    def element_of(self, sensor_id: str) -> str | None:
        return self._owner.get(sensor_id)

    # interests

    def register_interest(self, party: InterestedParty, element_id: str) -> None:
        self._require_element(element_id)
        known = self._parties.get(party.id)
        if known is not None and known != party:
            raise DuplicateId(f"party {party.id!r} already registered with different attributes")
        observers = self._interests.setdefault(element_id, set())
        if party.id in observers:
            raise DuplicateInterest(f"party {party.id!r} already observes {element_id!r}")
        self._parties[party.id] = party
        observers.add(party.id)

    def unregister_interest(self, party_id: str, element_id: str) -> None:
        self._require_element(element_id)
        observers = self._interests.get(element_id, set())
        if party_id not in observers:
            raise NotFound(f"party {party_id!r} does not observe {element_id!r}")
        observers.discard(party_id)

    def observers(self, element_id: str) -> tuple[InterestedParty, ...]:
        self._require_element(element_id)
        return tuple(self._parties[p] for p in sorted(self._interests.get(element_id, ())))

    def lookup_party(self, party_id: str) -> InterestedParty:
        try:
            return self._parties[party_id]
        except KeyError:
            raise NotFound(f"party {party_id!r} not registered") from None

    # views used by property tests

    def association_table(self) -> dict[str, frozenset[str]]:
        return {e: frozenset(s) for e, s in sorted(self._associations.items()) if s}

    def interest_table(self) -> dict[str, frozenset[str]]:
        return {e: frozenset(p) for e, p in sorted(self._interests.items()) if p}

    def _require_element(self, element_id: str) -> MonitoredElement:
        try:
            return self._elements[element_id]
        except KeyError:
            raise NotFound(f"element {element_id!r} not registered") from None

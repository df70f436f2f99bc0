"""Scenario files: one JSON document describing one reproducible experiment.

:func:`load_scenario` parses and validates a file, reporting every problem
found rather than stopping at the first.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Callable

from .context import DEFAULT_CAPACITY, DEFAULT_MAX_STALENESS
from .control import AggregateQuery, ControlLoopSpec, LoopRole
from .domain import (
    Baseline,
    Condition,
    InterestedParty,
    MedicalHistory,
    MonitoredElement,
    PartyRole,
    SensorCategory,
    SensorDescriptor,
)
from .errors import CareloopError, ParseError, ValidationError
from .netsim import Layer, Link, Node, Topology, topology_problems
from .reasoning import DETECTORS, DetectorConfig
from .rules import AdjustSampling, Escalate, Guard, Log, Notify, Rule, RuleCondition, Ruleset
from .sensing import (
    DeltaExceeds,
    EventBased,
    Interpolation,
    SignalTrace,
    ThresholdCross,
    TimeBased,
)

DEFAULT_SIZES = {
    "reading": 64,
    "context_summary": 256,
    "raw_window": 64,
    "insight": 128,
    "plan_reply": 128,
    "notification": 128,
    "alert": 128,
    "report": 96,
    "escalation": 128,
    "adjust": 32,
}

COORDINATION_MODES = ("none", "centralized", "decentralized")


@dataclass(frozen=True)
class SensorSpec:
    descriptor: SensorDescriptor
    trace: SignalTrace


@dataclass(frozen=True)
class InterestSpec:
    party: str
    element: str
    from_ms: int = 0
    until_ms: int | None = None


@dataclass(frozen=True)
class Coordination:
    mode: str = "none"
    epoch_ms: int = 60_000
    deadline_ms: int | None = None
    queries: tuple[AggregateQuery, ...] = ()

    @property
    def deadline(self) -> int:
        return self.deadline_ms if self.deadline_ms is not None else self.epoch_ms // 2


@dataclass
class Scenario:
    name: str
    seed: int
    duration_ms: int
    topology: Topology
    elements: tuple[MonitoredElement, ...]
    sensors: tuple[SensorSpec, ...]
    associations: tuple[tuple[str, str], ...]
    parties: tuple[InterestedParty, ...]
    interests: tuple[InterestSpec, ...]
    detectors: dict[str, tuple[DetectorConfig, ...]]
    rules: Ruleset
    loops: tuple[ControlLoopSpec, ...]
    coordination: Coordination = field(default_factory=Coordination)
    sizes: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_SIZES))
    history_capacity: int = DEFAULT_CAPACITY
    max_staleness: int = DEFAULT_MAX_STALENESS
    event_tick_ms: int = 100
    raw: dict = field(default_factory=dict, repr=False)

    def loop(self, loop_id: str) -> ControlLoopSpec:
        for spec in self.loops:
            if spec.id == loop_id:
                return spec
        raise KeyError(loop_id)


class _Errors:
    def __init__(self) -> None:
        self.items: list[str] = []

    def add(self, msg: str) -> None:
        self.items.append(msg)

    def attempt(self, where: str, fn: Callable[[], Any]) -> Any:
        """Run a constructor, turning its failure into a validation message."""
        try:
            return fn()
        except (CareloopError, ValueError, TypeError, KeyError) as exc:
            text = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
            self.add(f"{where}: {text}")
            return None


def _int(d: dict, key: str, default: Any = None) -> Any:
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise TypeError(f"{key} must be an integer, got {v!r}")
    return int(v)


def _items(doc: dict, key: str, errs: _Errors) -> list:
    v = doc.get(key, [])
    if not isinstance(v, list):
        errs.add(f"{key}: expected a list")
        return []
    out = []
    for i, item in enumerate(v):
        if isinstance(item, dict):
            out.append(item)
        else:
            errs.add(f"{key}[{i}]: expected an object")
    return out


def _history(d: dict) -> MedicalHistory:
    conditions = tuple(Condition(c["code"], date.fromisoformat(c["onset"])) for c in d.get("conditions", []))
    baselines = tuple(Baseline(b["metric"], float(b["value"]), b.get("unit", "")) for b in d.get("baselines", []))
    return MedicalHistory(conditions, baselines, d.get("notes", ""))


def _mode(d: dict):
    kind = d.get("type")
    if kind == "time":
        return TimeBased(_int(d, "period_ms"))
    if kind == "event":
        p = d.get("predicate", {})
        if p.get("type") == "threshold":
            return EventBased(ThresholdCross(float(p["level"]), p.get("direction", "above")))
        if p.get("type") == "delta":
            return EventBased(DeltaExceeds(float(p["delta"])))
        raise ValueError(f"unknown event predicate {p.get('type')!r}")
    raise ValueError(f"unknown sensor mode {kind!r}")


def _action(d: dict):
    kind = d.get("type")
    if kind == "notify":
        return Notify(d["target"], d.get("detail"))
    if kind == "adjust_sampling":
        return AdjustSampling(d["sensor"], _int(d, "new_period_ms"))
    if kind == "escalate":
        return Escalate(d["to_loop"])
    if kind == "log":
        return Log(d.get("text", ""))
    raise ValueError(f"unknown action type {kind!r}")


def _rule(d: dict) -> Rule:
    w = d.get("when", {})
    g = w.get("guard")
    guard = Guard(g["metric"], g["op"], float(g["value"])) if g else None
    cond = RuleCondition(w.get("kind", "*"), w.get("min_severity", "info"), w.get("horizon"), guard)
    return Rule(d["id"], tuple(_action(a) for a in d.get("actions", [])), cond,
                _int(d, "priority", 0), bool(d.get("enabled", True)))


def _detector(d: dict) -> DetectorConfig:
    return DetectorConfig(
        name=d["name"],
        detector=d.get("detector", "threshold"),
        metric=d.get("metric", ""),
        threshold=float(d.get("threshold", 0.0)),
        direction=d.get("direction", "above"),
        window_size=_int(d, "window_size", 2),
        forecast_lead_ms=_int(d, "forecast_lead_ms", 0),
        use_baseline_offset=bool(d.get("use_baseline_offset", False)),
        offset=float(d.get("offset", 0.0)),
        critical_margin=float(d.get("critical_margin", 1.0)),
    )


def _loop(d: dict) -> ControlLoopSpec:
    role = d.get("role", "local")
    default_acts = {"apaas": ["Analyze", "Plan"]}.get(role)
    if default_acts is None:
        default_acts = ["Monitor", "Execute"] if d.get("remote_analysis") else ["Monitor", "Analyze", "Plan", "Execute"]
    return ControlLoopSpec(
        id=d["id"],
        placement=d["placement"],
        role=role,
        activities=frozenset(d.get("activities", default_acts)),
        elements=tuple(d.get("elements", ())),
        region=d.get("region", "default"),
        cadence_ms=_int(d, "cadence_ms", 1000),
        phase_ms=_int(d, "phase_ms", 0),
        processing_ms=_int(d, "processing_ms", 0),
        remote_analysis=d.get("remote_analysis"),
        forward=d.get("forward", "none"),
        cloud_sink=d.get("cloud_sink"),
        summarize=bool(d.get("summarize", True)),
    )


def parse_scenario(doc: Any) -> Scenario:
    """Build a validated :class:`Scenario` from a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a JSON object")
    errs = _Errors()
    raw = copy.deepcopy(doc)

    duration = errs.attempt("duration_ms", lambda: _int(doc, "duration_ms"))
    if duration is None or duration <= 0:
        errs.add(f"duration_ms must be a positive integer, got {doc.get('duration_ms')!r}")
        duration = duration or 0
    seed = errs.attempt("seed", lambda: _int(doc, "seed", 0)) or 0
    capacity = errs.attempt("history_capacity", lambda: _int(doc, "history_capacity", DEFAULT_CAPACITY))
    if capacity is not None and capacity <= 0:
        errs.add("history_capacity must be positive")
    staleness = errs.attempt("max_staleness", lambda: _int(doc, "max_staleness", DEFAULT_MAX_STALENESS))
    tick = errs.attempt("event_tick_ms", lambda: _int(doc, "event_tick_ms", 100))
    if tick is not None and tick <= 0:
        errs.add("event_tick_ms must be positive")
    sizes = dict(DEFAULT_SIZES)
    for k, v in (doc.get("sizes") or {}).items():
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            errs.add(f"sizes.{k}: expected a non-negative integer")
        else:
            sizes[k] = v

    # topology
    topo_doc = doc.get("topology") or {}
    nodes = [n for i, nd in enumerate(_items(topo_doc, "nodes", errs))
             if (n := errs.attempt(f"node[{i}]", lambda nd=nd: Node(nd["id"], nd["layer"]))) is not None]
    links = [lk for i, ld in enumerate(_items(topo_doc, "links", errs))
             if (lk := errs.attempt(f"link[{i}]", lambda ld=ld: Link(
                 ld["a"], ld["b"], _int(ld, "latency_ms", 0), _int(ld, "overhead_bytes", 0)))) is not None]
    topo_errors = topology_problems(nodes, links)
    for e in topo_errors:
        errs.add(f"topology: {e}")
    topology = Topology(nodes, links) if not topo_errors else None
    layers = {n.id: n.layer for n in nodes}

    def node_ref(where: str, node_id: Any, allowed: tuple[Layer, ...]) -> bool:
        if node_id not in layers:
            errs.add(f"{where}: unknown node {node_id!r}")
            return False
        if layers[node_id] not in allowed:
            errs.add(f"{where}: node {node_id!r} is {layers[node_id].value}, expected "
                     + " or ".join(a.value for a in allowed))
            return False
        return True

    # elements
    elements: dict[str, MonitoredElement] = {}
    for i, d in enumerate(_items(doc, "elements", errs)):
        el = errs.attempt(f"element[{i}]", lambda d=d: MonitoredElement(
            d["id"], d.get("kind", "Patient"), d.get("display_name", d.get("id", "")),
            _history(d.get("medical_history", {}))))
        if el is None:
            continue
        if el.id in elements:
            errs.add(f"element {el.id!r}: duplicate id")
        if not el.display_name:
            errs.add(f"element {el.id!r}: display_name must be non-empty")
        errs.attempt(f"element {el.id!r}", el.medical_history.validate)
        elements[el.id] = el

    # sensors
    sensors: dict[str, SensorSpec] = {}
    for i, d in enumerate(_items(doc, "sensors", errs)):
        where = f"sensor {d.get('id', i)!r}"
        desc = errs.attempt(where, lambda d=d: SensorDescriptor(
            d["id"], d.get("category", "physiological"), d["metric"], d.get("unit", ""),
            _mode(d.get("mode", {})), d.get("host", "")))
        tr = d.get("trace") or {}
        trace = errs.attempt(f"{where} trace", lambda d=d, tr=tr: SignalTrace(
            d.get("metric", ""), tuple(tuple(p) for p in tr.get("points", [])),
            Interpolation(tr.get("interpolation", "step"))))
        if desc is None or trace is None:
            continue
        if desc.id in sensors:
            errs.add(f"{where}: duplicate id")
        node_ref(where, desc.host_node, (Layer.DEVICE,))
        if desc.category is SensorCategory.ACTIVITY and not trace.categorical and \
                any(isinstance(v, str) for _, v in trace.points):
            errs.add(f"{where}: mixed text and numeric trace values")
        if desc.category is not SensorCategory.ACTIVITY and trace.categorical:
            errs.add(f"{where}: only activity sensors may carry text values")
        if isinstance(desc.mode, EventBased) and isinstance(desc.mode.predicate, ThresholdCross) and trace.categorical:
            errs.add(f"{where}: threshold predicates need a numeric trace")
        sensors[desc.id] = SensorSpec(desc, trace)

    # associations
    associations: list[tuple[str, str]] = []
    owner: dict[str, str] = {}
    for i, d in enumerate(_items(doc, "associations", errs)):
        e, s = d.get("element"), d.get("sensor")
        ok = True
        if e not in elements:
            errs.add(f"association[{i}]: unknown element {e!r}")
            ok = False
        if s not in sensors:
            errs.add(f"association[{i}]: unknown sensor {s!r}")
            ok = False
        if ok and s in owner:
            errs.add(f"association[{i}]: sensor {s!r} already associated with {owner[s]!r}")
            ok = False
        if ok:
            owner[s] = e
            associations.append((e, s))

    # parties and interests
    parties: dict[str, InterestedParty] = {}
    for i, d in enumerate(_items(doc, "parties", errs)):
        where = f"party {d.get('id', i)!r}"
        p = errs.attempt(where, lambda d=d: InterestedParty(d["id"], d.get("role", "CareGiver"),
                                                             d.get("detail"), d.get("node", "")))
        if p is None:
            continue
        if p.id in parties:
            errs.add(f"{where}: duplicate id")
        node_ref(where, p.node, (Layer.APPLICATION,))
        parties[p.id] = p
    interests: list[InterestSpec] = []
    seen_interest: set[tuple[str, str]] = set()
    for i, d in enumerate(_items(doc, "interests", errs)):
        spec = errs.attempt(f"interest[{i}]", lambda d=d: InterestSpec(
            d["party"], d["element"], _int(d, "from_ms", 0), _int(d, "until_ms")))
        if spec is None:
            continue
        if spec.party not in parties:
            errs.add(f"interest[{i}]: unknown party {spec.party!r}")
        if spec.element not in elements:
            errs.add(f"interest[{i}]: unknown element {spec.element!r}")
        if spec.from_ms < 0 or (spec.until_ms is not None and spec.until_ms <= spec.from_ms):
            errs.add(f"interest[{i}]: needs 0 <= from_ms < until_ms")
        if (spec.party, spec.element) in seen_interest:
            errs.add(f"interest[{i}]: duplicate interest of {spec.party!r} in {spec.element!r}")
        seen_interest.add((spec.party, spec.element))
        interests.append(spec)

    # detectors
    detectors: dict[str, list[DetectorConfig]] = {}
    for i, d in enumerate(_items(doc, "detectors", errs)):
        where = f"detector {d.get('name', i)!r}"
        cfg = errs.attempt(where, lambda d=d: _detector(d))
        if cfg is None:
            continue
        if cfg.detector not in DETECTORS:
            errs.add(f"{where}: unknown detector type {cfg.detector!r}")
        targets = d.get("elements", "*")
        if targets == "*":
            targets = list(elements)
        for e in targets:
            if e not in elements:
                errs.add(f"{where}: unknown element {e!r}")
            else:
                detectors.setdefault(e, []).append(cfg)

    # rules
    rules: list[Rule] = []
    for i, d in enumerate(_items(doc, "rules", errs)):
        r = errs.attempt(f"rule {d.get('id', i)!r}", lambda d=d: _rule(d))
        if r is not None:
            rules.append(r)
    ruleset = errs.attempt("rules", lambda: Ruleset(tuple(rules))) or Ruleset()

    # loops
    loops: dict[str, ControlLoopSpec] = {}
    for i, d in enumerate(_items(doc, "loops", errs)):
        spec = errs.attempt(f"loop {d.get('id', i)!r}", lambda d=d: _loop(d))
        if spec is None:
            continue
        if spec.id in loops:
            errs.add(f"loop {spec.id!r}: duplicate id")
        for p in spec.problems():
            errs.add(p)
        allowed = (Layer.CLOUD,) if spec.role is LoopRole.APAAS else (Layer.FOG, Layer.CLOUD)
        node_ref(f"loop {spec.id!r}", spec.placement, allowed)
        if spec.cloud_sink is not None:
            node_ref(f"loop {spec.id!r} cloud_sink", spec.cloud_sink, (Layer.CLOUD,))
        loops[spec.id] = spec

    scoped: dict[str, str] = {}
    for spec in loops.values():
        for e in spec.elements:
            if e not in elements:
                errs.add(f"loop {spec.id!r}: unknown element {e!r}")
            elif e in scoped:
                errs.add(f"element {e!r} is scoped by both {scoped[e]!r} and {spec.id!r}")
            else:
                scoped[e] = spec.id
        if spec.remote_analysis is not None:
            target = loops.get(spec.remote_analysis)
            if target is None or target.role is not LoopRole.APAAS:
                errs.add(f"loop {spec.id!r}: remote_analysis {spec.remote_analysis!r} is not an apaas loop")

    for r in ruleset:
        for a in r.actions:
            if isinstance(a, AdjustSampling) and a.sensor not in sensors:
                errs.add(f"rule {r.id!r}: adjust_sampling references unknown sensor {a.sensor!r}")
            if isinstance(a, Escalate):
                target = loops.get(a.to_loop)
                if target is None or target.role is not LoopRole.CENTRAL:
                    errs.add(f"rule {r.id!r}: escalate target {a.to_loop!r} is not a central loop")
            if isinstance(a, Notify) and a.target not in parties and a.target not in {x.value for x in PartyRole}:
                errs.add(f"rule {r.id!r}: notify target {a.target!r} is neither a role nor a party")

    # coordination
    cdoc = doc.get("coordination") or {}
    queries = []
    for i, q in enumerate(cdoc.get("queries", []) if isinstance(cdoc.get("queries", []), list) else []):
        qq = errs.attempt(f"query[{i}]", lambda q=q: AggregateQuery(q["kind"], q.get("region", "default")))
        if qq is not None:
            queries.append(qq)
    coordination = errs.attempt("coordination", lambda: Coordination(
        cdoc.get("mode", "none"), _int(cdoc, "epoch_ms", 60_000), _int(cdoc, "deadline_ms"), tuple(queries)))
    if coordination is not None:
        _check_coordination(coordination, loops, errs)
    else:
        coordination = Coordination()

    if topology is not None:
        _check_routes(topology, loops, sensors, owner, parties, interests, coordination, errs, ruleset)

    if errs.items:
        raise ValidationError(errs.items)
    return Scenario(
        name=str(doc.get("name", "scenario")),
        seed=seed,
        duration_ms=duration,
        topology=topology,
        elements=tuple(elements[k] for k in sorted(elements)),
        sensors=tuple(sensors[k] for k in sorted(sensors)),
        associations=tuple(associations),
        parties=tuple(parties[k] for k in sorted(parties)),
        interests=tuple(interests),
        detectors={k: tuple(v) for k, v in sorted(detectors.items())},
        rules=ruleset,
        loops=tuple(loops.values()),
        coordination=coordination,
        sizes=sizes,
        history_capacity=capacity,
        max_staleness=staleness,
        event_tick_ms=tick,
        raw=raw,
    )


def _check_coordination(c: Coordination, loops: dict[str, ControlLoopSpec], errs: _Errors) -> None:
    if c.mode not in COORDINATION_MODES:
        errs.add(f"coordination.mode must be one of {COORDINATION_MODES}, got {c.mode!r}")
        return
    if c.epoch_ms is None or c.epoch_ms <= 0:
        errs.add("coordination.epoch_ms must be positive")
    if c.deadline_ms is not None and c.deadline_ms < 0:
        errs.add("coordination.deadline_ms must be >= 0")
    centrals: dict[str, list[str]] = {}
    for spec in loops.values():
        if spec.role is LoopRole.CENTRAL:
            centrals.setdefault(spec.region, []).append(spec.id)
    peers = [s for s in loops.values() if s.role is LoopRole.PEER]
    if c.mode == "centralized":
        for region, ids in centrals.items():
            if len(ids) > 1:
                errs.add(f"region {region!r} has several central loops: {', '.join(sorted(ids))}")
        if peers:
            errs.add("centralized mode does not take peer loops")
        if not centrals:
            errs.add("centralized mode needs a central loop")
    elif c.mode == "decentralized":
        if centrals:
            errs.add("decentralized mode does not take central loops")
        if not peers:
            errs.add("decentralized mode needs peer loops")
    else:
        if peers:
            errs.add("peer loops need coordination.mode=decentralized")
    for q in c.queries:
        regions = {s.region for s in loops.values() if s.role in (LoopRole.CENTRAL, LoopRole.PEER)}
        if q.region not in regions:
            errs.add(f"query {q.kind!r}: no coordinating loop in region {q.region!r}")


def _check_routes(topo: Topology, loops, sensors, owner, parties, interests, coordination, errs: _Errors,
                  ruleset: Ruleset = Ruleset()) -> None:
    def need(src: str, dst: str, why: str) -> None:
        if src in topo.nodes and dst in topo.nodes and not topo.has_route(src, dst):
            errs.add(f"no route {src} -> {dst} ({why})")

    element_loop = {e: s for s in loops.values() for e in s.elements}
    for sid, element in sorted(owner.items()):
        spec = element_loop.get(element)
        if spec is not None:
            need(sensors[sid].descriptor.host_node, spec.placement, f"sensor {sid} to loop {spec.id}")
    for it in interests:
        spec = element_loop.get(it.element)
        if spec is not None and it.party in parties:
            need(spec.placement, parties[it.party].node, f"loop {spec.id} to party {it.party}")
    for spec in loops.values():
        if spec.remote_analysis in loops:
            svc = loops[spec.remote_analysis].placement
            need(spec.placement, svc, f"loop {spec.id} offload")
            need(svc, spec.placement, f"loop {spec.id} reply")
        if spec.cloud_sink:
            need(spec.placement, spec.cloud_sink, f"loop {spec.id} forwarding")
        if coordination.mode == "centralized" and spec.role is LoopRole.LOCAL:
            for c in loops.values():
                if c.role is LoopRole.CENTRAL and c.region == spec.region:
                    need(spec.placement, c.placement, f"loop {spec.id} report")
        if spec.monitors_elements:
            for r in ruleset:
                for a in r.actions:
                    if isinstance(a, AdjustSampling) and owner.get(a.sensor) in spec.elements:
                        need(spec.placement, sensors[a.sensor].descriptor.host_node,
                             f"loop {spec.id} adjusts {a.sensor}")
                    if isinstance(a, Escalate) and a.to_loop in loops:
                        need(spec.placement, loops[a.to_loop].placement, f"loop {spec.id} escalates")
        if spec.role is LoopRole.PEER:
            for other in loops.values():
                if other.role is LoopRole.PEER and other.region == spec.region and other.id != spec.id:
                    need(spec.placement, other.placement, f"peer {spec.id} to {other.id}")


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_scenario(doc)

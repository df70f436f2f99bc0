"""MAPE-K control loops placed on fog or cloud nodes.

A *local* loop monitors the elements in its scope and executes plans next to
them. It either analyses and plans itself (the full loop offered as a fog
service) or ships a bounded context summary to a cloud *apaas* service that
only analyses and plans. Local loops report per-epoch counts to a *central*
master loop, or, in decentralized mode, exchange them with their *peer*
loops.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .context import ContextManager, ContextSnapshot, window
from .domain import MedicalHistory
from .errors import RemoteTimeout
from .netsim import PRIO_LOOP, Message
from .presentation import StatusModel, Subject, render
from .reasoning import DetectorConfig, Horizon, Insight, reason, required_window
from .rules import AdjustSampling, CorrectiveAction, Escalate, Log, Notify, Ruleset, describe, evaluate, fired_rules
from .sensing import Reading

if TYPE_CHECKING:
    from .simulation import Simulation

log = logging.getLogger(__name__)


class Activity(str, Enum):
    MONITOR = "Monitor"
    ANALYZE = "Analyze"
    PLAN = "Plan"
    EXECUTE = "Execute"


FULL_LOOP = frozenset(Activity)
MONITOR_EXECUTE = frozenset({Activity.MONITOR, Activity.EXECUTE})
ANALYZE_PLAN = frozenset({Activity.ANALYZE, Activity.PLAN})


class LoopRole(str, Enum):
    LOCAL = "local"
    CENTRAL = "central"
    PEER = "peer"
    APAAS = "apaas"


FORWARD_MODES = ("none", "raw", "insights")


@dataclass(frozen=True)
class ControlLoopSpec:
    id: str
    placement: str
    role: LoopRole = LoopRole.LOCAL
    activities: frozenset[Activity] = FULL_LOOP
    elements: tuple[str, ...] = ()
    region: str = "default"
    cadence_ms: int = 1000
    phase_ms: int = 0
    processing_ms: int = 0
    remote_analysis: str | None = None
    forward: str = "none"
    cloud_sink: str | None = None
    summarize: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", LoopRole(self.role))
        object.__setattr__(self, "activities", frozenset(Activity(a) for a in self.activities))
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def offloaded(self) -> bool:
        return self.remote_analysis is not None

    @property
    def monitors_elements(self) -> bool:
        return self.role in (LoopRole.LOCAL, LoopRole.PEER)

    def problems(self) -> list[str]:
        p = []
        where = f"loop {self.id!r}"
        if self.cadence_ms <= 0:
            p.append(f"{where}: cadence_ms must be > 0")
        if self.phase_ms < 0 or self.processing_ms < 0:
            p.append(f"{where}: phase_ms and processing_ms must be >= 0")
        if self.forward not in FORWARD_MODES:
            p.append(f"{where}: forward must be one of {FORWARD_MODES}")
        if self.forward != "none" and not self.cloud_sink:
            p.append(f"{where}: forward={self.forward} needs a cloud_sink")
        if self.monitors_elements:
            if self.offloaded and self.activities != MONITOR_EXECUTE:
                p.append(f"{where}: an offloading loop keeps exactly Monitor and Execute")
            if not self.offloaded and self.activities != FULL_LOOP:
                p.append(f"{where}: a non-offloading loop needs all four activities")
        elif self.role is LoopRole.APAAS:
            if self.activities != ANALYZE_PLAN:
                p.append(f"{where}: an apaas service holds exactly Analyze and Plan")
            if self.elements or self.offloaded:
                p.append(f"{where}: an apaas service has no element scope or remote endpoint")
        elif self.elements or self.offloaded:
            p.append(f"{where}: a central loop scopes a region, not elements")
        return p


@dataclass
class KnowledgeBase:
    """Private store of one loop; only that loop's activities touch it."""

    owner: str
    medical_histories: dict[str, MedicalHistory] = field(default_factory=dict)
    detectors: dict[str, tuple[DetectorConfig, ...]] = field(default_factory=dict)
    ruleset: Ruleset = field(default_factory=Ruleset)
    contexts: ContextManager | None = None
    subjects: dict[str, Subject] = field(default_factory=dict)
    counters: Counter = field(default_factory=Counter)


@dataclass(frozen=True)
class ElementPlan:
    element: str
    insights: tuple[Insight, ...]
    actions: tuple[CorrectiveAction, ...]
    triggering: tuple[Insight, ...]  # insights matched by at least one firing rule


def analyze_and_plan(kb: KnowledgeBase, windows: Mapping[str, Sequence[ContextSnapshot]],
                     cadence_ms: int | None) -> dict[str, ElementPlan]:
    """Analyze and Plan over per-element snapshot windows.

    The same function runs inside a fog loop and inside a cloud service, so
    placement cannot change the outcome for equal inputs.
    """
    plans = {}
    for element in sorted(windows):
        snaps = tuple(windows[element])
        if not snaps:
            plans[element] = ElementPlan(element, (), (), ())
            continue
        insights = reason(kb.medical_histories.get(element), snaps, kb.detectors.get(element, ()),
                          cadence_ms=cadence_ms)
        fired = fired_rules(insights, snaps[-1], kb.ruleset)
        trig = {i.key: i for _, hits in fired for i in hits}
        triggering = tuple(i for i in insights if i.key in trig)
        actions = tuple(evaluate(insights, snaps[-1], kb.ruleset))
        plans[element] = ElementPlan(element, tuple(insights), actions, triggering)
    return plans


@dataclass(frozen=True)
class OffloadRequest:
    loop: str
    iteration: int
    tick: int
    cadence_ms: int
    windows: Mapping[str, tuple[ContextSnapshot, ...]]


@dataclass(frozen=True)
class OffloadReply:
    loop: str
    iteration: int
    plans: Mapping[str, ElementPlan]


def offload_analysis(service_kb: KnowledgeBase, request: OffloadRequest) -> OffloadReply:
    """What the cloud analysis service computes for one request."""
    plans = analyze_and_plan(service_kb, request.windows, request.cadence_ms)
    return OffloadReply(request.loop, request.iteration, plans)


def request_size(windows: Mapping[str, Sequence[ContextSnapshot]], sizes: Mapping[str, int],
                 summarize: bool) -> int:
    """Declared wire size of an offload request.

    Summaries cost one ``context_summary`` per element; without
    summarization every raw reading behind the window is shipped.
    """
    if summarize:
        return sizes["context_summary"] * len(windows)
    return sizes["reading"] * sum(s.n_readings for w in windows.values() for s in w)


def reply_size(reply: OffloadReply, sizes: Mapping[str, int]) -> int:
    n = sum(len(p.insights) for p in reply.plans.values())
    return sizes["plan_reply"] + sizes["insight"] * n


# aggregation ---------------------------------------------------------------

@dataclass(frozen=True)
class AggregateQuery:
    kind: str
    region: str = "default"


@dataclass(frozen=True)
class AggregateResult:
    kind: str
    region: str
    affected: int
    total: int
    percentage: float

    @classmethod
    def of(cls, query: AggregateQuery, affected: int, total: int) -> "AggregateResult":
        if not 0 <= affected <= total:
            raise ValueError(f"affected={affected} not within total={total}")
        pct = 100.0 * affected / total if total else 0.0
        return cls(query.kind, query.region, affected, total, pct)


@dataclass(frozen=True)
class SlaveReport:
    loop: str
    epoch: int
    region: str
    scope: frozenset[str]
    affected: tuple[tuple[str, frozenset[str]], ...]  # (kind, element ids)

    def affected_for(self, kind: str) -> frozenset[str]:
        for k, ids in self.affected:
            if k == kind:
                return ids
        return frozenset()

    @property
    def counts(self) -> dict[str, tuple[int, int]]:
        return {k: (len(ids), len(self.scope)) for k, ids in self.affected}


def build_report(loop: str, epoch: int, region: str, subjects: Mapping[str, Subject],
                 kinds: Iterable[str]) -> SlaveReport:
    scope = frozenset(subjects)
    affected = []
    for kind in sorted(set(kinds)):
        ids = frozenset(e for e, s in subjects.items()
                        if any(i.kind == kind and i.horizon is Horizon.CURRENT for i in s.model.active_insights))
        affected.append((kind, ids))
    return SlaveReport(loop, epoch, region, scope, tuple(affected))


def central_aggregate(query: AggregateQuery, reports: Iterable[SlaveReport],
                      scope: Iterable[str]) -> AggregateResult:
    """Master-side aggregate; the total always comes from the master's own scope,
    so missing reports only lower the affected count."""
    scope = frozenset(scope)
    affected: set[str] = set()
    for r in reports:
        affected |= r.affected_for(query.kind) & scope
    return AggregateResult.of(query, len(affected), len(scope))


def peer_aggregate(query: AggregateQuery, reports: Iterable[SlaveReport]) -> AggregateResult:
    reports = list(reports)
    scope = frozenset().union(*(r.scope for r in reports)) if reports else frozenset()
    affected = frozenset().union(*(r.affected_for(query.kind) for r in reports)) if reports else frozenset()
    return AggregateResult.of(query, len(affected & scope), len(scope))


def peer_exchange(query: AggregateQuery, reports: Mapping[str, SlaveReport]) -> dict[str, AggregateResult]:
    """Full-mesh exchange: every peer aggregates the union of all broadcasts."""
    received = {peer: [reports[p] for p in sorted(reports)] for peer in reports}
    return {peer: peer_aggregate(query, received[peer]) for peer in sorted(received)}


# runtime -------------------------------------------------------------------

@dataclass
class IterationRecord:
    loop: str
    index: int
    tick: int
    phases: dict[str, int] = field(default_factory=dict)
    insights: int = 0
    actions: int = 0
    messages: list[int] = field(default_factory=list)
    degraded: bool = False


class _PlanTracker:
    """Collects completion times of one element plan's actions."""

    def __init__(self, loop: "LocalLoop", first_emission: int | None, triggering: Sequence[Insight]):
        self.loop = loop
        self.first_emission = first_emission
        self.triggering = tuple(triggering)
        self.pending = 0
        self.done_at = loop.world.kernel.now
        self.sealed = False

    def expect(self) -> None:
        self.pending += 1

    def complete(self, at: int) -> None:
        self.pending -= 1
        self.done_at = max(self.done_at, at)
        self._maybe_finish()

    def seal(self) -> None:
        self.sealed = True
        self._maybe_finish()

    def _maybe_finish(self) -> None:
        if self.sealed and self.pending == 0 and self.first_emission is not None:
            for _ in self.triggering:
                self.loop.world.kernel.metrics.add_latency(self.loop.spec.id, self.done_at - self.first_emission)
            self.first_emission = None


class LocalLoop:
    """Runtime of a local or peer loop: Monitor and Execute always run here."""

    def __init__(self, spec: ControlLoopSpec, kb: KnowledgeBase, world: "Simulation"):
        self.spec = spec
        self.kb = kb
        self.world = world
        self.node = spec.placement
        self.inbox: dict[str, list[Reading]] = {e: [] for e in spec.elements}
        self.iterations: list[IterationRecord] = []
        self.pending: tuple[IterationRecord, dict] | None = None
        self._active_keys: dict[str, frozenset] = {e: frozenset() for e in spec.elements}
        self._requested_period: dict[str, int] = {}
        self.peer_reports: dict[int, dict[str, SlaveReport]] = {}
        for e in spec.elements:
            kb.subjects[e] = Subject(StatusModel(e))

    # Monitor ---------------------------------------------------------

    def start(self) -> None:
        self._schedule_tick(self.spec.phase_ms)

    def _schedule_tick(self, t: int) -> None:
        if t <= self.world.duration:
            self.world.kernel.schedule(t, self.tick, priority=PRIO_LOOP, label=f"tick:{self.spec.id}")

    def on_reading(self, msg: Message) -> None:
        reading: Reading = msg.body
        if reading.element not in self.inbox or reading.element not in self.world.registry:
            log.warning("loop %s dropped reading for unknown element %s", self.spec.id, reading.element)
            self.world.kernel.log(self.node, "drop", f"sensor={reading.sensor} element={reading.element}")
            return
        self.inbox[reading.element].append(reading)
        if self.spec.forward == "raw":
            self.world.kernel.send(self.node, self.spec.cloud_sink, "reading",
                                   self.world.sizes["reading"], reading)

    def tick(self) -> None:
        kernel = self.world.kernel
        now = kernel.now
        rec = IterationRecord(self.spec.id, len(self.iterations), now)
        self.iterations.append(rec)
        if self.pending is not None:
            self._degrade(RemoteTimeout(f"no reply for iteration {self.pending[0].index}"))
        contexts = self.kb.contexts
        first_emission: dict[str, int | None] = {}
        for e in self.spec.elements:
            drained, self.inbox[e] = self.inbox[e], []
            first_emission[e] = min((r.timestamp for r in drained), default=None)
            snap = contexts.create_context(e, drained, now)
            contexts.add_to_history(snap)
        rec.phases["monitor"] = now
        kernel.log(self.node, "monitor", f"loop={self.spec.id} iter={rec.index}")
        self._schedule_tick(now + self.spec.cadence_ms)

        if self.spec.offloaded:
            need = max(required_window(self.kb.detectors.get(e, ())) for e in self.spec.elements) \
                if self.spec.elements else 2
            windows = {e: window(contexts.history(e), need) for e in self.spec.elements}
            req = OffloadRequest(self.spec.id, rec.index, now, self.spec.cadence_ms, windows)
            size = request_size(windows, self.world.sizes, self.spec.summarize)
            service = self.world.services[self.spec.remote_analysis]
            msg = kernel.send(self.node, service.node, "context_summary" if self.spec.summarize else "raw_window",
                              size, req, service.on_request)
            rec.messages.append(msg.id)
            self.pending = (rec, first_emission)
            return

        windows = {e: contexts.history(e).snapshots for e in self.spec.elements}
        plans = analyze_and_plan(self.kb, windows, self.spec.cadence_ms)
        rec.phases["analyze"] = rec.phases["plan"] = now
        kernel.schedule(now + self.spec.processing_ms, self.execute, rec, plans, first_emission,
                        priority=PRIO_LOOP, label=f"execute:{self.spec.id}")

    def on_reply(self, msg: Message) -> None:
        reply: OffloadReply = msg.body
        if self.pending is None or self.pending[0].index != reply.iteration:
            self.world.kernel.log(self.node, "late_reply", f"loop={self.spec.id} iter={reply.iteration}")
            return
        rec, first_emission = self.pending
        self.pending = None
        rec.messages.append(msg.id)
        self.execute(rec, reply.plans, first_emission)

    def _degrade(self, exc: RemoteTimeout) -> None:
        rec, _ = self.pending
        self.pending = None
        rec.degraded = True
        self.kb.counters["degraded"] += 1
        log.warning("loop %s iteration %d: %s; completing with an empty plan", self.spec.id, rec.index, exc)
        self.world.kernel.log(self.node, "degrade", f"loop={self.spec.id} iter={rec.index} reason=timeout")

    # Execute ---------------------------------------------------------

    def execute(self, rec: IterationRecord, plans: Mapping[str, ElementPlan],
                first_emission: Mapping[str, int | None]) -> None:
        world = self.world
        kernel = world.kernel
        now = kernel.now
        rec.phases["execute"] = now
        for e in self.spec.elements:
            plan = plans.get(e)
            if plan is None:
                continue
            snap = self.kb.contexts.history(e).latest
            rec.insights += len(plan.insights)
            rec.actions += len(plan.actions)
            for ins in plan.insights:
                world.recorder.insight(self.spec.id, ins)
            for a in plan.actions:
                world.recorder.action(self.spec.id, e, rec.tick, a)

            subject = self.kb.subjects[e]
            if subject.update(plan.insights, snap, now):
                world.recorder.version_bump(e, subject.model.version, now)
                observers = world.registry.observers(e) if e in world.registry else ()
                for n in subject.publish(observers, now):
                    world.deliver_notification(self.node, n)
            self._forward_insights(e, plan.insights)

            tracker = _PlanTracker(self, first_emission.get(e), plan.triggering if plan.actions else ())
            for a in plan.actions:
                self._dispatch(e, a, subject.model, tracker, rec)
            tracker.seal()
        kernel.log(self.node, "execute", f"loop={self.spec.id} iter={rec.index} actions={rec.actions}")

    def _forward_insights(self, element: str, insights: Sequence[Insight]) -> None:
        keys = frozenset(i.key for i in insights)
        fresh = [i for i in insights if i.key not in self._active_keys[element]]
        self._active_keys[element] = keys
        if self.spec.forward != "insights":
            return
        for ins in fresh:
            self.world.kernel.send(self.node, self.spec.cloud_sink, "insight", self.world.sizes["insight"], ins)

    def _dispatch(self, element: str, action: CorrectiveAction, model: StatusModel,
                  tracker: _PlanTracker, rec: IterationRecord) -> None:
        world = self.world
        kernel = world.kernel

        def track(msg: Message) -> None:
            rec.messages.append(msg.id)

        if isinstance(action, Log):
            kernel.log(self.node, "action", f"loop={self.spec.id} element={element} log={action.text}")
        elif isinstance(action, Notify):
            observers = world.registry.observers(element) if element in world.registry else ()
            for party in observers:
                if action.target not in (party.id, party.role.value):
                    continue
                view = render(model, party, action.detail)
                tracker.expect()
                track(world.send_alert(self.node, party, element, view, tracker.complete))
        elif isinstance(action, AdjustSampling):
            if self._requested_period.get(action.sensor) == action.new_period_ms:
                return
            self._requested_period[action.sensor] = action.new_period_ms
            tracker.expect()
            track(world.send_adjust(self.node, action, tracker.complete))
        elif isinstance(action, Escalate):
            target = world.centrals_by_id.get(action.to_loop)
            if target is None:
                kernel.log(self.node, "action", f"loop={self.spec.id} escalate-unknown={action.to_loop}")
                return
            tracker.expect()
            body = (self.spec.id, element, describe(action), model.version)

            def delivered(msg: Message) -> None:
                target.on_escalation(msg)
                tracker.complete(msg.deliver_at)
            track(kernel.send(self.node, target.node, "escalation", world.sizes["escalation"], body, delivered))

    # coordination ------------------------------------------------------

    def report(self, epoch: int, kinds: Iterable[str]) -> SlaveReport:
        return build_report(self.spec.id, epoch, self.spec.region, self.kb.subjects, kinds)

    def on_peer_report(self, msg: Message) -> None:
        self._store_peer_report(msg.body)

    def _store_peer_report(self, report: SlaveReport) -> None:
        got = self.peer_reports.setdefault(report.epoch, {})
        got[report.loop] = report
        group = self.world.peer_groups[self.spec.region]
        if len(got) == len(group):
            for q in self.world.queries_for(self.spec.region):
                result = peer_aggregate(q, [got[p] for p in sorted(got)])
                self.world.recorder.aggregate(report.epoch, result, self.spec.id, "decentralized",
                                              self.world.kernel.now)
            del self.peer_reports[report.epoch]


class AnalysisService:
    """Cloud-hosted Analyze + Plan service bound by offloading local loops."""

    def __init__(self, spec: ControlLoopSpec, kb: KnowledgeBase, world: "Simulation"):
        self.spec = spec
        self.kb = kb
        self.world = world
        self.node = spec.placement
        self.requests = 0

    def on_request(self, msg: Message) -> None:
        req: OffloadRequest = msg.body
        self.requests += 1
        kernel = self.world.kernel
        kernel.log(self.node, "analyze", f"service={self.spec.id} loop={req.loop} iter={req.iteration}")
        kernel.schedule(kernel.now + self.spec.processing_ms, self._reply, req, msg.src,
                        priority=PRIO_LOOP, label=f"plan:{self.spec.id}")

    def _reply(self, req: OffloadRequest, reply_to: str) -> None:
        reply = offload_analysis(self.kb, req)
        loop = self.world.locals[req.loop]
        if loop.pending is not None and loop.pending[0].index == req.iteration:
            loop.pending[0].phases["analyze"] = loop.pending[0].phases["plan"] = self.world.kernel.now
        self.world.kernel.send(self.node, reply_to, "plan_reply", reply_size(reply, self.world.sizes),
                               reply, loop.on_reply)


class CentralLoop:
    """Master loop: aggregates slave reports of its region per epoch."""

    def __init__(self, spec: ControlLoopSpec, kb: KnowledgeBase, world: "Simulation",
                 slaves: Sequence[str], scope: Iterable[str]):
        self.spec = spec
        self.kb = kb
        self.world = world
        self.node = spec.placement
        self.slaves = tuple(sorted(slaves))
        self.scope = frozenset(scope)
        self.reports: dict[int, dict[str, SlaveReport]] = {}
        self.closed: set[int] = set()
        self.escalations: list[tuple] = []

    def open_epoch(self, epoch: int, deadline_ms: int) -> None:
        self.reports.setdefault(epoch, {})
        kernel = self.world.kernel
        kernel.schedule(kernel.now + deadline_ms, self._close, epoch, priority=PRIO_LOOP,
                        label=f"deadline:{self.spec.id}")
        if not self.slaves:
            self._close(epoch)

    def on_report(self, msg: Message) -> None:
        report: SlaveReport = msg.body
        if report.epoch in self.closed:
            self.world.kernel.log(self.node, "late_report", f"loop={report.loop} epoch={report.epoch}")
            return
        got = self.reports.setdefault(report.epoch, {})
        got[report.loop] = report
        if len(got) == len(self.slaves):
            self._close(report.epoch)

    def _close(self, epoch: int) -> None:
        if epoch in self.closed:
            return
        self.closed.add(epoch)
        got = self.reports.pop(epoch, {})
        missing = [s for s in self.slaves if s not in got]
        if missing:
            log.warning("central %s epoch %d: no report from %s", self.spec.id, epoch, ", ".join(missing))
            self.world.kernel.log(self.node, "gap", f"epoch={epoch} missing={','.join(missing)}")
        scope = frozenset(e for e in self.scope if e in self.world.registry)
        for q in self.world.queries_for(self.spec.region):
            result = central_aggregate(q, [got[s] for s in sorted(got)], scope)
            self.world.recorder.aggregate(epoch, result, self.spec.id, "centralized", self.world.kernel.now)

    def on_escalation(self, msg: Message) -> None:
        self.escalations.append(msg.body)
        self.kb.counters["escalations"] += 1
        loop, element, what, version = msg.body
        self.world.kernel.log(self.node, "escalation", f"from={loop} element={element} version={version}")

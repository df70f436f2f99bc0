"""Wires a scenario into the kernel and runs it to its horizon."""

from __future__ import annotations

import hashlib
import logging
import time
from typing import Callable

from .context import ContextManager
from .control import (
    AggregateQuery,
    AggregateResult,
    AnalysisService,
    CentralLoop,
    KnowledgeBase,
    LocalLoop,
    LoopRole,
)
from .domain import InterestedParty, Registry
from .errors import InvariantViolation, NotFound
from .netsim import PRIO_EPOCH, PRIO_TRANSPORT, Event, Kernel, Message
from .presentation import Notification, View
from .reasoning import Insight
from .report import RunReport
from .rules import AdjustSampling, CorrectiveAction, describe
from .scenario import Scenario
from .sensing import EventBased, Reading, SensorState, on_change, poll, sample_trace

log = logging.getLogger(__name__)


class Recorder:
    """Accumulates the observable outcome of a run as plain records."""

    def __init__(self) -> None:
        self.insights: list[dict] = []
        self.actions: list[dict] = []
        self.notifications: list[dict] = []
        self.alerts: list[dict] = []
        self.aggregates: list[dict] = []
        self.version_bumps: list[dict] = []
        self.interests: list[dict] = []

    def insight(self, loop: str, ins: Insight) -> None:
        self.insights.append({
            "loop": loop, "element": ins.element, "kind": ins.kind, "severity": ins.severity.value,
            "horizon": ins.horizon.value, "lead_ms": ins.lead_ms, "confidence": ins.confidence,
            "detected_at": ins.detected_at,
        })

    def action(self, loop: str, element: str, tick: int, action: CorrectiveAction) -> None:
        self.actions.append({"loop": loop, "element": element, "tick": tick, "action": describe(action)})

    def version_bump(self, element: str, version: int, at: int) -> None:
        self.version_bumps.append({"element": element, "version": version, "at": at})

    def aggregate(self, epoch: int, result: AggregateResult, by: str, mode: str, at: int) -> None:
        self.aggregates.append({
            "epoch": epoch, "kind": result.kind, "region": result.region, "affected": result.affected,
            "total": result.total, "percentage": result.percentage, "computed_by": by, "mode": mode,
            "computed_at": at,
        })


class SensorDriver:
    """Device-side schedule of one simulated sensor."""

    def __init__(self, sim: "Simulation", state: SensorState):
        self.sim = sim
        self.state = state
        self.id = state.descriptor.id
        self.host = state.descriptor.host_node
        self._next: Event | None = None

    def start(self) -> None:
        self._arm(self.state.trace.start)

    def _arm(self, t: int) -> None:
        if t <= self.sim.duration:
            self._next = self.sim.kernel.schedule(t, self._fire, priority=PRIO_TRANSPORT, label=f"sense:{self.id}")

    def _fire(self) -> None:
        kernel = self.sim.kernel
        now = kernel.now
        element = self.sim.registry.element_of(self.id)
        if isinstance(self.state.descriptor.mode, EventBased):
            reading = on_change(self.state, now, sample_trace(self.state.trace, now), element)
            self._arm(now + self.sim.scenario.event_tick_ms)
        else:
            reading = poll(self.state, now, element)
            self._arm(self.state.next_due())
        if reading is not None:
            self.sim.emit(self.host, reading)

    def set_period(self, period_ms: int) -> None:
        if isinstance(self.state.descriptor.mode, EventBased):
            return
        self.state.set_period(period_ms)
        if self._next is not None:
            self._next.cancelled = True
        self.sim.kernel.log(self.host, "period", f"sensor={self.id} period={period_ms}")
        self._arm(max(self.sim.kernel.now, self.state.next_due()))


class Simulation:
    def __init__(self, scenario: Scenario, *, follow: Callable[[dict], None] | None = None,
                 delay_hook=None):
        self.scenario = scenario
        self.duration = scenario.duration_ms
        self.sizes = scenario.sizes
        self.kernel = Kernel(scenario.topology, delay_hook=delay_hook)
        self.recorder = Recorder()
        self.follow = follow
        self.registry = Registry()
        for el in scenario.elements:
            self.registry.register_element(el)
        for s in scenario.sensors:
            self.registry.register_sensor(s.descriptor)
        for e, s in scenario.associations:
            self.registry.associate(e, s)
        self.sensors = {s.descriptor.id: SensorDriver(self, SensorState(s.descriptor, s.trace))
                        for s in scenario.sensors}

        self.locals: dict[str, LocalLoop] = {}
        self.services: dict[str, AnalysisService] = {}
        self.centrals_by_id: dict[str, CentralLoop] = {}
        self.centrals: dict[str, CentralLoop] = {}
        self.peer_groups: dict[str, list[str]] = {}
        self.element_loop: dict[str, LocalLoop] = {}
        self._build_loops()

    # setup -------------------------------------------------------------

    def _kb(self, owner: str, elements) -> KnowledgeBase:
        sc = self.scenario
        elements = sorted(elements)
        return KnowledgeBase(
            owner=owner,
            medical_histories={e: self.registry.medical_history(e) for e in elements},
            detectors={e: sc.detectors.get(e, ()) for e in elements},
            ruleset=sc.rules,
        )

    def _build_loops(self) -> None:
        sc = self.scenario
        bound: dict[str, list[str]] = {}
        for spec in sc.loops:
            if spec.monitors_elements:
                kb = self._kb(spec.id, spec.elements)
                kb.contexts = ContextManager(spec.elements, sc.history_capacity, sc.max_staleness)
                loop = LocalLoop(spec, kb, self)
                self.locals[spec.id] = loop
                for e in spec.elements:
                    self.element_loop[e] = loop
                if spec.remote_analysis:
                    bound.setdefault(spec.remote_analysis, []).extend(spec.elements)
                if spec.role is LoopRole.PEER:
                    self.peer_groups.setdefault(spec.region, []).append(spec.id)
        for spec in sc.loops:
            if spec.role is LoopRole.APAAS:
                # the service holds its own replica of configs, rules and histories
                self.services[spec.id] = AnalysisService(spec, self._kb(spec.id, bound.get(spec.id, ())), self)
            elif spec.role is LoopRole.CENTRAL:
                slaves = [l.spec for l in self.locals.values()
                          if l.spec.role is LoopRole.LOCAL and l.spec.region == spec.region]
                scope = [e for s in slaves for e in s.elements]
                central = CentralLoop(spec, KnowledgeBase(spec.id), self, [s.id for s in slaves], scope)
                self.centrals_by_id[spec.id] = central
                self.centrals[spec.region] = central

    def queries_for(self, region: str) -> list[AggregateQuery]:
        return [q for q in self.scenario.coordination.queries if q.region == region]

    # transport helpers used by loops -------------------------------------

    def emit(self, host: str, reading: Reading) -> None:
        self.kernel.log(host, "emit", f"sensor={reading.sensor} seq={reading.seq} value={reading.value}")
        if reading.element is None:
            self.kernel.log(host, "drop", f"sensor={reading.sensor} reason=unassociated")
            return
        loop = self.element_loop.get(reading.element)
        if loop is None:
            self.kernel.log(host, "drop", f"sensor={reading.sensor} reason=unmonitored")
            return
        self.kernel.send(host, loop.node, "reading", self.sizes["reading"], reading, loop.on_reading)

    def deliver_notification(self, node: str, n: Notification) -> None:
        rec = {"party": n.party, "element": n.element, "version": n.cause, "detail": n.view.detail.value,
               "payload": list(n.view.payload), "emitted_at": n.emitted_at, "delivered_at": None}
        self.recorder.notifications.append(rec)
        if self.follow is not None:
            self.follow(rec)
        party = self.registry.lookup_party(n.party)

        def done(msg: Message) -> None:
            rec["delivered_at"] = msg.deliver_at
        self.kernel.send(node, party.node, "notification", self.sizes["notification"], n, done)

    def send_alert(self, node: str, party: InterestedParty, element: str, view: View,
                   complete: Callable[[int], None]) -> Message:
        rec = {"party": party.id, "element": element, "detail": view.detail.value,
               "payload": list(view.payload), "emitted_at": self.kernel.now, "delivered_at": None}
        self.recorder.alerts.append(rec)

        def done(msg: Message) -> None:
            rec["delivered_at"] = msg.deliver_at
            complete(msg.deliver_at)
        return self.kernel.send(node, party.node, "alert", self.sizes["alert"], view, done)

    def send_adjust(self, node: str, action: AdjustSampling, complete: Callable[[int], None]) -> Message:
        driver = self.sensors[action.sensor]

        def done(msg: Message) -> None:
            driver.set_period(action.new_period_ms)
            complete(msg.deliver_at)
        return self.kernel.send(node, driver.host, "adjust", self.sizes["adjust"], action, done)

    # interests and epochs ----------------------------------------------

    def _register_interest(self, party_id: str, element: str) -> None:
        party = next(p for p in self.scenario.parties if p.id == party_id)
        self.registry.register_interest(party, element)
        self.recorder.interests.append({"party": party_id, "element": element,
                                        "from": self.kernel.now, "until": None})
        self.kernel.log(party.node, "interest", f"party={party_id} element={element} op=register")

    def _unregister_interest(self, party_id: str, element: str) -> None:
        try:
            self.registry.unregister_interest(party_id, element)
        except NotFound:
            return
        for rec in reversed(self.recorder.interests):
            if rec["party"] == party_id and rec["element"] == element and rec["until"] is None:
                rec["until"] = self.kernel.now
                break
        self.kernel.log("-", "interest", f"party={party_id} element={element} op=unregister")

    def _epoch(self, epoch: int) -> None:
        c = self.scenario.coordination
        kinds = sorted({q.kind for q in c.queries})
        if c.mode == "centralized":
            for region in sorted(self.centrals):
                self.centrals[region].open_epoch(epoch, c.deadline)
            for loop_id in sorted(self.locals):
                loop = self.locals[loop_id]
                central = self.centrals.get(loop.spec.region)
                if central is None or loop.spec.role is not LoopRole.LOCAL:
                    continue
                self.kernel.send(loop.node, central.node, "report", self.sizes["report"],
                                 loop.report(epoch, kinds), central.on_report)
        elif c.mode == "decentralized":
            for region, group in sorted(self.peer_groups.items()):
                for peer_id in sorted(group):
                    peer = self.locals[peer_id]
                    report = peer.report(epoch, kinds)
                    for other_id in sorted(group):
                        if other_id != peer_id:
                            other = self.locals[other_id]
                            self.kernel.send(peer.node, other.node, "report", self.sizes["report"],
                                             report, other.on_peer_report)
                    peer._store_peer_report(report)

    # run ----------------------------------------------------------------

    def run(self, *, dump_histories: bool = False) -> RunReport:
        started = time.perf_counter()
        sc = self.scenario
        for it in sc.interests:
            if it.from_ms == 0:
                self._register_interest(it.party, it.element)
            else:
                self.kernel.schedule(it.from_ms, self._register_interest, it.party, it.element,
                                     label="interest")
            if it.until_ms is not None:
                self.kernel.schedule(it.until_ms, self._unregister_interest, it.party, it.element,
                                     label="uninterest")
        for sid in sorted(self.sensors):
            self.sensors[sid].start()
        for lid in sorted(self.locals):
            self.locals[lid].start()
        if sc.coordination.mode != "none":
            k = 1
            while k * sc.coordination.epoch_ms <= self.duration:
                self.kernel.schedule(k * sc.coordination.epoch_ms, self._epoch, k, priority=PRIO_EPOCH,
                                     label="epoch")
                k += 1
        self.kernel.run(self.duration)
        report = self._report(time.perf_counter() - started, dump_histories)
        check_invariants(self, report)
        return report

    def _report(self, wall: float, dump_histories: bool) -> RunReport:
        sc = self.scenario
        m = self.kernel.metrics
        metrics = {
            "layer_ingress_bytes": dict(sorted(m.layer_ingress_bytes.items())),
            "link_messages": dict(sorted(m.link_messages.items())),
            "messages_sent": m.messages_sent,
            "messages_delivered": m.messages_delivered,
            "decision_latency_ms": {k: list(v) for k, v in sorted(m.decision_latency_ms.items())},
            "mean_decision_latency_ms": {k: sum(v) / len(v) for k, v in sorted(m.decision_latency_ms.items()) if v},
            "wall_clock_s": wall,
        }
        iterations = {lid: {"count": len(l.iterations), "degraded": sum(r.degraded for r in l.iterations)}
                      for lid, l in sorted(self.locals.items())}
        escalations = [{"central": cid, "from": b[0], "element": b[1], "action": b[2], "version": b[3]}
                       for cid, c in sorted(self.centrals_by_id.items()) for b in c.escalations]
        histories = None
        if dump_histories:
            histories = {}
            for lid, loop in sorted(self.locals.items()):
                for e in loop.spec.elements:
                    histories[e] = [
                        {"timestamp": s.timestamp, "physiological": dict(s.physiological),
                         "environmental": dict(s.environmental), "activity": s.activity.state.value,
                         "location": s.activity.location, "staleness": dict(s.staleness)}
                        for s in loop.kb.contexts.history(e)]
        return RunReport(
            name=sc.name, seed=sc.seed, duration_ms=sc.duration_ms, metrics=metrics,
            insights=self.recorder.insights, actions=self.recorder.actions,
            notifications=self.recorder.notifications, alerts=self.recorder.alerts,
            aggregates=self.recorder.aggregates, iterations=iterations,
            version_bumps=self.recorder.version_bumps, interests=self.recorder.interests,
            escalations=escalations,
            event_log_sha256=hashlib.sha256("\n".join(self.kernel.event_log).encode()).hexdigest(),
            histories=histories, config=sc.raw,
        )

    @property
    def event_log(self) -> list[str]:
        return self.kernel.event_log


def expected_notifications(report: RunReport) -> dict[tuple[str, str], int]:
    """Version bumps that fall inside each party's registration intervals."""
    out: dict[tuple[str, str], int] = {}
    for it in report.interests:
        key = (it["party"], it["element"])
        n = sum(1 for b in report.version_bumps
                if b["element"] == it["element"] and b["at"] >= it["from"]
                and (it["until"] is None or b["at"] < it["until"]))
        out[key] = out.get(key, 0) + n
    return out


def check_invariants(sim: Simulation, report: RunReport) -> None:
    """Cross-count identities every finished run must satisfy."""
    problems = []
    got: dict[tuple[str, str], int] = {}
    for n in report.notifications:
        key = (n["party"], n["element"])
        got[key] = got.get(key, 0) + 1
    want = {k: v for k, v in expected_notifications(report).items() if v}
    if got != want:
        problems.append(f"notifications {got} != version bumps x registered parties {want}")

    topo = sim.kernel.topology
    expected_bytes = 0
    for msg in sim.kernel.delivered:
        route = topo.route(msg.src, msg.dst)
        expected_bytes += sum(msg.payload_size + link.overhead_bytes for link in route.links)
        if sim.kernel.delay_hook is None and msg.deliver_at - msg.sent_at != route.latency_ms:
            problems.append(f"message {msg.id} took {msg.deliver_at - msg.sent_at} ms, path is {route.latency_ms}")
    if sum(report.metrics["layer_ingress_bytes"].values()) != expected_bytes:
        problems.append("layer ingress bytes do not add up to delivered message bytes")
    if problems:
        raise InvariantViolation("; ".join(problems))


def run(scenario: Scenario, **kwargs) -> RunReport:
    dump = kwargs.pop("dump_histories", False)
    return Simulation(scenario, **kwargs).run(dump_histories=dump)

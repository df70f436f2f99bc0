import copy
import random

import pytest
from hypothesis import given, settings, strategies as st

from careloop.context import ContextSnapshot
from careloop.control import (
    FULL_LOOP,
    MONITOR_EXECUTE,
    AggregateQuery,
    AggregateResult,
    ControlLoopSpec,
    KnowledgeBase,
    OffloadRequest,
    SlaveReport,
    analyze_and_plan,
    central_aggregate,
    offload_analysis,
    peer_aggregate,
    peer_exchange,
    reply_size,
    request_size,
)
from careloop.reasoning import DetectorConfig, reason
from careloop.reference import build, fever_scenario, ward_scenario
from careloop.rules import Log, Notify, Rule, RuleCondition, Ruleset
from careloop.scenario import DEFAULT_SIZES
from careloop.simulation import Simulation

FEVER_CFGS = (DetectorConfig("fever", "threshold", "temp", 38.0),
              DetectorConfig("fever", "trend", "temp", 38.0, window_size=4, forecast_lead_ms=5000))
RULES = Ruleset((Rule("r_fever", (Notify("MedicalPersonnel"),), RuleCondition("fever"), 10),
                 Rule("r_log", (Log("seen"),))))


def kb():
    return KnowledgeBase("k", detectors={"p1": FEVER_CFGS}, ruleset=RULES)


def window_of(n, start=37.0, step=0.1):
    return tuple(ContextSnapshot("p1", 1000 * i, {"temp": start + step * i}, n_readings=1) for i in range(n))


def report(loop, scope, affected, epoch=1, kind="fever"):
    return SlaveReport(loop, epoch, "default", frozenset(scope), ((kind, frozenset(affected)),))


def test_spec_invariants():
    assert ControlLoopSpec("a", "fog1").problems() == []
    assert ControlLoopSpec("a", "fog1", activities=MONITOR_EXECUTE, remote_analysis="ap").problems() == []
    bad = ControlLoopSpec("a", "fog1", activities=FULL_LOOP, remote_analysis="ap").problems()
    assert any("Monitor and Execute" in p for p in bad)
    assert ControlLoopSpec("a", "fog1", activities=MONITOR_EXECUTE).problems()
    assert ControlLoopSpec("s", "cloud1", role="apaas").problems()  # default activities are the full loop
    assert ControlLoopSpec("s", "cloud1", role="apaas", activities={"Analyze", "Plan"}).problems() == []
    assert ControlLoopSpec("a", "fog1", forward="raw").problems()


def test_offloaded_plan_equals_local():
    w = {"p1": window_of(8, 37.4, 0.1)}
    local = analyze_and_plan(kb(), w, 1000)
    remote = offload_analysis(kb(), OffloadRequest("loop", 0, 7000, 1000, w))
    assert remote.plans == local
    assert list(local["p1"].insights) == reason(None, w["p1"], FEVER_CFGS, cadence_ms=1000)
    assert local["p1"].actions == (Notify("MedicalPersonnel"), Log("seen"))


def test_empty_window_plans_nothing():
    plans = analyze_and_plan(kb(), {"p1": ()}, 1000)
    assert plans["p1"].insights == () and plans["p1"].actions == ()


def test_summary_smaller_than_raw_window():
    w = {"p1": window_of(8)}
    assert request_size(w, DEFAULT_SIZES, True) == 256
    assert request_size(w, DEFAULT_SIZES, False) == 8 * 64
    assert request_size(w, DEFAULT_SIZES, True) < request_size(w, DEFAULT_SIZES, False)
    reply = offload_analysis(kb(), OffloadRequest("loop", 0, 7000, 1000, {"p1": window_of(8, 37.4)}))
    assert reply_size(reply, DEFAULT_SIZES) == 128 + 128 * len(reply.plans["p1"].insights)


def test_aggregate_arithmetic():
    q = AggregateQuery("fever")
    scope = [f"p{i}" for i in range(12)]
    assert central_aggregate(q, [report("a", scope, scope[:3])], scope).percentage == 25.0
    assert central_aggregate(q, [report("a", scope, [])], scope) == AggregateResult("fever", "default", 0, 12, 0.0)
    assert central_aggregate(q, [], scope) == AggregateResult("fever", "default", 0, 12, 0.0)
    with pytest.raises(ValueError):
        AggregateResult.of(q, 3, 2)


def test_peer_exchange_union():
    q = AggregateQuery("fever")
    reports = {"a": report("a", ["a1", "a2", "a3", "a4"], ["a1"]),
               "b": report("b", ["b1", "b2", "b3", "b4"], ["b1", "b2"]),
               "c": report("c", ["c1", "c2", "c3", "c4"], [])}
    results = peer_exchange(q, reports)
    assert set(results.values()) == {AggregateResult("fever", "default", 3, 12, 25.0)}
    solo = peer_exchange(q, {"a": reports["a"]})
    assert solo["a"] == AggregateResult("fever", "default", 1, 4, 25.0)
    assert reports["b"].counts == {"fever": (2, 4)}


def test_fog_iteration_phases_are_local():
    sim = Simulation(build(fever_scenario("fog")))
    sim.run()
    rec = sim.locals["loop1"].iterations[400]
    assert rec.tick == 400_002
    assert rec.phases == {"monitor": 400_002, "analyze": 400_002, "plan": 400_002, "execute": 400_007}


def test_apaas_iteration_phases():
    sim = Simulation(build(fever_scenario("apaas")))
    sim.run()
    rec = sim.locals["loop1"].iterations[400]
    # request 50 ms up, 5 ms processing, 50 ms back
    assert rec.phases == {"monitor": 400_002, "analyze": 400_057, "plan": 400_057, "execute": 400_107}
    assert sim.services["ap1"].requests == 600


def test_timeout_degrades_to_empty_plan():
    sim = Simulation(build(fever_scenario("apaas", cloud_latency=600)))
    report = sim.run()
    it = report.iterations["loop1"]
    assert it["count"] == 600 and it["degraded"] == 599  # the last request is still in flight at the end
    assert report.insights == [] and report.actions == []
    assert any("|degrade|" in line for line in sim.event_log)
    assert any("|late_reply|" in line for line in sim.event_log)


def test_no_readings_means_no_insights():
    doc = fever_scenario("fog")
    doc["sensors"][0]["trace"]["points"] = [[0, 39.0]]
    doc["associations"] = []
    rep = Simulation(build(doc)).run()
    assert rep.insights == [] and rep.actions == []
    assert rep.iterations["loop1"]["count"] == 600


def test_escalation_reaches_central():
    doc = ward_scenario("centralized")
    doc["rules"][0]["actions"].append({"type": "escalate", "to_loop": "master"})
    rep = Simulation(build(doc)).run()
    assert rep.escalations
    assert {e["central"] for e in rep.escalations} == {"master"}
    assert {e["element"] for e in rep.escalations} == {"p01", "p02", "p03"}


def test_centralized_gap_when_reports_late():
    doc = ward_scenario("centralized")
    doc["coordination"]["deadline_ms"] = 10  # reports need 52 ms to reach the cloud
    sim = Simulation(build(doc))
    rep = sim.run()
    assert all(a["affected"] == 0 and a["total"] == 12 for a in rep.aggregates)
    assert any("|gap|" in line for line in sim.event_log)
    assert any("|late_report|" in line for line in sim.event_log)


def test_knowledge_isolation_in_log():
    doc = ward_scenario("decentralized")
    sim = Simulation(build(doc))
    sim.run()
    placement = {l["id"]: l["placement"] for l in doc["loops"]}
    for line in sim.event_log:
        _, node, kind, details = line.split("|", 3)
        if kind in ("monitor", "execute", "degrade"):
            loop = details.split()[0].removeprefix("loop=")
            assert placement[loop] == node


def test_partition_preserves_insights():
    split = ward_scenario("decentralized")
    single = copy.deepcopy(split)
    single["coordination"] = {"mode": "none"}
    merged = split["loops"][0]["elements"] + split["loops"][1]["elements"]
    single["loops"] = [{"id": "all", "placement": "fog1", "elements": merged, "cadence_ms": 1000, "phase_ms": 2}]
    for link in single["topology"]["links"]:
        if link["b"] == "fog2" and link["a"].startswith("dev_"):
            link["b"] = "fog1"
    a = Simulation(build(split)).run()
    b = Simulation(build(single)).run()
    key = lambda r: sorted(r.insight_sequence())  # noqa: E731
    assert key(a) == key(b) and a.insights


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_modes_agree_on_random_reports(seed):
    rng = random.Random(seed)
    q = AggregateQuery("fever")
    elements = [f"e{i}" for i in range(rng.randint(1, 30))]
    groups = {}
    for e in elements:
        groups.setdefault(f"loop{rng.randint(0, 3)}", []).append(e)
    reports = {g: report(g, es, [e for e in es if rng.random() < 0.3]) for g, es in groups.items()}
    central = central_aggregate(q, reports.values(), elements)
    assert set(peer_exchange(q, reports).values()) == {central}
    assert peer_aggregate(q, reports.values()) == central

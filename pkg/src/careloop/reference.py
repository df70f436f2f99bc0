"""Ready-made scenario documents and a seeded scenario fuzzer.

Every builder returns a plain JSON-compatible dict; pass it through
:func:`careloop.scenario.parse_scenario` (or :func:`build`) to validate it.
"""

from __future__ import annotations

import random

from .scenario import Scenario, parse_scenario

FEVER_LEVEL = 38.0


def build(doc: dict) -> Scenario:
    return parse_scenario(doc)


def _topology(fog_latency: int = 2, cloud_latency: int = 50, devices=("dev1",)) -> dict:
    nodes = [{"id": d, "layer": "device"} for d in devices]
    nodes += [{"id": "fog1", "layer": "fog"}, {"id": "cloud1", "layer": "cloud"},
              {"id": "app1", "layer": "application"}]
    links = [{"a": d, "b": "fog1", "latency_ms": fog_latency} for d in devices]
    links += [
        {"a": "fog1", "b": "cloud1", "latency_ms": cloud_latency},
        {"a": "fog1", "b": "app1", "latency_ms": fog_latency},
        {"a": "cloud1", "b": "app1", "latency_ms": cloud_latency},
    ]
    return {"nodes": nodes, "links": links}


def _loops(placement: str, elements: list[str], forward: str, cadence_ms: int, phase_ms: int,
           processing_ms: int) -> list[dict]:
    local = {"id": "loop1", "placement": "fog1", "elements": elements, "cadence_ms": cadence_ms,
             "phase_ms": phase_ms, "processing_ms": processing_ms, "forward": forward}
    if forward != "none":
        local["cloud_sink"] = "cloud1"
    if placement == "fog":
        return [local]
    if placement != "apaas":
        raise ValueError(f"placement must be 'fog' or 'apaas', got {placement!r}")
    local["remote_analysis"] = "ap1"
    return [local, {"id": "ap1", "placement": "cloud1", "role": "apaas", "processing_ms": processing_ms}]


def fever_scenario(placement: str = "fog", forward: str = "none", *, fog_latency: int = 2,
                   cloud_latency: int = 50, processing_ms: int = 5, seed: int = 7) -> dict:
    """Ten minutes of 1 Hz body temperature ramping from 37 to 39 degrees.

    The temperature is flat for 300 s, rises linearly to 39.0 at 500 s and
    stays there. A threshold detector fires at 38.0 and a five-point trend
    detector looks 65.5 s ahead, so the predicted insight precedes the
    current one. The fog loop ticks 2 ms after each sample, which is when
    the reading arrives over the 2 ms device link.
    """
    return {
        "name": f"fever-{placement}-{forward}",
        "seed": seed,
        "duration_ms": 600_000,
        "topology": _topology(fog_latency, cloud_latency),
        "elements": [{"id": "p1", "kind": "Patient", "display_name": "Ward 3, bed 2",
                      "medical_history": {"baselines": [{"metric": "temperature", "value": 36.8, "unit": "C"}]}}],
        "sensors": [{
            "id": "temp1", "category": "physiological", "metric": "temperature", "unit": "C", "host": "dev1",
            "mode": {"type": "time", "period_ms": 1000},
            "trace": {"interpolation": "linear",
                      "points": [[0, 37.0], [300_000, 37.0], [500_000, 39.0], [600_000, 39.0]]},
        }],
        "associations": [{"element": "p1", "sensor": "temp1"}],
        "parties": [
            {"id": "doctor", "role": "MedicalPersonnel", "node": "app1"},
            {"id": "nurse", "role": "CareGiver", "node": "app1"},
        ],
        "interests": [{"party": "doctor", "element": "p1"}, {"party": "nurse", "element": "p1"}],
        "detectors": [
            {"elements": ["p1"], "name": "fever", "detector": "threshold", "metric": "temperature",
             "threshold": FEVER_LEVEL, "direction": "above"},
            {"elements": ["p1"], "name": "fever", "detector": "trend", "metric": "temperature",
             "threshold": FEVER_LEVEL, "direction": "above", "window_size": 5, "forecast_lead_ms": 65_500},
        ],
        "rules": [{"id": "r_fever", "priority": 10, "when": {"kind": "fever"},
                   "actions": [{"type": "notify", "target": "MedicalPersonnel"}]}],
        "loops": _loops(placement, ["p1"], forward, cadence_ms=1000, phase_ms=fog_latency,
                        processing_ms=processing_ms),
    }


def constant_scenario(placement: str = "fog", duration_ms: int = 120_000) -> dict:
    """Vitals that never move: nothing to report after the first model."""
    doc = fever_scenario(placement)
    doc["name"] = f"constant-{placement}"
    doc["duration_ms"] = duration_ms
    doc["sensors"][0]["trace"] = {"interpolation": "step", "points": [[0, 36.9]]}
    return doc


def fall_scenario(placement: str = "fog") -> dict:
    """A person walking around the kitchen who ends up lying on the floor."""
    doc = fever_scenario(placement)
    doc["name"] = f"fall-{placement}"
    doc["duration_ms"] = 60_000
    doc["sensors"].append({
        "id": "act1", "category": "activity", "metric": "activity", "host": "dev1",
        "mode": {"type": "event", "predicate": {"type": "delta", "delta": 0.5}},
        "trace": {"interpolation": "step", "points": [
            [0, "laying_in_bed@bedroom"], [10_000, "moving@kitchen"], [30_050, "laying_in_bed@kitchen"],
            [45_000, "moving@kitchen"]]},
    })
    doc["sensors"][0]["trace"] = {"interpolation": "step", "points": [[0, 36.9]]}
    doc["associations"].append({"element": "p1", "sensor": "act1"})
    doc["detectors"].append({"elements": ["p1"], "name": "fall", "detector": "fall"})
    doc["rules"] = [
        {"id": "r_fall", "priority": 20, "when": {"kind": "fall", "min_severity": "critical"},
         "actions": [{"type": "notify", "target": "CareGiver", "detail": "alert_only"},
                     {"type": "notify", "target": "MedicalPersonnel"},
                     {"type": "adjust_sampling", "sensor": "temp1", "new_period_ms": 250}]},
    ]
    return doc


def ward_scenario(mode: str = "centralized", n_elements: int = 12, n_febrile: int = 3,
                  epoch_ms: int = 30_000, duration_ms: int = 90_000) -> dict:
    """A ward split across two fog loops that report fever counts per epoch."""
    ids = [f"p{i:02d}" for i in range(1, n_elements + 1)]
    devices = [f"dev_{e}" for e in ids]
    topo = _topology(devices=devices)
    topo["nodes"].append({"id": "fog2", "layer": "fog"})
    topo["links"] += [{"a": "fog2", "b": "cloud1", "latency_ms": 50}, {"a": "fog1", "b": "fog2", "latency_ms": 5},
                      {"a": "fog2", "b": "app1", "latency_ms": 2}]
    half = n_elements // 2
    for i, d in enumerate(devices):
        if i >= half:
            for link in topo["links"]:
                if link["a"] == d:
                    link["b"] = "fog2"
    sensors, assoc = [], []
    for i, e in enumerate(ids):
        hot = i < n_febrile
        sensors.append({"id": f"t_{e}", "category": "physiological", "metric": "temperature", "unit": "C",
                        "host": devices[i], "mode": {"type": "time", "period_ms": 1000},
                        "trace": {"interpolation": "step", "points": [[0, 39.2 if hot else 36.8]]}})
        assoc.append({"element": e, "sensor": f"t_{e}"})
    role = "local" if mode == "centralized" else "peer"
    loops = [
        {"id": "fogA", "placement": "fog1", "role": role, "elements": ids[:half], "cadence_ms": 1000, "phase_ms": 2},
        {"id": "fogB", "placement": "fog2", "role": role, "elements": ids[half:], "cadence_ms": 1000, "phase_ms": 2},
    ]
    if mode == "centralized":
        loops.append({"id": "master", "placement": "cloud1", "role": "central"})
    return {
        "name": f"ward-{mode}",
        "seed": 11,
        "duration_ms": duration_ms,
        "topology": topo,
        "elements": [{"id": e, "display_name": e} for e in ids],
        "sensors": sensors,
        "associations": assoc,
        "parties": [{"id": "nurse", "role": "CareGiver", "node": "app1"}],
        "interests": [{"party": "nurse", "element": e} for e in ids],
        "detectors": [{"name": "fever", "detector": "threshold", "metric": "temperature", "threshold": FEVER_LEVEL}],
        "rules": [{"id": "r_log", "when": {"kind": "fever"}, "actions": [{"type": "log", "text": "fever"}]}],
        "loops": loops,
        "coordination": {"mode": mode, "epoch_ms": epoch_ms, "queries": [{"kind": "fever"}]},
    }


# fuzzer ---------------------------------------------------------------------

_STATES = ["moving@kitchen", "moving@hall", "laying_in_bed@bedroom", "laying_in_bed@hall",
           "sitting@lounge", "standing@kitchen"]


def _trace(rng: random.Random, kind: str, duration: int) -> dict:
    n = rng.randint(1, 6)
    times = sorted({0, *(rng.randrange(0, duration) for _ in range(n - 1))})
    if kind == "activity":
        return {"interpolation": "step", "points": [[t, rng.choice(_STATES)] for t in times]}
    lo, hi = {"temperature": (36.0, 40.5), "heart_rate": (45.0, 150.0), "room_temp": (15.0, 32.0)}[kind]
    return {"interpolation": rng.choice(["step", "linear"]),
            "points": [[t, round(rng.uniform(lo, hi), 2)] for t in times]}


def random_scenario(seed: int) -> dict:
    """A random but valid scenario; the same seed always gives the same document."""
    rng = random.Random(seed)
    duration = rng.randrange(10_000, 40_001, 1000)
    n_fog = rng.randint(1, 2)
    mode = rng.choice(["none", "none", "centralized", "decentralized"])
    n_el = rng.randint(1, 4)
    ids = [f"e{i}" for i in range(n_el)]
    fogs = [f"fog{i}" for i in range(n_fog)]

    nodes = [{"id": f, "layer": "fog"} for f in fogs]
    nodes += [{"id": "cloud", "layer": "cloud"}, {"id": "app", "layer": "application"}]
    links = [{"a": f, "b": "cloud", "latency_ms": rng.randint(10, 60), "overhead_bytes": rng.choice([0, 8])}
             for f in fogs]
    links += [{"a": f, "b": "app", "latency_ms": rng.randint(0, 5)} for f in fogs]
    if n_fog == 2 and rng.random() < 0.5:
        links.append({"a": fogs[0], "b": fogs[1], "latency_ms": rng.randint(1, 8)})

    # one loop per fog node, elements dealt round-robin
    scope = {f: [e for i, e in enumerate(ids) if i % n_fog == fogs.index(f)] for f in fogs}
    fogs = [f for f in fogs if scope[f]]
    offload = {f: mode != "decentralized" and rng.random() < 0.3 for f in fogs}

    elements, sensors, assoc = [], [], []
    for i, e in enumerate(ids):
        dev = f"dev{i}"
        fog = next(f for f in fogs if e in scope[f])
        nodes.append({"id": dev, "layer": "device"})
        links.append({"a": dev, "b": fog, "latency_ms": rng.randint(0, 4)})
        hist = {"baselines": [{"metric": "temperature", "value": round(rng.uniform(36.2, 37.2), 1)}]}
        elements.append({"id": e, "kind": rng.choice(["Patient", "Elderly", "Disabled"]), "display_name": e,
                         "medical_history": hist})
        for kind in rng.sample(["temperature", "heart_rate", "room_temp", "activity"], rng.randint(1, 4)):
            sid = f"{kind}_{e}"
            cat = {"room_temp": "environmental", "activity": "activity"}.get(kind, "physiological")
            if kind == "activity" or rng.random() < 0.3:
                mode_doc = {"type": "event", "predicate": {"type": "delta", "delta": round(rng.uniform(0, 2), 1)}}
            else:
                mode_doc = {"type": "time", "period_ms": rng.choice([250, 500, 1000, 2000])}
            sensors.append({"id": sid, "category": cat, "metric": kind, "host": dev, "mode": mode_doc,
                            "trace": _trace(rng, kind, duration)})
            assoc.append({"element": e, "sensor": sid})

    parties = [{"id": "doc", "role": "MedicalPersonnel", "node": "app"},
               {"id": "carer", "role": "CareGiver", "node": "app",
                "detail": rng.choice(["summary", "alert_only", "full_clinical"])}]
    interests = []
    for p in ("doc", "carer"):
        for e in ids:
            if rng.random() < 0.7:
                it = {"party": p, "element": e}
                if rng.random() < 0.4:
                    a, b = sorted(rng.sample(range(0, duration, 500), 2))
                    it.update(from_ms=a, until_ms=b)
                interests.append(it)

    detectors = [
        {"name": "fever", "detector": "threshold", "metric": "temperature", "threshold": 38.0,
         "use_baseline_offset": rng.random() < 0.3, "offset": 1.2},
        {"name": "fever", "detector": "trend", "metric": "temperature", "threshold": 38.0,
         "window_size": rng.randint(2, 8), "forecast_lead_ms": rng.choice([2000, 5000, 20000])},
        {"name": "tachycardia", "detector": "threshold", "metric": "heart_rate", "threshold": 120.0},
        {"name": "bradycardia", "detector": "threshold", "metric": "heart_rate", "threshold": 50.0,
         "direction": "below"},
        {"name": "fall", "detector": "fall"},
    ]
    actions = [{"type": "notify", "target": "MedicalPersonnel"},
               {"type": "notify", "target": "carer", "detail": "summary"},
               {"type": "log", "text": "seen"}]
    time_sensors = [s["id"] for s in sensors if s["mode"]["type"] == "time"]
    if time_sensors:
        actions.append({"type": "adjust_sampling", "sensor": rng.choice(time_sensors),
                        "new_period_ms": rng.choice([250, 500])})
    if mode == "centralized":
        actions.append({"type": "escalate", "to_loop": "master"})
    rules = []
    for i, kind in enumerate(["fever", "tachycardia", "bradycardia", "fall", "*"]):
        when = {"kind": kind, "min_severity": rng.choice(["info", "warning", "critical"])}
        if rng.random() < 0.3:
            when["horizon"] = rng.choice(["current", "predicted"])
        if rng.random() < 0.2:
            when["guard"] = {"metric": "heart_rate", "op": rng.choice([">", "<=", "!="]), "value": 90.0}
        rules.append({"id": f"r{i}", "priority": rng.randint(0, 5), "enabled": rng.random() < 0.9,
                      "when": when, "actions": rng.sample(actions, rng.randint(1, len(actions)))})

    loops = []
    role = {"none": "local", "centralized": "local", "decentralized": "peer"}[mode]
    for f in fogs:
        loop = {"id": f"loop_{f}", "placement": f, "role": role, "elements": scope[f],
                "cadence_ms": rng.choice([500, 1000, 2000]), "phase_ms": rng.randint(0, 10),
                "processing_ms": rng.randint(0, 20), "forward": rng.choice(["none", "raw", "insights"]),
                "summarize": rng.random() < 0.7}
        if loop["forward"] != "none":
            loop["cloud_sink"] = "cloud"
        if offload[f]:
            loop["remote_analysis"] = "apaas"
        loops.append(loop)
    if any(offload.values()):
        loops.append({"id": "apaas", "placement": "cloud", "role": "apaas", "processing_ms": rng.randint(0, 30)})
    coordination = {"mode": mode}
    if mode != "none":
        if mode == "decentralized" and len(fogs) == 2 and not any(
                {lk["a"], lk["b"]} == set(fogs) for lk in links):
            pass  # peers still reach each other through the cloud
        coordination.update(epoch_ms=rng.choice([5000, 10000]), queries=[{"kind": "fever"}, {"kind": "fall"}])
        if rng.random() < 0.3:
            coordination["deadline_ms"] = rng.randint(0, 200)
    if mode == "centralized":
        loops.append({"id": "master", "placement": "cloud", "role": "central"})

    return {
        "name": f"fuzz-{seed}", "seed": seed, "duration_ms": duration, "event_tick_ms": rng.choice([100, 250]),
        "history_capacity": rng.choice([8, 32, 256]),
        "topology": {"nodes": nodes, "links": links}, "elements": elements, "sensors": sensors,
        "associations": assoc, "parties": parties, "interests": interests, "detectors": detectors,
        "rules": rules, "loops": loops, "coordination": coordination,
    }

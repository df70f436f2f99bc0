"""Run reports: structured results of one simulation, their rendering and
comparison."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from statistics import fmean
from typing import Any

from .errors import UnknownFormat


@dataclass
class RunReport:
    name: str
    seed: int
    duration_ms: int
    metrics: dict[str, Any] = field(default_factory=dict)
    insights: list[dict] = field(default_factory=list)
    actions: list[dict] = field(default_factory=list)
    notifications: list[dict] = field(default_factory=list)
    alerts: list[dict] = field(default_factory=list)
    aggregates: list[dict] = field(default_factory=list)
    iterations: dict[str, dict] = field(default_factory=dict)
    version_bumps: list[dict] = field(default_factory=list)
    interests: list[dict] = field(default_factory=list)
    escalations: list[dict] = field(default_factory=list)
    event_log_sha256: str = ""
    histories: dict[str, list] | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    # convenience views

    def mean_latency(self, loop: str | None = None) -> float | None:
        samples = self.metrics.get("decision_latency_ms", {})
        pool = samples.get(loop, []) if loop is not None else [x for v in samples.values() for x in v]
        return fmean(pool) if pool else None

    def insight_sequence(self) -> list[tuple]:
        """Insights without their producing loop, for placement comparisons."""
        return [(i["element"], i["detected_at"], i["kind"], i["severity"], i["horizon"],
                 i["lead_ms"], i["confidence"]) for i in self.insights]

    def action_sequence(self) -> list[tuple]:
        return [(a["element"], a["tick"], a["action"]) for a in self.actions]

    def aggregate_values(self) -> list[tuple]:
        return sorted({(a["epoch"], a["kind"], a["region"], a["affected"], a["total"], a["percentage"])
                       for a in self.aggregates})


def render_text(report: RunReport) -> str:
    m = report.metrics
    lines = [
        f"scenario {report.name} (seed {report.seed}), {report.duration_ms} ms simulated",
        f"messages: {m.get('messages_sent', 0)} sent, {m.get('messages_delivered', 0)} delivered",
        "ingress bytes by layer: " + ", ".join(
            f"{k}={v}" for k, v in sorted(m.get("layer_ingress_bytes", {}).items())),
    ]
    for loop, info in sorted(report.iterations.items()):
        mean = report.mean_latency(loop)
        lat = f"{mean:.1f} ms" if mean is not None else "n/a"
        lines.append(f"loop {loop}: {info['count']} iterations, {info['degraded']} degraded, "
                     f"mean decision latency {lat}")
    kinds: dict[str, int] = {}
    for i in report.insights:
        label = i["kind"] + ("" if i["horizon"] == "current" else f"[{i['horizon']}]")
        kinds[label] = kinds.get(label, 0) + 1
    lines.append("insights: " + (", ".join(f"{k} x{v}" for k, v in sorted(kinds.items())) or "none"))
    lines.append(f"notifications: {len(report.notifications)}, alerts: {len(report.alerts)}")
    for a in report.aggregates:
        lines.append(f"aggregate epoch {a['epoch']} {a['kind']}@{a['region']} by {a['computed_by']}: "
                     f"{a['affected']}/{a['total']} = {a['percentage']:.1f}%")
    return "\n".join(lines)


def render(report: RunReport, fmt: str = "text") -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "text":
        return render_text(report)
    raise UnknownFormat(f"unknown report format {fmt!r} (expected json or text)")


def compare(a: RunReport, b: RunReport) -> dict[str, Any]:
    """Differences between two runs that matter for placement and mode studies."""
    ma, mb = a.mean_latency(), b.mean_latency()
    ingress_a = a.metrics.get("layer_ingress_bytes", {})
    ingress_b = b.metrics.get("layer_ingress_bytes", {})
    return {
        "mean_latency_ms": {"a": ma, "b": mb, "delta": (mb - ma) if ma is not None and mb is not None else None},
        "layer_ingress_bytes": {k: {"a": ingress_a.get(k, 0), "b": ingress_b.get(k, 0),
                                    "delta": ingress_b.get(k, 0) - ingress_a.get(k, 0)}
                                for k in sorted(set(ingress_a) | set(ingress_b))},
        "same_insights": a.insight_sequence() == b.insight_sequence(),
        "same_actions": a.action_sequence() == b.action_sequence(),
        "same_aggregates": a.aggregate_values() == b.aggregate_values(),
        "notifications": {"a": len(a.notifications), "b": len(b.notifications)},
    }


def render_comparison(diff: dict[str, Any]) -> str:
    lat = diff["mean_latency_ms"]
    fmt = lambda v: "n/a" if v is None else f"{v:.1f}"  # noqa: E731
    lines = [f"mean decision latency: a={fmt(lat['a'])} ms b={fmt(lat['b'])} ms delta={fmt(lat['delta'])} ms"]
    for layer, v in diff["layer_ingress_bytes"].items():
        lines.append(f"{layer} ingress: a={v['a']} b={v['b']} delta={v['delta']:+d}")
    lines.append(f"insights identical: {diff['same_insights']}")
    lines.append(f"actions identical: {diff['same_actions']}")
    lines.append(f"aggregates identical: {diff['same_aggregates']}")
    n = diff["notifications"]
    lines.append(f"notifications: a={n['a']} b={n['b']}")
    return "\n".join(lines)

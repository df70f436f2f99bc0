"""Deterministic discrete-event kernel and layered network model.

Time is an integer number of simulated milliseconds. Events run in
``(time, priority, insertion order)`` order; with the default priority this
is plain time-then-FIFO. Messages follow the minimum-latency route through
fog/cloud transit nodes and are delivered as a single event at
``sent_at + path latency``.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable

from .errors import InvalidField, NoRoute, NotFound, TimeTravel


class Layer(str, Enum):
    DEVICE = "device"
    FOG = "fog"
    CLOUD = "cloud"
    APPLICATION = "application"


_ALLOWED = {
    frozenset({Layer.DEVICE, Layer.FOG}),
    frozenset({Layer.FOG}),
    frozenset({Layer.FOG, Layer.CLOUD}),
    frozenset({Layer.CLOUD}),
    frozenset({Layer.FOG, Layer.APPLICATION}),
    frozenset({Layer.CLOUD, Layer.APPLICATION}),
}
_TRANSIT = (Layer.FOG, Layer.CLOUD)


@dataclass(frozen=True)
class Node:
    id: str
    layer: Layer

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer", Layer(self.layer))


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    latency_ms: int = 0
    overhead_bytes: int = 0

    @property
    def key(self) -> str:
        return "--".join(sorted((self.a, self.b)))


@dataclass(frozen=True)
class Route:
    path: tuple[str, ...]
    latency_ms: int
    links: tuple[Link, ...]


def topology_problems(nodes: Iterable[Node], links: Iterable[Link]) -> list[str]:
    """Every structural problem of a node/link set, as messages."""
    errors = []
    layers: dict[str, Layer] = {}
    for n in nodes:
        if n.id in layers:
            errors.append(f"duplicate node id {n.id!r}")
        layers[n.id] = n.layer
    seen = set()
    for link in links:
        missing = [x for x in (link.a, link.b) if x not in layers]
        for x in missing:
            errors.append(f"link {link.a}--{link.b} references unknown node {x!r}")
        if link.latency_ms < 0 or link.overhead_bytes < 0:
            errors.append(f"link {link.key}: latency and overhead must be >= 0")
        if link.a == link.b:
            errors.append(f"link {link.key}: self loop")
        if link.key in seen:
            errors.append(f"duplicate link {link.key}")
        seen.add(link.key)
        if not missing and frozenset({layers[link.a], layers[link.b]}) not in _ALLOWED:
            errors.append(f"link {link.key}: {layers[link.a].value}-{layers[link.b].value} links are not allowed")
    return errors


class Topology:
    def __init__(self, nodes: Iterable[Node], links: Iterable[Link] = ()):
        nodes = list(nodes)
        self.nodes = {n.id: n for n in nodes}
        self.links = tuple(links)
        errors = topology_problems(nodes, self.links)
        if errors:
            raise InvalidField("; ".join(errors))
        self._adj: dict[str, list[tuple[str, Link]]] = {n: [] for n in self.nodes}
        for link in self.links:
            self._adj[link.a].append((link.b, link))
            self._adj[link.b].append((link.a, link))
        for n in self._adj:
            self._adj[n].sort(key=lambda e: e[0])
        self._routes: dict[tuple[str, str], Route] = {}

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NotFound(f"node {node_id!r} not in topology") from None

    def layer(self, node_id: str) -> Layer:
        return self.node(node_id).layer

    def route(self, src: str, dst: str) -> Route:
        """Minimum-latency path; ties go to fewer hops, then lexicographic path.

        Only fog and cloud nodes forward traffic; devices and applications are
        endpoints.
        """
        key = (src, dst)
        if key in self._routes:
            return self._routes[key]
        self.node(src)
        self.node(dst)
        heap: list[tuple[int, int, tuple[str, ...], tuple[Link, ...]]] = [(0, 0, (src,), ())]
        done: set[str] = set()
        found = None
        while heap:
            lat, hops, path, links = heapq.heappop(heap)
            here = path[-1]
            if here in done:
                continue
            done.add(here)
            if here == dst:
                found = Route(path, lat, links)
                break
            if here != src and self.nodes[here].layer not in _TRANSIT:
                continue
            for nxt, link in self._adj[here]:
                if nxt not in done:
                    heapq.heappush(heap, (lat + link.latency_ms, hops + 1, path + (nxt,), links + (link,)))
        if found is None:
            raise NoRoute(f"no route from {src!r} to {dst!r}")
        self._routes[key] = found
        return found

    def has_route(self, src: str, dst: str) -> bool:
        try:
            self.route(src, dst)
        except (NoRoute, NotFound):
            return False
        return True


@dataclass
class Message:
    id: int
    src: str
    dst: str
    kind: str
    payload_size: int
    sent_at: int
    deliver_at: int
    path: tuple[str, ...] = ()
    body: Any = field(default=None, compare=False, repr=False)


@dataclass
class Metrics:
    layer_ingress_bytes: dict[str, int] = field(
        default_factory=lambda: {layer.value: 0 for layer in Layer})
    link_messages: dict[str, int] = field(default_factory=dict)
    messages_sent: int = 0
    messages_delivered: int = 0
    decision_latency_ms: dict[str, list[int]] = field(default_factory=dict)

    def record_delivery(self, topo: Topology, route: Route, msg: Message) -> None:
        self.messages_delivered += 1
        for hop, link in zip(route.path[1:], route.links):
            layer = topo.layer(hop).value
            self.layer_ingress_bytes[layer] += msg.payload_size + link.overhead_bytes
            self.link_messages[link.key] = self.link_messages.get(link.key, 0) + 1

    def add_latency(self, loop: str, sample: int) -> None:
        self.decision_latency_ms.setdefault(loop, []).append(sample)


@dataclass
class Event:
    time: int
    priority: int
    seq: int
    handler: Callable[..., Any]
    args: tuple = ()
    label: str = ""
    cancelled: bool = False


# priorities for same-instant ordering: transport first, then loop activity
PRIO_TRANSPORT = 0
PRIO_LOOP = 1
PRIO_EPOCH = 2

DelayHook = Callable[[Message, int], "int | None"]


class Kernel:
    """Single-threaded event loop that owns simulated time."""

    def __init__(self, topology: Topology | None = None, *, delay_hook: DelayHook | None = None):
        self.topology = topology or Topology([])
        self.now = 0
        self.metrics = Metrics()
        self.event_log: list[str] = []
        self.delivered: list[Message] = []
        self.delay_hook = delay_hook  # loss/jitter; None keeps links reliable
        self._queue: list[tuple[int, int, int, Event]] = []
        self._seq = itertools.count()
        self._msg_ids = itertools.count(1)

    def schedule(self, time: int, handler: Callable[..., Any], *args: Any,
                 priority: int = 0, label: str = "") -> Event:
        if time < self.now:
            raise TimeTravel(f"cannot schedule {label or 'event'} at {time}, clock is {self.now}")
        ev = Event(int(time), priority, next(self._seq), handler, args, label)
        heapq.heappush(self._queue, (ev.time, ev.priority, ev.seq, ev))
        return ev

    def advance(self) -> Event | None:
        """Run the next live event and return it (None when the queue is empty)."""
        while self._queue:
            _, _, _, ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self.now = ev.time
            ev.handler(*ev.args)
            return ev
        return None

    def peek_time(self) -> int | None:
        while self._queue and self._queue[0][3].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None

    def run(self, until: int) -> None:
        while True:
            t = self.peek_time()
            if t is None or t > until:
                return
            self.advance()

    def __len__(self) -> int:
        return sum(1 for *_, ev in self._queue if not ev.cancelled)

    def log(self, node: str, kind: str, details: str = "") -> None:
        self.event_log.append(f"{self.now}|{node}|{kind}|{details}")

    def send(self, src: str, dst: str, kind: str, size: int, body: Any = None,
             on_deliver: Callable[[Message], Any] | None = None) -> Message:
        route = self.topology.route(src, dst)
        latency = route.latency_ms
        msg = Message(next(self._msg_ids), src, dst, kind, int(size), self.now, self.now + latency,
                      route.path, body)
        if self.delay_hook is not None:
            hooked = self.delay_hook(msg, latency)
            if hooked is None:
                self.log(src, "drop", f"msg={msg.id} kind={kind} dst={dst}")
                return msg
            msg.deliver_at = self.now + int(hooked)
        self.metrics.messages_sent += 1
        self.log(src, "send", f"msg={msg.id} kind={kind} dst={dst} bytes={msg.payload_size} due={msg.deliver_at}")
        self.schedule(msg.deliver_at, self._deliver, msg, route, on_deliver,
                      priority=PRIO_TRANSPORT, label=f"deliver:{kind}")
        return msg

    def _deliver(self, msg: Message, route: Route, on_deliver) -> None:
        self.metrics.record_delivery(self.topology, route, msg)
        self.delivered.append(msg)
        self.log(msg.dst, "recv", f"msg={msg.id} kind={msg.kind} src={msg.src}")
        if on_deliver is not None:
            on_deliver(msg)

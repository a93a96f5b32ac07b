"""Deterministic discrete-event network fabric.

Nodes own a single NIC.  Media are either point-to-point links or broadcast
domains (switched segments built from links that share a domain id).  Every
transmission takes exactly one tick; ties are resolved in insertion order,
so a (topology, scenario, seed) triple always yields the same trace.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import ipaddress
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

BROADCAST_HW = "ff:ff:ff:ff:ff:ff"
DEFAULT_MAX_EVENTS = 10000


class SimError(Exception):
    pass


class DuplicateName(SimError):
    pass


class DanglingLink(SimError):
    pass


class LinkNotTappable(SimError):
    pass


class UnknownNode(SimError):
    pass


class NodeKind(str, enum.Enum):
    HOST = "host"
    ROUTER = "router"
    GATEWAY = "gateway"


class Action(str, enum.Enum):
    SEND = "SEND"
    RECV = "RECV"
    DROP = "DROP"
    NOTE = "NOTE"


class Layer(str, enum.Enum):
    LINK = "link"
    INTERNET = "internet"
    TRANSPORT = "transport"
    APPLICATION = "application"


@dataclass(frozen=True)
class NodeId:
    name: str
    kind: NodeKind


@dataclass
class Nic:
    unicast: str
    multicast_set: set = field(default_factory=set)
    promiscuous: bool = False


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    tappable: bool = True
    domain: str | None = None

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.a, self.b)

    @property
    def name(self) -> str:
        return self.domain or f"{self.a}-{self.b}"


@dataclass(frozen=True)
class Frame:
    src_hw: str
    dst_hw: str
    payload: Any

    def render(self) -> str:
        body = self.payload.render() if hasattr(self.payload, "render") else str(self.payload)
        return f"eth {self.src_hw}>{self.dst_hw} | {body}"


def _clean(text: str) -> str:
    return " ".join(text.replace("\t", " ").split("\n")).rstrip()


@dataclass(frozen=True)
class TraceEvent:
    time: int
    node: str
    action: Action
    layer: Layer
    detail: str
    obj: Any = field(default=None, compare=False, repr=False)

    def render(self) -> str:
        return "\t".join([str(self.time), self.node, self.action.value,
                          self.layer.value, _clean(self.detail)])


class Trace(list):
    """Ordered list of TraceEvents."""

    def render(self) -> str:
        return "".join(e.render() + "\n" for e in self)

    def lines(self) -> list[str]:
        return [e.render() for e in self]

    def select(self, node=None, action=None, layer=None, contains=None,
               start: int = 0) -> list[TraceEvent]:
        out = []
        for e in self[start:]:
            if node is not None and e.node != node:
                continue
            if action is not None and e.action != action:
                continue
            if layer is not None and e.layer != layer:
                continue
            if contains is not None and contains not in e.detail:
                continue
            out.append(e)
        return out


def hw_address(name: str) -> str:
    """Locally administered hardware address derived from the node name."""
    raw = hashlib.sha256(name.encode("utf-8")).digest()[:5]
    return "02:" + ":".join(f"{b:02x}" for b in raw)


def frame_accept(nic: Nic, frame: Frame) -> bool:
    return (frame.dst_hw == nic.unicast
            or frame.dst_hw in nic.multicast_set
            or frame.dst_hw == BROADCAST_HW
            or nic.promiscuous)


class Node:
    def __init__(self, name: str, kind: NodeKind, addrs: Iterable[str] = ()):
        self.id = NodeId(name, NodeKind(kind))
        self.nic = Nic(hw_address(name))
        self.addrs = [ipaddress.IPv4Interface(a) for a in addrs]
        self.compromised = False
        self.modem_bypass = False
        self.policy: dict[str, Any] = {}
        self.stack = None
        self.frame_hooks: list[Callable] = []

    @property
    def name(self) -> str:
        return self.id.name

    @property
    def kind(self) -> NodeKind:
        return self.id.kind

    @property
    def ips(self) -> list[ipaddress.IPv4Address]:
        return [a.ip for a in self.addrs]

    def __repr__(self):
        return f"Node({self.name!r}, {self.kind.value})"


class Medium:
    """A point-to-point link or a switched broadcast domain."""

    def __init__(self, name: str, domain: str | None):
        self.name = name
        self.domain = domain
        self.links: list[Link] = []
        self.members: list[str] = []
        self.stations: dict[str, str] = {}
        self.taps: list[TapHandle] = []

    def add_link(self, link: Link) -> None:
        self.links.append(link)
        for m in link.endpoints:
            if m not in self.members:
                self.members.append(m)

    @property
    def tappable(self) -> bool:
        return all(l.tappable for l in self.links)

    def receivers(self, net: Network, sender: str, frame: Frame, flood: bool) -> list[str]:
        others = [m for m in self.members if m != sender]
        if self.domain is None or flood or frame.dst_hw == BROADCAST_HW:
            return others
        if any(frame.dst_hw in net.nodes[m].nic.multicast_set for m in others):
            return others
        owner = self.stations.get(frame.dst_hw)
        return [m for m in others if m == owner or net.nodes[m].nic.promiscuous]


@dataclass
class TapHandle:
    link: Link
    observer: str
    medium: Medium
    capture: list = field(default_factory=list)

    def detach(self) -> None:
        if self in self.medium.taps:
            self.medium.taps.remove(self)


class Scheduler:
    def __init__(self, seed: int = 0, max_events: int = DEFAULT_MAX_EVENTS):
        if max_events <= 0:
            raise ValueError("max_events must be positive")
        self.clock = 0
        self.seed = seed
        self.max_events = max_events
        self.processed = 0
        self._queue: list = []
        self._seq = itertools.count()

    def push(self, time: int, fn: Callable[[], None]) -> None:
        if time < self.clock:
            raise SimError(f"cannot schedule at {time}, clock is {self.clock}")
        heapq.heappush(self._queue, (time, next(self._seq), fn))

    def pop(self):
        time, _, fn = heapq.heappop(self._queue)
        self.clock = time
        self.processed += 1
        return fn

    def peek_time(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    def __len__(self) -> int:
        return len(self._queue)

    def clear(self) -> None:
        self._queue.clear()


class Network:
    def __init__(self, seed: int = 0, max_events: int = DEFAULT_MAX_EVENTS):
        self.nodes: dict[str, Node] = {}
        self.links: list[Link] = []
        self.media: dict[str, Medium] = {}
        self.scheduler = Scheduler(seed, max_events)
        self.trace = Trace()
        self.context: dict[str, Any] = {}

    # -- structure ---------------------------------------------------------
    @property
    def clock(self) -> int:
        return self.scheduler.clock

    @property
    def seed(self) -> int:
        return self.scheduler.seed

    def node(self, name: str) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise UnknownNode(name) from None

    def medium_of(self, link: Link) -> Medium:
        return self.media[link.name]

    def media_of(self, name: str) -> list[Medium]:
        return [m for m in self.media.values() if name in m.members]

    def medium_between(self, a: str, b: str) -> Medium | None:
        for m in self.media.values():
            if a in m.members and b in m.members:
                return m
        return None

    def find_link(self, a: str, b: str) -> Link:
        for l in self.links:
            if {l.a, l.b} == {a, b}:
                return l
        raise SimError(f"no link between {a} and {b}")

    # -- tracing -----------------------------------------------------------
    def emit(self, node: str, action: Action, layer: Layer, detail: str, obj: Any = None) -> TraceEvent:
        ev = TraceEvent(self.clock, node, Action(action), Layer(layer), detail, obj)
        self.trace.append(ev)
        return ev

    # -- transmission ------------------------------------------------------
    def schedule(self, time: int, fn: Callable[[], None]) -> None:
        self.scheduler.push(time, fn)

    def transmit(self, sender: str, medium: Medium, frame: Frame, flood: bool = False,
                 time: int | None = None) -> None:
        self.emit(sender, Action.SEND, Layer.LINK, f"via {medium.name} {frame.render()}", frame)
        when = self.clock + 1 if time is None else time
        self.schedule(when, lambda: self._deliver(sender, medium, frame, flood))

    def inject_frame(self, at: str, frame: Frame, time: int | None = None,
                     medium: Medium | None = None, flood: bool = False) -> None:
        node = self.node(at)
        if medium is None:
            media = self.media_of(node.name)
            if not media:
                raise SimError(f"{at} is not attached to any medium")
            medium = media[0]
        when = self.clock if time is None else time
        if when < self.clock:
            raise SimError("injection time lies in the past")
        self.schedule(when, lambda: self.transmit(at, medium, frame, flood=flood))

    def _deliver(self, sender: str, medium: Medium, frame: Frame, flood: bool) -> None:
        for tap in list(medium.taps):
            tap.capture.append(frame)
            self.emit(tap.observer, Action.NOTE, Layer.LINK,
                      f"capture via {medium.name} {frame.render()}", frame)
        for name in medium.receivers(self, sender, frame, flood):
            node = self.nodes[name]
            if not frame_accept(node.nic, frame):
                if medium.domain is None:
                    self.emit(name, Action.DROP, Layer.LINK, f"hw-filter via {medium.name}", frame)
                continue
            self.emit(name, Action.RECV, Layer.LINK, f"via {medium.name} {frame.render()}", frame)
            self._receive(node, frame, medium)

    def _receive(self, node: Node, frame: Frame, medium: Medium) -> None:
        for hook in list(node.frame_hooks):
            if hook(self, node, frame, medium):
                return
        if node.stack is not None:
            node.stack.input(frame, medium)

    def reprogram(self, name: str, hw: str) -> None:
        """Rewrite a NIC's unicast address; switched domains relearn the station."""
        node = self.node(name)
        node.nic.unicast = hw
        for m in self.media_of(name):
            if m.domain is not None:
                m.stations[hw] = name

    # -- running -----------------------------------------------------------
    def run_until_idle(self, max_events: int | None = None) -> Trace:
        budget = self.scheduler.max_events if max_events is None else max_events
        done = 0
        while len(self.scheduler) and done < budget:
            fn = self.scheduler.pop()
            fn()
            done += 1
        reason = "idle" if not len(self.scheduler) else "budget"
        self.emit("sim", Action.NOTE, Layer.LINK, f"{reason} after {done} events")
        return self.trace

    def run_until(self, tick: int, max_events: int | None = None) -> None:
        budget = self.scheduler.max_events if max_events is None else max_events
        done = 0
        while (len(self.scheduler) and self.scheduler.peek_time() < tick
               and done < budget):
            self.scheduler.pop()()
            done += 1
        if tick > self.scheduler.clock:
            self.scheduler.clock = tick


def attach_tap(net: Network, link: Link, observer: str) -> TapHandle:
    net.node(observer)
    if not link.tappable:
        raise LinkNotTappable(f"{link.name} cannot be tapped")
    medium = net.medium_of(link)
    tap = TapHandle(link, observer, medium)
    medium.taps.append(tap)
    return tap


def _as_node_spec(entry) -> tuple[str, str, list[str], dict]:
    if isinstance(entry, dict):
        return (entry["name"], entry.get("kind", "host"), list(entry.get("addrs", ())),
                {k: v for k, v in entry.items() if k not in ("name", "kind", "addrs")})
    name, kind, *rest = entry
    addrs = list(rest[0]) if rest else []
    return name, kind, addrs, {}


def _as_link_spec(entry) -> tuple[str, str, dict]:
    if isinstance(entry, dict):
        return entry["a"], entry["b"], {k: v for k, v in entry.items() if k not in ("a", "b")}
    a, b, *rest = entry
    return a, b, (dict(rest[0]) if rest else {})


def create_topology(spec: dict) -> Network:
    """Build a Network from a description.

    ``spec`` keys: ``nodes`` (tuples ``(name, kind, [addrs])`` or dicts),
    ``links`` (``(a, b[, opts])``), ``lans`` (``{domain: [members]}`` or
    ``{domain: {"members": [...], "tappable": bool}}``), ``seed``, ``max_events``.
    """
    net = Network(spec.get("seed", 0), spec.get("max_events", DEFAULT_MAX_EVENTS))
    for entry in spec.get("nodes", ()):
        name, kind, addrs, extra = _as_node_spec(entry)
        if name in net.nodes or name == "sim":
            raise DuplicateName(name)
        node = Node(name, kind, addrs)
        node.compromised = bool(extra.get("compromised", False))
        node.modem_bypass = bool(extra.get("modem_bypass", False))
        net.nodes[name] = node

    def add(link: Link) -> None:
        for end in link.endpoints:
            if end not in net.nodes:
                raise DanglingLink(f"link {link.a}-{link.b} references undeclared {end!r}")
        if link.domain is None:
            if link.name in net.media or f"{link.b}-{link.a}" in net.media:
                raise DuplicateName(f"link {link.name}")
            medium = Medium(link.name, None)
            net.media[link.name] = medium
        else:
            medium = net.media.setdefault(link.domain, Medium(link.domain, link.domain))
        net.links.append(link)
        medium.add_link(link)

    for entry in spec.get("links", ()):
        a, b, opts = _as_link_spec(entry)
        add(Link(a, b, bool(opts.get("tappable", True)), opts.get("domain")))
    for domain, desc in spec.get("lans", {}).items():
        if domain in net.media or domain in net.nodes:
            raise DuplicateName(domain)
        members = desc["members"] if isinstance(desc, dict) else desc
        tappable = desc.get("tappable", True) if isinstance(desc, dict) else True
        for m in members:
            if m not in net.nodes:
                raise DanglingLink(f"lan {domain} references undeclared {m!r}")
        if len(members) < 2:
            raise SimError(f"lan {domain} needs at least two members")
        hub = members[0]
        for m in members[1:]:
            add(Link(hub, m, tappable, domain))
    for medium in net.media.values():
        if medium.domain is not None:
            for m in medium.members:
                medium.stations[net.nodes[m].nic.unicast] = m
    return net

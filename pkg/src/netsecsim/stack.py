"""Miniature TCP/IP stack running on top of :mod:`netsecsim.simnet`.

IP forwarding over distance-vector tables, ICMP echo, the UDP echo/chargen/
discard services, TCP with a three-way handshake and a bounded SYN_RECV
queue, and a single caching DNS server.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import ipaddress
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from . import simnet
from .simnet import BROADCAST_HW, Action, Frame, Layer, Medium, Network, NodeKind, SimError
from .symcrypto import render
from .wire import wire_type

ICMP, IPIP, TCP, UDP, ESP, AH = 1, 4, 6, 17, 50, 51
PROTO_NAMES = {ICMP: "ICMP", IPIP: "IPIP", TCP: "TCP", UDP: "UDP", ESP: "ESP", AH: "AH"}
ECHO_REQUEST, ECHO_REPLY = 8, 0
ECHO_PORT, DISCARD_PORT, CHARGEN_PORT, DNS_PORT, ROUTING_PORT = 7, 9, 19, 53, 520
RESOLVER_PORT = 5300
DEFAULT_TTL = 64
SEQ_MOD = 2 ** 32

PRIVATE_NETS = [ipaddress.IPv4Network(n) for n in ("10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16")]


class StackError(SimError):
    pass


class NotNeighbor(StackError):
    pass


class ServiceDisabled(StackError):
    pass


class NoListener(StackError):
    def __init__(self, msg, conn=None):
        super().__init__(msg)
        self.conn = conn


class NotEstablished(StackError):
    pass


class NameNotFound(StackError):
    pass


def ip(value) -> ipaddress.IPv4Address:
    return ipaddress.IPv4Address(str(value).split("/")[0])


def scope(addr) -> str:
    """'private' for RFC 1918 space, otherwise 'public'."""
    a = ip(addr)
    return "private" if any(a in n for n in PRIVATE_NETS) else "public"


def _quote_data(data: Any, limit: int = 24) -> str:
    if isinstance(data, (bytes, bytearray)):
        data = bytes(data)
        shown = render(data[:limit])
        return shown + ("+" if len(data) > limit else "")
    return render(data)


# -- wire units --------------------------------------------------------------

@wire_type
@dataclass(frozen=True)
class TcpSegment:
    src_port: int
    dst_port: int
    seq: int
    ack: int
    flags: frozenset
    advertised_window: int = 4096
    data: bytes = b""

    def render(self) -> str:
        flags = "|".join(f for f in ("SYN", "FIN", "RST", "ACK") if f in self.flags) or "-"
        out = (f"tcp {self.src_port}>{self.dst_port} seq={self.seq} ack={self.ack} "
               f"flags={flags} win={self.advertised_window} len={len(self.data)}")
        if self.data:
            out += f" data={_quote_data(self.data)}"
        return out


@wire_type
@dataclass(frozen=True)
class UdpMessage:
    src_port: int
    dst_port: int
    data: Any = b""

    def render(self) -> str:
        size = len(self.data) if isinstance(self.data, (bytes, bytearray)) else "-"
        return f"udp {self.src_port}>{self.dst_port} len={size} data={_quote_data(self.data)}"


@wire_type
@dataclass(frozen=True)
class IcmpMessage:
    type: int
    ident: int = 0
    seq: int = 0
    data: bytes = b""

    def render(self) -> str:
        return f"icmp type={self.type} id={self.ident} seq={self.seq}"


@wire_type
@dataclass(frozen=True)
class DnsQuery:
    name: str
    qid: int

    def render(self) -> str:
        return f"dns-query id={self.qid} {self.name}"


@wire_type
@dataclass(frozen=True)
class DnsAnswer:
    name: str
    address: str | None
    ttl: int
    qid: int

    def render(self) -> str:
        return f"dns-answer id={self.qid} {self.name}={self.address or 'NXDOMAIN'} ttl={self.ttl}"


@wire_type
@dataclass(frozen=True)
class RouteAdvert:
    entries: tuple

    def render(self) -> str:
        return "rip " + " ".join(f"{p}:{c}" for p, c in self.entries)


@wire_type
@dataclass(frozen=True)
class IpDatagram:
    src_ip: ipaddress.IPv4Address
    dst_ip: ipaddress.IPv4Address
    protocol: int
    ttl: int
    payload: Any

    def render(self) -> str:
        return (f"ip {self.src_ip}>{self.dst_ip} proto={self.protocol} ttl={self.ttl} | "
                f"{render(self.payload)}")


def datagram(src, dst, protocol: int, payload, ttl: int = DEFAULT_TTL) -> IpDatagram:
    return IpDatagram(ip(src), ip(dst), protocol, ttl, payload)


# -- routing -----------------------------------------------------------------

@dataclass
class Route:
    next_hop: str
    cost: int


@dataclass
class RouteTable:
    entries: dict = field(default_factory=dict)

    def lookup(self, addr) -> tuple[ipaddress.IPv4Network, Route] | None:
        a = ip(addr)
        best = None
        for prefix, route in self.entries.items():
            if a in prefix:
                rank = (route.cost, -prefix.prefixlen)
                if best is None or rank < best[0]:
                    best = (rank, prefix, route)
        return None if best is None else (best[1], best[2])

    def relax(self, frm: str, advertised) -> list:
        adopted = []
        for prefix, cost in advertised:
            prefix = ipaddress.IPv4Network(prefix)
            offer = cost + 1
            current = self.entries.get(prefix)
            if current is None or offer < current.cost:
                self.entries[prefix] = Route(frm, offer)
                adopted.append((prefix, offer))
        return adopted

    def snapshot(self) -> dict:
        return {p: (r.next_hop, r.cost) for p, r in self.entries.items()}


# -- SYN_RECV queue ----------------------------------------------------------

class Admission(str, enum.Enum):
    ADMITTED = "Admitted"
    DISCARDED = "Discarded"


@dataclass(frozen=True)
class SynRecvQueue:
    capacity: int = 8
    timeout: int = 8
    entries: tuple = ()

    def __post_init__(self):
        if self.capacity <= 0 or self.timeout <= 0:
            raise ValueError("capacity and timeout must be positive")

    def purge(self, now: int) -> SynRecvQueue:
        return replace(self, entries=tuple(e for e in self.entries if now - e[1] <= self.timeout))

    def remove(self, quad) -> SynRecvQueue:
        return replace(self, entries=tuple(e for e in self.entries if e[0] != quad))

    def __len__(self) -> int:
        return len(self.entries)


def syn_queue_admit(q: SynRecvQueue, syn, now: int) -> tuple[Admission, SynRecvQueue]:
    live = q.purge(now)
    if len(live.entries) < live.capacity:
        return Admission.ADMITTED, replace(live, entries=live.entries + ((syn, now),))
    return Admission.DISCARDED, live


# -- DNS ---------------------------------------------------------------------

@dataclass
class DnsCache:
    entries: dict = field(default_factory=dict)

    def lookup(self, name: str, now: int):
        hit = self.entries.get(name)
        if hit is None or hit[1] < now:
            return None
        return hit[0]

    def install(self, name: str, addr, expiry: int) -> None:
        self.entries[name] = (ip(addr), expiry)


@dataclass
class DnsServer:
    authority: dict = field(default_factory=dict)
    cache: DnsCache = field(default_factory=DnsCache)
    default_ttl: int = 50
    accept_unsolicited: bool = True


def dns_resolve(server: DnsServer, name: str, now: int) -> ipaddress.IPv4Address:
    hit = server.cache.lookup(name, now)
    if hit is not None:
        return hit
    if name not in server.authority:
        raise NameNotFound(name)
    addr = ip(server.authority[name])
    server.cache.install(name, addr, now + server.default_ttl)
    return addr


# -- services ----------------------------------------------------------------

CHARGEN_MULTIPLIER = 131
CHARGEN_PERIOD = 513


def chargen_length(counter: int) -> int:
    return (counter * CHARGEN_MULTIPLIER) % CHARGEN_PERIOD


def chargen_payload(counter: int) -> bytes:
    n = chargen_length(counter)
    return bytes(32 + ((counter + i) % 95) for i in range(n))


def _hash_int(*parts, bits: int = 32) -> int:
    raw = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(raw[:8], "big") % (2 ** bits)


def initial_sequence_number(seed: int, host: str, counter: int) -> int:
    return _hash_int(seed, host, "isn", counter)


def udp_service_echo(host: IpStack, dgram: IpDatagram) -> IpDatagram:
    if not host.services.get("echo"):
        raise ServiceDisabled(f"echo disabled on {host.node.name}")
    msg = dgram.payload
    return datagram(dgram.dst_ip, dgram.src_ip, UDP, UdpMessage(ECHO_PORT, msg.src_port, msg.data))


def udp_service_chargen(host: IpStack, dgram: IpDatagram) -> IpDatagram:
    if not host.services.get("chargen"):
        raise ServiceDisabled(f"chargen disabled on {host.node.name}")
    msg = dgram.payload
    data = chargen_payload(host.chargen_counter)
    host.chargen_counter += 1
    return datagram(dgram.dst_ip, dgram.src_ip, UDP, UdpMessage(CHARGEN_PORT, msg.src_port, data))


def tcp_chargen_listen(host: IpStack) -> None:
    """TCP chargen on port 19: each inbound data segment is answered with one
    character block until the peer sends FIN. No attack uses it."""
    if not host.services.get("chargen"):
        raise ServiceDisabled(f"chargen disabled on {host.node.name}")

    def on_data(conn, _data):
        if conn.state is not TcpState.ESTABLISHED:
            return
        block = chargen_payload(host.chargen_counter)
        host.chargen_counter += 1
        host.tcp.send_data(conn, block)

    host.tcp.listen(CHARGEN_PORT, on_data)


# -- TCP ---------------------------------------------------------------------

class TcpState(str, enum.Enum):
    CLOSED = "CLOSED"
    SYN_SENT = "SYN_SENT"
    SYN_RECV = "SYN_RECV"
    ESTABLISHED = "ESTABLISHED"
    CLOSING = "CLOSING"


def seq_add(a: int, n: int) -> int:
    return (a + n) % SEQ_MOD


def seq_le(a: int, b: int) -> bool:
    return (b - a) % SEQ_MOD < 2 ** 31


@dataclass
class TcpConn:
    quadruple: tuple
    state: TcpState
    snd_nxt: int = 0
    rcv_nxt: int = 0
    resync_count: int = 0
    role: str = "client"
    iss: int = 0
    irs: int = 0
    storm_threshold: int = 5
    received: bytearray = field(default_factory=bytearray)
    on_data: Callable | None = field(default=None, repr=False)

    @property
    def local(self):
        c_ip, c_port, s_ip, s_port = self.quadruple
        return (c_ip, c_port) if self.role == "client" else (s_ip, s_port)

    @property
    def remote(self):
        c_ip, c_port, s_ip, s_port = self.quadruple
        return (s_ip, s_port) if self.role == "client" else (c_ip, c_port)


class TcpStack:
    def __init__(self, host: IpStack):
        self.host = host
        self.listeners: dict[int, Callable | None] = {}
        self.conns: dict[tuple, TcpConn] = {}
        self.syn_queue = SynRecvQueue()
        self.storm_threshold = 5
        self.window = 4096
        self._isn_counter = 0
        self._next_port = 1024
        self.fixed_isn: list[int] = []

    @property
    def net(self) -> Network:
        return self.host.net

    def _isn(self) -> int:
        if self.fixed_isn:
            return self.fixed_isn.pop(0) % SEQ_MOD
        self._isn_counter += 1
        return initial_sequence_number(self.net.seed, self.host.node.name, self._isn_counter)

    def listen(self, port: int, on_data: Callable | None = None) -> None:
        self.listeners[port] = on_data

    def _key(self, conn: TcpConn):
        return conn.local + conn.remote

    def _emit(self, local_ip, remote_ip, seg: TcpSegment, tag: str = "") -> None:
        dgram = datagram(local_ip, remote_ip, TCP, seg)
        self.host.send(dgram, tag=tag)

    def _send_seg(self, conn: TcpConn, flags, seq=None, data=b"", tag="") -> None:
        seg = TcpSegment(conn.local[1], conn.remote[1], conn.snd_nxt if seq is None else seq,
                         conn.rcv_nxt, frozenset(flags), self.window, data)
        self._emit(conn.local[0], conn.remote[0], seg, tag)

    def connect(self, dst_ip, dst_port: int, src_port: int | None = None, src_ip=None,
                on_data: Callable | None = None) -> TcpConn:
        dst_ip = ip(dst_ip)
        src_ip = ip(src_ip) if src_ip is not None else self.host.source_for(dst_ip)
        if src_port is None:
            self._next_port += 1
            src_port = self._next_port
        x = self._isn()
        conn = TcpConn((src_ip, src_port, dst_ip, dst_port), TcpState.SYN_SENT,
                       snd_nxt=seq_add(x, 1), role="client", iss=x,
                       storm_threshold=self.storm_threshold, on_data=on_data)
        self.conns[self._key(conn)] = conn
        self._send_seg(conn, {"SYN"}, seq=x)
        return conn

    def send_data(self, conn: TcpConn, data: bytes) -> None:
        if conn.state is not TcpState.ESTABLISHED:
            raise NotEstablished(f"connection is {conn.state.value}")
        if not data:
            return
        self._send_seg(conn, {"ACK"}, data=data)
        conn.snd_nxt = seq_add(conn.snd_nxt, len(data))

    def close(self, conn: TcpConn) -> None:
        if conn.state is TcpState.ESTABLISHED:
            self._send_seg(conn, {"FIN", "ACK"})
            conn.snd_nxt = seq_add(conn.snd_nxt, 1)
            conn.state = TcpState.CLOSING

    def _note(self, text: str) -> None:
        self.net.emit(self.host.node.name, Action.NOTE, Layer.TRANSPORT, text)

    def _drop(self, reason: str, obj=None) -> None:
        self.net.emit(self.host.node.name, Action.DROP, Layer.TRANSPORT, reason, obj)

    def _admit(self, dgram: IpDatagram, seg: TcpSegment) -> None:
        quad = (dgram.src_ip, seg.src_port, dgram.dst_ip, seg.dst_port)
        before = {e[0] for e in self.syn_queue.entries}
        verdict, self.syn_queue = syn_queue_admit(self.syn_queue, quad, self.net.clock)
        after = {e[0] for e in self.syn_queue.entries}
        for gone in before - after:
            key = (gone[2], gone[3], gone[0], gone[1])
            stale = self.conns.get(key)
            if stale is not None and stale.state is TcpState.SYN_RECV:
                del self.conns[key]
        self._note(f"synq {verdict.value} {quad[0]}:{quad[1]} "
                   f"len={len(self.syn_queue)}/{self.syn_queue.capacity}")
        if verdict is Admission.DISCARDED:
            self._drop(f"syn-queue-full {quad[0]}:{quad[1]}", dgram)
            return
        y = self._isn()
        conn = TcpConn(quad, TcpState.SYN_RECV, snd_nxt=seq_add(y, 1), rcv_nxt=seq_add(seg.seq, 1),
                       role="server", iss=y, irs=seg.seq, storm_threshold=self.storm_threshold,
                       on_data=self.listeners.get(seg.dst_port))
        self.conns[self._key(conn)] = conn
        self._send_seg(conn, {"SYN", "ACK"}, seq=y)

    def _desync(self, conn: TcpConn, tag: str) -> None:
        if conn.role == "client":
            if conn.resync_count >= conn.storm_threshold:
                conn.state = TcpState.CLOSED
                self._note(f"close {conn.local[0]}:{conn.local[1]} resync-exhausted "
                           f"after {conn.resync_count} attempts")
                return
            conn.resync_count += 1
        self._send_seg(conn, {"ACK"}, tag=tag)

    def input(self, dgram: IpDatagram) -> None:
        seg = dgram.payload
        node = self.host.node.name
        self.net.emit(node, Action.RECV, Layer.TRANSPORT, dgram.render(), dgram)
        key = (dgram.dst_ip, seg.dst_port, dgram.src_ip, seg.src_port)
        conn = self.conns.get(key)
        if "RST" in seg.flags:
            if conn is not None:
                conn.state = TcpState.CLOSED
                self.syn_queue = self.syn_queue.remove(conn.quadruple)
                self._note(f"reset {key[2]}:{key[3]}")
            return
        if conn is None:
            if "SYN" in seg.flags and "ACK" not in seg.flags:
                if seg.dst_port not in self.listeners:
                    rst = TcpSegment(seg.dst_port, seg.src_port, 0, seq_add(seg.seq, 1),
                                     frozenset({"RST", "ACK"}), 0)
                    self._emit(dgram.dst_ip, dgram.src_ip, rst)
                    return
                self._admit(dgram, seg)
                return
            self._drop("no-connection", dgram)
            return
        if conn.state is TcpState.CLOSED:
            self._drop("closed", dgram)
            return
        if conn.state is TcpState.SYN_SENT:
            if {"SYN", "ACK"} <= seg.flags and seg.ack == conn.snd_nxt:
                conn.irs = seg.seq
                conn.rcv_nxt = seq_add(seg.seq, 1)
                conn.state = TcpState.ESTABLISHED
                self._send_seg(conn, {"ACK"})
                self._note(f"established {conn.local[0]}:{conn.local[1]}")
            else:
                self._drop("bad-synack", dgram)
            return
        if conn.state is TcpState.SYN_RECV:
            if "ACK" in seg.flags and seg.ack == conn.snd_nxt and seg.seq == conn.rcv_nxt:
                conn.state = TcpState.ESTABLISHED
                self.syn_queue = self.syn_queue.remove(conn.quadruple)
                self._note(f"established {conn.local[0]}:{conn.local[1]}")
                if seg.data:
                    self._accept_data(conn, seg)
            else:
                self._drop("bad-handshake-ack", dgram)
            return
        # ESTABLISHED / CLOSING
        if "SYN" in seg.flags:
            self._drop("unexpected-syn", dgram)
            return
        if "ACK" in seg.flags and not seq_le(seg.ack, conn.snd_nxt):
            # acknowledges bytes this end never sent
            self._desync(conn, "[resync]")
            return
        if seg.seq != conn.rcv_nxt:
            self._desync(conn, "[dup-ack]")
            return
        if seg.data:
            self._accept_data(conn, seg)
        if "FIN" in seg.flags:
            conn.rcv_nxt = seq_add(conn.rcv_nxt, 1)
            conn.state = TcpState.CLOSED if conn.state is TcpState.CLOSING else TcpState.CLOSING
            self._send_seg(conn, {"ACK"})

    def _accept_data(self, conn: TcpConn, seg: TcpSegment) -> None:
        conn.rcv_nxt = seq_add(conn.rcv_nxt, len(seg.data))
        conn.received += seg.data
        self.net.emit(self.host.node.name, Action.RECV, Layer.APPLICATION,
                      f"tcp data from {conn.remote[0]}:{conn.remote[1]} {_quote_data(seg.data, 64)}",
                      seg.data)
        if conn.on_data is not None:
            conn.on_data(conn, seg.data)
        self._send_seg(conn, {"ACK"})


# -- IP ----------------------------------------------------------------------

class IpStack:
    """Per-node internet layer plus transport dispatch."""

    def __init__(self, net: Network, node: simnet.Node):
        self.net = net
        self.node = node
        self.routes = RouteTable()
        self.attached: dict[ipaddress.IPv4Network, Medium] = {}
        self.services = {"echo": False, "chargen": False}
        self.chargen_counter = _hash_int(net.seed, node.name, "chargen") % CHARGEN_PERIOD
        self.udp: dict[int, Callable] = {}
        self.tcp = TcpStack(self)
        self.dns: DnsServer | None = None
        self.ipsec = None
        self.tunnel = None
        self.firewall = None
        self.personal = None
        self.forward_hooks: list[Callable] = []
        self.directed_broadcast = True
        self.broadcast_echo = True
        self.poisoned = False
        self.blackhole = False
        self.forwarding = node.kind is not NodeKind.HOST or node.modem_bypass
        self.resolved: list = []

    @property
    def name(self) -> str:
        return self.node.name

    @property
    def routing(self) -> bool:
        return self.node.kind is not NodeKind.HOST

    def owns(self, addr) -> bool:
        return ip(addr) in self.node.ips

    def source_for(self, dst) -> ipaddress.IPv4Address:
        found = self.routes.lookup(dst)
        if found is not None:
            prefix, route = found
            if route.next_hop == self.name:
                for a in self.node.addrs:
                    if a.network == prefix:
                        return a.ip
            else:
                medium = self.net.medium_between(self.name, route.next_hop)
                for a in self.node.addrs:
                    if self.attached.get(a.network) is medium:
                        return a.ip
        if not self.node.addrs:
            raise StackError(f"{self.name} has no address")
        return self.node.addrs[0].ip

    def _broadcast_net(self, addr) -> ipaddress.IPv4Network | None:
        a = ip(addr)
        for net_ in self.attached:
            if net_.prefixlen < 31 and a == net_.broadcast_address:
                return net_
        return None

    def _drop(self, reason: str, dgram=None, layer=Layer.INTERNET) -> None:
        self.net.emit(self.name, Action.DROP, layer, reason, dgram)

    def _note(self, text: str, layer=Layer.INTERNET) -> None:
        self.net.emit(self.name, Action.NOTE, layer, text)

    # -- output ------------------------------------------------------------
    def send(self, dgram: IpDatagram, tag: str = "") -> None:
        layer = Layer.TRANSPORT if dgram.protocol in (TCP, UDP) else Layer.INTERNET
        detail = dgram.render() + (f" {tag}" if tag else "")
        self.net.emit(self.name, Action.SEND, layer, detail, dgram)
        if self.ipsec is not None:
            dgram = self.ipsec.outbound(dgram)
            if dgram is None:
                return
        if self.tunnel is not None:
            dgram = self.tunnel.encap(dgram)
        self.route_out(dgram)

    def route_out(self, dgram: IpDatagram, flood: bool = False) -> None:
        bnet = self._broadcast_net(dgram.dst_ip)
        if bnet is not None:
            medium = self.attached[bnet]
            self.net.transmit(self.name, medium, Frame(self.node.nic.unicast, BROADCAST_HW, dgram))
            return
        found = self.routes.lookup(dgram.dst_ip)
        if found is None:
            self._drop(f"no-route {dgram.dst_ip}", dgram)
            return
        prefix, route = found
        if route.next_hop == self.name:
            medium = self.attached.get(prefix)
            owner = self.net.context["ip_owner"].get(dgram.dst_ip)
            if medium is None or owner is None or owner not in medium.members:
                self._drop(f"host-unreachable {dgram.dst_ip}", dgram)
                return
            target = owner
        else:
            target = route.next_hop
            medium = self.net.medium_between(self.name, target)
            if medium is None:
                self._drop(f"next-hop-unreachable {target}", dgram)
                return
        dst_hw = self.net.context["arp"][target]
        self.net.transmit(self.name, medium, Frame(self.node.nic.unicast, dst_hw, dgram), flood=flood)

    # -- input -------------------------------------------------------------
    def input(self, frame: Frame, medium: Medium) -> None:
        dgram = frame.payload
        if not isinstance(dgram, IpDatagram):
            self._drop("not-ip", frame, Layer.LINK)
            return
        if self.owns(dgram.dst_ip):
            self.local(dgram, broadcast=False)
            return
        bnet = self._broadcast_net(dgram.dst_ip)
        if bnet is not None:
            if frame.dst_hw == BROADCAST_HW or not self.forwarding:
                self.local(dgram, broadcast=True)
                return
            if not self.directed_broadcast:
                self._drop(f"directed-broadcast {dgram.dst_ip}", dgram)
                return
            if dgram.ttl <= 1:
                self._drop("ttl", dgram)
                return
            out = replace(dgram, ttl=dgram.ttl - 1)
            self.net.transmit(self.name, self.attached[bnet],
                              Frame(self.node.nic.unicast, BROADCAST_HW, out))
            return
        if self.forwarding:
            self.forward(dgram, medium)
            return
        self._drop(f"not-for-me {dgram.dst_ip}", dgram)

    def forward(self, dgram: IpDatagram, medium: Medium | None = None) -> None:
        if self.firewall is not None and not self.firewall.inspect(self, dgram, medium):
            return
        for hook in list(self.forward_hooks):
            dgram = hook(self, dgram)
            if dgram is None:
                return
        if self.blackhole:
            self._drop(f"blackhole {dgram.src_ip}>{dgram.dst_ip}", dgram)
            return
        if dgram.ttl <= 1:
            self._drop("ttl", dgram)
            return
        dgram = replace(dgram, ttl=dgram.ttl - 1)
        if self.tunnel is not None:
            dgram = self.tunnel.encap(dgram)
        self.route_out(dgram)

    def local(self, dgram: IpDatagram, broadcast: bool) -> None:
        if dgram.protocol in (AH, ESP):
            if self.ipsec is None:
                self._drop(f"no-sadb proto={dgram.protocol}", dgram)
                return
            dgram = self.ipsec.inbound(dgram)
            if dgram is None:
                return
        elif self.ipsec is not None and self.ipsec.requires(dgram):
            self._drop(f"ipsec-required {dgram.src_ip}", dgram)
            return
        if dgram.protocol == IPIP:
            if self.tunnel is None:
                self._drop("no-tunnel", dgram)
                return
            inner = self.tunnel.decap(dgram)
            if inner is None:
                return
            if self.owns(inner.dst_ip):
                self.local(inner, broadcast=False)
            else:
                self.route_out(inner)
            return
        if self.personal is not None and not self.personal.screen(self, dgram, "ingress"):
            return
        if dgram.protocol == ICMP:
            self._icmp(dgram, broadcast)
        elif dgram.protocol == TCP:
            self.tcp.input(dgram)
        elif dgram.protocol == UDP:
            self._udp(dgram, broadcast)
        else:
            self._drop(f"unknown-protocol {dgram.protocol}", dgram)

    def _icmp(self, dgram: IpDatagram, broadcast: bool) -> None:
        msg = dgram.payload
        if msg.type == ECHO_REQUEST:
            if broadcast and not self.broadcast_echo:
                self._drop(f"broadcast-echo from {dgram.src_ip}", dgram)
                return
            self.net.emit(self.name, Action.RECV, Layer.INTERNET, dgram.render(), dgram)
            src = dgram.dst_ip
            if broadcast:
                bnet = self._broadcast_net(dgram.dst_ip)
                src = next((a.ip for a in self.node.addrs if a.network == bnet), self.node.addrs[0].ip)
            reply = datagram(src, dgram.src_ip, ICMP, IcmpMessage(ECHO_REPLY, msg.ident, msg.seq, msg.data))
            self.send(reply)
        elif msg.type == ECHO_REPLY:
            self.net.emit(self.name, Action.RECV, Layer.INTERNET, dgram.render(), dgram)
        else:
            self._drop(f"icmp-type {msg.type}", dgram)

    def _udp(self, dgram: IpDatagram, broadcast: bool) -> None:
        msg = dgram.payload
        self.net.emit(self.name, Action.RECV, Layer.TRANSPORT, dgram.render(), dgram)
        handler = self.udp.get(msg.dst_port)
        if handler is not None:
            handler(self, dgram)
            return
        if msg.dst_port == ECHO_PORT:
            service = udp_service_echo
        elif msg.dst_port == CHARGEN_PORT:
            service = udp_service_chargen
        elif msg.dst_port == DISCARD_PORT:
            return
        elif msg.dst_port == DNS_PORT and self.dns is not None:
            self._dns(dgram)
            return
        elif msg.dst_port == ROUTING_PORT and self.routing:
            self._route_advert(dgram)
            return
        else:
            self._drop(f"port-unreachable {msg.dst_port}", dgram, Layer.TRANSPORT)
            return
        try:
            reply = service(self, dgram)
        except ServiceDisabled:
            self._drop(f"service-disabled port={msg.dst_port}", dgram, Layer.TRANSPORT)
            return
        self.send(reply)

    # -- DNS ---------------------------------------------------------------
    def _dns(self, dgram: IpDatagram) -> None:
        msg = dgram.payload
        body = msg.data
        if isinstance(body, DnsQuery):
            try:
                addr = str(dns_resolve(self.dns, body.name, self.net.clock))
            except NameNotFound:
                addr = None
            entry = self.dns.cache.entries.get(body.name)
            ttl = max(0, entry[1] - self.net.clock) if entry and addr else 0
            answer = DnsAnswer(body.name, addr, ttl, body.qid)
            self.send(datagram(dgram.dst_ip, dgram.src_ip, UDP, UdpMessage(DNS_PORT, msg.src_port, answer)))
        elif isinstance(body, DnsAnswer):
            if self.dns.accept_unsolicited and body.address is not None:
                expiry = self.net.clock + body.ttl
                self.dns.cache.install(body.name, body.address, expiry)
                self._note(f"dns cache install {body.name}={body.address} expiry={expiry}",
                           Layer.APPLICATION)
            else:
                self._drop("dns-unsolicited", dgram, Layer.APPLICATION)

    def _resolver(self, _stack, dgram: IpDatagram) -> None:
        answer = dgram.payload.data
        self.resolved.append((self.net.clock, answer))
        self.net.emit(self.name, Action.RECV, Layer.APPLICATION,
                      f"dns answer {answer.name}={answer.address or 'NXDOMAIN'}", answer)

    def query(self, server_ip, name: str, qid: int = 1) -> None:
        self.udp[RESOLVER_PORT] = self._resolver
        q = datagram(self.source_for(server_ip), server_ip, UDP,
                     UdpMessage(RESOLVER_PORT, DNS_PORT, DnsQuery(name, qid)))
        self.send(q)

    # -- dynamic routing ---------------------------------------------------
    def advertisement(self, medium: Medium) -> list:
        public_medium = all(scope(n.network_address) == "public"
                            for n, m in self.attached.items() if m is medium)
        out = []
        for prefix, route in sorted(self.routes.entries.items(), key=lambda kv: str(kv[0])):
            if prefix.prefixlen == 0:
                continue
            if public_medium and scope(prefix.network_address) == "private":
                continue
            out.append((str(prefix), 0 if self.poisoned else route.cost))
        return out

    def advertise(self) -> None:
        for nbr, medium in neighbors(self.net, self.name):
            nbr_ip = neighbor_address(self.net, nbr, medium)
            my_ip = neighbor_address(self.net, self.name, medium)
            advert = RouteAdvert(tuple(self.advertisement(medium)))
            self.send(datagram(my_ip, nbr_ip, UDP, UdpMessage(ROUTING_PORT, ROUTING_PORT, advert), ttl=1))

    def _route_advert(self, dgram: IpDatagram) -> None:
        frm = self.net.context["ip_owner"].get(dgram.src_ip)
        try:
            adopted = route_update(self.net, self.name, frm, dgram.payload.data.entries, emit=True)
        except NotNeighbor:
            self._drop(f"route-update from non-neighbor {dgram.src_ip}", dgram)
            return
        if adopted:
            self.advertise()


# -- topology helpers --------------------------------------------------------

def neighbors(net: Network, name: str) -> list[tuple[str, Medium]]:
    out = []
    for medium in net.media_of(name):
        for m in medium.members:
            if m != name and net.nodes[m].kind is not NodeKind.HOST:
                out.append((m, medium))
    return out


def neighbor_address(net: Network, name: str, medium: Medium) -> ipaddress.IPv4Address:
    stack = net.nodes[name].stack
    for prefix, m in stack.attached.items():
        if m is medium:
            for a in net.nodes[name].addrs:
                if a.network == prefix:
                    return a.ip
    return net.nodes[name].addrs[0].ip


def route_update(net: Network, router: str, frm: str | None, advertised, emit: bool = False):
    """Distance-vector relax of ``router``'s table with an advert from ``frm``.

    Returns the list of adopted ``(prefix, cost)`` entries; the table is updated in place.
    """
    node = net.node(router)
    if frm is None or not any(n == frm for n, _ in neighbors(net, router)):
        raise NotNeighbor(f"{frm} is not a neighbor of {router}")
    adopted = node.stack.routes.relax(frm, advertised)
    if emit:
        for prefix, cost in adopted:
            net.emit(router, Action.NOTE, Layer.INTERNET, f"route adopt {prefix} via {frm} cost={cost}")
    return adopted


def converge_routes(net: Network, max_rounds: int = 64) -> int:
    """Synchronous distance-vector rounds until no table changes; returns rounds run."""
    routers = [n for n in net.nodes.values() if n.kind is not NodeKind.HOST]
    for rounds in range(1, max_rounds + 1):
        adverts = {}
        for r in routers:
            for nbr, medium in neighbors(net, r.name):
                adverts[(nbr, r.name)] = r.stack.advertisement(medium)
        changed = False
        for r in routers:
            for nbr, _ in neighbors(net, r.name):
                if r.stack.routes.relax(nbr, adverts[(r.name, nbr)]):
                    changed = True
        if not changed:
            return rounds
    raise StackError("routing did not converge")


def _default_gateway(net: Network, host: simnet.Node):
    for a in host.addrs:
        for medium in net.media_of(host.name):
            for m in medium.members:
                other = net.nodes[m]
                if m == host.name or other.kind is NodeKind.HOST:
                    continue
                if any(b.network == a.network for b in other.addrs):
                    return m
    return None


def set_default_route(net: Network, host: str, gateway: str, cost: int = 1) -> None:
    net.node(host).stack.routes.entries[ipaddress.IPv4Network("0.0.0.0/0")] = Route(gateway, cost)


def add_route(net: Network, node: str, prefix: str, via: str, cost: int = 1) -> None:
    """Install a static route on ``node`` for ``prefix`` through neighbor ``via``."""
    net.node(node).stack.routes.entries[ipaddress.IPv4Network(prefix, strict=False)] = Route(via, cost)


def boot(net: Network) -> Network:
    """Install an IpStack on every node, fill ARP/ownership maps and converge routes."""
    net.context["arp"] = {n.name: n.nic.unicast for n in net.nodes.values()}
    owners = {}
    for n in net.nodes.values():
        for a in n.ips:
            if a in owners:
                raise simnet.DuplicateName(f"address {a} on {owners[a]} and {n.name}")
            owners[a] = n.name
    net.context["ip_owner"] = owners
    for n in net.nodes.values():
        n.stack = IpStack(net, n)
    for n in net.nodes.values():
        media = net.media_of(n.name)
        for a in n.addrs:
            chosen = None
            for medium in media:
                if any(b.network == a.network for m in medium.members if m != n.name
                       for b in net.nodes[m].addrs):
                    chosen = medium
                    break
            if chosen is None and len(media) == 1:
                chosen = media[0]
            if chosen is not None:
                n.stack.attached[a.network] = chosen
                n.stack.routes.entries[a.network] = Route(n.name, 0)
    for n in net.nodes.values():
        if n.kind is NodeKind.HOST:
            gw = _default_gateway(net, n)
            if gw is not None:
                set_default_route(net, n.name, gw)
    net.context["convergence_rounds"] = converge_routes(net)
    return net


def build(spec: dict) -> Network:
    return boot(simnet.create_topology(spec))


def net_path(net: Network, src: str, dst) -> list[str]:
    """Nodes visited by a datagram from ``src`` to ``dst`` following current tables."""
    dst = ip(dst)
    path = [src]
    current = net.node(src).stack
    for _ in range(64):
        if current.owns(dst):
            return path
        found = current.routes.lookup(dst)
        if found is None:
            return path
        prefix, route = found
        nxt = net.context["ip_owner"].get(dst) if route.next_hop == current.name else route.next_hop
        if nxt is None:
            return path
        path.append(nxt)
        if nxt == net.context["ip_owner"].get(dst):
            return path
        current = net.nodes[nxt].stack
    raise StackError("routing loop")


def hops(net: Network, src: str, dst) -> int:
    return len(net_path(net, src, dst)) - 1


def primary_ip(net: Network, name: str) -> ipaddress.IPv4Address:
    return net.node(name).addrs[0].ip


# -- operation wrappers ------------------------------------------------------

def _fragment(net: Network, start: int) -> simnet.Trace:
    return simnet.Trace(net.trace[start:])


def route_and_forward(net: Network, router: str, dgram: IpDatagram) -> simnet.Trace:
    start = len(net.trace)
    stack = net.node(router).stack
    bnet = stack._broadcast_net(dgram.dst_ip)
    if bnet is not None:
        if not stack.directed_broadcast:
            stack._drop(f"directed-broadcast {dgram.dst_ip}", dgram)
        elif dgram.ttl <= 1:
            stack._drop("ttl", dgram)
        else:
            stack.route_out(replace(dgram, ttl=dgram.ttl - 1))
    else:
        stack.forward(dgram)
    return _fragment(net, start)


def icmp_echo(net: Network, frm: str, to, ident: int = 1, seq: int = 1) -> simnet.Trace:
    start = len(net.trace)
    stack = net.node(frm).stack
    stack.send(datagram(stack.source_for(to), to, ICMP, IcmpMessage(ECHO_REQUEST, ident, seq)))
    net.run_until_idle()
    return _fragment(net, start)


def tcp_open(net: Network, client: str, server: str, port: int, src_port: int | None = None,
             client_isn: int | None = None, server_isn: int | None = None):
    """Three-way handshake; returns (client_conn, server_conn, trace fragment)."""
    start = len(net.trace)
    c = net.node(client).stack
    s = net.node(server).stack
    if client_isn is not None:
        c.tcp.fixed_isn.append(client_isn)
    if server_isn is not None:
        s.tcp.fixed_isn.append(server_isn)
    conn = c.tcp.connect(primary_ip(net, server), port, src_port)
    net.run_until_idle()
    fragment = _fragment(net, start)
    peer = s.tcp.conns.get(conn.remote + conn.local)
    if conn.state is not TcpState.ESTABLISHED:
        conn.state = TcpState.CLOSED
        raise NoListener(f"{server} refused port {port}", conn)
    return conn, peer, fragment


def tcp_send(net: Network, conn: TcpConn, data: bytes, owner: str | None = None) -> simnet.Trace:
    start = len(net.trace)
    owner = owner or net.context["ip_owner"][conn.local[0]]
    net.node(owner).stack.tcp.send_data(conn, data)
    net.run_until_idle()
    return _fragment(net, start)

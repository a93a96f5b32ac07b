"""Firewall engines: packet filter, stateful inspection, application proxy,
personal firewall, and the layered composition of the three.

The evaluators are pure functions.  :class:`FilterFirewall`,
:class:`PersonalFirewall` and :class:`Proxy` attach them to nodes of a
simulated network and leave a trail of ``fw`` events in the trace.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field, replace
from typing import Any

from .simnet import Action, Layer, Network
from .stack import ICMP, TCP, UDP, IpDatagram, TcpSegment, UdpMessage, datagram, ip

PROTOCOLS = {"icmp": ICMP, "tcp": TCP, "udp": UDP}


class FirewallError(Exception):
    pass


class RulesetSyntaxError(FirewallError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class PolicyViolation(FirewallError):
    pass


@dataclass(frozen=True)
class Verdict:
    allow: bool
    reason: str = ""

    def render(self) -> str:
        return ("Allow" if self.allow else "Deny") + (f"({self.reason})" if self.reason else "")


def Allow(reason: str = "") -> Verdict:
    return Verdict(True, reason)


def Deny(reason: str) -> Verdict:
    return Verdict(False, reason)


# -- packet filter ----------------------------------------------------------

@dataclass(frozen=True)
class PortRange:
    lo: int = 0
    hi: int = 65535

    @classmethod
    def parse(cls, text: str) -> PortRange | None:
        if text == "*":
            return None
        lo, _, hi = text.partition("-")
        r = cls(int(lo), int(hi or lo))
        if not 0 <= r.lo <= r.hi <= 65535:
            raise ValueError(f"bad port range {text}")
        return r

    def __contains__(self, port) -> bool:
        return port is not None and self.lo <= port <= self.hi


@dataclass(frozen=True)
class FirewallRule:
    position: int
    direction: str
    action: str
    protocol: int | None = None
    src: ipaddress.IPv4Network | None = None
    src_ports: PortRange | None = None
    dst: ipaddress.IPv4Network | None = None
    dst_ports: PortRange | None = None

    def matches(self, dgram: IpDatagram, direction: str) -> bool:
        if self.direction != direction:
            return False
        if self.protocol is not None and dgram.protocol != self.protocol:
            return False
        if self.src is not None and dgram.src_ip not in self.src:
            return False
        if self.dst is not None and dgram.dst_ip not in self.dst:
            return False
        sport, dport = _ports(dgram)
        if self.src_ports is not None and sport not in self.src_ports:
            return False
        if self.dst_ports is not None and dport not in self.dst_ports:
            return False
        return True


def _ports(dgram: IpDatagram):
    p = dgram.payload
    if isinstance(p, (TcpSegment, UdpMessage)):
        return p.src_port, p.dst_port
    return None, None


@dataclass(frozen=True)
class Ruleset:
    default: str = "deny"
    rules: tuple = ()
    protect: tuple = ()

    def ordered(self) -> list:
        return sorted(self.rules, key=lambda r: r.position)


def _prefix(text: str):
    return None if text == "*" else ipaddress.IPv4Network(text, strict=False)


def parse_ruleset(text: str) -> Ruleset:
    """Parse the one-rule-per-line text format.

    First line ``default deny|allow``; then ``protect PREFIX`` lines and rules
    ``pos direction allow|deny proto src_prefix src_ports dst_prefix dst_ports``.
    """
    default = None
    rules, protect = [], []
    positions = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if default is None:
            if len(words) != 2 or words[0] != "default" or words[1] not in ("deny", "allow"):
                raise RulesetSyntaxError(lineno, "first line must be 'default deny|allow'")
            default = words[1]
            continue
        if words[0] == "protect" and len(words) == 2:
            protect.append(ipaddress.IPv4Network(words[1], strict=False))
            continue
        if len(words) != 8:
            raise RulesetSyntaxError(lineno, f"expected 8 fields, got {len(words)}")
        pos, direction, action, proto, src, sports, dst, dports = words
        try:
            position = int(pos)
            if direction not in ("ingress", "egress") or action not in ("allow", "deny"):
                raise ValueError("direction must be ingress|egress and action allow|deny")
            if proto == "*":
                protocol = None
            elif proto in PROTOCOLS:
                protocol = PROTOCOLS[proto]
            else:
                protocol = int(proto)
            rule = FirewallRule(position, direction, action, protocol, _prefix(src),
                                PortRange.parse(sports), _prefix(dst), PortRange.parse(dports))
        except ValueError as exc:
            raise RulesetSyntaxError(lineno, str(exc)) from None
        if position in positions:
            raise RulesetSyntaxError(lineno, f"duplicate position {position}")
        positions.add(position)
        rules.append(rule)
    if default is None:
        raise RulesetSyntaxError(1, "empty ruleset")
    return Ruleset(default, tuple(rules), tuple(protect))


def filter_eval(rules: Ruleset, dgram: IpDatagram, direction: str) -> Verdict:
    if direction == "ingress" and any(dgram.src_ip in p for p in rules.protect):
        return Deny("spoof")
    for rule in rules.ordered():
        if rule.matches(dgram, direction):
            if rule.action == "allow":
                return Allow(f"rule {rule.position}")
            return Deny(f"rule {rule.position}")
    return Allow("default") if rules.default == "allow" else Deny("default")


# -- stateful inspection ----------------------------------------------------

@dataclass(frozen=True)
class Caps:
    max_conns_per_ip: int = 3
    max_bytes_to_dest: int = 1000


@dataclass(frozen=True)
class ConnState:
    table: dict = field(default_factory=dict)
    per_ip_conn_count: dict = field(default_factory=dict)
    caps: Caps = field(default_factory=Caps)
    bytes_to_dest: dict = field(default_factory=dict)

    def copy(self) -> ConnState:
        return ConnState({k: dict(v) for k, v in self.table.items()}, dict(self.per_ip_conn_count),
                         self.caps, dict(self.bytes_to_dest))


def _conn_key(dgram: IpDatagram, seg: TcpSegment, direction: str):
    if direction == "egress":
        return (dgram.src_ip, seg.src_port, dgram.dst_ip, seg.dst_port)
    return (dgram.dst_ip, seg.dst_port, dgram.src_ip, seg.src_port)


def stateful_eval(state: ConnState, dgram: IpDatagram, direction: str = "egress") -> tuple[Verdict, ConnState]:
    """Connection tracking for TCP; non-TCP traffic passes through untouched."""
    seg = dgram.payload
    if dgram.protocol != TCP or not isinstance(seg, TcpSegment):
        return Allow("not-tcp"), state
    key = _conn_key(dgram, seg, direction)
    new = state.copy()
    if "SYN" in seg.flags and "ACK" not in seg.flags:
        if key in new.table:
            return Allow("retransmitted-syn"), state
        count = new.per_ip_conn_count.get(dgram.src_ip, 0)
        if count >= new.caps.max_conns_per_ip:
            return Deny("conn-cap"), state
        new.table[key] = {"state": "SYN_SENT", "bytes_out": 0, "initiator": dgram.src_ip}
        new.per_ip_conn_count[dgram.src_ip] = count + 1
        return Allow("new"), new
    entry = new.table.get(key)
    if entry is None:
        return Deny("no-connection"), state
    if "RST" in seg.flags or "FIN" in seg.flags:
        del new.table[key]
        who = entry["initiator"]
        new.per_ip_conn_count[who] -= 1
        if not new.per_ip_conn_count[who]:
            del new.per_ip_conn_count[who]
        return Allow("teardown"), new
    if seg.data and direction == "egress":
        pair = (key[0], key[2])
        total = new.bytes_to_dest.get(pair, 0) + len(seg.data)
        if total > new.caps.max_bytes_to_dest:
            return Deny("data-cap"), state
        new.bytes_to_dest[pair] = total
        entry["bytes_out"] += len(seg.data)
    if "ACK" in seg.flags:
        entry["state"] = "ESTABLISHED"
    return Allow("established"), new


# -- application proxy ------------------------------------------------------

@dataclass(frozen=True)
class ProxyBinding:
    inner: tuple          # (ip, port) of the real endpoint on the inside
    outer: tuple          # (ip, port) the proxy presents to the outside
    service: str = "http"
    rules: dict = field(default_factory=dict)   # {"banned": (token, ...)}
    inside_ip: Any = None  # proxy address facing the inside network

    def inspect(self, data) -> None:
        blob = data if isinstance(data, (bytes, bytearray)) else str(data).encode()
        for token in self.rules.get("banned", ()):
            if token.encode() in blob:
                raise PolicyViolation(f"{self.service} payload contains banned token {token!r}")


def proxy_relay(binding: ProxyBinding, request: IpDatagram, direction: str = "outbound") -> IpDatagram:
    """Re-originate an admitted request from the proxy's own address.

    ``outbound``: inside client -> outside server; the server sees ``binding.outer``.
    ``inbound``: outside client -> proxy -> inside server ``binding.inner``.
    """
    msg = request.payload
    data = getattr(msg, "data", b"")
    binding.inspect(data)
    if direction == "outbound":
        out_msg = replace(msg, src_port=binding.outer[1]) if hasattr(msg, "src_port") else msg
        return IpDatagram(ip(binding.outer[0]), request.dst_ip, request.protocol, 64, out_msg)
    inside = ip(binding.inside_ip or binding.outer[0])
    out_msg = replace(msg, dst_port=binding.inner[1]) if hasattr(msg, "dst_port") else msg
    return IpDatagram(inside, ip(binding.inner[0]), request.protocol, 64, out_msg)


class Proxy:
    """Dual-homed UDP relay installed on a gateway node.

    Two half-sessions share a relay table: requests arriving on ``port`` are
    inspected and re-originated; replies to the proxy's outer port are
    matched back to the waiting client.
    """

    def __init__(self, net: Network, node: str, binding: ProxyBinding, port: int, remote: tuple):
        self.net = net
        self.node = node
        self.binding = binding
        self.port = port
        self.remote = (ip(remote[0]), remote[1])
        self.pending: list[tuple] = []
        st = net.node(node).stack
        st.udp[port] = self._request
        st.udp[binding.outer[1]] = self._reply

    def _request(self, st, dgram: IpDatagram) -> None:
        try:
            relayed = proxy_relay(self.binding, replace(dgram, dst_ip=self.remote[0],
                                                        payload=replace(dgram.payload, dst_port=self.remote[1])))
        except PolicyViolation as exc:
            self.net.emit(self.node, Action.DROP, Layer.APPLICATION, f"fw proxy policy-violation {exc}", dgram)
            return
        self.net.emit(self.node, Action.NOTE, Layer.APPLICATION,
                      f"fw proxy relay {dgram.src_ip}:{dgram.payload.src_port} as {relayed.src_ip}")
        self.pending.append((dgram.src_ip, dgram.payload.src_port, dgram.dst_ip))
        st.send(relayed)

    def _reply(self, st, dgram: IpDatagram) -> None:
        if not self.pending:
            self.net.emit(self.node, Action.DROP, Layer.APPLICATION, "fw proxy no-binding", dgram)
            return
        client_ip, client_port, my_ip = self.pending.pop(0)
        try:
            self.binding.inspect(dgram.payload.data)
        except PolicyViolation as exc:
            self.net.emit(self.node, Action.DROP, Layer.APPLICATION, f"fw proxy policy-violation {exc}", dgram)
            return
        st.send(datagram(my_ip, client_ip, UDP, UdpMessage(self.port, client_port, dgram.payload.data)))


# -- personal firewall ------------------------------------------------------

@dataclass(frozen=True)
class PersonalPolicy:
    allow_sites: frozenset = frozenset()
    block_sites: frozenset = frozenset()
    scan: bool = False
    virus_tokens: tuple = ("EICAR",)


def _in_sites(addr, sites) -> bool:
    return any(addr in ipaddress.IPv4Network(s, strict=False) for s in sites)


def personal_eval(policy: PersonalPolicy, dgram: IpDatagram, direction: str) -> Verdict:
    site = dgram.src_ip if direction == "ingress" else dgram.dst_ip
    if _in_sites(site, policy.block_sites):
        return Deny("blocked-site")
    if policy.allow_sites and not _in_sites(site, policy.allow_sites):
        return Deny("not-allowed")
    if policy.scan:
        data = getattr(dgram.payload, "data", b"")
        blob = data if isinstance(data, (bytes, bytearray)) else str(data).encode()
        if any(tok.encode() in blob for tok in policy.virus_tokens):
            return Deny("scan")
    return Allow("personal")


class PersonalFirewall:
    def __init__(self, net: Network, node: str, policy: PersonalPolicy):
        self.net, self.node, self.policy = net, node, policy

    def screen(self, st, dgram: IpDatagram, direction: str) -> bool:
        v = personal_eval(self.policy, dgram, direction)
        self.net.emit(self.node, Action.NOTE if v.allow else Action.DROP, Layer.APPLICATION,
                      f"fw personal {direction} {v.render()} {dgram.src_ip}>{dgram.dst_ip}", dgram)
        return v.allow


# -- layered composition ------------------------------------------------------

LAYER_ORDER = ("filter", "proxy", "personal")


def layered_eval(layers, dgram: IpDatagram, direction: str = "ingress") -> tuple[Verdict, list]:
    """Evaluate screening filter, then proxy, then personal firewall.

    ``layers`` is a mapping or sequence of (name, config) in that order;
    evaluation stops at the first denial.  Returns (verdict, trail).
    """
    items = list(layers.items()) if isinstance(layers, dict) else list(layers)
    names = [n for n, _ in items]
    if names != [n for n in LAYER_ORDER if n in names]:
        raise FirewallError(f"layers must appear in order {LAYER_ORDER}, got {names}")
    trail = []
    verdict = Allow("no-layers")
    for name, config in items:
        if name == "filter":
            verdict = filter_eval(config, dgram, direction)
        elif name == "proxy":
            try:
                config.inspect(getattr(dgram.payload, "data", b""))
                verdict = Allow("content")
            except PolicyViolation:
                verdict = Deny("policy-violation")
        else:
            verdict = personal_eval(config, dgram, direction)
        trail.append((name, verdict))
        if not verdict.allow:
            break
    return verdict, trail


# -- network attachment ---------------------------------------------------------

class FilterFirewall:
    """Screening hook on a forwarding node: packet filter plus optional stateful table."""

    def __init__(self, net: Network, node: str, ruleset: Ruleset, inside: list,
                 stateful: ConnState | None = None):
        self.net = net
        self.node = node
        self.ruleset = ruleset
        self.inside = [ipaddress.IPv4Network(p) for p in inside]
        self.state = stateful

    def direction(self, dgram: IpDatagram) -> str:
        return "egress" if any(dgram.src_ip in p for p in self.inside) else "ingress"

    def inspect(self, st, dgram: IpDatagram, medium) -> bool:
        direction = self.direction(dgram)
        v = filter_eval(self.ruleset, dgram, direction)
        if v.allow and self.state is not None:
            v, self.state = stateful_eval(self.state, dgram, direction)
        self.net.emit(self.node, Action.NOTE if v.allow else Action.DROP, Layer.INTERNET,
                      f"fw filter {direction} {v.render()} {dgram.src_ip}>{dgram.dst_ip}", dgram)
        return v.allow


def firewall_trail(trace, node: str | None = None) -> list:
    return [e for e in trace if e.detail.startswith("fw ") and (node is None or e.node == node)]


def modem_bypass_probe(net: Network, outside: str, target: str, firewall: str, ruleset: Ruleset | None = None,
                       inside: tuple = ("10.50.0.0/24",)) -> dict:
    """Reach ``target`` from ``outside`` once through the firewall and once via a modem host.

    Returns delivery and firewall-trail counts for both paths.
    """
    from .stack import add_route, icmp_echo, primary_ip

    fw_node = net.node(firewall)
    if fw_node.stack.firewall is None:
        fw_node.stack.firewall = FilterFirewall(net, firewall, ruleset or parse_ruleset("default deny"), list(inside))
    modems = [n.name for n in net.nodes.values() if n.modem_bypass]
    result = {}
    start = len(net.trace)
    icmp_echo(net, outside, primary_ip(net, target))
    result["via_firewall"] = {"fw_events": len(firewall_trail(net.trace[start:])),
                              "delivered": len(net.trace.select(target, "RECV", "internet", start=start))}
    if modems:
        modem = modems[0]
        outside_net = next(a.network for a in net.node(outside).addrs
                           if any(a.network == b.network for b in net.node(modem).addrs))
        target_net = next(a.network for a in net.node(target).addrs
                          if any(a.network == b.network for b in net.node(modem).addrs))
        add_route(net, outside, str(target_net), modem)
        add_route(net, target, str(outside_net), modem)
        start = len(net.trace)
        icmp_echo(net, outside, primary_ip(net, target))
        result["via_modem"] = {"fw_events": len(firewall_trail(net.trace[start:])),
                               "delivered": len(net.trace.select(target, "RECV", "internet", start=start)),
                               "modem": modem}
    return result

"""Executable network attacks.

Every runner drives the scheduler of an already booted network and returns an
:class:`AttackReport` whose ``metrics`` keys are fixed per attack:

=================  =====================================================
wiretap            frames_captured
nic_clone          frames_stolen, frames_reinjected
hijack             predicted_seq, injected, storm_acks, client_closed
mitm               intercepted, tampered, detected
echo_chargen       messages_exchanged, max_len, min_len
smurf              replies_to_victim
redirect           routes_captured, packets_blackholed, delivered
dns_poison         poisoned_answers, recovered
syn_flood          admitted, discarded, genuine_rejected, genuine_recovered
ddos               zombies, syns_received, victim_saturated
=================  =====================================================
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from typing import Any

from . import ipsec_vpn, stack
from .simnet import (Action, Frame, Layer, Link, LinkNotTappable, Network, NodeKind, SimError,
                     Trace, attach_tap)
from .stack import (ICMP, TCP, UDP, DnsAnswer, IcmpMessage, IpDatagram, TcpSegment, TcpState,
                    UdpMessage, datagram, ip, primary_ip)
from .symcrypto import Cert, Keyring, Plain, Sealed, TrustStore, cert_issue, cert_verify, seal, unseal

MITM_PORT = 9000
CONTROL_PORT = 6666


class AttackError(SimError):
    pass


class NotSameDomain(AttackError):
    pass


class NoTap(AttackError):
    pass


class NotOnPath(AttackError):
    pass


class UnknownDomain(AttackError):
    pass


class NotARouter(AttackError):
    pass


class ZombieNotCompromised(AttackError):
    pass


@dataclass
class AttackReport:
    name: str
    success: bool
    metrics: dict
    notes: list = field(default_factory=list)
    trace: Trace = field(default_factory=Trace, repr=False, compare=False)


def _report(net: Network, start: int, name: str, success: bool, metrics: dict, notes=()) -> AttackReport:
    return AttackReport(name, bool(success), {k: int(v) for k, v in metrics.items()}, list(notes),
                        Trace(net.trace[start:]))


def _keyring(net: Network) -> Keyring:
    return net.context.setdefault("keyring", Keyring(net.seed))


def _hw(net: Network, name: str) -> str:
    return net.context["arp"][name]


def _find_link(net: Network, link) -> Link:
    if isinstance(link, Link):
        return link
    return net.find_link(*link)


# -- wiretap -----------------------------------------------------------------

def wiretap_capture(net: Network, link, observer: str, traffic: int = 0) -> AttackReport:
    """Tap ``link`` for ``observer``; optionally send ``traffic`` datagrams across it."""
    start = len(net.trace)
    link = _find_link(net, link)
    tap = attach_tap(net, link, observer)
    a, b = net.node(link.a), net.node(link.b)
    shared = [x for x in a.addrs for y in b.addrs if x.network == y.network]
    for i in range(traffic):
        src = shared[0].ip if shared else a.addrs[0].ip
        dst = next(y.ip for y in b.addrs if y.network == shared[0].network) if shared else b.addrs[0].ip
        a.stack.send(datagram(src, dst, UDP, UdpMessage(40000 + i, stack.DISCARD_PORT, f"frame {i}".encode())))
    net.run_until_idle()
    captured = len(tap.capture)
    return _report(net, start, "wiretap", captured > 0, {"frames_captured": captured},
                   [f"tap on {link.name} for {observer}"])


# -- NIC reprogramming ---------------------------------------------------------

def reprogram_nic(net: Network, intruder: str, victim_hw: str, reinject: bool,
                  sender: str | None = None, frames: int = 3) -> AttackReport:
    start = len(net.trace)
    owner = next((n for n, hw in net.context["arp"].items() if hw == victim_hw), None)
    domain = None
    for medium in net.media_of(intruder):
        if medium.domain is not None and owner in medium.members:
            domain = medium
    if owner is None or domain is None:
        raise NotSameDomain(f"{intruder} shares no broadcast domain with {victim_hw}")
    counts = {"stolen": 0, "reinjected": 0}

    def steal(net_, node, frame, medium):
        if frame.dst_hw != victim_hw or medium is not domain:
            return False
        counts["stolen"] += 1
        net_.emit(node.name, Action.NOTE, Layer.LINK, f"stolen frame for {victim_hw}", frame)
        if reinject:
            counts["reinjected"] += 1
            net_.inject_frame(node.name, frame, medium=medium, flood=True)
        return True

    net.node(intruder).frame_hooks.append(steal)
    net.reprogram(intruder, victim_hw)
    if sender is not None:
        src = net.node(sender).stack
        for i in range(frames):
            src.send(datagram(primary_ip(net, sender), primary_ip(net, owner), UDP,
                              UdpMessage(41000 + i, stack.DISCARD_PORT, f"for {owner} #{i}".encode())))
    net.run_until_idle()
    return _report(net, start, "nic_clone", counts["stolen"] > 0,
                   {"frames_stolen": counts["stolen"], "frames_reinjected": counts["reinjected"]},
                   [f"{intruder} answers to {victim_hw}"])


# -- session hijacking ---------------------------------------------------------

def _segments(capture, client_ip, server_ip):
    """(client->server next seq, server->client next seq, AH spi or None) from sniffed frames."""
    c_next = s_next = None
    spi = None
    for frame in capture:
        d = frame.payload
        if not isinstance(d, IpDatagram):
            continue
        body = d.payload
        if isinstance(body, ipsec_vpn.AhPayload):
            if d.src_ip == client_ip:
                spi = body.header.spi
            body = body.body
        if not isinstance(body, TcpSegment):
            continue
        nxt = stack.seq_add(body.seq, len(body.data) + ("SYN" in body.flags) + ("FIN" in body.flags))
        if d.src_ip == client_ip and d.dst_ip == server_ip:
            c_next = nxt
        elif d.src_ip == server_ip and d.dst_ip == client_ip:
            s_next = nxt
    return c_next, s_next, spi


def hijack_session(net: Network, attacker: str, conn: stack.TcpConn, payload: bytes,
                   storm_threshold: int = 5, tap=None) -> AttackReport:
    """Inject ``payload`` into ``conn`` as the client, using sniffed sequence numbers."""
    if tap is None or not tap.capture:
        raise NoTap(f"{attacker} has no capture of the session to predict sequence numbers")
    start = len(net.trace)
    client_ip, client_port, server_ip, server_port = conn.quadruple
    conn.storm_threshold = storm_threshold
    c_next, s_next, spi = _segments(tap.capture, client_ip, server_ip)
    if c_next is None or s_next is None:
        raise NoTap("capture holds no segments of the session")
    server = net.context["ip_owner"][server_ip]
    client = net.context["ip_owner"][client_ip]
    seg = TcpSegment(client_port, server_port, c_next, s_next, frozenset({"ACK"}), 4096, payload)
    forged = datagram(client_ip, server_ip, TCP, seg)
    if spi is not None:
        # forge an AH with the sniffed SPI; the attacker cannot know the real key
        fake_key = _keyring(net).keygen(attacker, "symmetric")
        fake = ipsec_vpn.SecurityAssociation(spi, server_ip, "outbound", "AH", "hmac-sha1", fake_key,
                                             seq=10 ** 6)
        forged = ipsec_vpn.ah_protect(fake, forged, net.clock)
    net.emit(attacker, Action.NOTE, Layer.TRANSPORT, f"hijack predict seq={c_next} ack={s_next}")
    medium = net.medium_between(attacker, server)
    net.inject_frame(attacker, Frame(net.node(attacker).nic.unicast, _hw(net, server), forged), medium=medium)
    net.run_until_idle()
    frag = Trace(net.trace[start:])
    injected = sum(1 for e in frag.select(node=server, action=Action.RECV, layer=Layer.APPLICATION)
                   if payload and e.obj == payload)
    storm = sum(1 for e in frag.select(action=Action.SEND, layer=Layer.TRANSPORT)
                if e.node in (client, server) and ("[resync]" in e.detail or "[dup-ack]" in e.detail))
    closed = int(any(e.node == client and "resync-exhausted" in e.detail
                     for e in frag.select(action=Action.NOTE)))
    return _report(net, start, "hijack", injected > 0,
                   {"predicted_seq": c_next, "injected": injected, "storm_acks": storm,
                    "client_closed": closed})


def hijack_scenario(net: Network, client: str = "C", server: str = "S", attacker: str = "X",
                    payload: bytes = b"rm -rf /srv", storm_threshold: int = 5,
                    protect: str | None = None, port: int = 23) -> AttackReport:
    """Open a session, let the client talk, then hijack it from a tap on the server LAN."""
    if protect:
        ipsec_vpn.protect_flow(net, client, server, protect)
    net.node(server).stack.tcp.listen(port)
    medium = net.medium_between(attacker, server)
    tap = attach_tap(net, medium.links[0], attacker)
    conn, _, _ = stack.tcp_open(net, client, server, port)
    stack.tcp_send(net, conn, b"ls\n")
    return hijack_session(net, attacker, conn, payload, storm_threshold, tap)


# -- man in the middle ---------------------------------------------------------

def mitm_pubkey(net: Network, attacker: str, a: str, b: str, tamper=None,
                verify_certs: bool = False, message: str = "pay 10") -> AttackReport:
    """A fetches B's certificate and sends B a sealed message, with M on the path."""
    start = len(net.trace)
    b_ip, a_ip = primary_ip(net, b), primary_ip(net, a)
    path = stack.net_path(net, a, b_ip)
    if attacker not in path[1:-1]:
        raise NotOnPath(f"{attacker} is not on the path {'-'.join(path)}")
    ring = _keyring(net)
    b_pub, b_prv = ring.keygen(b)
    m_pub, m_prv = ring.keygen(attacker)
    store = TrustStore({"CA"})
    counts = {"intercepted": 0, "tampered": 0, "detected": 0}
    received: list[str] = []

    def reply(st, dgram, data):
        msg = dgram.payload
        st.send(datagram(dgram.dst_ip, dgram.src_ip, UDP, UdpMessage(MITM_PORT, msg.src_port, data)))

    def on_b(st, dgram):
        data = dgram.payload.data
        if data == Plain(b"key-request"):
            reply(st, dgram, cert_issue("CA", b, b_pub))
        elif isinstance(data, Sealed):
            text = unseal(b_prv, data).text()
            received.append(text)
            net.emit(b, Action.RECV, Layer.APPLICATION, f"message from {a}: {text}", text)

    def on_a(st, dgram):
        cert = dgram.payload.data
        if not isinstance(cert, Cert):
            return
        if verify_certs and not cert_verify(store, cert):
            counts["detected"] = 1
            net.emit(a, Action.NOTE, Layer.APPLICATION,
                     f"cert_verify false for {cert.render()}; session aborted", cert)
            return
        reply(st, dgram, seal(cert.public, Plain.of(message)))

    def intercept(st, dgram):
        msg = dgram.payload
        if dgram.protocol != UDP or not isinstance(msg, UdpMessage) or MITM_PORT not in (msg.src_port, msg.dst_port):
            return dgram
        data = msg.data
        if isinstance(data, Cert) and data.subject == b:
            fake = Cert(b, m_pub, "M-CA")
            net.emit(attacker, Action.NOTE, Layer.APPLICATION, f"mitm substitute {fake.render()}")
            return IpDatagram(dgram.src_ip, dgram.dst_ip, UDP, dgram.ttl, UdpMessage(msg.src_port, msg.dst_port, fake))
        if isinstance(data, Sealed) and data.key == m_pub:
            text = unseal(m_prv, data).text()
            counts["intercepted"] = 1
            new = text
            if tamper is not None:
                old, repl = tamper if isinstance(tamper, tuple) else (text, tamper)
                new = text.replace(old, repl)
            if new != text:
                counts["tampered"] = 1
            net.emit(attacker, Action.NOTE, Layer.APPLICATION, f"mitm read {text!r} forward {new!r}")
            return IpDatagram(dgram.src_ip, dgram.dst_ip, UDP, dgram.ttl,
                              UdpMessage(msg.src_port, msg.dst_port, seal(b_pub, Plain.of(new))))
        return dgram

    net.node(b).stack.udp[MITM_PORT] = on_b
    net.node(a).stack.udp[MITM_PORT] = on_a
    net.node(attacker).stack.forward_hooks.append(intercept)
    net.node(a).stack.send(datagram(a_ip, b_ip, UDP, UdpMessage(MITM_PORT, MITM_PORT, Plain(b"key-request"))))
    net.run_until_idle()
    net.node(attacker).stack.forward_hooks.remove(intercept)
    success = counts["intercepted"] and not counts["detected"]
    return _report(net, start, "mitm", success, counts, [f"{b} received {received!r}"])


# -- echo / chargen ------------------------------------------------------------

def echo_chargen(net: Network, attacker: str, host_a: str, host_b: str,
                 budget: int | None = None) -> AttackReport:
    """Spoof B:7 -> A:19 once and let the services feed each other."""
    start = len(net.trace)
    a_ip, b_ip = primary_ip(net, host_a), primary_ip(net, host_b)
    notes = []
    a, b = net.node(host_a).stack, net.node(host_b).stack
    if not a.services.get("chargen") or not b.services.get("echo"):
        notes.append("ServiceDisabled: loop cannot form")
    first = datagram(b_ip, a_ip, UDP, UdpMessage(stack.ECHO_PORT, stack.CHARGEN_PORT, b"x"))
    medium = net.medium_between(attacker, host_a)
    net.inject_frame(attacker, Frame(net.node(attacker).nic.unicast, _hw(net, host_a), first), medium=medium)
    net.run_until_idle(budget)
    frag = Trace(net.trace[start:])
    exchanged = 0
    lengths = []
    for e in frag.select(action=Action.SEND, layer=Layer.TRANSPORT):
        d = e.obj
        if e.node in (host_a, host_b) and isinstance(d, IpDatagram) and d.protocol == UDP:
            exchanged += 1
            if d.payload.src_port == stack.CHARGEN_PORT:
                lengths.append(len(d.payload.data))
    budget_hit = "budget" in frag[-1].detail
    return _report(net, start, "echo_chargen", exchanged > 1 and budget_hit,
                   {"messages_exchanged": exchanged, "max_len": max(lengths, default=0),
                    "min_len": min(lengths, default=0)},
                   notes + [frag[-1].detail])


# -- smurf ---------------------------------------------------------------------

def smurf(net: Network, attacker: str, victim_ip, domain: str) -> AttackReport:
    start = len(net.trace)
    medium = net.media.get(domain)
    if medium is None or medium.domain is None:
        raise UnknownDomain(domain)
    nets = {a.network for m in medium.members for a in net.nodes[m].addrs}
    bnet = sorted(nets, key=str)[0]
    victim_ip = ip(victim_ip)
    victim = net.context["ip_owner"].get(victim_ip)
    request = datagram(victim_ip, bnet.broadcast_address, ICMP, IcmpMessage(stack.ECHO_REQUEST, 7, 1))
    att = net.node(attacker).stack
    net.emit(attacker, Action.NOTE, Layer.INTERNET, f"smurf spoof {victim_ip} to {bnet.broadcast_address}")
    att.route_out(request)
    net.run_until_idle()
    frag = Trace(net.trace[start:])
    replies = sum(1 for e in frag.select(node=victim, action=Action.RECV, layer=Layer.INTERNET)
                  if isinstance(e.obj, IpDatagram) and e.obj.payload.type == stack.ECHO_REPLY)
    hosts = sum(1 for m in medium.members if net.nodes[m].kind is NodeKind.HOST)
    return _report(net, start, "smurf", replies > 0, {"replies_to_victim": replies},
                   [f"amplifier {domain} has {hosts} hosts"])


# -- route redirection -----------------------------------------------------------

def redirect_blackhole(net: Network, compromised_router: str, src: str = "S",
                       dst: str = "H1", probes: int = 10, poison: bool = True) -> AttackReport:
    start = len(net.trace)
    node = net.node(compromised_router)
    if node.kind is NodeKind.HOST:
        raise NotARouter(compromised_router)
    if poison:
        node.stack.poisoned = True
        node.stack.blackhole = True
        node.stack.advertise()
        net.run_until_idle()
    captured = sum(1 for e in net.trace[start:]
                   if e.action is Action.NOTE and e.detail.startswith("route adopt")
                   and e.detail.split(" via ")[1].split()[0] == compromised_router)
    probe_start = len(net.trace)
    s = net.node(src).stack
    dst_ip = primary_ip(net, dst)
    for i in range(probes):
        s.send(datagram(primary_ip(net, src), dst_ip, UDP, UdpMessage(42000 + i, stack.DISCARD_PORT, b"probe")))
    net.run_until_idle()
    frag = net.trace[probe_start:]
    delivered = sum(1 for e in frag if e.node == dst and e.action is Action.RECV
                    and e.layer is Layer.TRANSPORT)
    holed = sum(1 for e in frag if e.node == compromised_router and e.action is Action.DROP
                and e.detail.startswith("blackhole"))
    return _report(net, start, "redirect", holed > 0 and delivered == 0,
                   {"routes_captured": captured, "packets_blackholed": holed, "delivered": delivered})


# -- DNS poisoning ----------------------------------------------------------------

def dns_poison(net: Network, attacker: str, server: str, name: str, bogus_ip, ttl: int,
               clients=("C1", "C2", "C3")) -> AttackReport:
    start = len(net.trace)
    srv = net.node(server).stack
    if srv.dns is None:
        raise AttackError(f"{server} runs no DNS service")
    srv_ip = primary_ip(net, server)
    spoofed = datagram(primary_ip(net, attacker), srv_ip, UDP,
                       UdpMessage(stack.DNS_PORT, stack.DNS_PORT, DnsAnswer(name, str(ip(bogus_ip)), ttl, 0)))
    medium = net.medium_between(attacker, server)
    net.inject_frame(attacker, Frame(net.node(attacker).nic.unicast, _hw(net, server), spoofed), medium=medium)
    net.run_until_idle()
    expiry = srv.dns.cache.entries[name][1] if name in srv.dns.cache.entries else net.clock
    for i, c in enumerate(clients):
        net.node(c).stack.query(srv_ip, name, qid=i + 1)
    net.run_until_idle()
    answers = [ans for c in clients for _, ans in net.node(c).stack.resolved[-1:]]
    poisoned = sum(1 for ans in answers if ans.address == str(ip(bogus_ip)))
    recovered = 0
    if clients:
        probe = net.node(clients[0]).stack
        latency = stack.hops(net, clients[0], srv_ip)
        if net.clock <= expiry + 1 - latency:
            net.run_until(expiry + 1 - latency)
        probe.query(srv_ip, name, qid=99)
        net.run_until_idle()
        last = probe.resolved[-1][1]
        recovered = int(last.address is not None and last.address != str(ip(bogus_ip)))
    return _report(net, start, "dns_poison", poisoned > 0,
                   {"poisoned_answers": poisoned, "recovered": recovered},
                   [f"poisoned entry expiry={expiry}"])


# -- SYN flood ---------------------------------------------------------------------

def _spoofed_syns(net, attacker, server_ip, port, pool, count, start_index=0):
    out = []
    rng_base = 1000
    for i in range(count):
        src = pool[(start_index + i) % len(pool)]
        seg = TcpSegment(rng_base + start_index + i, port, stack.initial_sequence_number(net.seed, attacker, i),
                         0, frozenset({"SYN"}))
        out.append(datagram(src, server_ip, TCP, seg))
    return out


def syn_flood(net: Network, attacker: str, server: str, count: int, spoof_pool=None,
              client: str = "C", port: int = 80) -> AttackReport:
    start = len(net.trace)
    srv = net.node(server).stack
    srv.tcp.listen(port)
    spoof_pool = [ip(a) for a in (spoof_pool or [f"10.66.0.{i}" for i in range(1, 255)])]
    live = [a for a in spoof_pool if a in net.context["ip_owner"]]
    if live:
        raise AttackError(f"spoof pool contains live addresses {live}")
    server_ip = primary_ip(net, server)
    medium = net.medium_between(attacker, server)
    t0 = net.clock
    for d in _spoofed_syns(net, attacker, server_ip, port, spoof_pool, count):
        net.inject_frame(attacker, Frame(net.node(attacker).nic.unicast, _hw(net, server), d), time=t0, medium=medium)
    arrival = t0 + 1
    timeout = srv.tcp.syn_queue.timeout
    latency = stack.hops(net, client, server_ip)
    c = net.node(client).stack
    net.run_until(arrival)
    probe1 = c.tcp.connect(server_ip, port)
    net.run_until(arrival + timeout + 1 - latency)
    probe2 = c.tcp.connect(server_ip, port)
    net.run_until_idle()
    frag = Trace(net.trace[start:])
    flood_srcs = set(spoof_pool)
    admitted = discarded = 0
    for e in frag.select(node=server, action=Action.NOTE, contains="synq "):
        src = ip(e.detail.split()[2].rsplit(":", 1)[0])
        if src in flood_srcs:
            if "Admitted" in e.detail:
                admitted += 1
            else:
                discarded += 1
    def outcome(conn):
        return next((e.detail.split()[1] for e in frag.select(node=server, action=Action.NOTE, contains="synq ")
                     if e.detail.split()[2] == f"{conn.local[0]}:{conn.local[1]}"), None)
    rejected = int(outcome(probe1) == "Discarded")
    recovered = int(outcome(probe2) == "Admitted" and probe2.state is TcpState.ESTABLISHED)
    return _report(net, start, "syn_flood", rejected == 1,
                   {"admitted": admitted, "discarded": discarded, "genuine_rejected": rejected,
                    "genuine_recovered": recovered},
                   [f"flood arrival tick {arrival}, timeout {timeout}"])


def max_queue_length(trace, server: str) -> int:
    lengths = [int(e.detail.split("len=")[1].split("/")[0])
               for e in trace if e.node == server and e.action is Action.NOTE and e.detail.startswith("synq ")]
    return max(lengths, default=0)


# -- DDoS ------------------------------------------------------------------------------

def ddos_campaign(net: Network, attacker: str, zombie_set, victim: str, per_zombie_count: int,
                  client: str = "C", port: int = 80, spoof_prefix: str = "10.77.0.0/16") -> AttackReport:
    start = len(net.trace)
    zombies = list(zombie_set)
    for z in zombies:
        if not net.node(z).compromised:
            raise ZombieNotCompromised(z)
    victim_ip = primary_ip(net, victim)
    net.node(victim).stack.tcp.listen(port)
    pool = list(ipaddress.IPv4Network(spoof_prefix).hosts())

    def make_handler(index):
        def on_signal(st, dgram):
            cmd = dgram.payload.data
            net.emit(st.name, Action.RECV, Layer.APPLICATION, f"zombie signal {cmd.decode()}")
            for d in _spoofed_syns(net, st.name, victim_ip, port, pool, per_zombie_count,
                                   start_index=index * per_zombie_count):
                st.route_out(d)
                net.emit(st.name, Action.NOTE, Layer.TRANSPORT, f"zombie syn {d.src_ip}>{d.dst_ip}")
        return on_signal

    att = net.node(attacker).stack
    for i, z in enumerate(zombies):
        net.node(z).stack.udp[CONTROL_PORT] = make_handler(i)
        att.send(datagram(primary_ip(net, attacker), primary_ip(net, z), UDP,
                          UdpMessage(CONTROL_PORT, CONTROL_PORT, f"attack {victim_ip} x{per_zombie_count}".encode())))
    net.run_until_idle()
    frag = Trace(net.trace[start:])
    syns = sum(1 for e in frag.select(node=victim, action=Action.NOTE, contains="synq "))
    saturated = 0
    if client is not None:
        probe = net.node(client).stack.tcp.connect(victim_ip, port)
        net.run_until_idle()
        saturated = int(probe.state is not TcpState.ESTABLISHED)
    return _report(net, start, "ddos", saturated == 1,
                   {"zombies": len(zombies), "syns_received": syns, "victim_saturated": saturated})

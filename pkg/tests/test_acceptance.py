"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import itertools
import random
import subprocess
import sys
from dataclasses import replace

import pytest

from netsecsim import attacks, firewall, stack, topologies
from netsecsim.firewall import Caps, ConnState, PersonalPolicy, ProxyBinding, layered_eval, parse_ruleset
from netsecsim.handshakes import (
    ChallengeFailed, FinishedMismatch, HostKeyRejected, MessageBus, NoCommonAlgorithm, krb_as_exchange,
    krb_login, krb_realm, krb_ss_exchange, krb_tgs_exchange, ss_accept, ClockSkew, ssh_choose, ssh_connect,
    ssh_host, tamper_at, tls_config, tls_handshake,
)
from netsecsim.ipsec_vpn import (
    AhHeader, IpsecHost, Proposal, ReplayedSeq, ah_protect, ah_verify, decode_ah, encode_ah,
    esp_pad_length, ike_establish, sa_establish,
)
from netsecsim.scenario import stock_names
from netsecsim.secmail import exposure_report, key_count
from netsecsim.simnet import Action, Layer
from netsecsim.stack import TCP, UDP, TcpSegment, UdpMessage, chargen_length, datagram, ip, tcp_open
from netsecsim.symcrypto import Keyring, Plain, Sealed, exposed


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, f"criterion {n}: {detail}"
    return report


def _net(name, **kw):
    return stack.build(topologies.STOCK[name](**kw))


# 1 -----------------------------------------------------------------------------------------

def test_criterion_01_handshake_arithmetic(verdict):
    rng = random.Random(1)
    bad = []
    for i in range(100):
        x, y = rng.randrange(2 ** 32), rng.randrange(2 ** 32)
        net = _net("basic")
        net.node("B").stack.tcp.listen(80)
        _, _, frag = tcp_open(net, "A", "B", 80, client_isn=x, server_isn=y)
        synack = frag.select(node="B", action=Action.SEND, layer=Layer.TRANSPORT, contains="SYN|ACK")[0]
        final = frag.select(node="A", action=Action.SEND, layer=Layer.TRANSPORT, contains="flags=ACK ")[0]
        s_seg, f_seg = synack.obj.payload, final.obj.payload
        if not (s_seg.seq == y and s_seg.ack == (x + 1) % 2 ** 32 and f_seg.ack == (y + 1) % 2 ** 32):
            bad.append((x, y))
    verdict(1, not bad, f"100 seeded ISN pairs, {len(bad)} mismatches")


# 2 -----------------------------------------------------------------------------------------

def test_criterion_02_key_counts(verdict):
    table = (key_count("link", 10), key_count("e2e_symmetric", 10), key_count("e2e_public", 10))
    mismatches = []
    for n in range(1, 51):
        pairs = sum(1 for _ in itertools.combinations(range(n), 2))
        halves = sum(1 for _ in itertools.product(range(n), ("pub", "prv")))
        if (key_count("link", n), key_count("e2e_symmetric", n), key_count("e2e_public", n)) != (pairs, pairs, halves):
            mismatches.append(n)
    verdict(2, table == (45, 45, 20) and not mismatches, f"N=10 -> {table}, oracle mismatches {mismatches}")


# 3 -----------------------------------------------------------------------------------------

def test_criterion_03_smurf(verdict):
    base = attacks.smurf(_net("smurf", hosts=5), "X", "10.6.0.10", "amp")
    # oracle: ICMP replies actually received by V
    replies = [e for e in base.trace.select(node="V", action=Action.RECV, layer=Layer.INTERNET)
               if "icmp type=0" in e.detail]
    router = _net("smurf", hosts=5)
    router.node("R").stack.directed_broadcast = False
    hosts = _net("smurf", hosts=5)
    for i in range(1, 6):
        hosts.node(f"H{i}").stack.broadcast_echo = False
    r_off = attacks.smurf(router, "X", "10.6.0.10", "amp").metrics["replies_to_victim"]
    h_off = attacks.smurf(hosts, "X", "10.6.0.10", "amp").metrics["replies_to_victim"]
    got = base.metrics["replies_to_victim"]
    verdict(3, got == len(replies) == 5 and r_off == 0 and h_off == 0,
            f"replies {got} (trace {len(replies)}), router mitigation {r_off}, host mitigation {h_off}")


# 4 -----------------------------------------------------------------------------------------

def test_criterion_04_syn_flood(verdict):
    net = _net("syn_flood")
    q = net.node("S").stack.tcp.syn_queue
    r = attacks.syn_flood(net, "X", "S", 8)
    notes = r.trace.select(node="S", action=Action.NOTE, contains="synq ")
    flood_start = min(e.time for e in notes)
    genuine = [e for e in notes if not e.detail.split()[2].startswith("10.66.")]
    per_tick = {}
    for e in notes:
        per_tick[e.time] = max(per_tick.get(e.time, 0), int(e.detail.split("len=")[1].split("/")[0]))
    ok = (q.capacity == 8 and r.metrics["genuine_rejected"] == 1 and r.metrics["genuine_recovered"] == 1
          and "Discarded" in genuine[0].detail and "Admitted" in genuine[1].detail
          and genuine[1].time == flood_start + q.timeout + 1 and max(per_tick.values()) <= 8)
    verdict(4, ok, f"probe1 {genuine[0].detail.split()[1]} at {genuine[0].time}, "
                   f"probe2 {genuine[1].detail.split()[1]} at {genuine[1].time}, max queue {max(per_tick.values())}")


# 5 -----------------------------------------------------------------------------------------

def test_criterion_05_hijack_storm(verdict):
    payload = b"rm -rf /srv"
    r = attacks.hijack_scenario(_net("hijack"), payload=payload, storm_threshold=5)
    # oracle: server dup-ACKs plus client resync ACKs on the transport layer
    storm = [e for e in r.trace.select(action=Action.SEND, layer=Layer.TRANSPORT)
             if "[dup-ack]" in e.detail or "[resync]" in e.detail]
    closes = r.trace.select(node="C", action=Action.NOTE, contains="close")
    app = [e for e in r.trace.select(node="S", action=Action.RECV, layer=Layer.APPLICATION) if e.obj == payload]
    ok = (len(storm) == r.metrics["storm_acks"] == 10 and closes and closes[-1].time >= storm[-1].time and app)
    verdict(5, bool(ok), f"storm ACKs {len(storm)}, client close notes {len(closes)}, injected in app {len(app)}")


# 6 -----------------------------------------------------------------------------------------

def test_criterion_06_echo_chargen(verdict):
    net = _net("echo_chargen")
    net.node("A").stack.services["chargen"] = True
    net.node("B").stack.services["echo"] = True
    r = attacks.echo_chargen(net, "X", "A", "B", budget=10000)
    lengths = [len(e.obj.payload.data) for e in r.trace.select(node="A", action=Action.SEND, layer=Layer.TRANSPORT)
               if isinstance(e.obj.payload, UdpMessage) and e.obj.payload.src_port == 19]
    by_budget = r.trace[-1].detail == "budget after 10000 events"
    sweep = {chargen_length(c) for c in range(513)}
    ok = lengths and all(0 <= n <= 512 for n in lengths) and by_budget and sweep == set(range(513))
    verdict(6, bool(ok), f"{len(lengths)} chargen payloads in [{min(lengths)}, {max(lengths)}], "
                         f"ended by budget {by_budget}, sweep covers {len(sweep)} lengths")


# 7 -----------------------------------------------------------------------------------------

def _ah_pair():
    ring = Keyring(0)
    a, b = IpsecHost("A", "10.0.0.1", ring), IpsecHost("B", "10.0.1.9", ring)
    ike_establish(a, b)
    _, outbound = sa_establish(a, b, Proposal(protocol="AH"))
    return a, outbound


def _ah_mutations(d):
    h, body = d.payload.header, d.payload.body
    yield "src_ip", replace(d, src_ip=ip("10.0.0.99"))
    yield "dst_ip", replace(d, dst_ip=ip("10.0.0.2"))
    yield "protocol", replace(d, protocol=UDP)
    yield "next_header", replace(d, payload=replace(d.payload, header=replace(h, next_header=TCP)))
    yield "spi", replace(d, payload=replace(d.payload, header=replace(h, spi=h.spi + 1)))
    yield "sequence", replace(d, payload=replace(d.payload, header=replace(h, sequence=h.sequence + 1)))
    flipped = bytes([h.auth_data[0] ^ 1]) + h.auth_data[1:]
    yield "auth_data", replace(d, payload=replace(d.payload, header=replace(h, auth_data=flipped)))
    yield "body", replace(d, payload=replace(d.payload, body=replace(body, data=body.data + b"!")))
    yield "body_port", replace(d, payload=replace(d.payload, body=replace(body, dst_port=body.dst_port + 1)))


def test_criterion_07_ipsec(verdict):
    a, outbound = _ah_pair()
    msg = datagram("10.0.1.9", "10.0.0.1", UDP, UdpMessage(5000, 7, b"hello"))
    d = ah_protect(outbound, msg)
    ttl_ok = ah_verify(a.sadb, replace(d, ttl=d.ttl - 1)).ok
    accepted = [name for name, m in _ah_mutations(ah_protect(outbound, msg)) if ah_verify(a.sadb, m).ok]
    d2 = ah_protect(outbound, msg)
    first = ah_verify(a.sadb, d2)
    replay = ah_verify(a.sadb, d2)
    replay_ok = first.ok and isinstance(replay.error, ReplayedSeq)
    pad = esp_pad_length(5, 4)
    rng = random.Random(7)
    round_trip = 0
    for _ in range(1000):
        h = AhHeader.build(rng.randrange(256), rng.randrange(2 ** 32), rng.randrange(2 ** 32),
                           rng.randbytes(4 * rng.randrange(61)))
        round_trip += decode_ah(encode_ah(h)) == h
    protected = attacks.hijack_scenario(_net("hijack"), protect="AH").metrics["injected"]
    plain = attacks.hijack_scenario(_net("hijack")).metrics["injected"]
    ok = ttl_ok and not accepted and replay_ok and pad == 1 and round_trip == 1000 and protected == 0 and plain >= 1
    verdict(7, ok, f"ttl-decrement accepted {ttl_ok}, mutations accepted {accepted}, replay rejected {replay_ok}, "
                   f"pad {pad}, round trips {round_trip}/1000, injections AH {protected} vs plain {plain}")


# 8 -----------------------------------------------------------------------------------------

PASSWORD = "correct horse"


def test_criterion_08_kerberos(verdict):
    from netsecsim.symcrypto import text, untup, unseal
    services = ("SS1", "SS2", "SS3")
    bus = MessageBus(seed=0)
    realm = krb_realm(bus.ring, services, {"alice": PASSWORD})
    outcome = krb_login(bus, "C", realm, "alice", PASSWORD, services=services)
    derivations = len(bus.trace.select(action=Action.NOTE, contains="pwkey-derive"))

    # echo check: each reply's timestamp echo equals the request stamp + 1
    bus2 = MessageBus(seed=1)
    realm2 = krb_realm(bus2.ring, ("SS",), {"alice": PASSWORD})
    k_ctgs, tgt = krb_as_exchange(bus2, "C", realm2, "alice", PASSWORD)
    k_cs, ticket = krb_tgs_exchange(bus2, "C", realm2, tgt, "SS", k_ctgs, "alice")
    krb_ss_exchange(bus2, "C", realm2, "SS", ticket, k_cs, "alice")
    echoes = []
    tgs_req, tgs_rep, ap_req, ap_rep = (m for _, _, m in bus2.log[2:6])
    stamp = int(text(untup(unseal(k_ctgs, untup(tgs_req, 4)[3]), 3)[2]))
    echo = int(text(untup(unseal(k_ctgs, untup(tgs_rep, 3)[2]), 2)[1]))
    echoes.append(echo == stamp + 1)
    stamp = int(text(untup(unseal(k_cs, untup(ap_req, 3)[2]), 3)[2]))
    echo = int(text(unseal(k_cs, untup(ap_rep, 2)[1])))
    echoes.append(echo == stamp + 1)

    captured = bus2.log[4][2]
    bus2.advance(realm2.policy.skew_window + 1)
    try:
        ss_accept(bus2, realm2, "SS", captured)
        replay_rejected = False
    except ClockSkew:
        replay_rejected = True

    leaks = [e.render() for b in (bus, bus2) for e in b.trace if PASSWORD in e.render()
             or any(isinstance(a, Plain) and PASSWORD.encode() in a.data for a in exposed(e.obj))]
    ok = (set(outcome.values()) == {"MutualOk"} and derivations == 1 and echoes == [True, True]
          and replay_rejected and not leaks)
    verdict(8, ok, f"{len(services)} tickets with {derivations} password derivation(s), echoes {echoes}, "
                   f"replay beyond skew rejected {replay_rejected}, password leaks {len(leaks)}")


# 9 -----------------------------------------------------------------------------------------

def _ssh_run(tamper):
    bus = MessageBus(seed=0, tamper=tamper)
    c = ssh_host(bus.ring, "C")
    s = ssh_host(bus.ring, "S", supported={"aes256", "3des"}, credentials={"alice": PASSWORD})
    s.known_clients["C"] = c.public
    from netsecsim.symcrypto import TrustStore
    store = TrustStore()
    store.remember("S", s.public)
    ssh_connect(bus, c, s, store, {"aes256": 5, "3des": 2}, "alice", PASSWORD)
    return bus


def _exhaustive(offered, supported):
    common = [a for a in offered if a in supported]
    best = [a for a in common if all((offered[a], a) >= (offered[b], b) for b in common)]
    return best[0] if best else None


def test_criterion_09_tls_ssh(verdict):
    silent = []
    ssh_len = _ssh_run(None).count
    for i in range(ssh_len):
        try:
            _ssh_run(tamper_at(i))
            silent.append(f"ssh#{i}")
        except (HostKeyRejected, ChallengeFailed):
            pass
    for mutual in (False, True):
        n = 8 if mutual else 6
        for i in range(n):
            bus = MessageBus(seed=0, tamper=tamper_at(i))
            c, s = tls_config(bus.ring, "C"), tls_config(bus.ring, "S")
            try:
                tls_handshake(bus, c, s, mutual=mutual)
                silent.append(f"tls{'-mutual' if mutual else ''}#{i}")
            except FinishedMismatch:
                pass
    rng = random.Random(9)
    algs = [f"alg{i}" for i in range(10)]
    wrong = 0
    for _ in range(200):
        offered = {a: rng.randrange(10) for a in rng.sample(algs, rng.randint(1, 10))}
        supported = set(rng.sample(algs, rng.randint(1, 10)))
        expected = _exhaustive(offered, supported)
        try:
            got = ssh_choose(offered, supported)
        except NoCommonAlgorithm:
            got = None
        wrong += got != expected
    verdict(9, not silent and wrong == 0,
            f"{ssh_len} SSH + 14 TLS single-message tampers, silent accepts {silent}; "
            f"algorithm choice mismatches {wrong}/200")


# 10 ----------------------------------------------------------------------------------------

def test_criterion_10_exposure(verdict):
    path = ["A", "R1", "R2", "B"]
    link = exposure_report(path, "link")
    e2e = exposure_report(path, "end_to_end")
    link_ok = {(r, l) for r in ("R1", "R2") for l in ("internet", "link")} <= link.plaintext_at()
    e2e_ok = e2e.plaintext_at() == {("A", "application"), ("B", "application")}
    sends = [e for rep in (link, e2e) for e in rep.trace.select(action=Action.SEND)]
    sealed_ok = bool(sends) and all(isinstance(e.obj, Sealed) and not list(exposed(e.obj)) for e in sends)
    verdict(10, link_ok and e2e_ok and sealed_ok,
            f"link marks routers {link_ok}, e2e endpoints only {e2e_ok}, {len(sends)} wire SENDs sealed {sealed_ok}")


# 11 ----------------------------------------------------------------------------------------

def test_criterion_11_determinism(verdict, tmp_path):
    differing = []
    for name in stock_names():
        blobs = []
        for run in (1, 2):
            out = tmp_path / f"{name}.{run}.trace"
            subprocess.run([sys.executable, "-m", "netsecsim", "run", name, "--quiet", "--trace", str(out)],
                           check=False)
            blobs.append(out.read_bytes())
        if blobs[0] != blobs[1] or not blobs[0]:
            differing.append(name)
    verdict(11, not differing, f"{len(stock_names())} stock scenarios run twice, differing {differing}")


# 12 ----------------------------------------------------------------------------------------

IN, OUT = "10.0.0.5", "198.51.100.7"


def _seg(sport=40000, flags=("ACK",), data=b""):
    return datagram(IN, OUT, TCP, TcpSegment(sport, 80, 1, 1, frozenset(flags), 4096, data))


def test_criterion_12_firewall(verdict):
    flips = {}
    # (i) segments of never-established or torn-down connections
    st = firewall.stateful_eval(ConnState(), _seg(flags=("SYN",)))[1]
    allow = firewall.stateful_eval(st, _seg(data=b"x"))[0]
    deny = firewall.stateful_eval(ConnState(), _seg(data=b"x"))[0]
    flips["no-connection"] = allow.allow and not deny.allow and deny.reason == "no-connection"
    # (ii) byte cap toward one destination
    st = ConnState(caps=Caps(max_bytes_to_dest=1000))
    st = firewall.stateful_eval(st, _seg(flags=("SYN",)))[1]
    st = firewall.stateful_eval(st, _seg(data=b"a" * 900))[1]
    allow = firewall.stateful_eval(st, _seg(data=b"a" * 100))[0]
    deny = firewall.stateful_eval(st, _seg(data=b"a" * 101))[0]
    flips["data-cap"] = allow.allow and not deny.allow and deny.reason == "data-cap"
    # (iii) connection cap per inside address
    st = ConnState(caps=Caps(max_conns_per_ip=3))
    verdicts = []
    for port in range(4):
        v, st = firewall.stateful_eval(st, _seg(sport=5000 + port, flags=("SYN",)))
        verdicts.append(v)
    flips["conn-cap"] = verdicts[2].allow and not verdicts[3].allow and verdicts[3].reason == "conn-cap"

    web = parse_ruleset("default deny\nprotect 10.0.0.0/8\n1 ingress allow tcp * * 10.0.0.0/8 80")
    binding = ProxyBinding(("10.50.0.20", 8080), ("198.51.100.1", 3128), "http", {"banned": ("DROP TABLE",)},
                           inside_ip="10.50.0.1")
    layers = [("filter", web), ("proxy", binding), ("personal", PersonalPolicy(scan=True))]
    inbound = lambda proto, data: datagram(OUT, IN, proto, TcpSegment(40000, 80, 1, 1, frozenset({"ACK"}), 4096, data)
                                           if proto == TCP else UdpMessage(40000, 80, data))
    _, all_trail = layered_eval(layers, inbound(TCP, b"GET /"))
    _, short = layered_eval(layers, inbound(UDP, b"GET /"))
    _, mid = layered_eval(layers, inbound(TCP, b"DROP TABLE x"))
    layered_ok = ([n for n, _ in all_trail] == ["filter", "proxy", "personal"]
                  and [n for n, _ in short] == ["filter"] and [n for n, _ in mid] == ["filter", "proxy"])
    bypass = firewall.modem_bypass_probe(_net("firewall"), "O", "V", "FW")
    bypass_ok = bypass["via_modem"]["fw_events"] == 0 and bypass["via_modem"]["delivered"] == 1
    verdict(12, all(flips.values()) and layered_ok and bypass_ok,
            f"rule families flip {flips}, layered short-circuit {layered_ok}, modem bypass trail "
            f"{bypass['via_modem']['fw_events']} events")

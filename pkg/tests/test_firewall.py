import ipaddress

import pytest
from hypothesis import given
from hypothesis import strategies as st

from netsecsim import firewall, stack, topologies
from netsecsim.firewall import (
    Caps, ConnState, PersonalPolicy, PolicyViolation, ProxyBinding, Proxy, RulesetSyntaxError,
    filter_eval, layered_eval, parse_ruleset, personal_eval, proxy_relay, stateful_eval,
)
from netsecsim.simnet import Action, Layer
from netsecsim.stack import TCP, UDP, TcpSegment, UdpMessage, datagram, primary_ip

WEB = parse_ruleset("""
default deny
protect 10.0.0.0/8
1 ingress allow tcp * * 10.0.0.0/8 80
""")


def _tcp(src, dst, sport=40000, dport=80, flags=("ACK",), data=b""):
    return datagram(src, dst, TCP, TcpSegment(sport, dport, 1, 1, frozenset(flags), 4096, data))


def _udp(src, dst, sport=40000, dport=53, data=b""):
    return datagram(src, dst, UDP, UdpMessage(sport, dport, data))


# -- packet filter ---------------------------------------------------------------

def test_filter_rule_match_allows():
    v = filter_eval(WEB, _tcp("198.51.100.7", "10.0.0.5"), "ingress")
    assert v.allow and v.reason == "rule 1"


def test_filter_default_deny():
    v = filter_eval(WEB, _udp("198.51.100.7", "10.0.0.5"), "ingress")
    assert not v.allow and v.reason == "default"


def test_filter_spoofed_inside_source():
    v = filter_eval(WEB, _tcp("10.1.2.3", "10.0.0.5"), "ingress")
    assert not v.allow and v.reason == "spoof"


def test_filter_egress_not_matched_by_ingress_rule():
    assert not filter_eval(WEB, _tcp("10.0.0.5", "198.51.100.7"), "egress").allow


def test_ruleset_syntax_errors():
    with pytest.raises(RulesetSyntaxError):
        parse_ruleset("allow everything")
    with pytest.raises(RulesetSyntaxError):
        parse_ruleset("default deny\n1 ingress allow tcp * *")
    with pytest.raises(RulesetSyntaxError) as info:
        parse_ruleset("default deny\n1 ingress allow tcp * * * 80\n1 egress deny * * * * *")
    assert info.value.line == 3


addrs = st.integers(0, 2 ** 32 - 1).map(ipaddress.IPv4Address)
dgrams = st.builds(lambda s, d, sp, dp, tcp: _tcp(s, d, sp, dp) if tcp else _udp(s, d, sp, dp),
                   addrs, addrs, st.integers(0, 65535), st.integers(0, 65535), st.booleans())
directions = st.sampled_from(["ingress", "egress"])


@given(dgrams, directions)
def test_empty_rulesets_follow_default(d, direction):
    assert not filter_eval(parse_ruleset("default deny"), d, direction).allow
    assert filter_eval(parse_ruleset("default allow"), d, direction).allow


DISJOINT = [
    "{} ingress allow tcp * * * 80",
    "{} ingress deny udp * * * *",
    "{} ingress deny tcp * * * 1-79",
    "{} egress allow * 10.0.0.0/8 * * *",
]


@given(st.permutations(range(len(DISJOINT))), dgrams, directions)
def test_first_match_permutation_invariance(order, d, direction):
    base = parse_ruleset("default deny\n" + "\n".join(r.format(i + 1) for i, r in enumerate(DISJOINT)))
    permuted = parse_ruleset("default deny\n" + "\n".join(DISJOINT[j].format(i + 1)
                                                          for i, j in enumerate(order)))
    assert filter_eval(base, d, direction).allow == filter_eval(permuted, d, direction).allow


# -- stateful inspection -----------------------------------------------------------

IN, OUT = "10.0.0.5", "198.51.100.7"


def test_data_without_connection_denied():
    v, _ = stateful_eval(ConnState(), _tcp(IN, OUT, data=b"x"))
    assert not v.allow and v.reason == "no-connection"


def test_established_connection_allowed():
    state = ConnState()
    _, state = stateful_eval(state, _tcp(IN, OUT, flags=("SYN",)))
    v, _ = stateful_eval(state, _tcp(IN, OUT, data=b"x"))
    assert v.allow


def test_conn_cap_flips_fourth_syn():
    state = ConnState(caps=Caps(max_conns_per_ip=3))
    verdicts = []
    for port in range(4):
        v, state = stateful_eval(state, _tcp(IN, OUT, sport=5000 + port, flags=("SYN",)))
        verdicts.append(v)
    assert [v.allow for v in verdicts] == [True, True, True, False]
    assert verdicts[-1].reason == "conn-cap"


def test_data_cap_flips_oversized_segment():
    state = ConnState(caps=Caps(max_bytes_to_dest=1000))
    _, state = stateful_eval(state, _tcp(IN, OUT, flags=("SYN",)))
    v, state = stateful_eval(state, _tcp(IN, OUT, data=b"a" * 900))
    assert v.allow
    ok, _ = stateful_eval(state, _tcp(IN, OUT, data=b"a" * 100))
    over, _ = stateful_eval(state, _tcp(IN, OUT, data=b"a" * 200))
    assert ok.allow and not over.allow and over.reason == "data-cap"


def test_data_cap_scoped_per_destination():
    state = ConnState(caps=Caps(max_bytes_to_dest=1000))
    for dst in (OUT, "203.0.113.9"):
        _, state = stateful_eval(state, _tcp(IN, dst, flags=("SYN",)))
        v, state = stateful_eval(state, _tcp(IN, dst, data=b"a" * 900))
        assert v.allow


def test_teardown_then_segment_denied():
    state = ConnState()
    _, state = stateful_eval(state, _tcp(IN, OUT, flags=("SYN",)))
    v, state = stateful_eval(state, _tcp(IN, OUT, flags=("FIN", "ACK")))
    assert v.reason == "teardown"
    v, _ = stateful_eval(state, _tcp(IN, OUT, data=b"late"))
    assert not v.allow and v.reason == "no-connection"


segment_ops = st.lists(st.tuples(st.integers(0, 3), st.sampled_from(["SYN", "ACK", "FIN", "RST", "DATA"])),
                       max_size=40)


@given(segment_ops)
def test_state_table_consistent(ops):
    state = ConnState(caps=Caps(2, 500))
    for port, kind in ops:
        flags = {"DATA": ("ACK",), "FIN": ("FIN", "ACK")}.get(kind, (kind,))
        d = _tcp(IN, OUT, sport=6000 + port, flags=flags, data=b"z" * 50 if kind == "DATA" else b"")
        v, state = stateful_eval(state, d)
        key = (ipaddress.IPv4Address(IN), 6000 + port, ipaddress.IPv4Address(OUT), 80)
        if kind in ("FIN", "RST"):
            assert key not in state.table
        counted = sum(state.per_ip_conn_count.values())
        assert counted == len(state.table) <= 2


# -- proxy -------------------------------------------------------------------------------

BINDING = ProxyBinding(("10.50.0.20", 8080), ("198.51.100.1", 3128), "http",
                       {"banned": ("DROP TABLE",)}, inside_ip="10.50.0.1")


def test_proxy_relay_rewrites_source():
    out = proxy_relay(BINDING, _udp("10.50.0.20", "198.51.100.10", dport=80, data=b"GET /"))
    assert str(out.src_ip) == "198.51.100.1" and out.payload.src_port == 3128


def test_proxy_banned_content():
    with pytest.raises(PolicyViolation):
        proxy_relay(BINDING, _udp("10.50.0.20", "198.51.100.10", dport=80, data=b"x; DROP TABLE t"))


def test_proxy_reverse_direction():
    back = proxy_relay(BINDING, _udp("198.51.100.10", "198.51.100.1", dport=80, data=b"GET /"), "inbound")
    assert str(back.src_ip) == "10.50.0.1" and str(back.dst_ip) == "10.50.0.20"
    assert back.payload.dst_port == 8080


def test_proxy_on_network_hides_client():
    net = stack.build(topologies.firewall())
    Proxy(net, "FW", BINDING, 8080, ("198.51.100.10", 80))
    o = net.node("O").stack
    o.udp[80] = lambda st, d: st.send(datagram(d.dst_ip, d.src_ip, UDP,
                                               UdpMessage(80, d.payload.src_port, b"200 OK")))
    v = net.node("V").stack
    v.send(_udp(primary_ip(net, "V"), "10.50.0.1", sport=5555, dport=8080, data=b"GET /"))
    net.run_until_idle()
    seen = net.trace.select(node="O", action=Action.RECV, layer=Layer.TRANSPORT)
    assert seen and all("198.51.100.1>" in e.detail for e in seen)
    assert net.trace.select(node="V", action=Action.RECV, layer=Layer.TRANSPORT, contains="200 OK")


# -- personal firewall -----------------------------------------------------------------

def test_personal_allowed_and_blocked_sites():
    pol = PersonalPolicy(allow_sites=frozenset({"198.51.100.0/24"}), block_sites=frozenset({"203.0.113.0/24"}))
    assert personal_eval(pol, _udp("198.51.100.7", IN), "ingress").allow
    assert personal_eval(pol, _udp("203.0.113.5", IN), "ingress").reason == "blocked-site"
    assert not personal_eval(pol, _udp("192.0.2.5", IN), "ingress").allow


def test_personal_virus_scan():
    pol = PersonalPolicy(scan=True)
    d = _udp(OUT, IN, data=b"attachment EICAR test")
    v = personal_eval(pol, d, "ingress")
    assert not v.allow and v.reason == "scan"
    assert personal_eval(PersonalPolicy(scan=False), d, "ingress").allow


# -- layered composition ---------------------------------------------------------------

LAYERS = [("filter", WEB), ("proxy", BINDING), ("personal", PersonalPolicy(scan=True))]


def test_layered_all_allow():
    v, trail = layered_eval(LAYERS, _tcp(OUT, IN, data=b"GET /"))
    assert v.allow and [n for n, _ in trail] == ["filter", "proxy", "personal"]


def test_layered_filter_short_circuits():
    v, trail = layered_eval(LAYERS, _udp(OUT, IN, data=b"EICAR"))
    assert not v.allow and len(trail) == 1 and trail[0][0] == "filter"


def test_layered_proxy_denies_content_filter_allowed():
    d = _tcp(OUT, IN, data=b"DROP TABLE users")
    assert filter_eval(WEB, d, "ingress").allow
    v, trail = layered_eval(LAYERS, d)
    assert not v.allow and len(trail) == 2 and trail[1] == ("proxy", v)


def test_layered_order_enforced():
    with pytest.raises(firewall.FirewallError):
        layered_eval(list(reversed(LAYERS)), _tcp(OUT, IN))


# -- network attachment and bypass -----------------------------------------------------

def test_filter_firewall_on_path_and_modem_bypass():
    net = stack.build(topologies.firewall())
    res = firewall.modem_bypass_probe(net, "O", "V", "FW")
    assert res["via_firewall"] == {"fw_events": 1, "delivered": 0}
    assert res["via_modem"]["fw_events"] == 0 and res["via_modem"]["delivered"] == 1


def test_filter_firewall_allow_rule_delivers():
    net = stack.build(topologies.firewall())
    rules = parse_ruleset("default deny\n1 ingress allow icmp * * 10.50.0.0/24 *\n"
                          "2 egress allow icmp 10.50.0.0/24 * * *")
    res = firewall.modem_bypass_probe(net, "O", "V", "FW", rules)
    assert res["via_firewall"]["delivered"] == 1 and res["via_firewall"]["fw_events"] == 2

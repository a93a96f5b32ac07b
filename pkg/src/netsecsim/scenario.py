"""Scenario files: parse, run, evaluate assertions, write traces.

A scenario is a stanza-based text file::

    seed 7
    max_events 10000
    [topology]
    use smurf hosts=5
    [policy]
    set R directed_broadcast off
    [script]
    0 smurf X V domain=amp
    [assert]
    replies_to_victim == 0

Topology lines: ``use STOCK [k=v ...]``, ``node NAME KIND [ADDR ...] [compromised] [modem_bypass]``,
``link A B [untappable]``, ``lan NAME MEMBER ...``.
Policy lines: ``set NODE ATTR on|off|N``, ``service NODE NAME on|off``,
``synq NODE capacity=N timeout=N``, ``dns NODE name=ip ... [unsolicited=on|off]``,
``rule NODE <ruleset line>``, ``firewall NODE inside=PREFIX[,PREFIX] [stateful=on]``,
``personal NODE [allow=P,..] [block=P,..] [scan=on]``, ``route NODE PREFIX VIA [cost]``.
Script lines: ``TICK ACTION [ARG ...] [key=value ...]``.
Assertion lines: ``METRIC OP VALUE`` with OP one of ``== != < <= > >=``; a metric
is either a bare name (last action that defined it) or ``action.name``.
"""

from __future__ import annotations

import ipaddress
import operator
import os
import shlex
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from . import attacks, firewall, handshakes, ipsec_vpn, secmail, simnet, stack, topologies
from .simnet import Action, Layer, Network, Trace
from .symcrypto import KeyMismatch, Keyring, TrustStore, render


class ScenarioError(Exception):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


class ScenarioSyntaxError(ScenarioError):
    pass


class UnknownAction(ScenarioError):
    pass


class UnknownNodeRef(ScenarioError):
    pass


class IoFailure(Exception):
    pass


COMPARATORS: dict[str, Callable] = {
    "==": operator.eq, "!=": operator.ne, "<": operator.lt,
    "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}

TRUE_WORDS = {"on", "true", "yes", "1"}
FALSE_WORDS = {"off", "false", "no", "0"}


@dataclass
class Step:
    tick: int
    action: str
    args: dict
    line: int


@dataclass
class Assertion:
    metric: str
    op: str
    value: int
    line: int

    def render(self) -> str:
        return f"{self.metric} {self.op} {self.value}"


@dataclass
class Scenario:
    topology: dict
    policy: list = field(default_factory=list)      # (line, words)
    script: list = field(default_factory=list)      # Step
    assertions: list = field(default_factory=list)  # Assertion
    seed: int = 0
    max_events: int = simnet.DEFAULT_MAX_EVENTS
    name: str = "scenario"

    def node_names(self) -> set:
        return {simnet._as_node_spec(n)[0] for n in self.topology.get("nodes", ())}


@dataclass
class StepReport:
    action: str
    tick: int
    metrics: dict
    notes: list = field(default_factory=list)
    error: str | None = None


@dataclass
class AssertionResult:
    assertion: Assertion
    actual: Any
    passed: bool
    reason: str = ""

    def render(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        got = self.reason or f"got {self.actual}"
        return f"{status} {self.assertion.render()} ({got})"


@dataclass
class RunResult:
    scenario: Scenario
    trace: Trace
    reports: list
    results: list
    exit_status: int
    net: Network | None = None


# -- argument types ---------------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.lower()
    if low in TRUE_WORDS:
        return True
    if low in FALSE_WORDS:
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _convert(kind: str, raw: str, nodes: set, line: int):
    try:
        if kind == "int":
            return int(raw)
        if kind == "bool":
            return _bool(raw)
        if kind == "ip":
            return ipaddress.IPv4Address(raw)
        if kind == "str":
            return raw
        if kind == "nodes":
            items = [x for x in raw.split(",") if x]
            for x in items:
                _require_node(x, nodes, line)
            return items
        if kind == "node":
            _require_node(raw, nodes, line)
            return raw
        if kind == "link":
            a, sep, b = raw.partition("-")
            if not sep:
                raise ValueError(f"expected A-B, got {raw!r}")
            _require_node(a, nodes, line)
            _require_node(b, nodes, line)
            return (a, b)
    except ValueError as exc:
        raise ScenarioSyntaxError(str(exc), line) from None
    raise AssertionError(kind)


def _require_node(name: str, nodes: set, line: int) -> None:
    if name not in nodes:
        raise UnknownNodeRef(f"undeclared node {name!r}", line)


# -- actions ------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionSpec:
    fn: Callable
    params: tuple             # ((name, kind, default), ...); default None = required

    def names(self) -> list:
        return [p[0] for p in self.params]


REQUIRED = object()


def _attack(report: attacks.AttackReport) -> tuple[dict, list]:
    metrics = dict(report.metrics)
    metrics["success"] = int(report.success)
    return metrics, list(report.notes)


def _act_wiretap(net, a):
    try:
        return _attack(attacks.wiretap_capture(net, a["link"], a["observer"], a["traffic"]))
    except simnet.LinkNotTappable as exc:
        net.emit(a["observer"], Action.NOTE, Layer.LINK, f"tap refused: {exc}")
        return {"frames_captured": 0, "success": 0, "tap_refused": 1}, [str(exc)]


def _act_nic_clone(net, a):
    return _attack(attacks.reprogram_nic(net, a["intruder"], net.context["arp"][a["victim"]],
                                         a["reinject"], a["sender"], a["frames"]))


def _act_hijack(net, a):
    return _attack(attacks.hijack_scenario(net, a["client"], a["server"], a["attacker"],
                                           a["payload"].encode(), a["storm_threshold"],
                                           a["protect"] or None, a["port"]))


def _act_mitm(net, a):
    return _attack(attacks.mitm_pubkey(net, a["attacker"], a["a"], a["b"], a["tamper"] or None,
                                       a["verify_certs"], a["message"]))


def _act_echo_chargen(net, a):
    return _attack(attacks.echo_chargen(net, a["attacker"], a["a"], a["b"], a["budget"] or None))


def _act_smurf(net, a):
    return _attack(attacks.smurf(net, a["attacker"], stack.primary_ip(net, a["victim"]), a["domain"]))


def _act_redirect(net, a):
    return _attack(attacks.redirect_blackhole(net, a["router"], a["src"], a["dst"], a["probes"], a["poison"]))


def _act_dns_poison(net, a):
    return _attack(attacks.dns_poison(net, a["attacker"], a["server"], a["name"], a["bogus"], a["ttl"],
                                      a["clients"]))


def _act_syn_flood(net, a):
    report = attacks.syn_flood(net, a["attacker"], a["server"], a["count"], client=a["client"], port=a["port"])
    metrics, notes = _attack(report)
    metrics["max_queue"] = attacks.max_queue_length(net.trace, a["server"])
    return metrics, notes


def _act_ddos(net, a):
    return _attack(attacks.ddos_campaign(net, a["attacker"], a["zombies"], a["victim"], a["per_zombie"],
                                         client=a["client"]))


def _act_ping(net, a):
    start = len(net.trace)
    stack.icmp_echo(net, a["src"], stack.primary_ip(net, a["dst"]))
    got = [e for e in net.trace[start:] if e.node == a["src"] and e.action is Action.RECV
           and e.layer is Layer.INTERNET and "icmp type=0" in e.detail]
    return {"replies": len(got)}, []


def _bus(net: Network) -> handshakes.MessageBus:
    return handshakes.MessageBus(net)


def _act_ssh(net, a):
    tamper = handshakes.tamper_at(a["tamper"]) if a["tamper"] >= 0 else None
    bus = handshakes.MessageBus(net, tamper=tamper)
    c = handshakes.ssh_host(bus.ring, a["client"])
    s = handshakes.ssh_host(bus.ring, a["server"], supported=set(a["supported"].split(",")),
                            credentials={"alice": "correct horse"})
    if a["known_client"]:
        s.known_clients[c.name] = c.public
    store = TrustStore({"CA"})
    if a["pinned"]:
        store.remember(s.name, s.public)
    offered = {}
    for item in a["offered"].split(","):
        name, _, rank = item.partition(":")
        offered[name] = int(rank or 1)
    metrics = {"ready": 0, "rejected": 0, "aborted": 0, "host_key_rejected": 0, "challenge_failed": 0}
    password = "wrong" if a["wrong_password"] else "correct horse"
    try:
        session = handshakes.ssh_identify(bus, c, s, store, a["accept_unknown"])
        handshakes.ssh_negotiate(bus, session, c, s, offered)
        verdict = handshakes.ssh_authenticate(bus, session, c, s, "alice", password)
        metrics["ready" if verdict == "Ready" else "rejected"] = 1
    except handshakes.HandshakeAbort as exc:
        metrics["aborted"] = 1
        metrics["host_key_rejected"] = int(isinstance(exc, handshakes.HostKeyRejected))
        metrics["challenge_failed"] = int(isinstance(exc, handshakes.ChallengeFailed))
    metrics["messages"] = bus.count
    return metrics, []


def _act_tls(net, a):
    tamper = handshakes.tamper_at(a["tamper"]) if a["tamper"] >= 0 else None
    bus = handshakes.MessageBus(net, tamper=tamper)
    c = handshakes.tls_config(bus.ring, a["client"], versions=(10, a["client_max"]))
    s = handshakes.tls_config(bus.ring, a["server"], versions=(10, a["server_max"]))
    metrics = {"established": 0, "aborted": 0, "finished_mismatch": 0, "version": 0}
    try:
        session = handshakes.tls_handshake(bus, c, s, a["mutual"])
        metrics["established"] = int(all(session.finished_ok))
        metrics["version"] = session.version
    except handshakes.HandshakeAbort as exc:
        metrics["aborted"] = 1
        metrics["finished_mismatch"] = int(isinstance(exc, handshakes.FinishedMismatch))
    metrics["messages"] = bus.count
    return metrics, []


def _act_kerberos(net, a):
    bus = handshakes.MessageBus(net)
    services = a["services"].split(",")
    realm = handshakes.krb_realm(bus.ring, services=services, users={"alice": "open sesame"},
                                 policy=handshakes.ClockPolicy(a["skew"]), validity=a["validity"])
    bus.offsets[a["client"]] = a["client_offset"]
    password = "wrong" if a["wrong_password"] else "open sesame"
    metrics = {"mutual_ok": 0, "aborted": 0, "replay_rejected": 0, "password_exposed": 0}
    try:
        results = handshakes.krb_login(bus, a["client"], realm, "alice", password, services)
        metrics["mutual_ok"] = sum(1 for v in results.values() if v == "MutualOk")
    except (handshakes.HandshakeAbort, KeyMismatch):
        metrics["aborted"] = 1
    metrics["password_derivations"] = sum(1 for e in net.trace if "pwkey-derive" in e.detail)
    if a["replay"]:
        captured = [m for (_, rcv, m) in bus.log if rcv == services[0] and handshakes._tag(m) == "AP-REQ"]
        if captured:
            bus.advance(a["skew"] + 1)
            try:
                handshakes.ss_accept(bus, realm, services[0], captured[-1])
            except handshakes.HandshakeAbort:
                metrics["replay_rejected"] = 1
    metrics["password_exposed"] = int(any(password in line for line in net.trace.lines()))
    return metrics, []


def _count_proto(net, start, proto: int) -> int:
    """Datagrams of ``proto`` put on a wire since ``start``."""
    return sum(1 for e in net.trace[start:] if e.action is Action.SEND and e.layer is Layer.LINK
               and f"proto={proto} " in e.detail)


def _act_ipsec(net, a):
    ipsec_vpn.protect_flow(net, a["a"], a["b"], a["protocol"])
    net.node(a["b"]).stack.services["echo"] = True
    start = len(net.trace)
    src = net.node(a["a"]).stack
    src.udp.setdefault(5000, lambda st, dgram: None)
    dst_ip = stack.primary_ip(net, a["b"])
    src.send(stack.datagram(src.source_for(dst_ip), dst_ip, stack.UDP,
                            stack.UdpMessage(5000, stack.ECHO_PORT, b"protected hello")))
    net.run_until_idle()
    proto = stack.AH if a["protocol"] == "AH" else stack.ESP
    replies = [e for e in net.trace[start:] if e.node == a["a"] and e.action is Action.NOTE
               and e.detail.startswith(("ah accept", "esp accept"))]
    return {"replies": len(replies), "protected_sends": _count_proto(net, start, proto)}, []


def _act_vpn(net, a):
    na, nb = net.node(a["gw_a"]), net.node(a["gw_b"])
    prefix_a = str(next(x.network for x in na.addrs if stack.scope(x.ip) == "private"))
    prefix_b = str(next(x.network for x in nb.addrs if stack.scope(x.ip) == "private"))
    ipsec_vpn.vpn_link(net, a["gw_a"], a["gw_b"], prefix_a, prefix_b)
    start = len(net.trace)
    stack.icmp_echo(net, a["src"], stack.primary_ip(net, a["dst"]))
    replies = [e for e in net.trace[start:] if e.node == a["src"] and e.action is Action.RECV
               and e.layer is Layer.INTERNET and "icmp type=0" in e.detail]
    return {"replies": len(replies), "tunneled_sends": _count_proto(net, start, stack.IPIP)}, []


def _act_fw_bypass(net, a):
    res = firewall.modem_bypass_probe(net, a["outside"], a["target"], a["firewall"])
    metrics = {"via_firewall_delivered": res["via_firewall"]["delivered"],
               "via_firewall_fw_events": res["via_firewall"]["fw_events"]}
    if "via_modem" in res:
        metrics["via_modem_delivered"] = res["via_modem"]["delivered"]
        metrics["via_modem_fw_events"] = res["via_modem"]["fw_events"]
    return metrics, []


def _mail_parties(net):
    ring = net.context.setdefault("keyring", Keyring(net.seed))
    return ring, secmail.mail_user(ring, "S"), secmail.mail_user(ring, "R"), TrustStore({"CA"})


def _act_pgp(net, a):
    ring, s, r, store = _mail_parties(net)
    env = secmail.pgp_seal(s, r.public, a["header"], a["body"])
    if a["impostor"]:
        m = secmail.mail_user(ring, "M")
        env = secmail.pgp_seal(secmail.MailUser("S", m.public, m.private, s.cert), r.public, a["header"], a["body"])
    net.emit(a["src"], Action.SEND, Layer.APPLICATION, f"to {a['dst']} {env.render()}", env)
    opened = secmail.pgp_open(r.private, store, env)
    net.emit(a["dst"], Action.NOTE, Layer.APPLICATION, f"pgp open sender={opened.sender} ok={opened.non_repudiation_ok}")
    return {"non_repudiation_ok": int(opened.non_repudiation_ok),
            "body_ok": int(opened.body == a["body"]), "components": len(env.components)}, []


def _act_smime(net, a):
    ring, s, r, store = _mail_parties(net)
    env = secmail.smime_seal(s, r.public, a["header"], a["body"], ring)
    net.emit(a["src"], Action.SEND, Layer.APPLICATION, f"to {a['dst']} {env.render()}", env)
    opened = secmail.smime_open(r.private, store, env)
    net.emit(a["dst"], Action.NOTE, Layer.APPLICATION,
             f"smime open integrity={opened.integrity_ok} sender={opened.sender_ok}")
    return {"integrity_ok": int(opened.integrity_ok), "sender_ok": int(opened.sender_ok),
            "components": len(env.components)}, []


def _act_exposure(net, a):
    path = a["path"]
    report = secmail.exposure_report(path, a["mode"], seed=net.seed)
    offset = net.clock
    for e in report.trace:
        if e.node != "sim":
            net.trace.append(simnet.TraceEvent(e.time + offset, e.node, e.action, e.layer, e.detail, e.obj))
    intermediates = set(path[1:-1])
    plain = report.plaintext_at()
    sealed = all(render(e.obj).startswith("Sealed(") for e in report.trace if e.action is Action.SEND)
    return {"plaintext_entries": len(plain),
            "intermediate_plaintext": sum(1 for n, _ in plain if n in intermediates),
            "wire_sealed": int(sealed)}, []


ACTIONS: dict[str, ActionSpec] = {
    "wiretap": ActionSpec(_act_wiretap, (("link", "link", REQUIRED), ("observer", "node", REQUIRED),
                                         ("traffic", "int", 3))),
    "nic_clone": ActionSpec(_act_nic_clone, (("intruder", "node", REQUIRED), ("victim", "node", REQUIRED),
                                             ("sender", "node", REQUIRED), ("reinject", "bool", True),
                                             ("frames", "int", 3))),
    "hijack": ActionSpec(_act_hijack, (("client", "node", "C"), ("server", "node", "S"), ("attacker", "node", "X"),
                                       ("payload", "str", "rm -rf /srv"), ("storm_threshold", "int", 5),
                                       ("protect", "str", ""), ("port", "int", 23))),
    "mitm": ActionSpec(_act_mitm, (("attacker", "node", "M"), ("a", "node", "A"), ("b", "node", "B"),
                                   ("tamper", "str", "pay 99"), ("verify_certs", "bool", False),
                                   ("message", "str", "pay 10"))),
    "echo_chargen": ActionSpec(_act_echo_chargen, (("attacker", "node", "X"), ("a", "node", "A"),
                                                   ("b", "node", "B"), ("budget", "int", 1000))),
    "smurf": ActionSpec(_act_smurf, (("attacker", "node", "X"), ("victim", "node", "V"), ("domain", "str", "amp"))),
    "redirect": ActionSpec(_act_redirect, (("router", "node", "X"), ("src", "node", "S"), ("dst", "node", "H1"),
                                           ("probes", "int", 10), ("poison", "bool", True))),
    "dns_poison": ActionSpec(_act_dns_poison, (("attacker", "node", "X"), ("server", "node", "D"),
                                               ("name", "str", "files.example"), ("bogus", "ip", "10.8.0.66"),
                                               ("ttl", "int", 50), ("clients", "nodes", "C1,C2,C3"))),
    "syn_flood": ActionSpec(_act_syn_flood, (("attacker", "node", "X"), ("server", "node", "S"),
                                             ("count", "int", 8), ("client", "node", "C"), ("port", "int", 80))),
    "ddos": ActionSpec(_act_ddos, (("attacker", "node", "X"), ("zombies", "nodes", REQUIRED),
                                   ("victim", "node", "S"), ("per_zombie", "int", 3), ("client", "node", "C"))),
    "ping": ActionSpec(_act_ping, (("src", "node", REQUIRED), ("dst", "node", REQUIRED))),
    "ssh": ActionSpec(_act_ssh, (("client", "str", "C"), ("server", "str", "S"),
                                 ("offered", "str", "aes128:2,aes256:5,3des:1"), ("supported", "str", "aes256,3des"),
                                 ("accept_unknown", "bool", False), ("pinned", "bool", True),
                                 ("known_client", "bool", True), ("wrong_password", "bool", False),
                                 ("tamper", "int", -1))),
    "tls": ActionSpec(_act_tls, (("client", "str", "C"), ("server", "str", "S"), ("client_max", "int", 12),
                                 ("server_max", "int", 13), ("mutual", "bool", False), ("tamper", "int", -1))),
    "kerberos": ActionSpec(_act_kerberos, (("client", "str", "C"), ("services", "str", "SS"),
                                           ("skew", "int", 5), ("validity", "int", 100),
                                           ("client_offset", "int", 0), ("wrong_password", "bool", False),
                                           ("replay", "bool", False))),
    "ipsec": ActionSpec(_act_ipsec, (("a", "node", REQUIRED), ("b", "node", REQUIRED), ("protocol", "str", "AH"))),
    "vpn": ActionSpec(_act_vpn, (("gw_a", "node", "GA"), ("gw_b", "node", "GB"), ("src", "node", "A"),
                                 ("dst", "node", "B"))),
    "fw_bypass": ActionSpec(_act_fw_bypass, (("outside", "node", "O"), ("target", "node", "V"),
                                             ("firewall", "node", "FW"))),
    "pgp": ActionSpec(_act_pgp, (("src", "str", "S"), ("dst", "str", "R"), ("header", "str", "To: R"),
                                 ("body", "str", "quarterly numbers"), ("impostor", "bool", False))),
    "smime": ActionSpec(_act_smime, (("src", "str", "S"), ("dst", "str", "R"), ("header", "str", "To: R"),
                                     ("body", "str", "quarterly numbers"))),
    "exposure": ActionSpec(_act_exposure, (("path", "nodes", REQUIRED), ("mode", "str", "link"))),
}


# -- parsing ------------------------------------------------------------------------

SECTIONS = ("topology", "policy", "script", "assert")
POLICY_WORDS = {"set": 4, "service": 4, "synq": 2, "dns": 2, "rule": 3, "firewall": 2,
                "personal": 2, "route": 4}


def _kv(words: list, line: int) -> tuple[list, dict]:
    pos, kw = [], {}
    for w in words:
        if "=" in w:
            k, _, v = w.partition("=")
            if not k:
                raise ScenarioSyntaxError(f"bad key=value {w!r}", line)
            kw[k] = v
        else:
            if kw:
                raise ScenarioSyntaxError(f"positional argument {w!r} after key=value", line)
            pos.append(w)
    return pos, kw


def _stock_topology(name: str, kw: dict, line: int) -> dict:
    if name not in topologies.STOCK:
        raise ScenarioSyntaxError(f"unknown stock topology {name!r}", line)
    try:
        return topologies.STOCK[name](**{k: int(v) for k, v in kw.items()})
    except (TypeError, ValueError) as exc:
        raise ScenarioSyntaxError(f"bad topology option: {exc}", line) from None


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    topo: dict = {"nodes": [], "links": [], "lans": {}}
    used_stock = False
    seed, max_events = 0, simnet.DEFAULT_MAX_EVENTS
    section = None
    raw_steps, raw_asserts, policy = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            words = shlex.split(line, comments=True)
        except ValueError as exc:
            raise ScenarioSyntaxError(str(exc), lineno) from None
        if not words:
            continue
        line = " ".join(words)
        if line.startswith("["):
            if not line.endswith("]") or line[1:-1] not in SECTIONS:
                raise ScenarioSyntaxError(f"unknown section {line}", lineno)
            section = line[1:-1]
            continue
        if section is None:
            if len(words) == 2 and words[0] in ("seed", "max_events"):
                try:
                    value = int(words[1])
                except ValueError:
                    raise ScenarioSyntaxError(f"{words[0]} needs an integer", lineno) from None
                if words[0] == "seed":
                    seed = value
                else:
                    if value <= 0:
                        raise ScenarioSyntaxError("max_events must be positive", lineno)
                    max_events = value
                continue
            raise ScenarioSyntaxError(f"expected seed/max_events or a section, got {line!r}", lineno)
        if section == "topology":
            kind = words[0]
            if kind == "use" and len(words) >= 2:
                if used_stock or topo["nodes"]:
                    raise ScenarioSyntaxError("'use' must be the only topology source", lineno)
                _, kw = _kv(words[2:], lineno)
                topo = _stock_topology(words[1], kw, lineno)
                topo.setdefault("links", [])
                topo.setdefault("lans", {})
                used_stock = True
            elif kind == "node" and len(words) >= 3:
                flags = {w for w in words[3:] if w in ("compromised", "modem_bypass")}
                addrs = [w for w in words[3:] if w not in flags]
                entry = {"name": words[1], "kind": words[2], "addrs": addrs}
                entry.update({f: True for f in flags})
                topo["nodes"].append(entry)
            elif kind == "link" and len(words) in (3, 4):
                opts = {}
                if len(words) == 4:
                    if words[3] != "untappable":
                        raise ScenarioSyntaxError(f"unknown link option {words[3]!r}", lineno)
                    opts["tappable"] = False
                topo["links"].append((words[1], words[2], opts))
            elif kind == "lan" and len(words) >= 3:
                topo["lans"][words[1]] = words[2:]
            else:
                raise ScenarioSyntaxError(f"bad topology line {line!r}", lineno)
        elif section == "policy":
            if words[0] not in POLICY_WORDS or len(words) < POLICY_WORDS[words[0]]:
                raise ScenarioSyntaxError(f"bad policy line {line!r}", lineno)
            policy.append((lineno, words))
        elif section == "script":
            try:
                tick = int(words[0])
            except ValueError:
                raise ScenarioSyntaxError(f"script line must start with a tick, got {words[0]!r}", lineno) from None
            if len(words) < 2:
                raise ScenarioSyntaxError("script line needs an action", lineno)
            raw_steps.append((lineno, tick, words[1], words[2:]))
        else:
            if len(words) != 3 or words[1] not in COMPARATORS:
                raise ScenarioSyntaxError(f"assertion must be 'metric op value', got {line!r}", lineno)
            try:
                value = int(words[2])
            except ValueError:
                try:
                    value = int(_bool(words[2]))
                except ValueError:
                    raise ScenarioSyntaxError(f"assertion value must be an integer, got {words[2]!r}",
                                              lineno) from None
            raw_asserts.append(Assertion(words[0], words[1], value, lineno))

    scenario = Scenario(topo, policy, [], raw_asserts, seed, max_events, name)
    nodes = scenario.node_names()
    for lineno, words in policy:
        if words[0] != "route":
            _require_node(words[1], nodes, lineno)
        else:
            _require_node(words[1], nodes, lineno)
            _require_node(words[3], nodes, lineno)
    for lineno, tick, action, args in raw_steps:
        spec = ACTIONS.get(action)
        if spec is None:
            raise UnknownAction(f"unknown action {action!r}", lineno)
        pos, kw = _kv(args, lineno)
        names = spec.names()
        if len(pos) > len(names):
            raise ScenarioSyntaxError(f"{action} takes at most {len(names)} positional arguments", lineno)
        given = dict(zip(names, pos))
        for k, v in kw.items():
            if k not in names:
                raise ScenarioSyntaxError(f"{action} has no parameter {k!r}", lineno)
            if k in given:
                raise ScenarioSyntaxError(f"{action} parameter {k!r} given twice", lineno)
            given[k] = v
        values = {}
        for pname, kind, default in spec.params:
            if pname in given:
                values[pname] = _convert(kind, given[pname], nodes, lineno)
            elif default is REQUIRED:
                raise ScenarioSyntaxError(f"{action} needs {pname}", lineno)
            elif isinstance(default, str) and kind in ("node", "nodes", "ip", "link"):
                values[pname] = _convert(kind, default, nodes, lineno)
            else:
                values[pname] = default
        scenario.script.append(Step(tick, action, values, lineno))
    scenario.script.sort(key=lambda s: (s.tick, s.line))
    return scenario


# -- running ----------------------------------------------------------------------

def _apply_policy(net: Network, policy: list) -> None:
    rules: dict[str, list] = {}
    firewalls: list = []
    for lineno, words in policy:
        verb, node = words[0], words[1]
        st = net.node(node).stack
        pos, kw = _kv(words[2:], lineno) if verb not in ("rule",) else (words[2:], {})
        try:
            if verb == "set":
                attr, value = pos[0], pos[1]
                if attr == "storm_threshold":
                    st.tcp.storm_threshold = int(value)
                elif attr in ("directed_broadcast", "broadcast_echo", "forwarding"):
                    setattr(st, attr, _bool(value))
                else:
                    raise ScenarioSyntaxError(f"unknown setting {attr!r}", lineno)
            elif verb == "service":
                if pos[0] not in st.services:
                    raise ScenarioSyntaxError(f"unknown service {pos[0]!r}", lineno)
                st.services[pos[0]] = _bool(pos[1])
            elif verb == "synq":
                q = st.tcp.syn_queue
                st.tcp.syn_queue = stack.SynRecvQueue(int(kw.get("capacity", q.capacity)),
                                                      int(kw.get("timeout", q.timeout)))
            elif verb == "dns":
                unsolicited = _bool(kw.pop("unsolicited", "on"))
                ttl = int(kw.pop("ttl", 50))
                st.dns = stack.DnsServer(dict(kw), default_ttl=ttl, accept_unsolicited=unsolicited)
            elif verb == "rule":
                rules.setdefault(node, []).append(" ".join(pos))
            elif verb == "firewall":
                firewalls.append((lineno, node, kw))
            elif verb == "personal":
                split = lambda k: frozenset(x for x in kw.get(k, "").split(",") if x)
                pol = firewall.PersonalPolicy(split("allow"), split("block"), _bool(kw.get("scan", "off")))
                st.personal = firewall.PersonalFirewall(net, node, pol)
            elif verb == "route":
                stack.add_route(net, node, pos[0], pos[1], int(pos[2]) if len(pos) > 2 else 1)
        except (ValueError, IndexError) as exc:
            raise ScenarioSyntaxError(f"bad {verb} line: {exc}", lineno) from None
    for lineno, node, kw in firewalls:
        text = "\n".join(rules.get(node, ["default deny"]))
        if not text.startswith("default"):
            text = "default deny\n" + text
        try:
            ruleset = firewall.parse_ruleset(text)
        except firewall.RulesetSyntaxError as exc:
            raise ScenarioSyntaxError(f"firewall ruleset for {node}: {exc}", lineno) from None
        inside = [p for p in kw.get("inside", "").split(",") if p]
        state = firewall.ConnState() if _bool(kw.get("stateful", "off")) else None
        net.node(node).stack.firewall = firewall.FilterFirewall(net, node, ruleset, inside, state)


def evaluate(assertions: list, reports: list) -> list:
    values: dict[str, Any] = {}
    for r in reports:
        for k, v in r.metrics.items():
            values[k] = v
            values[f"{r.action}.{k}"] = v
    failed_actions = {r.action for r in reports if r.error}
    out = []
    for a in assertions:
        if a.metric not in values:
            owner = a.metric.split(".", 1)[0]
            reason = "action failed" if owner in failed_actions or failed_actions else "undefined metric"
            out.append(AssertionResult(a, None, False, reason))
            continue
        actual = values[a.metric]
        out.append(AssertionResult(a, actual, bool(COMPARATORS[a.op](actual, a.value))))
    return out


def run_scenario(s: Scenario, seed: int | None = None, max_events: int | None = None) -> RunResult:
    topo = dict(s.topology)
    topo["seed"] = s.seed if seed is None else seed
    topo["max_events"] = s.max_events if max_events is None else max_events
    net = stack.build(topo)
    start = len(net.trace)
    _apply_policy(net, s.policy)
    reports = []
    for step in s.script:
        if step.tick > net.clock:
            net.run_until(step.tick)
        spec = ACTIONS[step.action]
        try:
            metrics, notes = spec.fn(net, step.args)
            reports.append(StepReport(step.action, step.tick, metrics, notes))
        except Exception as exc:  # operation errors become failed assertions
            net.emit("sim", Action.NOTE, Layer.APPLICATION, f"error {step.action}: {type(exc).__name__} {exc}")
            reports.append(StepReport(step.action, step.tick, {}, [], f"{type(exc).__name__}: {exc}"))
    results = evaluate(s.assertions, reports)
    status = 0 if all(r.passed for r in results) and not any(r.error for r in reports) else 1
    trace = Trace(net.trace[start:]) if s.script else Trace()
    return RunResult(s, trace, reports, results, status, net)


def write_trace(trace: Trace, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(trace.render())
    except OSError as exc:
        raise IoFailure(f"cannot write trace to {path}: {exc}") from exc


def read_trace(path) -> list:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read trace from {path}: {exc}") from exc


# -- stock scenarios ------------------------------------------------------------------

def stock_names() -> list:
    root = resources.files("netsecsim") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def stock_text(name: str) -> str:
    root = resources.files("netsecsim") / "scenarios"
    target = root / f"{name}.scn"
    if not target.is_file():
        raise FileNotFoundError(f"no stock scenario named {name!r}")
    return target.read_text(encoding="utf-8")


def load(ref: str) -> Scenario:
    """Parse a scenario file path, or a stock scenario name."""
    if os.path.exists(ref):
        return parse_scenario(Path(ref).read_text(encoding="utf-8"), Path(ref).stem)
    return parse_scenario(stock_text(ref), ref)

"""SSH, TLS and Kerberos as explicit message sequences over symbolic terms.

Every message travels over a :class:`MessageBus`, which stamps SEND/RECV
events into a trace (one tick per message) and lets an adversary rewrite
any single message in flight.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable

from .simnet import Action, Layer, Network, Trace
from .symcrypto import (Cert, Digest, Key, KeyKind, KeyMismatch, Keyring, Mac, NotSealed, Pair,
                        Plain, Sealed, TrustStore, cert_issue, cert_verify, digest, mac, pwkey,
                        render, seal, text, tup, unseal, untup)


class HandshakeAbort(Exception):
    pass


class VersionMismatch(HandshakeAbort):
    pass


class NoCommonSuite(HandshakeAbort):
    pass


class CertRejected(HandshakeAbort):
    pass


class FinishedMismatch(HandshakeAbort):
    pass


class HostKeyRejected(HandshakeAbort):
    pass


class ChallengeFailed(HandshakeAbort):
    pass


class NoCommonAlgorithm(HandshakeAbort):
    pass


class NegotiationFailed(HandshakeAbort):
    pass


class BadCredentials(HandshakeAbort):
    pass


class UnknownPrincipal(HandshakeAbort):
    pass


class TicketExpired(HandshakeAbort):
    pass


class ClockSkew(HandshakeAbort):
    pass


class IdentityMismatch(HandshakeAbort):
    pass


class BadTimestampEcho(HandshakeAbort):
    pass


class ReplayDetected(HandshakeAbort):
    pass


# -- message bus ------------------------------------------------------------

ADVERSARY_KEY = Key(KeyKind.PUBLIC, "adversary", 1, "adversary")


def mutate(term):
    """Alter one field of a message the way an on-path adversary would."""
    if isinstance(term, Pair):
        if isinstance(term.left, Plain) and isinstance(term.right, (Pair, Plain, Sealed, Cert, Mac, Digest, Key)):
            # keep the message tag, alter the first field after it
            return Pair(term.left, _mutate_leaf(term.right))
        return Pair(_mutate_leaf(term.left), term.right)
    return _mutate_leaf(term)


def _mutate_leaf(term):
    if isinstance(term, Pair):
        return Pair(_mutate_leaf(term.left), term.right)
    if isinstance(term, Plain):
        data = term.data or b"\0"
        return Plain(bytes([data[0] ^ 1]) + data[1:])
    if isinstance(term, Sealed):
        return Plain(b"tampered")
    if isinstance(term, Cert):
        return Cert(term.subject, ADVERSARY_KEY, term.issuer)
    if isinstance(term, Mac):
        return Mac(term.key, Plain(b"tampered"))
    if isinstance(term, Digest):
        return Digest(Plain(b"tampered"))
    if isinstance(term, Key):
        return ADVERSARY_KEY
    return Plain(b"tampered")


class MessageBus:
    """Unit-latency message channel sharing a network's clock and trace."""

    def __init__(self, net: Network | None = None, seed: int = 0,
                 tamper: Callable | None = None, ring: Keyring | None = None):
        self.net = net if net is not None else Network(seed)
        self.ring = ring if ring is not None else self.net.context.setdefault("keyring", Keyring(self.net.seed))
        self.tamper = tamper
        self.count = 0
        self.offsets: dict[str, int] = {}
        self.log: list = []

    @property
    def trace(self) -> Trace:
        return self.net.trace

    @property
    def now(self) -> int:
        return self.net.clock

    def clock(self, node: str) -> int:
        return self.net.clock + self.offsets.get(node, 0)

    def advance(self, ticks: int) -> None:
        self.net.run_until(self.net.clock + ticks)

    def note(self, node: str, detail: str, obj=None) -> None:
        self.net.emit(node, Action.NOTE, Layer.APPLICATION, detail, obj)

    def send(self, sender: str, receiver: str, msg):
        index = self.count
        self.count += 1
        self.net.emit(sender, Action.SEND, Layer.APPLICATION, f"to {receiver} {render(msg)}", msg)
        if self.tamper is not None:
            altered = self.tamper(index, msg)
            if altered is not None and altered != msg:
                self.note("adversary", f"tamper message {index} {render(altered)}", altered)
                msg = altered
        self.advance(1)
        self.net.emit(receiver, Action.RECV, Layer.APPLICATION, f"from {sender} {render(msg)}", msg)
        self.log.append((sender, receiver, msg))
        return msg

    def abort(self, node: str, exc: HandshakeAbort):
        self.note(node, f"abort {type(exc).__name__}: {exc}")
        raise exc


def tamper_at(index: int) -> Callable:
    """Tamper function that mutates only the message with the given ordinal."""
    return lambda i, msg: mutate(msg) if i == index else None


def _tag(msg) -> str:
    return text(msg.left) if isinstance(msg, Pair) and isinstance(msg.left, Plain) else ""


def _fields(msg, n: int, tag: str, bus: MessageBus, node: str, error=HandshakeAbort):
    if _tag(msg) != tag:
        bus.abort(node, error(f"expected {tag}, got {render(msg)[:60]}"))
    try:
        return untup(msg.right, n) if n > 1 else [msg.right]
    except ValueError as exc:
        bus.abort(node, error(f"malformed {tag}: {exc}"))


def _open(bus, node, key, term, error):
    try:
        return unseal(key, term)
    except (KeyMismatch, NotSealed) as exc:
        bus.abort(node, error(str(exc)))


def _int(term) -> int:
    return int(text(term))


# -- SSH ----------------------------------------------------------------------

class SshPhase(str, enum.Enum):
    IDENTIFY = "identify"
    NEGOTIATE = "negotiate"
    AUTHENTICATE = "authenticate"
    READY = "ready"


@dataclass
class SshHost:
    name: str
    public: Key
    private: Key
    known_clients: dict = field(default_factory=dict)    # client name -> client host public key
    supported: set = field(default_factory=set)
    credentials: dict = field(default_factory=dict)      # username -> password


@dataclass
class SshSession:
    client: str
    server: str
    phase: SshPhase = SshPhase.IDENTIFY
    chosen_alg: str | None = None
    session_key: Key | None = None
    peer_verified: bool = False
    client_verified: bool = False
    server_key: Key | None = None


def ssh_host(ring: Keyring, name: str, **kw) -> SshHost:
    pub, prv = ring.keygen(name)
    return SshHost(name, pub, prv, **kw)


def ssh_identify(bus: MessageBus, client: SshHost, server: SshHost, store: TrustStore,
                 accept_unknown: bool = False) -> SshSession:
    session = SshSession(client.name, server.name)
    msg = bus.send(server.name, client.name, tup("HostKey", server.public))
    (offered,) = _fields(msg, 1, "HostKey", bus, client.name, HostKeyRejected)
    if not isinstance(offered, Key):
        bus.abort(client.name, HostKeyRejected("host key message carries no key"))
    pinned = store.known_hosts.get(server.name)
    if pinned is not None:
        if pinned != offered:
            bus.abort(client.name, HostKeyRejected(f"{server.name} offered {offered.render()}, pinned {pinned.render()}"))
    else:
        bus.note(client.name, f"unknown-host {server.name} {offered.render()}")
        if not accept_unknown:
            bus.abort(client.name, HostKeyRejected(f"{server.name} is not a known host"))
        store.remember(server.name, offered)
    session.server_key = offered
    session.peer_verified = True
    if client.name in server.known_clients:
        nonce = Plain.of(f"challenge-{bus.ring.nonce()}")
        msg = bus.send(server.name, client.name, tup("Challenge", seal(server.known_clients[client.name], nonce)))
        (sealed,) = _fields(msg, 1, "Challenge", bus, client.name, ChallengeFailed)
        got = _open(bus, client.name, client.private, sealed, ChallengeFailed)
        msg = bus.send(client.name, server.name, tup("ChallengeReply", seal(offered, got)))
        (sealed,) = _fields(msg, 1, "ChallengeReply", bus, server.name, ChallengeFailed)
        back = _open(bus, server.name, server.private, sealed, ChallengeFailed)
        if back != nonce:
            bus.abort(server.name, ChallengeFailed("challenge answer differs"))
        session.client_verified = True
        bus.note(server.name, f"client host {client.name} verified")
    session.phase = SshPhase.NEGOTIATE
    return session


def ssh_choose(offered: dict, supported) -> str:
    """Strongest offered algorithm the server supports (rank, then name, breaks ties)."""
    common = [a for a in offered if a in supported]
    if not common:
        raise NoCommonAlgorithm(f"offered {sorted(offered)} vs supported {sorted(supported)}")
    return max(common, key=lambda a: (offered[a], a))


def _encode_offer(offered: dict) -> Plain:
    return Plain.of(",".join(f"{a}:{r}" for a, r in offered.items()))


def _decode_offer(term) -> dict:
    out = {}
    for item in text(term).split(","):
        if item:
            name, rank = item.rsplit(":", 1)
            out[name] = int(rank)
    return out


def ssh_negotiate(bus: MessageBus, session: SshSession, client: SshHost, server: SshHost,
                  offered: dict) -> SshSession:
    if session.phase is not SshPhase.NEGOTIATE:
        raise NegotiationFailed(f"session is in phase {session.phase.value}")
    # every message from here on is sealed to or signed by the server host key
    # pair; one that fails to open was not authenticated by that key
    msg = bus.send(client.name, server.name, tup("Offer", seal(session.server_key, _encode_offer(offered))))
    (sealed,) = _fields(msg, 1, "Offer", bus, server.name, NegotiationFailed)
    got = _decode_offer(_open(bus, server.name, server.private, sealed, HostKeyRejected))
    try:
        choice = ssh_choose(got, server.supported)
    except NoCommonAlgorithm as exc:
        bus.abort(server.name, exc)
    msg = bus.send(server.name, client.name, tup("Choice", seal(server.private, Plain.of(choice))))
    (sealed,) = _fields(msg, 1, "Choice", bus, client.name, NegotiationFailed)
    chosen = text(_open(bus, client.name, session.server_key, sealed, HostKeyRejected))
    if chosen not in offered:
        bus.abort(client.name, NegotiationFailed(f"server chose unoffered {chosen}"))
    key = bus.ring.keygen(f"ssh-{client.name}-{server.name}", "symmetric")
    msg = bus.send(client.name, server.name, tup("SessionKey", seal(session.server_key, key)))
    (sealed,) = _fields(msg, 1, "SessionKey", bus, server.name, NegotiationFailed)
    server_copy = _open(bus, server.name, server.private, sealed, HostKeyRejected)
    if not isinstance(server_copy, Key):
        bus.abort(server.name, NegotiationFailed("session key message carries no key"))
    session.chosen_alg = chosen
    session.session_key = key
    session.phase = SshPhase.AUTHENTICATE
    return session


def ssh_authenticate(bus: MessageBus, session: SshSession, client: SshHost, server: SshHost,
                     username: str, password: str) -> str:
    """Returns "Ready" or "Rejected"."""
    if session.phase is not SshPhase.AUTHENTICATE:
        raise NegotiationFailed(f"session is in phase {session.phase.value}")
    msg = bus.send(client.name, server.name, tup("Auth", seal(session.server_key, tup(username, password))))
    (sealed,) = _fields(msg, 1, "Auth", bus, server.name, BadCredentials)
    user, pw = untup(_open(bus, server.name, server.private, sealed, HostKeyRejected), 2)
    ok = isinstance(user, Plain) and isinstance(pw, Plain) and server.credentials.get(user.text()) == pw.text()
    verdict = "ok" if ok else "denied"
    msg = bus.send(server.name, client.name, tup("AuthResult", seal(server.private, Plain.of(verdict))))
    (sealed,) = _fields(msg, 1, "AuthResult", bus, client.name, BadCredentials)
    answer = text(_open(bus, client.name, session.server_key, sealed, HostKeyRejected))
    if answer != "ok" or not ok:
        bus.note(client.name, f"ssh login rejected for {username}")
        return "Rejected"
    session.phase = SshPhase.READY
    bus.note(client.name, f"ssh ready alg={session.chosen_alg}")
    return "Ready"


def ssh_connect(bus: MessageBus, client: SshHost, server: SshHost, store: TrustStore, offered: dict,
                username: str, password: str, accept_unknown: bool = False) -> SshSession:
    session = ssh_identify(bus, client, server, store, accept_unknown)
    ssh_negotiate(bus, session, client, server, offered)
    if ssh_authenticate(bus, session, client, server, username, password) != "Ready":
        raise BadCredentials(username)
    return session


# -- TLS ----------------------------------------------------------------------

@dataclass
class TlsConfig:
    name: str
    versions: tuple = (10, 12)     # (min, max); 12 means TLS 1.2
    suites: tuple = ("aes128-gcm-sha256",)
    public: Key | None = None
    private: Key | None = None
    cert: Cert | None = None
    store: TrustStore = field(default_factory=lambda: TrustStore({"CA"}))


def tls_config(ring: Keyring, name: str, ca: str = "CA", **kw) -> TlsConfig:
    pub, prv = ring.keygen(name)
    return TlsConfig(name, public=pub, private=prv, cert=cert_issue(ca, name, pub), **kw)


@dataclass
class TlsSession:
    version: int
    client_random: int
    server_random: int
    cipher_suite: str
    session_key: Key
    finished_ok: tuple = (False, False)


def _fold(messages) -> Any:
    acc = Plain(b"")
    for m in messages:
        acc = Pair(acc, m)
    return acc


def tls_handshake(bus: MessageBus, client: TlsConfig, server: TlsConfig, mutual: bool = False) -> TlsSession:
    c, s = client.name, server.name
    c_seen, s_seen = [], []   # each side's view of the transcript

    def xfer(sender, receiver, msg):
        got = bus.send(sender, receiver, msg)
        (c_seen if sender == c else s_seen).append(msg)
        (s_seen if sender == c else c_seen).append(got)
        return got

    cr = bus.ring.nonce(32)
    hello = xfer(c, s, tup("ClientHello", cr, client.versions[1], ",".join(client.suites)))
    h_cr, h_ver, h_suites = _fields(hello, 3, "ClientHello", bus, s, FinishedMismatch)
    try:
        got_cr, c_max, offered = _int(h_cr), _int(h_ver), text(h_suites).split(",")
    except ValueError:
        got_cr, c_max, offered = -1, client.versions[1], list(client.suites)
    version = min(c_max, server.versions[1])
    if version < max(client.versions[0], server.versions[0]):
        bus.abort(s, VersionMismatch(f"client max {c_max}, server range {server.versions}"))
    suite = next((x for x in offered if x in server.suites), None)
    if suite is None:
        bus.abort(s, NoCommonSuite(f"{offered} vs {list(server.suites)}"))
    sr = bus.ring.nonce(32)
    sh = xfer(s, c, tup("ServerHello", sr, version, suite))
    r_sr, r_ver, r_suite = _fields(sh, 3, "ServerHello", bus, c, FinishedMismatch)
    try:
        got_sr, got_ver = _int(r_sr), _int(r_ver)
    except ValueError:
        got_sr, got_ver = -1, -1
    if got_ver > client.versions[1] or text(r_suite) not in client.suites:
        bus.abort(c, FinishedMismatch("server hello outside the client's offer"))
    cert_msg = xfer(s, c, tup("Certificate", server.cert))
    (cert,) = _fields(cert_msg, 1, "Certificate", bus, c, CertRejected)
    if not isinstance(cert, Cert) or cert.subject != s or not cert_verify(client.store, cert):
        bus.abort(c, CertRejected(f"server certificate {render(cert)} not trusted"))
    if mutual:
        xfer(s, c, tup("CertificateRequest", "client-cert"))
        ccert_msg = xfer(c, s, tup("Certificate", client.cert))
        (ccert,) = _fields(ccert_msg, 1, "Certificate", bus, s, CertRejected)
        if not isinstance(ccert, Cert) or ccert.subject != c or not cert_verify(server.store, ccert):
            bus.abort(s, CertRejected(f"client certificate {render(ccert)} not trusted"))
    key = bus.ring.keygen(f"tls-{c}-{s}", "symmetric")
    kx = xfer(c, s, tup("ClientKeyExchange", seal(cert.public, tup(key, cr, got_sr))))
    (sealed,) = _fields(kx, 1, "ClientKeyExchange", bus, s, FinishedMismatch)
    randoms_ok = True
    try:
        s_key, k_cr, k_sr = untup(unseal(server.private, sealed), 3)
        randoms_ok = _int(k_cr) == got_cr and _int(k_sr) == sr
    except (KeyMismatch, NotSealed, ValueError):
        # proceed with an unrelated key so the failure surfaces at Finished
        s_key = bus.ring.keygen(f"tls-fallback-{s}", "symmetric")
        randoms_ok = False
    if not isinstance(s_key, Key):
        s_key, randoms_ok = bus.ring.keygen(f"tls-fallback-{s}", "symmetric"), False
    c_fin = mac(key, digest(_fold(c_seen)))
    expect_c = mac(s_key, digest(_fold(s_seen)))
    got = xfer(c, s, tup("Finished", c_fin))
    (fin,) = _fields(got, 1, "Finished", bus, s, FinishedMismatch)
    server_ok = fin == expect_c and randoms_ok
    if not server_ok:
        bus.abort(s, FinishedMismatch("client Finished does not match the server transcript"))
    s_fin = mac(s_key, digest(_fold(s_seen)))
    expect_s = mac(key, digest(_fold(c_seen)))
    got = xfer(s, c, tup("Finished", s_fin))
    (fin,) = _fields(got, 1, "Finished", bus, c, FinishedMismatch)
    if fin != expect_s:
        bus.abort(c, FinishedMismatch("server Finished does not match the client transcript"))
    bus.note(c, f"tls established v{version} {suite}")
    return TlsSession(version, cr, sr, suite, key, (True, True))


# -- Kerberos -------------------------------------------------------------------

@dataclass
class KrbTicket:
    username: str
    client_addr: str
    validity: tuple
    embedded_key: Key
    sealed_for: str


@dataclass
class ClockPolicy:
    skew_window: int = 5


@dataclass
class KrbRealm:
    ring: Keyring
    tgs_key: Key
    service_keys: dict
    users: dict = field(default_factory=dict)   # username -> derived key (never the password)
    policy: ClockPolicy = field(default_factory=ClockPolicy)
    validity: int = 100
    replay_cache: set = field(default_factory=set)
    as_name: str = "AS"
    tgs_name: str = "TGS"

    def enroll(self, username: str, password: str) -> None:
        self.users[username] = pwkey(password, username)


def krb_realm(ring: Keyring, services=("SS",), users: dict | None = None, **kw) -> KrbRealm:
    realm = KrbRealm(ring, ring.keygen("TGS", "symmetric"),
                     {s: ring.keygen(s, "symmetric") for s in services}, **kw)
    for u, pw in (users or {}).items():
        realm.enroll(u, pw)
    return realm


def _ticket_term(t: KrbTicket):
    return tup(t.username, t.client_addr, t.validity[0], t.validity[1], t.embedded_key)


def _ticket_from(term, sealed_for: str) -> KrbTicket:
    u, a, start, end, k = untup(term, 5)
    return KrbTicket(text(u), text(a), (_int(start), _int(end)), k, sealed_for)


def krb_as_exchange(bus: MessageBus, client: str, realm: KrbRealm, username: str, password: str,
                    client_addr: str = "10.0.0.10"):
    """Returns (client/TGS session key, sealed TGT)."""
    msg = bus.send(client, realm.as_name, tup("AS-REQ", username, client_addr))
    u, addr = (text(x) for x in _fields(msg, 2, "AS-REQ", bus, realm.as_name))
    if u not in realm.users:
        bus.abort(realm.as_name, UnknownPrincipal(u))
    now = bus.now
    k_ctgs = realm.ring.keygen(f"{u}-tgs", "symmetric")
    tgt = KrbTicket(u, addr, (now, now + realm.validity), k_ctgs, realm.tgs_name)
    a = seal(realm.users[u], k_ctgs)
    b = seal(realm.tgs_key, _ticket_term(tgt))
    msg = bus.send(realm.as_name, client, tup("AS-REP", a, b))
    a, b = _fields(msg, 2, "AS-REP", bus, client)
    bus.note(client, f"pwkey-derive for {username}")
    user_key = pwkey(password, username)
    session = unseal(user_key, a)   # KeyMismatch on a wrong password
    return session, b


def tgs_accept(bus: MessageBus, realm: KrbRealm, msg):
    """TGS side of the exchange; returns the reply message."""
    tgs = realm.tgs_name
    tgt_sealed, service, d = _fields(msg, 3, "TGS-REQ", bus, tgs)
    tgt = _ticket_from(_open(bus, tgs, realm.tgs_key, tgt_sealed, TicketExpired), tgs)
    now = bus.clock(tgs)
    if now > tgt.validity[1]:
        bus.abort(tgs, TicketExpired(f"TGT for {tgt.username} ended at {tgt.validity[1]}"))
    du, da, ts = untup(_open(bus, tgs, tgt.embedded_key, d, IdentityMismatch), 3)
    ts = _int(ts)
    if abs(ts - now) > realm.policy.skew_window:
        bus.abort(tgs, ClockSkew(f"authenticator ts={ts} vs clock {now}"))
    if (text(du), text(da)) != (tgt.username, tgt.client_addr):
        bus.abort(tgs, IdentityMismatch(f"{text(du)}@{text(da)} vs ticket {tgt.username}@{tgt.client_addr}"))
    if ("tgs", tgt.username, ts) in realm.replay_cache:
        bus.abort(tgs, ReplayDetected(f"authenticator ts={ts} seen before"))
    realm.replay_cache.add(("tgs", tgt.username, ts))
    svc = text(service)
    if svc not in realm.service_keys:
        bus.abort(tgs, UnknownPrincipal(svc))
    k_cs = realm.ring.keygen(f"{tgt.username}-{svc}", "symmetric")
    ticket = KrbTicket(tgt.username, tgt.client_addr, (now, now + realm.validity), k_cs, svc)
    e = seal(realm.service_keys[svc], _ticket_term(ticket))
    f = seal(tgt.embedded_key, tup(k_cs, ts + 1))
    return tup("TGS-REP", e, f)


def krb_tgs_exchange(bus: MessageBus, client: str, realm: KrbRealm, tgt, service_id: str,
                     k_ctgs: Key, username: str, client_addr: str = "10.0.0.10"):
    """Returns (client/server key, sealed service ticket)."""
    ts = bus.clock(client)
    d = seal(k_ctgs, tup(username, client_addr, ts))
    msg = bus.send(client, realm.tgs_name, tup("TGS-REQ", tgt, service_id, d))
    reply = tgs_accept(bus, realm, msg)
    msg = bus.send(realm.tgs_name, client, reply)
    e, f = _fields(msg, 2, "TGS-REP", bus, client)
    k_cs, echo = untup(_open(bus, client, k_ctgs, f, BadTimestampEcho), 2)
    if _int(echo) != ts + 1:
        bus.abort(client, BadTimestampEcho(f"expected {ts + 1}, got {text(echo)}"))
    return k_cs, e


def ss_accept(bus: MessageBus, realm: KrbRealm, service: str, msg):
    e, g = _fields(msg, 2, "AP-REQ", bus, service)
    ticket = _ticket_from(_open(bus, service, realm.service_keys[service], e, TicketExpired), service)
    now = bus.clock(service)
    if now > ticket.validity[1]:
        bus.abort(service, TicketExpired(f"ticket for {ticket.username} ended at {ticket.validity[1]}"))
    gu, ga, ts = untup(_open(bus, service, ticket.embedded_key, g, IdentityMismatch), 3)
    ts = _int(ts)
    if abs(ts - now) > realm.policy.skew_window:
        bus.abort(service, ClockSkew(f"authenticator ts={ts} vs clock {now}"))
    if (text(gu), text(ga)) != (ticket.username, ticket.client_addr):
        bus.abort(service, IdentityMismatch(f"{text(gu)} vs ticket {ticket.username}"))
    if (service, ticket.username, ts) in realm.replay_cache:
        bus.abort(service, ReplayDetected(f"authenticator ts={ts} seen before"))
    realm.replay_cache.add((service, ticket.username, ts))
    return tup("AP-REP", seal(ticket.embedded_key, Plain.of(ts + 1)))


def krb_ss_exchange(bus: MessageBus, client: str, realm: KrbRealm, service: str, ticket, k_cs: Key,
                    username: str, client_addr: str = "10.0.0.10") -> str:
    """Returns "MutualOk" after checking the server's timestamp echo."""
    ts = bus.clock(client)
    g = seal(k_cs, tup(username, client_addr, ts))
    msg = bus.send(client, service, tup("AP-REQ", ticket, g))
    reply = ss_accept(bus, realm, service, msg)
    msg = bus.send(service, client, reply)
    (h,) = _fields(msg, 1, "AP-REP", bus, client)
    echo = _int(_open(bus, client, k_cs, h, BadTimestampEcho))
    if echo != ts + 1:
        bus.abort(client, BadTimestampEcho(f"expected {ts + 1}, got {echo}"))
    bus.note(client, f"kerberos mutual authentication with {service}")
    return "MutualOk"


def krb_login(bus: MessageBus, client: str, realm: KrbRealm, username: str, password: str,
              services=("SS",), client_addr: str = "10.0.0.10") -> dict:
    """One AS exchange, then a service ticket and AP exchange per service."""
    k_ctgs, tgt = krb_as_exchange(bus, client, realm, username, password, client_addr)
    out = {}
    for svc in services:
        k_cs, ticket = krb_tgs_exchange(bus, client, realm, tgt, svc, k_ctgs, username, client_addr)
        out[svc] = krb_ss_exchange(bus, client, realm, svc, ticket, k_cs, username, client_addr)
    return out

"""IP-in-IP VPN tunnels and IPSec (IKE, security associations, AH and ESP).

AH and ESP headers have exact big-endian byte layouts.  The ESP payload is
a sealed symbolic term carried through :mod:`netsecsim.wire`, so a byte
level MAC can still be computed over it.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field, replace
from typing import Any

from . import wire
from .simnet import Action, Layer, Network
from .stack import AH, ESP, IPIP, IpDatagram, TCP, UDP, ip, scope
from .symcrypto import (Cert, Key, KeyMismatch, Keyring, Plain, TrustStore, cert_issue,
                        cert_verify, dh_agree, kdf, mac_tag, render, seal, tup, unseal)
from .wire import wire_type

AH_FIXED = 12
ESP_FIXED = 8
DEFAULT_MAC_LEN = 12
DEFAULT_BLOCK = 4
DEFAULT_LIFESPAN = 1000
SPI_BASE = 256
SPI_MAX = 2 ** 32 - 1

# algorithm strength ranks; higher is stronger
DEFAULT_RANKS = {
    "hmac-md5": 1, "hmac-sha1": 2, "hmac-sha256": 3,
    "des": 1, "3des": 2, "aes128": 3, "aes256": 4,
    "kdf-sha1": 1, "kdf-sha256": 2,
}
MAC_LENGTHS = {"hmac-md5": 12, "hmac-sha1": 12, "hmac-sha256": 16}
BLOCK_SIZES: dict[str, int] = {}


class IpsecError(Exception):
    reason = "error"


class TruncatedHeader(IpsecError):
    reason = "TruncatedHeader"


class NonzeroReserved(IpsecError):
    reason = "NonzeroReserved"


class LengthMismatch(IpsecError):
    reason = "LengthMismatch"


class SaExpired(IpsecError):
    reason = "SaExpired"


class UnknownSpi(IpsecError):
    reason = "UnknownSpi"


class BadMac(IpsecError):
    reason = "BadMac"


class ReplayedSeq(IpsecError):
    reason = "ReplayedSeq"


class NoIkeSa(IpsecError):
    reason = "NoIkeSa"


class EmptyProposal(IpsecError):
    reason = "EmptyProposal"


class SpiExhausted(IpsecError):
    reason = "SpiExhausted"


class CertRejected(IpsecError):
    reason = "CertRejected"


class NoPublicAddress(IpsecError):
    reason = "NoPublicAddress"


class NotTunneled(IpsecError):
    reason = "NotTunneled"


# -- codecs ------------------------------------------------------------------

def _check_width(name: str, value: int, bits: int) -> None:
    if not 0 <= value < 2 ** bits:
        raise ValueError(f"{name}={value} does not fit in {bits} bits")


@wire_type
@dataclass(frozen=True)
class AhHeader:
    next_header: int
    payload_length: int
    reserved: int
    spi: int
    sequence: int
    auth_data: bytes

    @classmethod
    def build(cls, next_header: int, spi: int, sequence: int, auth_data: bytes) -> AhHeader:
        return cls(next_header, 3 + len(auth_data) // 4, 0, spi, sequence, auth_data)


def encode_ah(h: AhHeader) -> bytes:
    _check_width("next_header", h.next_header, 8)
    _check_width("payload_length", h.payload_length, 8)
    _check_width("spi", h.spi, 32)
    _check_width("sequence", h.sequence, 32)
    if h.reserved != 0:
        raise NonzeroReserved("reserved field must be zero")
    if len(h.auth_data) % 4:
        raise LengthMismatch("auth data must be a whole number of 32-bit words")
    if h.payload_length != 3 + len(h.auth_data) // 4:
        raise LengthMismatch(f"payload_length {h.payload_length} disagrees with auth data")
    return struct.pack(">BBHII", h.next_header, h.payload_length, 0, h.spi, h.sequence) + h.auth_data


def decode_ah(data: bytes) -> AhHeader:
    if len(data) < AH_FIXED:
        raise TruncatedHeader(f"{len(data)} bytes, need at least {AH_FIXED}")
    nh, plen, reserved, spi, seq = struct.unpack(">BBHII", data[:AH_FIXED])
    if reserved != 0:
        raise NonzeroReserved(f"reserved=0x{reserved:04x}")
    if plen < 3 or plen * 4 != len(data):
        raise LengthMismatch(f"payload_length {plen} words vs {len(data)} bytes")
    return AhHeader(nh, plen, 0, spi, seq, bytes(data[AH_FIXED:]))


def esp_pad_length(payload_len: int, block: int = DEFAULT_BLOCK) -> int:
    """Smallest p with (payload_len + p + 2) divisible by block."""
    for p in range(256):
        if (payload_len + p + 2) % block == 0:
            return p
    raise ValueError(f"no padding fits block size {block}")


def default_padding(n: int) -> bytes:
    return bytes(range(1, n + 1))


@wire_type
@dataclass(frozen=True)
class EspPacket:
    spi: int
    sequence: int
    payload: Any
    padding: bytes
    pad_length: int
    next_header: int
    auth_data: bytes = b""

    def render(self) -> str:
        head = struct.pack(">II", self.spi, self.sequence).hex()
        tail = bytes([self.pad_length, self.next_header]).hex()
        return f"esp {head} .. {self.padding.hex()}{tail} auth={self.auth_data.hex()} | {render(self.payload)}"


def _esp_unauth(p: EspPacket) -> bytes:
    _check_width("spi", p.spi, 32)
    _check_width("sequence", p.sequence, 32)
    _check_width("pad_length", p.pad_length, 8)
    _check_width("next_header", p.next_header, 8)
    if p.pad_length != len(p.padding):
        raise LengthMismatch(f"pad_length {p.pad_length} vs {len(p.padding)} padding bytes")
    return (struct.pack(">II", p.spi, p.sequence) + wire.encode(p.payload) + p.padding
            + bytes([p.pad_length, p.next_header]))


def encode_esp(p: EspPacket) -> bytes:
    return _esp_unauth(p) + p.auth_data


def decode_esp(data: bytes, auth_len: int = DEFAULT_MAC_LEN) -> EspPacket:
    if len(data) < ESP_FIXED + 2 + auth_len:
        raise TruncatedHeader(f"{len(data)} bytes is shorter than the fixed ESP fields")
    spi, seq = struct.unpack(">II", data[:ESP_FIXED])
    body_end = len(data) - auth_len
    auth = bytes(data[body_end:])
    pad_length, next_header = data[body_end - 2], data[body_end - 1]
    pad_start = body_end - 2 - pad_length
    if pad_start < ESP_FIXED:
        raise LengthMismatch(f"pad_length {pad_length} exceeds packet")
    try:
        payload = wire.decode(bytes(data[ESP_FIXED:pad_start]))
    except (wire.WireError, ValueError, UnicodeDecodeError) as exc:
        raise LengthMismatch(f"payload does not decode: {exc}") from None
    return EspPacket(spi, seq, payload, bytes(data[pad_start:body_end - 2]), pad_length, next_header, auth)


@wire_type
@dataclass(frozen=True)
class AhPayload:
    header: AhHeader
    body: Any

    def render(self) -> str:
        return f"ah {encode_ah(self.header).hex()} | {render(self.body)}"


# -- security associations ---------------------------------------------------

@dataclass
class SecurityAssociation:
    spi: int
    partner_ip: Any
    direction: str
    protocol: str
    hmac_alg: str
    hmac_key: Key
    enc_alg: str | None = None
    enc_key: Key | None = None
    lifespan: int = DEFAULT_LIFESPAN
    established: int = 0
    seq: int = 0
    replay_window: set = field(default_factory=set)
    kdf_alg: str | None = None
    iv: Any = None  # carried for completeness; symbolic sealing has no IV
    mac_len: int = DEFAULT_MAC_LEN
    block: int = DEFAULT_BLOCK

    def expired(self, now: int) -> bool:
        return now > self.established + self.lifespan

    def mirror(self) -> SecurityAssociation:
        other = "outbound" if self.direction == "inbound" else "inbound"
        return replace(self, direction=other, seq=0, replay_window=set())


@dataclass
class Sadb:
    inbound: dict = field(default_factory=dict)
    outbound: dict = field(default_factory=dict)

    @property
    def entries(self) -> dict:
        out = dict(self.inbound)
        out.update(self.outbound)
        return out

    def install(self, sa: SecurityAssociation) -> None:
        table = self.inbound if sa.direction == "inbound" else self.outbound
        key = (sa.spi, ip(sa.partner_ip))
        if key in table:
            raise ValueError(f"SA {key} already installed")
        table[key] = sa

    def lookup(self, spi: int, partner) -> SecurityAssociation:
        sa = self.inbound.get((spi, ip(partner)))
        if sa is None:
            raise UnknownSpi(f"no inbound SA for spi={spi} partner={partner}")
        return sa

    def outbound_for(self, partner) -> SecurityAssociation | None:
        partner = ip(partner)
        found = [sa for (spi, p), sa in self.outbound.items() if p == partner]
        return found[-1] if found else None


@dataclass(frozen=True)
class Accept:
    inner: Any
    ok = True


@dataclass(frozen=True)
class Reject:
    error: IpsecError
    ok = False

    @property
    def reason(self) -> str:
        return self.error.reason


def _ah_mac_input(dgram_src, dgram_dst, header: AhHeader, body) -> bytes:
    zeroed = replace(header, auth_data=bytes(len(header.auth_data)))
    outer = struct.pack(">4s4sB", ip(dgram_src).packed, ip(dgram_dst).packed, AH)
    return outer + encode_ah(zeroed) + wire.encode(body)


def _usable(sa: SecurityAssociation, now: int, direction: str) -> None:
    if sa.direction != direction:
        raise ValueError(f"SA spi={sa.spi} is {sa.direction}, need {direction}")
    if sa.expired(now):
        raise SaExpired(f"spi={sa.spi} expired at {sa.established + sa.lifespan}")


def ah_protect(sa: SecurityAssociation, dgram: IpDatagram, now: int = 0) -> IpDatagram:
    _usable(sa, now, "outbound")
    sa.seq += 1
    _check_width("sequence", sa.seq, 32)
    words = -(-sa.mac_len // 4)
    header = AhHeader.build(dgram.protocol, sa.spi, sa.seq, bytes(words * 4))
    tag = mac_tag(sa.hmac_key, _ah_mac_input(dgram.src_ip, dgram.dst_ip, header, dgram.payload), sa.mac_len)
    header = replace(header, auth_data=tag.ljust(words * 4, b"\0"))
    return IpDatagram(dgram.src_ip, dgram.dst_ip, AH, dgram.ttl, AhPayload(header, dgram.payload))


def ah_verify(sadb: Sadb, dgram: IpDatagram, now: int = 0):
    try:
        if dgram.protocol != AH or not isinstance(dgram.payload, AhPayload):
            raise UnknownSpi("datagram carries no AH")
        header = dgram.payload.header
        decode_ah(encode_ah(header))
        sa = sadb.lookup(header.spi, dgram.src_ip)
        if sa.expired(now):
            raise SaExpired(f"spi={sa.spi}")
        expect = mac_tag(sa.hmac_key, _ah_mac_input(dgram.src_ip, dgram.dst_ip, header, dgram.payload.body),
                         sa.mac_len).ljust(len(header.auth_data), b"\0")
        if expect != header.auth_data:
            raise BadMac(f"spi={sa.spi} seq={header.sequence}")
        if header.sequence in sa.replay_window:
            raise ReplayedSeq(f"spi={sa.spi} seq={header.sequence}")
        sa.replay_window.add(header.sequence)
    except IpsecError as exc:
        return Reject(exc)
    except ValueError as exc:
        return Reject(LengthMismatch(str(exc)))
    return Accept(IpDatagram(dgram.src_ip, dgram.dst_ip, header.next_header, dgram.ttl, dgram.payload.body))


def esp_protect(sa: SecurityAssociation, dgram: IpDatagram, now: int = 0) -> IpDatagram:
    if sa.enc_key is None:
        raise ValueError("ESP needs an SA with encryption parameters")
    _usable(sa, now, "outbound")
    sa.seq += 1
    _check_width("sequence", sa.seq, 32)
    sealed = seal(sa.enc_key, dgram.payload)
    pad = esp_pad_length(len(wire.encode(sealed)), sa.block)
    pkt = EspPacket(sa.spi, sa.seq, sealed, default_padding(pad), pad, dgram.protocol)
    pkt = replace(pkt, auth_data=mac_tag(sa.hmac_key, _esp_unauth(pkt), sa.mac_len))
    return IpDatagram(dgram.src_ip, dgram.dst_ip, ESP, dgram.ttl, pkt)


def esp_open(sadb: Sadb, dgram: IpDatagram, now: int = 0):
    try:
        if dgram.protocol != ESP or not isinstance(dgram.payload, EspPacket):
            raise UnknownSpi("datagram carries no ESP")
        pkt = dgram.payload
        sa = sadb.lookup(pkt.spi, dgram.src_ip)
        if sa.expired(now):
            raise SaExpired(f"spi={sa.spi}")
        if mac_tag(sa.hmac_key, _esp_unauth(pkt), sa.mac_len) != pkt.auth_data:
            raise BadMac(f"spi={sa.spi} seq={pkt.sequence}")
        if pkt.sequence in sa.replay_window:
            raise ReplayedSeq(f"spi={sa.spi} seq={pkt.sequence}")
        try:
            body = unseal(sa.enc_key, pkt.payload)
        except KeyMismatch as exc:
            err = IpsecError(str(exc))
            err.reason = "KeyMismatch"
            raise err from None
        sa.replay_window.add(pkt.sequence)
    except IpsecError as exc:
        return Reject(exc)
    except ValueError as exc:
        return Reject(LengthMismatch(str(exc)))
    return Accept(IpDatagram(dgram.src_ip, dgram.dst_ip, pkt.next_header, dgram.ttl, body))


# -- IKE and SA negotiation --------------------------------------------------

@dataclass
class Proposal:
    protocol: str = "ESP"
    hmacs: tuple = ("hmac-sha1",)
    ciphers: tuple = ("aes128",)
    kdfs: tuple = ("kdf-sha1",)
    lifespan: int = DEFAULT_LIFESPAN

    def render(self) -> str:
        parts = [self.protocol, ",".join(self.hmacs)]
        if self.protocol == "ESP":
            parts += [",".join(self.ciphers), ",".join(self.kdfs)]
        return f"proposal({' '.join(parts)} life={self.lifespan})"


@dataclass(frozen=True)
class IkeSa:
    a: str
    b: str
    a_public: Key
    b_public: Key


class IpsecHost:
    """IPSec state of one node; also the hook object consulted by its IpStack."""

    def __init__(self, name: str, address, ring: Keyring, ca: str = "CA",
                 trusted: set | None = None, net: Network | None = None):
        self.name = name
        self.address = ip(address)
        self.ring = ring
        self.public, self.private = ring.keygen(name)
        self.cert: Cert = cert_issue(ca, name, self.public)
        self.store = TrustStore(set(trusted) if trusted is not None else {ca})
        self.sadb = Sadb()
        self.ike: dict[str, IkeSa] = {}
        self.peer_keys: dict[str, Key] = {}
        self.peer_addrs: dict[str, Any] = {}
        self.ranks = dict(DEFAULT_RANKS)
        self.supported = set(DEFAULT_RANKS)
        self.lifespan_cap = DEFAULT_LIFESPAN
        self.required_from: set = set()
        self._spi: dict[str, int] = {}
        self.net = net
        self.transcript: list = []

    def now(self) -> int:
        return self.net.clock if self.net is not None else 0

    def _note(self, text: str, obj=None) -> None:
        self.transcript.append((text, obj))
        if self.net is not None:
            self.net.emit(self.name, Action.NOTE, Layer.INTERNET, text, obj)

    def next_spi(self, partner: str) -> int:
        spi = self._spi.get(partner, SPI_BASE - 1) + 1
        if spi > SPI_MAX:
            raise SpiExhausted(f"{self.name} has no SPI left for {partner}")
        self._spi[partner] = spi
        return spi

    # -- stack hook --------------------------------------------------------
    def outbound(self, dgram: IpDatagram):
        sa = self.sadb.outbound_for(dgram.dst_ip)
        if sa is None or dgram.protocol not in (TCP, UDP):
            return dgram
        try:
            out = (ah_protect if sa.protocol == "AH" else esp_protect)(sa, dgram, self.now())
        except SaExpired as exc:
            if self.net is not None:
                self.net.emit(self.name, Action.DROP, Layer.INTERNET, f"SaExpired {exc}", dgram)
            return None
        self._note(f"{sa.protocol.lower()} protect spi={sa.spi} seq={sa.seq}", out)
        return out

    def inbound(self, dgram: IpDatagram):
        check = ah_verify if dgram.protocol == AH else esp_open
        result = check(self.sadb, dgram, self.now())
        if isinstance(result, Reject):
            if self.net is not None:
                self.net.emit(self.name, Action.DROP, Layer.INTERNET,
                              f"{result.reason} {result.error}", dgram)
            return None
        self._note(f"{'ah' if dgram.protocol == AH else 'esp'} accept from {dgram.src_ip}")
        return result.inner

    def requires(self, dgram: IpDatagram) -> bool:
        return dgram.src_ip in self.required_from and dgram.protocol in (TCP, UDP)


def ike_establish(a: IpsecHost, b: IpsecHost) -> IkeSa:
    """Mutual certificate exchange; both sides end up holding the peer's public key."""
    if b.name in a.ike:
        return a.ike[b.name]
    a._note(f"ike send cert {a.cert.render()}", a.cert)
    if not cert_verify(b.store, a.cert):
        raise CertRejected(f"{b.name} does not trust {a.cert.issuer}")
    b._note(f"ike send cert {b.cert.render()}", b.cert)
    if not cert_verify(a.store, b.cert):
        raise CertRejected(f"{a.name} does not trust {b.cert.issuer}")
    sa = IkeSa(a.name, b.name, a.cert.public, b.cert.public)
    for me, peer, pk in ((a, b, b.cert.public), (b, a, a.cert.public)):
        me.ike[peer.name] = sa
        me.peer_keys[peer.name] = pk
        me.peer_addrs[peer.name] = peer.address
    return sa


def _pick(ranks: dict, supported: set, offered, what: str) -> str:
    options = [x for x in offered if x in supported]
    if not options:
        raise EmptyProposal(f"no acceptable {what} in {list(offered)}")
    return max(options, key=lambda x: (ranks.get(x, 0), x))


def sa_establish(initiator: IpsecHost, responder: IpsecHost, proposal: Proposal | None = None):
    """Negotiate one SA carrying responder -> initiator traffic.

    The initiator chooses a fresh SPI and records the inbound SA; the
    responder records the matching outbound SA.  Returns (inbound, outbound).
    """
    proposal = proposal or Proposal()
    if responder.name not in initiator.ike or initiator.name not in responder.ike:
        raise NoIkeSa(f"no IKE SA between {initiator.name} and {responder.name}")
    if proposal.protocol not in ("AH", "ESP"):
        raise EmptyProposal(f"unknown protocol {proposal.protocol}")
    if not proposal.hmacs or (proposal.protocol == "ESP" and not (proposal.ciphers and proposal.kdfs)):
        raise EmptyProposal("proposal lists are empty")
    spi = initiator.next_spi(responder.name)
    a_contrib = Plain.of(f"dh:{initiator.name}:{initiator.ring.nonce()}")
    offer = seal(initiator.peer_keys[responder.name], tup(spi, proposal.render(), a_contrib))
    initiator._note(f"sa offer {render(offer)}", offer)

    hmac = _pick(responder.ranks, responder.supported, proposal.hmacs, "hmac")
    cipher = kdf_alg = None
    if proposal.protocol == "ESP":
        cipher = _pick(responder.ranks, responder.supported, proposal.ciphers, "cipher")
        kdf_alg = _pick(responder.ranks, responder.supported, proposal.kdfs, "kdf")
    lifespan = min(proposal.lifespan, responder.lifespan_cap)
    b_contrib = Plain.of(f"dh:{responder.name}:{responder.ring.nonce()}")
    choice = "/".join(x for x in (hmac, cipher, kdf_alg) if x)
    answer = seal(responder.peer_keys[initiator.name], tup(spi, choice, lifespan, b_contrib))
    responder._note(f"sa choose {render(answer)}", answer)

    session = dh_agree(a_contrib, b_contrib)
    now = initiator.now()
    inbound = SecurityAssociation(
        spi, responder.address, "inbound", proposal.protocol, hmac, kdf(session, "auth"),
        cipher, kdf(session, "enc") if cipher else None, lifespan, now, kdf_alg=kdf_alg,
        mac_len=MAC_LENGTHS.get(hmac, DEFAULT_MAC_LEN), block=BLOCK_SIZES.get(cipher, DEFAULT_BLOCK))
    outbound = replace(inbound.mirror(), partner_ip=initiator.address)
    initiator.sadb.install(inbound)
    responder.sadb.install(outbound)
    return inbound, outbound


def _ipsec_host(net: Network, name: str) -> IpsecHost:
    stack = net.node(name).stack
    if stack.ipsec is None:
        ring = net.context.setdefault("keyring", Keyring(net.seed))
        stack.ipsec = IpsecHost(name, net.node(name).addrs[0].ip, ring, net=net)
    return stack.ipsec


def protect_flow(net: Network, a: str, b: str, protocol: str = "AH",
                 proposal: Proposal | None = None, require: bool = True):
    """Install SAs in both directions between two booted nodes."""
    ha, hb = _ipsec_host(net, a), _ipsec_host(net, b)
    ike_establish(ha, hb)
    proposal = proposal or Proposal(protocol=protocol)
    sa_establish(ha, hb, proposal)
    sa_establish(hb, ha, proposal)
    if require:
        ha.required_from.add(hb.address)
        hb.required_from.add(ha.address)
    return ha, hb


# -- VPN ---------------------------------------------------------------------

def public_address(node) -> Any:
    for a in node.addrs:
        if scope(a.ip) == "public":
            return a.ip
    raise NoPublicAddress(f"{node.name} has no public address")


def vpn_encapsulate(gateway, inner: IpDatagram, tunnel_key: Key, peer_gateway_ip,
                    allow_public: bool = False) -> IpDatagram:
    src = public_address(gateway)
    if not allow_public and (scope(inner.src_ip) != "private" or scope(inner.dst_ip) != "private"):
        raise NoPublicAddress(f"inner {inner.src_ip}>{inner.dst_ip} is not private on both ends")
    return IpDatagram(src, ip(peer_gateway_ip), IPIP, 64, seal(tunnel_key, inner))


def vpn_decapsulate(gateway, outer: IpDatagram, tunnel_key: Key) -> IpDatagram:
    if outer.protocol != IPIP:
        raise NotTunneled(f"protocol {outer.protocol} is not IP-in-IP")
    if outer.dst_ip not in gateway.ips:
        raise NotTunneled(f"{outer.dst_ip} is not an address of {gateway.name}")
    return unseal(tunnel_key, outer.payload)


class VpnTunnel:
    """Gateway hook: seal traffic for remote private prefixes into IP-in-IP."""

    def __init__(self, net: Network, gateway: str, key: Key, remote: dict):
        self.net = net
        self.gateway = net.node(gateway)
        self.key = key
        self.remote = {ipaddress.IPv4Network(p): ip(g) for p, g in remote.items()}

    def encap(self, dgram: IpDatagram) -> IpDatagram:
        if dgram.protocol == IPIP:
            return dgram
        for prefix, peer in self.remote.items():
            if dgram.dst_ip in prefix:
                outer = vpn_encapsulate(self.gateway, dgram, self.key, peer)
                self.net.emit(self.gateway.name, Action.NOTE, Layer.INTERNET,
                              f"vpn encap {dgram.src_ip}>{dgram.dst_ip} to {peer}")
                return outer
        return dgram

    def decap(self, dgram: IpDatagram):
        try:
            inner = vpn_decapsulate(self.gateway, dgram, self.key)
        except (KeyMismatch, NotTunneled) as exc:
            self.net.emit(self.gateway.name, Action.DROP, Layer.INTERNET,
                          f"{type(exc).__name__} {exc}", dgram)
            return None
        self.net.emit(self.gateway.name, Action.NOTE, Layer.INTERNET,
                      f"vpn decap {inner.src_ip}>{inner.dst_ip}")
        return inner


def vpn_link(net: Network, gw_a: str, gw_b: str, prefix_a: str, prefix_b: str, key: Key | None = None) -> Key:
    """Install a symmetric tunnel between two gateways; returns the tunnel key."""
    if key is None:
        ring = net.context.setdefault("keyring", Keyring(net.seed))
        key = ring.keygen(f"tunnel-{gw_a}-{gw_b}", "symmetric")
    a, b = net.node(gw_a), net.node(gw_b)
    a.stack.tunnel = VpnTunnel(net, gw_a, key, {prefix_b: public_address(b)})
    b.stack.tunnel = VpnTunnel(net, gw_b, key, {prefix_a: public_address(a)})
    return key

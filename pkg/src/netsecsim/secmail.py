"""Secure e-mail envelopes (PGP style and S/MIME style), link versus
end-to-end exposure analysis, and the key counts of both approaches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .simnet import Action, Layer, Network, Trace
from .symcrypto import (Cert, CryptoError, Key, KeyMismatch, Keyring, NotSealed, Pair, Plain,
                        TrustStore, cert_issue, cert_verify, digest, render, seal, text, unseal)

LAYERS = ("application", "transport", "internet", "link")


class MailError(Exception):
    pass


class HeaderMismatch(MailError):
    pass


class CertRejected(MailError):
    pass


class PathTooShort(MailError):
    pass


@dataclass(frozen=True)
class MailUser:
    name: str
    public: Key
    private: Key
    cert: Cert


def mail_user(ring: Keyring, name: str, ca: str = "CA") -> MailUser:
    pub, prv = ring.keygen(name)
    return MailUser(name, pub, prv, cert_issue(ca, name, pub))


@dataclass(frozen=True)
class MailEnvelope:
    outer_header: str
    scheme: str          # "pgp_style" | "smime"
    components: tuple

    def render(self) -> str:
        parts = " ".join(f"[{i}] {render(c)}" for i, c in enumerate(self.components, 1))
        return f"envelope {self.scheme} header={self.outer_header!r} {parts}"


def _message(header: str, body: str) -> Pair:
    return Pair(Plain.of(header), Plain.of(body))


def _split(msg) -> tuple[str, str]:
    if not isinstance(msg, Pair):
        raise KeyMismatch(f"envelope body is not a header/body pair: {render(msg)}")
    return text(msg.left), text(msg.right)


def _open(k: Key, t):
    try:
        return unseal(k, t)
    except NotSealed as exc:
        raise KeyMismatch(str(exc)) from None


# -- PGP style ----------------------------------------------------------------

@dataclass(frozen=True)
class PgpOpened:
    header: str | None
    body: str | None
    sender: str | None
    non_repudiation_ok: bool


def pgp_seal(sender: MailUser, receiver_pub: Key, header: str, body: str) -> MailEnvelope:
    c1 = seal(receiver_pub, sender.cert)
    c2 = seal(receiver_pub, seal(sender.private, _message(header, body)))
    return MailEnvelope(header, "pgp_style", (c1, c2))


def pgp_open(receiver_prv: Key, store: TrustStore, env: MailEnvelope) -> PgpOpened:
    if env.scheme != "pgp_style" or len(env.components) != 2:
        raise MailError(f"not a PGP-style envelope: {env.scheme}")
    cert = _open(receiver_prv, env.components[0])
    if not isinstance(cert, Cert) or not cert_verify(store, cert):
        raise CertRejected(f"sender certificate {render(cert)} not trusted")
    signed = _open(receiver_prv, env.components[1])
    try:
        header, body = _split(unseal(cert.public, signed))
    except (KeyMismatch, NotSealed):
        # signed by someone other than the certified sender
        return PgpOpened(None, None, cert.subject, False)
    if header != env.outer_header:
        raise HeaderMismatch(f"outer header {env.outer_header!r} vs embedded {header!r}")
    return PgpOpened(header, body, cert.subject, True)


# -- S/MIME style ---------------------------------------------------------------

@dataclass(frozen=True)
class SmimeOpened:
    header: str
    body: str
    integrity_ok: bool
    sender_ok: bool


def smime_seal(sender: MailUser, receiver_pub: Key, header: str, body: str, ring: Keyring) -> MailEnvelope:
    """Four components: body under a fresh session key, the key for the
    receiver, the signed digest, and the sender's certificate for the receiver."""
    k = ring.keygen(f"mail-{sender.name}", "symmetric")
    msg = _message(header, body)
    components = (seal(k, msg), seal(receiver_pub, k), seal(sender.private, digest(msg)),
                  seal(receiver_pub, sender.cert))
    return MailEnvelope(header, "smime", components)


def smime_open(receiver_prv: Key, store: TrustStore, env: MailEnvelope) -> SmimeOpened:
    if env.scheme != "smime" or len(env.components) != 4:
        raise MailError(f"not an S/MIME envelope: {env.scheme}")
    c1, c2, c3, c4 = env.components
    k = _open(receiver_prv, c2)
    if not isinstance(k, Key):
        raise KeyMismatch(f"component 2 carries no key: {render(k)}")
    msg = _open(k, c1)
    header, body = _split(msg)
    try:
        cert = unseal(receiver_prv, c4)
    except CryptoError:
        cert = None
    trusted = isinstance(cert, Cert) and cert_verify(store, cert)
    signed_digest = None
    if isinstance(cert, Cert):
        try:
            signed_digest = unseal(cert.public, c3)
        except CryptoError:
            signed_digest = None
    integrity_ok = signed_digest == digest(msg)
    sender_ok = trusted and signed_digest is not None
    return SmimeOpened(header, body, integrity_ok, sender_ok)


# -- key counts and exposure ------------------------------------------------------

def key_count(mode: str, count: int) -> int:
    """Keys needed: link encryption pairs hosts, end-to-end symmetric pairs
    users, end-to-end public-key needs one key pair per user."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if mode in ("link", "e2e_symmetric"):
        return count * (count - 1) // 2
    if mode == "e2e_public":
        return 2 * count
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class ExposureReport:
    mode: str
    exposure: list = field(default_factory=list)    # (node, layer, plaintext)
    trace: Trace = field(default_factory=Trace)

    def plaintext_at(self) -> set:
        return {(n, l) for n, l, p in self.exposure if p}


def _mode(mode: str) -> str:
    if mode in ("link",):
        return "link"
    if mode in ("end_to_end", "e2e", "e2e_symmetric", "e2e_public"):
        return "end_to_end"
    raise ValueError(f"unknown mode {mode!r}")


def exposure_report(path: list, mode: str, message: str = "meet at noon", seed: int = 0) -> ExposureReport:
    """Where a message is plaintext when sent along ``path``.

    Also produces a trace of the transfer: every wire SEND carries a
    Sealed term, under per-hop keys (link) or one end-to-end key.
    """
    if len(path) < 2:
        raise PathTooShort(f"path needs at least 2 nodes, got {len(path)}")
    mode = _mode(mode)
    src, dst = path[0], path[-1]
    exposure = []
    for i, node in enumerate(path):
        endpoint = i in (0, len(path) - 1)
        layers = LAYERS if endpoint else ("internet", "link")
        for layer in layers:
            if mode == "link":
                plain = True
            else:
                plain = endpoint and layer == "application"
            exposure.append((node, layer, plain))
    for a, b in zip(path, path[1:]):
        exposure.append((f"{a}-{b}", "wire", False))

    net = Network(seed)
    ring = Keyring(seed)
    body = Plain.of(message)
    emit = net.emit
    emit(src, Action.NOTE, Layer.APPLICATION, f"compose {render(body)}", body)
    e2e = ring.keygen(f"{src}-{dst}", "symmetric") if mode == "end_to_end" else None
    payload = seal(e2e, body) if e2e is not None else body
    t = 0
    for hop, (a, b) in enumerate(zip(path, path[1:])):
        on_wire = payload
        if mode == "link":
            hop_key = ring.keygen(f"{a}-{b}", "symmetric")
            on_wire = seal(hop_key, payload)
        net.scheduler.clock = t
        emit(a, Action.SEND, Layer.LINK, f"to {b} {render(on_wire)}", on_wire)
        t += 1
        net.scheduler.clock = t
        emit(b, Action.RECV, Layer.LINK, f"from {a} {render(on_wire)}", on_wire)
        if mode == "link" and b != dst:
            emit(b, Action.NOTE, Layer.INTERNET, f"hop decrypt {render(payload)}", payload)
    if mode == "end_to_end":
        emit(dst, Action.NOTE, Layer.APPLICATION, f"deliver {render(unseal(e2e, payload))}", body)
    else:
        emit(dst, Action.NOTE, Layer.APPLICATION, f"deliver {render(payload)}", body)
    return ExposureReport(mode, exposure, net.trace)

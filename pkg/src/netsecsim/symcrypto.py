"""Symbolic (Dolev-Yao style) cryptography.

Ciphertexts, digests, MACs and certificates are plain Python values with
structural equality.  A sealed body can only be recovered through
:func:`unseal` with the matching key, which is what turns secrecy claims
into decidable predicates over terms.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import ipaddress
import random
from dataclasses import dataclass, field
from typing import Any, Iterator

from .wire import wire_type


class CryptoError(Exception):
    pass


class KeyMismatch(CryptoError):
    pass


class NotSealed(CryptoError):
    pass


class NotACert(CryptoError):
    pass


@wire_type
class KeyKind(str, enum.Enum):
    PUBLIC = "public"
    PRIVATE = "private"
    SYMMETRIC = "symmetric"


_PREFIX = {KeyKind.PUBLIC: "pub", KeyKind.PRIVATE: "prv", KeyKind.SYMMETRIC: "sym"}


@wire_type
@dataclass(frozen=True)
class Key:
    """A key symbol.  ``secret`` discriminates keys without ever being rendered."""

    kind: KeyKind
    owner: str
    serial: int
    secret: str = field(default="", repr=False)

    def render(self) -> str:
        return f"{_PREFIX[self.kind]}:{self.owner}#{self.serial}"

    def opens(self, sealing_key: Key) -> bool:
        if sealing_key.kind is KeyKind.SYMMETRIC:
            return self == sealing_key
        if self.kind is KeyKind.SYMMETRIC or self.kind is sealing_key.kind:
            return False
        return (self.owner, self.serial, self.secret) == (
            sealing_key.owner, sealing_key.serial, sealing_key.secret)

    def __str__(self) -> str:
        return self.render()


def _quote(data: bytes) -> str:
    text = data.decode("utf-8", "backslashreplace")
    text = text.replace("\\", "\\\\").replace('"', '\\"')
    text = text.replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")
    return f'"{text}"'


def render(obj: Any) -> str:
    """Deterministic prefix rendering of a term or any wire value."""
    if hasattr(obj, "render"):
        return obj.render()
    if isinstance(obj, (bytes, bytearray)):
        return _quote(bytes(obj))
    if isinstance(obj, tuple):
        return "(" + ", ".join(render(x) for x in obj) + ")"
    return str(obj)


@wire_type
@dataclass(frozen=True)
class Plain:
    data: bytes

    @classmethod
    def of(cls, value) -> Plain:
        if isinstance(value, Plain):
            return value
        if isinstance(value, bytes):
            return cls(value)
        return cls(str(value).encode("utf-8"))

    def text(self) -> str:
        return self.data.decode("utf-8", "replace")

    def render(self) -> str:
        return f"Plain({_quote(self.data)})"


@wire_type
class Sealed:
    """Ciphertext.  The body is reachable only through :func:`unseal`."""

    __slots__ = ("key", "_body")

    def __init__(self, key: Key, body: Any):
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "_body", body)

    def __setattr__(self, name, value):
        raise AttributeError("Sealed terms are immutable")

    def __eq__(self, other):
        return (isinstance(other, Sealed) and self.key == other.key
                and self._body == other._body)

    def __hash__(self):
        return hash(("Sealed", self.key, self._body))

    def __repr__(self):
        return f"Sealed({self.key.render()}, ...)"

    def render(self) -> str:
        return f"Sealed({self.key.render()}, {render(self._body)})"

    def __wire_fields__(self):
        return (self.key, self._body)

    @classmethod
    def __from_wire__(cls, key, body):
        return cls(key, body)


@wire_type
@dataclass(frozen=True)
class Digest:
    body: Any

    def render(self) -> str:
        return f"Digest({render(self.body)})"


@wire_type
@dataclass(frozen=True)
class Mac:
    key: Key
    body: Any

    def render(self) -> str:
        return f"Mac({self.key.render()}, {render(self.body)})"


@wire_type
@dataclass(frozen=True)
class Cert:
    subject: str
    public: Key
    issuer: str

    def render(self) -> str:
        return f"Cert({self.subject}, {self.public.render()}, {self.issuer})"


@wire_type
@dataclass(frozen=True)
class Pair:
    left: Any
    right: Any

    def render(self) -> str:
        return f"Pair({render(self.left)}, {render(self.right)})"


Term = Any  # Plain | Sealed | Digest | Mac | Cert | Pair | Key


def tup(*items) -> Term:
    """Right-nested Pair over the items; str/int/bytes become Plain."""
    terms = [_as_term(x) for x in items]
    if not terms:
        raise ValueError("tup needs at least one item")
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = Pair(t, out)
    return out


def untup(term: Term, n: int) -> list:
    out = []
    for _ in range(n - 1):
        if not isinstance(term, Pair):
            raise ValueError(f"expected a {n}-tuple term")
        out.append(term.left)
        term = term.right
    out.append(term)
    return out


def _as_term(x):
    if isinstance(x, (str, int, bytes)) and not isinstance(x, bool):
        return Plain.of(x)
    return x


def text(term: Term) -> str:
    if not isinstance(term, Plain):
        raise ValueError(f"expected Plain, got {render(term)}")
    return term.text()


# -- key management ---------------------------------------------------------

class Keyring:
    """Deterministic key factory: keys depend only on (seed, owner, serial)."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._serials: dict[str, int] = {}
        self.rng = random.Random(seed)

    def _next(self, owner: str) -> int:
        self._serials[owner] = self._serials.get(owner, 0) + 1
        return self._serials[owner]

    def keygen(self, owner: str, kind: str = "asymmetric"):
        serial = self._next(owner)
        hidden = _label(str(self.seed), owner, str(serial))
        if kind in ("asymmetric", "pair"):
            return (Key(KeyKind.PUBLIC, owner, serial, hidden),
                    Key(KeyKind.PRIVATE, owner, serial, hidden))
        if kind in ("symmetric", KeyKind.SYMMETRIC):
            return Key(KeyKind.SYMMETRIC, owner, serial, hidden)
        raise ValueError(f"unknown key kind {kind!r}")

    def nonce(self, bits: int = 32) -> int:
        return self.rng.getrandbits(bits)


def keygen(ring: Keyring, owner: str, kind: str = "asymmetric"):
    return ring.keygen(owner, kind)


# -- primitives -------------------------------------------------------------

def seal(k: Key, t: Term) -> Sealed:
    return Sealed(k, t)


def unseal(k: Key, t: Term) -> Term:
    if not isinstance(t, Sealed):
        raise NotSealed(f"not a sealed term: {render(t)}")
    if not k.opens(t.key):
        raise KeyMismatch(f"{k.render()} does not open {t.key.render()}")
    return t._body


def digest(t: Term) -> Digest:
    return Digest(t)


def mac(k: Key, t: Term) -> Mac:
    if k.kind is not KeyKind.SYMMETRIC:
        raise ValueError("mac requires a symmetric key")
    return Mac(k, t)


def mac_verify(k: Key, t: Term, m: Term) -> bool:
    return k.kind is KeyKind.SYMMETRIC and m == Mac(k, t)


def mac_tag(k: Key, data: bytes, length: int = 12) -> bytes:
    """Byte-string stand-in for a keyed MAC over raw bytes.

    Only a holder of ``k`` (including its hidden part) can reproduce the tag.
    """
    h = hashlib.sha256()
    h.update(repr((k.kind.value, k.owner, k.serial, k.secret)).encode())
    h.update(b"\x00")
    h.update(data)
    out = h.digest()
    while len(out) < length:
        out += hashlib.sha256(out).digest()
    return out[:length]


def cert_issue(ca: str, subject: str, pk: Key) -> Cert:
    return Cert(subject, pk, ca)


@dataclass
class TrustStore:
    trusted_issuers: set = field(default_factory=set)
    known_hosts: dict = field(default_factory=dict)

    def remember(self, host: str, pk: Key) -> None:
        if host in self.known_hosts and self.known_hosts[host] != pk:
            raise ValueError(f"known_hosts already pins a different key for {host}")
        self.known_hosts[host] = pk


def cert_verify(store: TrustStore, c: Term) -> bool:
    if not isinstance(c, Cert):
        raise NotACert(f"not a certificate: {render(c)}")
    return c.issuer in store.trusted_issuers


def _label(*parts: str) -> str:
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:10]


def dh_agree(a_contrib: Term, b_contrib: Term) -> Key:
    if a_contrib is None or b_contrib is None:
        raise ValueError("both contributions are required")
    x, y = sorted([render(a_contrib), render(b_contrib)])
    return Key(KeyKind.SYMMETRIC, f"dh/{_label(x, y)}", 0)


def kdf(session_key: Key, purpose: str = "enc") -> Key:
    return Key(KeyKind.SYMMETRIC, f"kdf/{purpose}/{session_key.owner}", session_key.serial,
               secret=session_key.secret)


def pwkey(password: str, owner: str) -> Key:
    """One-way password key.  Renders as ``sym:pwkey(owner)#0``; the password never appears."""
    return Key(KeyKind.SYMMETRIC, f"pwkey({owner})", 0,
               secret=hashlib.sha256(password.encode("utf-8")).hexdigest())


# -- knowledge analysis -----------------------------------------------------

def exposed(obj: Any) -> Iterator[Any]:
    """Yield every atom visible to an observer holding no keys.

    Atoms are Plain terms, Keys, raw bytes, strings, ints and addresses.
    Sealed bodies are not entered.
    """
    if isinstance(obj, Sealed):
        # the key reference names the key; it does not disclose it
        return
    if isinstance(obj, Mac):
        yield from exposed(obj.body)
        return
    if isinstance(obj, (Plain, Key, bytes, str, int, ipaddress.IPv4Address)) or obj is None:
        yield obj
        return
    if isinstance(obj, Digest):
        # a digest reveals nothing about its body
        return
    if isinstance(obj, (tuple, list, frozenset)):
        for x in obj:
            yield from exposed(x)
        return
    if isinstance(obj, enum.Enum):
        return
    if dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from exposed(getattr(obj, f.name))
        return
    custom = getattr(obj, "__wire_fields__", None)
    if custom is not None:
        for v in custom():
            yield from exposed(v)


def reveals(obj: Any, secret: bytes | str) -> bool:
    """True iff ``secret`` is visible in ``obj`` without any key."""
    needle = secret.encode() if isinstance(secret, str) else secret
    for atom in exposed(obj):
        if isinstance(atom, Plain) and needle in atom.data:
            return True
        if isinstance(atom, bytes) and needle in atom:
            return True
        if isinstance(atom, str) and needle.decode("utf-8", "replace") in atom:
            return True
    return False


def bare_keys(obj: Any) -> set:
    return {a for a in exposed(obj) if isinstance(a, Key)}

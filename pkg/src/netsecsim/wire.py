"""Canonical byte encoding for simulated wire objects.

Every value that travels inside a datagram (symbolic terms, transport
units, addresses) can be flattened to bytes and rebuilt exactly.  The
encoding is a simple tag-length-value scheme; it exists so that byte-level
codecs (AH/ESP) have a concrete payload to carry and authenticate.
"""

from __future__ import annotations

import dataclasses
import enum
import ipaddress
import struct

_REGISTRY: dict[str, type] = {}


class WireError(ValueError):
    pass


def wire_type(cls):
    """Class decorator registering a dataclass (or custom class) for encoding."""
    _REGISTRY[cls.__name__] = cls
    return cls


def _blob(tag: bytes, body: bytes) -> bytes:
    return tag + struct.pack(">I", len(body)) + body


def _fields_of(obj) -> tuple:
    custom = getattr(obj, "__wire_fields__", None)
    if custom is not None:
        return tuple(custom())
    return tuple(getattr(obj, f.name) for f in dataclasses.fields(obj))


def encode(obj) -> bytes:
    if obj is None:
        return _blob(b"N", b"")
    if obj is True or obj is False:
        return _blob(b"T" if obj else b"F", b"")
    if isinstance(obj, enum.Enum):
        return _blob(b"E", encode(type(obj).__name__) + encode(obj.value))
    if isinstance(obj, int):
        return _blob(b"I", str(obj).encode("ascii"))
    if isinstance(obj, str):
        return _blob(b"S", obj.encode("utf-8"))
    if isinstance(obj, (bytes, bytearray)):
        return _blob(b"B", bytes(obj))
    if isinstance(obj, ipaddress.IPv4Address):
        return _blob(b"A", obj.packed)
    if isinstance(obj, frozenset):
        items = sorted(obj, key=lambda x: encode(x))
        return _blob(b"Z", b"".join(encode(x) for x in items))
    if isinstance(obj, (tuple, list)):
        return _blob(b"L", b"".join(encode(x) for x in obj))
    name = type(obj).__name__
    if name not in _REGISTRY:
        raise WireError(f"type {name} is not registered for wire encoding")
    body = encode(name) + b"".join(encode(v) for v in _fields_of(obj))
    return _blob(b"O", body)


def _split(data: bytes) -> list[bytes]:
    out = []
    pos = 0
    while pos < len(data):
        out.append(_take(data, pos))
        pos += 5 + struct.unpack(">I", data[pos + 1:pos + 5])[0]
    return out


def _take(data: bytes, pos: int) -> bytes:
    if pos + 5 > len(data):
        raise WireError("truncated element header")
    (length,) = struct.unpack(">I", data[pos + 1:pos + 5])
    end = pos + 5 + length
    if end > len(data):
        raise WireError("truncated element body")
    return data[pos:end]


def decode(data: bytes):
    if len(data) < 5:
        raise WireError("truncated element header")
    tag = data[:1]
    (length,) = struct.unpack(">I", data[1:5])
    body = data[5:]
    if len(body) != length:
        raise WireError("element length does not match buffer")
    if tag == b"N":
        return None
    if tag == b"T":
        return True
    if tag == b"F":
        return False
    if tag == b"I":
        return int(body.decode("ascii"))
    if tag == b"S":
        return body.decode("utf-8")
    if tag == b"B":
        return body
    if tag == b"A":
        return ipaddress.IPv4Address(body)
    if tag == b"Z":
        return frozenset(decode(x) for x in _split(body))
    if tag == b"L":
        return tuple(decode(x) for x in _split(body))
    if tag == b"E":
        name_raw, value_raw = _split(body)
        cls = _REGISTRY.get(decode(name_raw))
        if cls is None:
            raise WireError("unknown enum type")
        return cls(decode(value_raw))
    if tag == b"O":
        parts = _split(body)
        name = decode(parts[0])
        cls = _REGISTRY.get(name)
        if cls is None:
            raise WireError(f"unknown wire type {name!r}")
        values = [decode(p) for p in parts[1:]]
        builder = getattr(cls, "__from_wire__", None)
        if builder is not None:
            return builder(*values)
        return cls(*values)
    raise WireError(f"unknown tag {tag!r}")

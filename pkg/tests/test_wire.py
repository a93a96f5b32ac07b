import ipaddress

import pytest
from hypothesis import given, strategies as st

from netsecsim import wire
from netsecsim.stack import IcmpMessage, TcpSegment, UdpMessage, datagram
from netsecsim.symcrypto import Keyring, Plain, seal, tup

scalars = st.one_of(st.none(), st.booleans(), st.integers(-2**40, 2**40), st.text(max_size=12),
                    st.binary(max_size=12),
                    st.integers(0, 2**32 - 1).map(ipaddress.IPv4Address))
values = st.recursive(scalars, lambda inner: st.one_of(st.lists(inner, max_size=4).map(tuple),
                                                        st.frozensets(st.integers(0, 9), max_size=4)),
                      max_leaves=12)


@given(values)
def test_round_trip_plain_values(v):
    assert wire.decode(wire.encode(v)) == v


@given(st.binary(max_size=40), st.integers(0, 65535), st.integers(0, 65535))
def test_round_trip_transport_units(data, sp, dp):
    for unit in (UdpMessage(sp, dp, data), TcpSegment(sp, dp, 1, 2, frozenset({"ACK"}), data=data),
                 IcmpMessage(8, sp, dp, data)):
        d = datagram("10.0.0.1", "10.0.0.2", 17, unit)
        assert wire.decode(wire.encode(d)) == d


def test_round_trip_sealed_terms():
    ring = Keyring(3)
    pub, _ = ring.keygen("B")
    term = seal(pub, tup("hi", 5, Plain(b"\x00\xff")))
    assert wire.decode(wire.encode(term)) == term


def test_truncated_input_is_rejected():
    blob = wire.encode(("a", 1))
    with pytest.raises(wire.WireError):
        wire.decode(blob[:-1])

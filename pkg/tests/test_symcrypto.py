import pytest
from hypothesis import given
from hypothesis import strategies as st

from netsecsim.symcrypto import (
    Cert, Digest, KeyKind, KeyMismatch, Keyring, NotACert, NotSealed, Pair, Plain, Sealed,
    TrustStore, cert_issue, cert_verify, dh_agree, digest, exposed, kdf, mac, mac_verify, pwkey,
    render, reveals, seal, unseal,
)

RING = Keyring(7)
B_PUB, B_PRV = RING.keygen("B")
C_PUB, C_PRV = RING.keygen("C")
S_PUB, S_PRV = RING.keygen("S")
K = RING.keygen("K", "symmetric")
KEYS = [B_PUB, B_PRV, C_PUB, C_PRV, S_PUB, S_PRV, K]

plains = st.binary(max_size=12).map(Plain)
terms = st.recursive(
    plains,
    lambda inner: st.one_of(
        st.tuples(st.sampled_from(KEYS), inner).map(lambda kt: seal(*kt)),
        inner.map(digest),
        st.tuples(inner, inner).map(lambda ab: Pair(*ab)),
    ),
    max_leaves=8,
)


def _matching(k):
    if k.kind is KeyKind.SYMMETRIC:
        return k
    return {B_PUB: B_PRV, B_PRV: B_PUB, C_PUB: C_PRV, C_PRV: C_PUB, S_PUB: S_PRV, S_PRV: S_PUB}[k]


def test_keygen_pairs_and_serials():
    ring = Keyring(0)
    pub, prv = ring.keygen("B")
    assert (pub.render(), prv.render()) == ("pub:B#1", "prv:B#1")
    assert ring.keygen("B")[0].render() == "pub:B#2"
    assert ring.keygen("B", "symmetric").render() == "sym:B#3"


def test_keygen_deterministic_per_seed():
    assert Keyring(3).keygen("A") == Keyring(3).keygen("A")
    assert Keyring(3).keygen("A") != Keyring(4).keygen("A")


def test_seal_renders_prefix_form():
    ring = Keyring(0)
    pub, _ = ring.keygen("B")
    assert render(seal(pub, Plain.of("hi"))) == 'Sealed(pub:B#1, Plain("hi"))'


def test_double_seal_nests():
    t = seal(B_PUB, seal(S_PRV, Plain.of("m")))
    assert unseal(S_PUB, unseal(B_PRV, t)) == Plain.of("m")


def test_open_with_wrong_owner_fails():
    with pytest.raises(KeyMismatch):
        unseal(C_PRV, seal(B_PUB, Plain.of("m")))


def test_open_non_sealed_fails():
    with pytest.raises(NotSealed):
        unseal(B_PRV, Plain.of("m"))


def test_signature_style_opened_by_public_key():
    assert unseal(S_PUB, seal(S_PRV, Plain.of("confirm"))) == Plain.of("confirm")


def test_same_kind_does_not_open():
    with pytest.raises(KeyMismatch):
        unseal(B_PUB, seal(B_PUB, Plain.of("m")))


@given(terms, st.sampled_from(KEYS))
def test_round_trip(t, k):
    assert unseal(_matching(k), seal(k, t)) == t


@given(terms, st.sampled_from(KEYS), st.sampled_from(KEYS))
def test_no_cross_owner_opening(t, k, other):
    sealed = seal(k, t)
    if other == _matching(k):
        assert unseal(other, sealed) == t
    else:
        with pytest.raises(KeyMismatch):
            unseal(other, sealed)


@given(terms, st.sampled_from(KEYS))
def test_opacity_of_sealed_bodies(t, k):
    secret = Plain(b"\x00secret-marker\x00")
    sealed = seal(k, Pair(secret, t))
    assert not reveals(sealed, b"secret-marker")
    assert list(exposed(sealed)) == []


def test_sealed_is_immutable():
    s = seal(K, Plain.of("x"))
    with pytest.raises(AttributeError):
        s.key = B_PUB


@given(terms, terms)
def test_digest_structural(a, b):
    assert digest(a) == digest(a)
    assert (digest(a) == digest(b)) == (a == b)


def test_digest_over_header_body_pair():
    msg = Pair(Plain.of("To: B"), Plain.of("hello"))
    assert isinstance(digest(msg), Digest)
    assert digest(msg) != digest(Pair(Plain.of("To: B"), Plain.of("hellO")))


def test_mac_verify():
    t = Plain.of("payload")
    other = Keyring(9).keygen("K", "symmetric")
    assert mac_verify(K, t, mac(K, t))
    assert not mac_verify(other, t, mac(K, t))
    assert not mac_verify(K, Plain.of("payloae"), mac(K, t))


def test_mac_requires_symmetric_key():
    with pytest.raises(ValueError):
        mac(B_PUB, Plain.of("x"))


def test_cert_verify_trust():
    store = TrustStore({"CA"})
    assert cert_verify(store, cert_issue("CA", "S", S_PUB))
    assert not cert_verify(store, cert_issue("M-CA", "S", C_PUB))
    with pytest.raises(NotACert):
        cert_verify(store, Plain.of("not a cert"))


def test_known_hosts_pin_is_monotonic():
    store = TrustStore()
    store.remember("S", S_PUB)
    store.remember("S", S_PUB)
    with pytest.raises(ValueError):
        store.remember("S", C_PUB)
    assert store.known_hosts == {"S": S_PUB}


@given(terms, terms)
def test_dh_commutative(x, y):
    assert dh_agree(x, y) == dh_agree(y, x)


def test_dh_distinct_pairs_and_usable():
    k1 = dh_agree(Plain.of("gx"), Plain.of("gy"))
    k2 = dh_agree(Plain.of("gx"), Plain.of("gz"))
    assert k1 != k2
    assert mac_verify(k1, Plain.of("m"), mac(k1, Plain.of("m")))
    assert unseal(k1, seal(k1, Plain.of("m"))) == Plain.of("m")


def test_kdf_yields_distinct_symmetric_keys():
    enc, auth = kdf(K, "enc"), kdf(K, "auth")
    assert enc.kind is auth.kind is KeyKind.SYMMETRIC
    assert enc != auth and enc != K


def test_pwkey_hides_password():
    k = pwkey("hunter2", "alice")
    assert "hunter2" not in render(k) and "hunter2" not in repr(k)
    assert k == pwkey("hunter2", "alice") and k != pwkey("hunter3", "alice")


def test_cert_render_names_issuer():
    c = cert_issue("CA", "S", S_PUB)
    assert isinstance(c, Cert) and "CA" in render(c) and "S" in render(c)


def test_sealed_equality_by_key_and_body():
    assert seal(K, Plain.of("a")) == seal(K, Plain.of("a"))
    assert seal(K, Plain.of("a")) != seal(K, Plain.of("b"))
    assert isinstance(seal(K, Plain.of("a")), Sealed)

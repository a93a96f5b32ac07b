import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from netsecsim.secmail import (
    CertRejected, HeaderMismatch, MailEnvelope, PathTooShort, exposure_report, key_count, mail_user,
    pgp_open, pgp_seal, smime_open, smime_seal,
)
from netsecsim.simnet import Action
from netsecsim.symcrypto import (
    Key, KeyMismatch, Keyring, Pair, Plain, Sealed, TrustStore, digest, exposed, seal, unseal,
)


def _people(seed=0):
    ring = Keyring(seed)
    return ring, mail_user(ring, "S"), mail_user(ring, "R"), TrustStore({"CA"})


# -- key counts -----------------------------------------------------------------------

def _pairs(n):
    return sum(1 for _ in itertools.combinations(range(n), 2))


def test_key_count_table_values():
    assert key_count("link", 10) == 45
    assert key_count("e2e_symmetric", 10) == 45
    assert key_count("e2e_public", 10) == 20
    assert key_count("e2e_public", 4) == 8


def test_key_count_at_one():
    assert (key_count("link", 1), key_count("e2e_symmetric", 1), key_count("e2e_public", 1)) == (0, 0, 2)


@pytest.mark.parametrize("n", range(1, 51))
def test_key_count_matches_enumeration(n):
    assert key_count("link", n) == _pairs(n)
    assert key_count("e2e_symmetric", n) == _pairs(n)
    # one (public, private) pair per user
    assert key_count("e2e_public", n) == len([k for _ in range(n) for k in ("pub", "prv")])


def test_key_count_rejects_bad_input():
    with pytest.raises(ValueError):
        key_count("link", 0)
    with pytest.raises(ValueError):
        key_count("carrier-pigeon", 3)


# -- PGP style ---------------------------------------------------------------------------

def test_pgp_structure():
    _, s, r, _ = _people()
    env = pgp_seal(s, r.public, "To: R", "hello")
    c1, c2 = env.components
    assert isinstance(c1, Sealed) and c1.key == r.public
    assert c2.key == r.public
    inner = unseal(r.private, c2)
    assert isinstance(inner, Sealed) and inner.key == s.private
    assert env.outer_header == "To: R"


def test_pgp_round_trip():
    _, s, r, store = _people()
    out = pgp_open(r.private, store, pgp_seal(s, r.public, "To: R", "hello"))
    assert (out.header, out.body, out.sender, out.non_repudiation_ok) == ("To: R", "hello", "S", True)


def test_pgp_empty_body():
    _, s, r, store = _people()
    assert pgp_open(r.private, store, pgp_seal(s, r.public, "h", "")).body == ""


def test_pgp_impostor_signature():
    ring, s, r, store = _people()
    m = mail_user(ring, "M")
    env = pgp_seal(s, r.public, "To: R", "hello")
    forged = MailEnvelope(env.outer_header, env.scheme,
                          (env.components[0], seal(r.public, seal(m.private, Pair(Plain.of("To: R"),
                                                                                     Plain.of("pay M"))))))
    out = pgp_open(r.private, store, forged)
    assert not out.non_repudiation_ok and out.body is None


def test_pgp_outer_header_edit():
    _, s, r, store = _people()
    env = pgp_seal(s, r.public, "To: R", "hello")
    with pytest.raises(HeaderMismatch):
        pgp_open(r.private, store, MailEnvelope("To: M", env.scheme, env.components))


def test_pgp_untrusted_cert_and_wrong_receiver():
    ring, s, r, _ = _people()
    env = pgp_seal(s, r.public, "h", "b")
    with pytest.raises(CertRejected):
        pgp_open(r.private, TrustStore({"Other-CA"}), env)
    with pytest.raises(KeyMismatch):
        pgp_open(mail_user(ring, "X").private, TrustStore({"CA"}), env)


# -- S/MIME ----------------------------------------------------------------------------------

def test_smime_four_components_fresh_keys():
    ring, s, r, _ = _people()
    e1 = smime_seal(s, r.public, "h", "b", ring)
    e2 = smime_seal(s, r.public, "h", "b", ring)
    assert len(e1.components) == 4
    k1, k2 = unseal(r.private, e1.components[1]), unseal(r.private, e2.components[1])
    assert isinstance(k1, Key) and k1 != k2


def test_smime_component3_is_signed_digest():
    ring, s, r, _ = _people()
    env = smime_seal(s, r.public, "h", "b", ring)
    assert unseal(s.public, env.components[2]) == digest(Pair(Plain.of("h"), Plain.of("b")))


def test_smime_honest():
    ring, s, r, store = _people()
    out = smime_open(r.private, store, smime_seal(s, r.public, "h", "b", ring))
    assert (out.header, out.body, out.integrity_ok, out.sender_ok) == ("h", "b", True, True)


def test_smime_body_flip_breaks_integrity():
    ring, s, r, store = _people()
    env = smime_seal(s, r.public, "h", "body", ring)
    k = unseal(r.private, env.components[1])
    bad = (seal(k, Pair(Plain.of("h"), Plain.of("bodY"))),) + env.components[1:]
    assert not smime_open(r.private, store, MailEnvelope("h", "smime", bad)).integrity_ok


def test_smime_untrusted_cert():
    ring, s, r, _ = _people()
    out = smime_open(r.private, TrustStore({"Other-CA"}), smime_seal(s, r.public, "h", "b", ring))
    assert not out.sender_ok


def _substitutes(ring, s, r, env):
    """Every alternative value for each component an on-path attacker can build."""
    m = mail_user(ring, "M")
    k_m = ring.keygen("M", "symmetric")
    msg = Pair(Plain.of("h"), Plain.of("forged"))
    return [
        seal(k_m, msg), seal(r.public, k_m), seal(m.private, digest(msg)), seal(r.public, m.cert),
        seal(m.public, msg), Plain.of("junk"), digest(msg),
        seal(r.public, Plain.of("junk")), seal(s.public, msg),
    ] + [c for c in smime_seal(m, r.public, "h", "forged", ring).components]


def test_smime_single_component_tamper_never_silent():
    ring, s, r, store = _people()
    env = smime_seal(s, r.public, "h", "b", ring)
    for index in range(4):
        for sub in _substitutes(ring, s, r, env):
            if sub == env.components[index]:
                continue
            comps = list(env.components)
            comps[index] = sub
            try:
                out = smime_open(r.private, store, MailEnvelope("h", "smime", tuple(comps)))
            except KeyMismatch:
                continue
            assert not (out.integrity_ok and out.sender_ok), (index, sub)


texts = st.text(min_size=0, max_size=20)


@given(texts, texts)
def test_round_trip_both_schemes(header, body):
    ring, s, r, store = _people()
    p = pgp_open(r.private, store, pgp_seal(s, r.public, header, body))
    m = smime_open(r.private, store, smime_seal(s, r.public, header, body, ring))
    assert (p.header, p.body) == (m.header, m.body) == (header, body)


# -- exposure ----------------------------------------------------------------------------------

PATH = ["A", "R1", "R2", "B"]


def test_exposure_link_mode():
    rep = exposure_report(PATH, "link")
    plain = rep.plaintext_at()
    for r in ("R1", "R2"):
        assert {(r, "internet"), (r, "link")} <= plain
    assert ("A", "application") in plain and ("B", "application") in plain


def test_exposure_e2e_mode():
    rep = exposure_report(PATH, "end_to_end")
    assert rep.plaintext_at() == {("A", "application"), ("B", "application")}


def test_exposure_two_node_path():
    for mode in ("link", "end_to_end"):
        plain = exposure_report(["A", "B"], mode).plaintext_at()
        assert ("A", "application") in plain and ("B", "application") in plain


def test_exposure_path_too_short():
    with pytest.raises(PathTooShort):
        exposure_report(["A"], "link")


@pytest.mark.parametrize("mode", ["link", "end_to_end"])
def test_exposure_wire_sends_sealed(mode):
    rep = exposure_report(PATH, mode, message="meet at noon")
    sends = rep.trace.select(action=Action.SEND)
    assert len(sends) == len(PATH) - 1
    for e in sends:
        assert isinstance(e.obj, Sealed)
        assert Plain.of("meet at noon") not in list(exposed(e.obj))


@given(st.lists(st.sampled_from(["R1", "R2", "R3", "R4"]), max_size=4), st.text(min_size=1, max_size=12))
def test_e2e_never_sends_plain_body(middle, message):
    rep = exposure_report(["A"] + middle + ["B"], "end_to_end", message=message)
    for e in rep.trace.select(action=Action.SEND):
        assert Plain.of(message) not in list(exposed(e.obj))

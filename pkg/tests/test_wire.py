import json
import os
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sealmr import crypto
from sealmr.errors import AuthFailure, ParseFailure, UnknownType
from sealmr.wire import (
    DATA_TYPES,
    Envelope,
    KeyValue,
    MessageType,
    decode_header,
    decode_kv,
    encode_header,
    encode_kv,
    frame_length,
    open_envelope,
    open_header,
    seal_envelope,
)


def sealed(mt, header, payload=b"", hk=None, pk=None):
    hk = hk or os.urandom(16)
    pk = pk or os.urandom(16)
    return seal_envelope(mt, header, payload, hk, pk, crypto.NonceCounter()), hk, pk


# -- header codec -----------------------------------------------------------------


def test_minimal_header_encoding_is_fixed():
    b = encode_header({"msg_type": MessageType.JOB_OPENING})
    assert b == b"\x00\x01" + b"\x08msg_type" + b"\x01" + struct.pack(">q", 1)
    assert decode_header(b) == {"msg_type": MessageType.JOB_OPENING}
    assert decode_header(b)["msg_type"] is MessageType.JOB_OPENING


def test_dest_id_round_trips_as_int():
    h = {"msg_type": MessageType.MAP_DATATYPE, "dest_id": 3, "job_id": "j"}
    out = decode_header(encode_header(h))
    assert out == h and type(out["dest_id"]) is int


def test_encoding_is_canonical():
    a = {"msg_type": MessageType.EOS, "job_id": "j", "slot": 1}
    b = {"slot": 1, "job_id": "j", "msg_type": MessageType.EOS}
    assert encode_header(a) == encode_header(b)


names = st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=0x2FF), min_size=1, max_size=12).filter(
    lambda s: s not in ("msg_type", "dest_id")
)
values = st.one_of(st.integers(min_value=-(2**63), max_value=2**63 - 1), st.text(max_size=40))


@st.composite
def headers(draw):
    mt = draw(st.sampled_from(list(MessageType)))
    h = draw(st.dictionaries(names, values, max_size=6))
    h["msg_type"] = mt
    if mt in DATA_TYPES:
        h["dest_id"] = draw(st.integers(min_value=0, max_value=1000))
    return h


@settings(max_examples=1200, deadline=None)
@given(headers())
def test_random_headers_round_trip(h):
    assert decode_header(encode_header(h)) == h


@settings(max_examples=200, deadline=None)
@given(headers(), st.binary(max_size=200))
def test_random_envelopes_round_trip(h, payload):
    env, hk, pk = sealed(h["msg_type"], h, payload)
    back = Envelope.from_bytes(env.to_bytes())
    assert open_envelope(back, hk, pk) == (h, payload)


def test_dest_id_rules():
    with pytest.raises(ParseFailure):
        encode_header({"msg_type": MessageType.MAP_DATATYPE})
    with pytest.raises(ParseFailure):
        encode_header({"msg_type": MessageType.RESULT, "dest_id": 1})
    with pytest.raises(ParseFailure):
        encode_header({"msg_type": MessageType.MAP_DATATYPE, "dest_id": "1"})


def test_bad_values_rejected():
    for bad in ({"msg_type": 1, "x": True}, {"msg_type": 1, "x": 1.5}, {"msg_type": 1, "x": 2**63}, {"x": 1}, {"msg_type": "1"}):
        with pytest.raises(ParseFailure):
            encode_header(bad)


def test_unknown_type_and_tag_rejected():
    with pytest.raises(UnknownType):
        encode_header({"msg_type": 0x7F})
    good = encode_header({"msg_type": MessageType.RESULT, "a": 1})
    # value tag of attribute "a" sits right after its name
    i = good.index(b"\x01a") + 2
    with pytest.raises(ParseFailure):
        decode_header(good[:i] + b"\x09" + good[i + 1 :])


def test_non_canonical_and_trailing_bytes_rejected():
    a = b"\x01a\x01" + struct.pack(">q", 1)
    mt = b"\x08msg_type\x01" + struct.pack(">q", 8)
    assert decode_header(b"\x00\x02" + a + mt)["a"] == 1
    with pytest.raises(ParseFailure):
        decode_header(b"\x00\x02" + mt + a)
    with pytest.raises(ParseFailure):
        decode_header(b"\x00\x02" + a + mt + b"\x00")
    with pytest.raises(ParseFailure):
        decode_header(b"\x00\x02" + a)


# -- envelope -------------------------------------------------------------------


def test_empty_payload_round_trip():
    h = {"msg_type": MessageType.JOB_OPENING}
    env, hk, pk = sealed(MessageType.JOB_OPENING, h)
    assert env.payload_ct == b""
    assert open_envelope(env, hk, pk) == (h, b"")


def test_large_payload_round_trip_and_ct_length():
    payload = os.urandom(1024)
    h = {"msg_type": MessageType.RESULT, "job_id": "j"}
    env, hk, pk = sealed(MessageType.RESULT, h, payload)
    assert len(env.payload_ct) == len(payload)
    assert env.payload_ct != payload
    assert open_envelope(env, hk, pk) == (h, payload)


def test_frame_layout_is_bit_exact():
    env, _, _ = sealed(MessageType.RESULT, {"msg_type": MessageType.RESULT}, b"xyz")
    raw = env.to_bytes()
    hlen = len(env.header_ct)
    assert raw[0] == MessageType.RESULT
    assert struct.unpack(">I", raw[1:5])[0] == hlen
    assert raw[5 : 5 + hlen] == env.header_ct
    assert struct.unpack(">I", raw[5 + hlen : 9 + hlen])[0] == 3
    assert raw[9 + hlen : 12 + hlen] == env.payload_ct
    assert raw[12 + hlen :] == env.nonce_header + env.nonce_payload + env.auth_tag
    assert len(raw) == 1 + 4 + hlen + 4 + 3 + 48 == len(env)
    assert frame_length(raw) == len(raw)
    assert frame_length(raw[:-1] + b"", 0) == len(raw)  # length known from prefix
    assert frame_length(raw[:4]) is None


def test_plain_mode_frame():
    h = {"msg_type": MessageType.RESULT, "job_id": "j"}
    env = seal_envelope(MessageType.RESULT, h, b"cat", None, None)
    assert env.payload_ct == b"cat" and env.auth_tag == bytes(16) and env.nonce_header == bytes(16)
    assert open_envelope(env, None, None) == (h, b"cat")


def test_every_single_byte_corruption_is_rejected():
    h = {"msg_type": MessageType.MAP_DATATYPE, "dest_id": 1, "job_id": "j"}
    env, hk, pk = sealed(MessageType.MAP_DATATYPE, h, encode_kv("0", '"the cat"'))
    raw = env.to_bytes()
    for i in range(len(raw)):
        bad = bytearray(raw)
        bad[i] ^= 0x01
        with pytest.raises((AuthFailure, ParseFailure)):
            open_envelope(Envelope.from_bytes(bytes(bad)), hk, pk)


def test_tampered_payload_is_auth_failure():
    env, hk, pk = sealed(MessageType.RESULT, {"msg_type": MessageType.RESULT}, b"payload")
    bad = Envelope(env.msg_type, env.header_ct, b"pbyload", env.nonce_header, env.nonce_payload, env.auth_tag)
    with pytest.raises(AuthFailure):
        open_envelope(bad, hk, pk)


def test_wrong_payload_key_never_yields_plaintext():
    payload = b"secret payload text"
    env, hk, pk = sealed(MessageType.RESULT, {"msg_type": MessageType.RESULT}, payload)
    try:
        _, got = open_envelope(env, hk, os.urandom(16))
    except (AuthFailure, ParseFailure):
        return
    assert got != payload


def test_wrong_header_key_is_auth_failure():
    env, hk, pk = sealed(MessageType.RESULT, {"msg_type": MessageType.RESULT}, b"x")
    with pytest.raises(AuthFailure):
        open_header(env, os.urandom(16))


def test_type_tag_must_match_header():
    hk, pk = os.urandom(16), os.urandom(16)
    env = seal_envelope(MessageType.RESULT, {"msg_type": MessageType.RESULT}, b"", hk, pk, crypto.NonceCounter())
    # a frame whose plaintext tag disagrees with the sealed header, re-tagged by a key holder
    forged = Envelope(MessageType.EOS, env.header_ct, env.payload_ct, env.nonce_header, env.nonce_payload)
    forged = Envelope(forged.msg_type, forged.header_ct, forged.payload_ct, forged.nonce_header, forged.nonce_payload, crypto.auth_tag(hk, forged._signed_part()))
    with pytest.raises(ParseFailure):
        open_header(forged, hk)


def test_seal_rejects_mismatched_type_and_half_keys():
    with pytest.raises(ValueError):
        seal_envelope(MessageType.RESULT, {"msg_type": MessageType.EOS}, b"", None, None)
    with pytest.raises(ValueError):
        seal_envelope(MessageType.RESULT, {"msg_type": MessageType.RESULT}, b"", os.urandom(16), None, crypto.NonceCounter())


def test_job_details_envelope_carries_subscriptions():
    subs = {"worker_id": "w1", "offers": [{"role": "mapper", "subscriptions": [{"constraints": [["msg_type", "EQ", 3], ["worker_id", "EQ", "w1"]], "bind": None}]}]}
    h = {"msg_type": MessageType.JOB_DETAILS, "job_id": "j", "client_id": "c"}
    env, hk, pk = sealed(MessageType.JOB_DETAILS, h, json.dumps(subs).encode())
    got_h, got_p = open_envelope(env, hk, pk)
    assert got_h["msg_type"] is MessageType.JOB_DETAILS
    assert json.loads(got_p) == subs


def test_nonces_unique_per_sender():
    src = crypto.NonceCounter()
    hk, pk = os.urandom(16), os.urandom(16)
    envs = [seal_envelope(MessageType.RESULT, {"msg_type": MessageType.RESULT}, b"x", hk, pk, src) for _ in range(100)]
    nonces = [e.nonce_header for e in envs] + [e.nonce_payload for e in envs]
    assert len(set(nonces)) == 200


# -- key/value ------------------------------------------------------------------


def test_kv_round_trip_and_validation():
    assert decode_kv(encode_kv("the", "1")) == ("the", "1")
    assert decode_kv(encode_kv("ключ", '{"a": [1, 2]}')) == ("ключ", '{"a": [1, 2]}')
    with pytest.raises(ValueError):
        KeyValue("", "1")
    with pytest.raises(ValueError):
        KeyValue("k", "not json")
    with pytest.raises(ParseFailure):
        decode_kv(b"\x00\x00\x00\x09ab")

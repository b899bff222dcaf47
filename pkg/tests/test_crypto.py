import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import aes
from sealmr import crypto

NIST_KEY = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")
NIST_CTR = bytes.fromhex("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff")
NIST_PT = bytes.fromhex(
    "6bc1bee22e409f96e93d7e117393172a"
    "ae2d8a571e03ac9c9eb76fac45af8e51"
    "30c81c46a35ce411e5fbc1191a0a52ef"
    "f69f2445df4f9b17ad2b417be66c3710"
)
NIST_CT = bytes.fromhex(
    "874d6191b620e3261bef6864990db6ce"
    "9806f66b7970fdff8617187bb9fffdff"
    "5ae4df3edbd5d35e5b4f09020db03eab"
    "1e031dda2fbe03d1792170a0f3009cee"
)


def test_oracle_reproduces_published_ctr_vector():
    # the oracle itself must be right before we trust it
    assert aes.ctr(NIST_KEY, NIST_CTR, NIST_PT) == NIST_CT


def test_ctr_matches_published_vector():
    assert crypto.ctr_xor(NIST_KEY, NIST_CTR, NIST_PT) == NIST_CT
    assert crypto.ctr_xor(NIST_KEY, NIST_CTR, NIST_CT) == NIST_PT


@settings(max_examples=60, deadline=None)
@given(key=st.binary(min_size=16, max_size=16), nonce=st.binary(min_size=16, max_size=16), data=st.binary(max_size=80))
def test_ctr_matches_oracle(key, nonce, data):
    assert crypto.ctr_xor(key, nonce, data) == aes.ctr(key, nonce, data)


@pytest.mark.parametrize("nblocks", [31, 32, 33, 70])
def test_ctr_long_messages_and_counter_wrap(nblocks):
    key = os.urandom(16)
    data = os.urandom(nblocks * 16 - 5)
    for nonce in (os.urandom(16), b"\xff" * 16, b"\x00" * 8 + b"\xff" * 8):
        assert crypto.ctr_xor(key, nonce, data) == aes.ctr(key, nonce, data)


def test_ctr_empty_and_bad_nonce():
    assert crypto.ctr_xor(os.urandom(16), bytes(16), b"") == b""
    with pytest.raises(ValueError):
        crypto.ctr_xor(os.urandom(16), bytes(8), b"abc")


def test_counter_blocks_layout():
    nonce = (5).to_bytes(16, "big")
    blocks = crypto.counter_blocks(nonce, 3)
    assert [int.from_bytes(blocks[i : i + 16], "big") for i in range(0, 48, 16)] == [5, 6, 7]


def test_auth_tag_depends_on_key_and_data():
    k1, k2 = os.urandom(16), os.urandom(16)
    t = crypto.auth_tag(k1, b"hello")
    assert len(t) == crypto.TAG_BYTES
    assert crypto.tags_equal(t, crypto.auth_tag(k1, b"hello"))
    assert not crypto.tags_equal(t, crypto.auth_tag(k2, b"hello"))
    assert not crypto.tags_equal(t, crypto.auth_tag(k1, b"hellp"))


def test_nonces_never_repeat_and_leave_block_counter_room():
    src = crypto.NonceCounter()
    seen = {src() for _ in range(5000)}
    assert len(seen) == 5000
    assert all(n[-4:] == b"\x00" * 4 for n in seen)
    assert src.issued == 5000


def test_parse_and_derive_key():
    assert crypto.parse_key("00" * 16) == bytes(16)
    with pytest.raises(ValueError):
        crypto.parse_key("abcd")
    assert crypto.derive_key(1, "h") == crypto.derive_key(1, "h")
    assert crypto.derive_key(1, "h") != crypto.derive_key(1, "p")

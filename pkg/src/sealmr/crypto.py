"""AES-128 in counter mode plus a truncated HMAC tag.

The block cipher comes from ``cryptography`` (one ECB context per key,
reused across messages); counter-block generation and the keystream XOR
are done here because building a fresh CTR cipher object per message
costs several times more than the encryption itself.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import threading
from functools import lru_cache

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

KEY_BYTES = 16
BLOCK = 16
TAG_BYTES = 16

_MASK128 = (1 << 128) - 1
_MASK64 = (1 << 64) - 1
_SMALL_BLOCKS = 32  # below this, python ints beat numpy setup cost


class BlockKey:
    """Expanded AES key. Holds an ECB encryptor reused for every keystream."""

    __slots__ = ("_ecb", "_lock")

    def __init__(self, key: bytes):
        if len(key) != KEY_BYTES:
            raise ValueError(f"AES-128 key must be {KEY_BYTES} bytes, got {len(key)}")
        self._ecb = Cipher(algorithms.AES(bytes(key)), modes.ECB()).encryptor()
        self._lock = threading.Lock()

    def encrypt_blocks(self, blocks: bytes) -> bytes:
        with self._lock:
            return self._ecb.update(blocks)


@lru_cache(maxsize=64)
def block_key(key: bytes) -> BlockKey:
    return BlockKey(key)


@lru_cache(maxsize=None)
def _spread(n: int):
    # counters as one big integer: c0 * R + S lays out c0, c0+1, ... in 16-byte slots
    r = sum(1 << (128 * j) for j in range(n))
    s = sum(i << (128 * (n - 1 - i)) for i in range(n))
    return r, s


def counter_blocks(nonce: bytes, n: int) -> bytes:
    """The ``n`` successive 128-bit big-endian counter blocks starting at ``nonce``."""
    c0 = int.from_bytes(nonce, "big")
    if n <= _SMALL_BLOCKS:
        if c0 + n <= _MASK128:
            r, s = _spread(n)
            return (c0 * r + s).to_bytes(BLOCK * n, "big")
        return b"".join(((c0 + i) & _MASK128).to_bytes(BLOCK, "big") for i in range(n))
    hi0, lo0 = c0 >> 64, c0 & _MASK64
    lo = np.arange(n, dtype=np.uint64) + np.uint64(lo0)  # wraps mod 2**64
    hi = np.full(n, hi0, dtype=np.uint64)
    hi[lo < np.uint64(lo0)] += np.uint64(1)
    out = np.empty((n, 2), dtype=">u8")
    out[:, 0] = hi
    out[:, 1] = lo
    return out.tobytes()


def ctr_xor(key: bytes, nonce: bytes, data: bytes) -> bytes:
    """AES-CTR encrypt/decrypt (the operation is its own inverse)."""
    if len(nonce) != BLOCK:
        raise ValueError("initial counter block must be 16 bytes")
    n = len(data)
    if n == 0:
        return b""
    nblocks = (n + BLOCK - 1) // BLOCK
    stream = block_key(key if type(key) is bytes else bytes(key)).encrypt_blocks(counter_blocks(nonce, nblocks))
    if nblocks <= _SMALL_BLOCKS:
        x = int.from_bytes(data, "big") ^ int.from_bytes(stream[:n], "big")
        return x.to_bytes(n, "big")
    a = np.frombuffer(data, dtype=np.uint8)
    b = np.frombuffer(stream, dtype=np.uint8, count=n)
    return np.bitwise_xor(a, b).tobytes()


@lru_cache(maxsize=64)
def mac_key(header_key: bytes) -> bytes:
    # separate the MAC key from the encryption key
    return hmac.digest(header_key, b"sealmr/auth-tag/v1", "sha256")


def auth_tag(header_key: bytes, data: bytes) -> bytes:
    return hmac.digest(mac_key(bytes(header_key)), data, "sha256")[:TAG_BYTES]


def tags_equal(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(a, b)


class NonceCounter:
    """Monotone per-sender source of initial counter blocks.

    Layout: 6-byte sender prefix | 6-byte message counter | 4 zero bytes.
    The low 32 bits are left for the per-block increment inside a message,
    so keystreams of two messages never overlap.
    """

    def __init__(self, prefix: bytes | None = None, start: int = 0):
        if prefix is None:
            prefix = os.urandom(6)
        if len(prefix) != 6:
            raise ValueError("nonce prefix must be 6 bytes")
        self.prefix = prefix
        self._next = start
        self._lock = threading.Lock()

    def __call__(self) -> bytes:
        with self._lock:
            n = self._next
            self._next += 1
        if n >= 1 << 48:
            raise OverflowError("nonce counter exhausted")
        return self.prefix + n.to_bytes(6, "big") + b"\x00\x00\x00\x00"

    @property
    def issued(self) -> int:
        return self._next


def parse_key(text: str) -> bytes:
    key = bytes.fromhex(text.strip())
    if len(key) != KEY_BYTES:
        raise ValueError(f"expected a {KEY_BYTES * 8}-bit hex key, got {len(key) * 8} bits")
    return key


def derive_key(seed: str, label: str) -> bytes:
    """Deterministic test/bench key; never used when keys come from the environment."""
    return hashlib.sha256(f"{seed}/{label}".encode()).digest()[:KEY_BYTES]

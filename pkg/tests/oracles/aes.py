"""Textbook AES-128 (FIPS-197) and CTR mode, written from the standard, no dependencies.

Slow and only meant for checking the package's AES-CTR on small inputs.
"""


def _xtime(a):
    a <<= 1
    return (a ^ 0x11B) & 0xFF if a & 0x100 else a


def _mul(a, b):
    r = 0
    while b:
        if b & 1:
            r ^= a
        a = _xtime(a)
        b >>= 1
    return r


def _build_sbox():
    # multiplicative inverse in GF(2^8) followed by the affine transform
    inv = [0] * 256
    for x in range(1, 256):
        for y in range(1, 256):
            if _mul(x, y) == 1:
                inv[x] = y
                break
    sbox = []
    for x in range(256):
        b = inv[x]
        s = b
        for i in range(1, 5):
            s ^= ((b << i) | (b >> (8 - i))) & 0xFF
        sbox.append(s ^ 0x63)
    return sbox


SBOX = _build_sbox()


def expand_key(key: bytes):
    assert len(key) == 16
    w = [list(key[i : i + 4]) for i in range(0, 16, 4)]
    rcon = 1
    for i in range(4, 44):
        t = list(w[i - 1])
        if i % 4 == 0:
            t = t[1:] + t[:1]
            t = [SBOX[b] for b in t]
            t[0] ^= rcon
            rcon = _xtime(rcon)
        w.append([a ^ b for a, b in zip(w[i - 4], t)])
    return [sum(w[4 * r : 4 * r + 4], []) for r in range(11)]


def _shift_rows(s):
    # state is column-major: s[r + 4c]
    return [s[(r + 4 * ((c + r) % 4))] for c in range(4) for r in range(4)]


def _mix_columns(s):
    out = []
    for c in range(4):
        a = s[4 * c : 4 * c + 4]
        out += [
            _mul(a[0], 2) ^ _mul(a[1], 3) ^ a[2] ^ a[3],
            a[0] ^ _mul(a[1], 2) ^ _mul(a[2], 3) ^ a[3],
            a[0] ^ a[1] ^ _mul(a[2], 2) ^ _mul(a[3], 3),
            _mul(a[0], 3) ^ a[1] ^ a[2] ^ _mul(a[3], 2),
        ]
    return out


def encrypt_block(key: bytes, block: bytes) -> bytes:
    rk = expand_key(key)
    s = [b ^ k for b, k in zip(block, rk[0])]
    for rnd in range(1, 11):
        s = [SBOX[b] for b in s]
        s = _shift_rows(s)
        if rnd != 10:
            s = _mix_columns(s)
        s = [b ^ k for b, k in zip(s, rk[rnd])]
    return bytes(s)


def ctr(key: bytes, counter: bytes, data: bytes) -> bytes:
    c = int.from_bytes(counter, "big")
    out = bytearray()
    for i in range(0, len(data), 16):
        ks = encrypt_block(key, ((c + i // 16) % (1 << 128)).to_bytes(16, "big"))
        out += bytes(a ^ b for a, b in zip(data[i : i + 16], ks))
    return bytes(out)

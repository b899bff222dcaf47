"""Message types, header codec, KeyValue codec and the sealed envelope frame.

Frame layout (big endian)::

    [1 msg_type][4 len][header_ct][4 len][payload_ct][16 nonce_header][16 nonce_payload][16 auth_tag]

With crypto disabled the two ciphertext fields carry plaintext and the
nonce/tag fields are zero-filled.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Tuple, Union

from . import crypto
from .errors import AuthFailure, ParseFailure, UnknownType

Value = Union[int, str]
Header = Dict[str, Value]

_ZERO16 = bytes(16)
_TRAILER = 48  # two nonces and the tag
_INT64 = struct.Struct(">q")
_U32 = struct.Struct(">I")


class MessageType(enum.IntEnum):
    JOB_OPENING = 0x01
    JOB_DETAILS = 0x02
    MAP_CODETYPE = 0x03
    REDUCE_CODETYPE = 0x04
    MAP_DATATYPE = 0x05
    REDUCE_DATATYPE = 0x06
    EOS = 0x07
    RESULT = 0x08
    JOB_CLOSE = 0x09
    # consumed by the router itself, never forwarded
    HELLO = 0x10
    SUBSCRIBE = 0x11
    UNSUBSCRIBE = 0x12

    @classmethod
    def parse(cls, code: int) -> "MessageType":
        mt = _BY_CODE.get(code)
        if mt is None:
            raise UnknownType(f"unknown message type 0x{code:02x}")
        return mt


_BY_CODE = {int(m): m for m in MessageType}


DATA_TYPES = frozenset({MessageType.MAP_DATATYPE, MessageType.REDUCE_DATATYPE})
CONTROL_TYPES = frozenset({MessageType.HELLO, MessageType.SUBSCRIBE, MessageType.UNSUBSCRIBE})


# -- header codec ---------------------------------------------------------------


def validate_header(h: Mapping[str, Value]) -> None:
    mt = h.get("msg_type")
    if type(mt) is not int and not isinstance(mt, MessageType):
        if mt is None:
            raise ParseFailure("header lacks msg_type")
        raise ParseFailure("msg_type must be an integer code")
    mt = MessageType.parse(int(mt))
    dest = h.get("dest_id")
    if mt in DATA_TYPES:
        if dest is None:
            raise ParseFailure(f"{mt.name} header requires dest_id")
        if type(dest) is not int:
            raise ParseFailure("dest_id must be an integer")
    elif "dest_id" in h:
        raise ParseFailure(f"dest_id is only allowed on data messages, not {mt.name}")


_name_cache: Dict[str, bytes] = {}


def _name_field(name: str) -> bytes:
    raw = _name_cache.get(name)
    if raw is None:
        if not isinstance(name, str):
            raise ParseFailure(f"attribute names are strings, got {type(name).__name__}")
        enc = name.encode("utf-8")
        if not 0 < len(enc) < 256:
            raise ParseFailure(f"attribute name length out of range: {name!r}")
        raw = bytes((len(enc),)) + enc
        if len(_name_cache) < 4096:
            _name_cache[name] = raw
    return raw


def encode_header(h: Mapping[str, Value]) -> bytes:
    """Canonical encoding: attributes sorted by name, so equal headers encode identically."""
    validate_header(h)
    parts = [len(h).to_bytes(2, "big")]
    for name in sorted(h):
        parts.append(_name_field(name))
        value = h[name]
        t = type(value)
        if t is int or (isinstance(value, int) and t is not bool):
            try:
                parts.append(b"\x01" + _INT64.pack(value))
            except struct.error:
                raise ParseFailure(f"attribute {name!r}: integer out of int64 range") from None
        elif t is str:
            raw = value.encode("utf-8")
            parts.append(b"\x02" + _U32.pack(len(raw)) + raw)
        elif t is bool:
            raise ParseFailure(f"attribute {name!r}: booleans are not header values")
        else:
            raise ParseFailure(f"attribute {name!r}: unsupported value type {t.__name__}")
    return b"".join(parts)


_decoded: Dict[bytes, Header] = {}


def decode_header(b: bytes) -> Header:
    """Parse a canonical header. Returns a fresh dict the caller may modify."""
    b = bytes(b)
    hit = _decoded.get(b)
    if hit is not None:
        return dict(hit)
    out = _decode_header(b)
    if len(_decoded) >= 512:
        _decoded.clear()
    _decoded[b] = dict(out)
    return out


def _decode_header(b: bytes) -> Header:
    end = len(b)
    try:
        count = (b[0] << 8) | b[1]
        pos = 2
        out: Header = {}
        prev = ""
        for _ in range(count):
            nlen = b[pos]
            pos += 1
            if nlen == 0 or pos + nlen > end:
                raise ParseFailure("empty or truncated attribute name")
            name = b[pos : pos + nlen].decode("utf-8")
            pos += nlen
            if name <= prev:
                raise ParseFailure("attributes not in canonical order")
            prev = name
            tag = b[pos]
            pos += 1
            if tag == 1:
                if pos + 8 > end:
                    raise ParseFailure("truncated integer")
                val = int.from_bytes(b[pos : pos + 8], "big", signed=True)
                pos += 8
            elif tag == 2:
                (slen,) = _U32.unpack_from(b, pos)
                pos += 4
                if pos + slen > end:
                    raise ParseFailure("truncated string")
                val = b[pos : pos + slen].decode("utf-8")
                pos += slen
            else:
                raise ParseFailure(f"bad value tag {tag}")
            out[name] = val
    except (IndexError, struct.error, UnicodeDecodeError) as exc:
        raise ParseFailure(f"malformed header: {exc}") from None
    if pos != end:
        raise ParseFailure("trailing bytes after header")
    validate_header(out)
    out["msg_type"] = MessageType.parse(out["msg_type"])  # type: ignore[arg-type]
    return out


# -- key/value payloads ---------------------------------------------------------


@dataclass(frozen=True)
class KeyValue:
    key: str
    value: str  # JSON text

    def __post_init__(self):
        if not self.key:
            raise ValueError("KeyValue key must be non-empty")
        try:
            json.loads(self.value)
        except ValueError:
            raise ValueError(f"KeyValue value is not JSON: {self.value[:60]!r}") from None

    def to_bytes(self) -> bytes:
        return encode_kv(self.key, self.value)

    @classmethod
    def from_bytes(cls, b: bytes) -> "KeyValue":
        return cls(*decode_kv(b))

    def decoded(self):
        return json.loads(self.value)


def encode_kv(key: str, value_json: str) -> bytes:
    raw = key.encode("utf-8")
    return _U32.pack(len(raw)) + raw + value_json.encode("utf-8")


def decode_kv(b: bytes) -> Tuple[str, str]:
    try:
        (klen,) = _U32.unpack_from(b, 0)
        if 4 + klen > len(b):
            raise ParseFailure("truncated key")
        return bytes(b[4 : 4 + klen]).decode("utf-8"), bytes(b[4 + klen :]).decode("utf-8")
    except (struct.error, UnicodeDecodeError) as exc:
        raise ParseFailure(f"malformed key/value payload: {exc}") from None


def encode_json(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True).encode("utf-8")


def decode_json(b: bytes):
    try:
        return json.loads(b)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ParseFailure(f"payload is not JSON: {exc}") from None


# -- envelope -------------------------------------------------------------------


@dataclass(frozen=True)
class Envelope:
    msg_type: MessageType
    header_ct: bytes
    payload_ct: bytes
    nonce_header: bytes = _ZERO16
    nonce_payload: bytes = _ZERO16
    auth_tag: bytes = _ZERO16
    _raw: Optional[bytes] = field(default=None, compare=False, repr=False)

    def to_bytes(self) -> bytes:
        if self._raw is not None:
            return self._raw
        return self._signed_part() + self.auth_tag

    def _signed_part(self) -> bytes:
        if self._raw is not None:
            return self._raw[:-16]
        return b"".join(
            (
                bytes((int(self.msg_type),)),
                _U32.pack(len(self.header_ct)),
                self.header_ct,
                _U32.pack(len(self.payload_ct)),
                self.payload_ct,
                self.nonce_header,
                self.nonce_payload,
            )
        )

    def __len__(self) -> int:
        return 1 + 4 + len(self.header_ct) + 4 + len(self.payload_ct) + _TRAILER

    @classmethod
    def from_bytes(cls, frame: bytes) -> "Envelope":
        frame = bytes(frame)
        n = frame_length(frame)
        if n is None or n != len(frame):
            raise ParseFailure("frame length does not match its length fields")
        mt = MessageType.parse(frame[0])
        (hlen,) = _U32.unpack_from(frame, 1)
        hstart = 5
        pstart = hstart + hlen + 4
        (plen,) = _U32.unpack_from(frame, hstart + hlen)
        tail = pstart + plen
        return cls(
            msg_type=mt,
            header_ct=frame[hstart : hstart + hlen],
            payload_ct=frame[pstart:tail],
            nonce_header=frame[tail : tail + 16],
            nonce_payload=frame[tail + 16 : tail + 32],
            auth_tag=frame[tail + 32 : tail + 48],
            _raw=frame,
        )


MAX_SECTION = 1 << 30


def frame_length(buf, offset: int = 0) -> Optional[int]:
    """Total size of the frame starting at ``offset``, or None if more bytes are needed."""
    avail = len(buf) - offset
    if avail < 5:
        return None
    (hlen,) = _U32.unpack_from(buf, offset + 1)
    if hlen > MAX_SECTION:
        raise ParseFailure("header section too large")
    if avail < 5 + hlen + 4:
        return None
    (plen,) = _U32.unpack_from(buf, offset + 5 + hlen)
    if plen > MAX_SECTION:
        raise ParseFailure("payload section too large")
    return 5 + hlen + 4 + plen + _TRAILER


NonceSource = Callable[[], bytes]


def seal_envelope(
    msg_type: MessageType,
    header: Mapping[str, Value],
    payload: bytes,
    header_key: Optional[bytes],
    payload_key: Optional[bytes],
    nonce_source: Optional[NonceSource] = None,
) -> Envelope:
    """Encrypt header and payload under their own keys and tag the result.

    ``header_key=None`` and ``payload_key=None`` produce a plaintext frame
    (the uncrypted baseline); mixing one key with None is rejected.
    """
    msg_type = MessageType.parse(int(msg_type))
    if header.get("msg_type", -1) != msg_type:
        raise ValueError("header msg_type does not match envelope msg_type")
    hbytes = encode_header(header)
    payload = bytes(payload)
    if header_key is None and payload_key is None:
        return Envelope(msg_type, hbytes, payload)
    if header_key is None or payload_key is None:
        raise ValueError("header and payload keys must both be set or both be None")
    if nonce_source is None:
        raise ValueError("a nonce source is required when encrypting")
    nh = nonce_source()
    np_ = nonce_source()
    env = Envelope(
        msg_type,
        crypto.ctr_xor(header_key, nh, hbytes),
        crypto.ctr_xor(payload_key, np_, payload),
        nh,
        np_,
    )
    tag = crypto.auth_tag(header_key, env._signed_part())
    return Envelope(env.msg_type, env.header_ct, env.payload_ct, nh, np_, tag)


def verify_envelope(env: Envelope, header_key: bytes) -> None:
    expect = crypto.auth_tag(header_key, env._signed_part())
    if not crypto.tags_equal(expect, env.auth_tag):
        raise AuthFailure(f"authentication tag mismatch on {env.msg_type.name} frame")


def open_header(env: Envelope, header_key: Optional[bytes]) -> Header:
    """Authenticate the frame and decrypt only its header (the router's view)."""
    if header_key is None:
        hbytes = env.header_ct
    else:
        verify_envelope(env, header_key)
        hbytes = crypto.ctr_xor(header_key, env.nonce_header, env.header_ct)
    h = decode_header(hbytes)
    if h["msg_type"] != env.msg_type:
        raise ParseFailure("framing type tag disagrees with the encrypted header")
    return h


def open_envelope(
    env: Envelope, header_key: Optional[bytes], payload_key: Optional[bytes]
) -> Tuple[Header, bytes]:
    h = open_header(env, header_key)
    if payload_key is None:
        return h, env.payload_ct
    return h, crypto.ctr_xor(payload_key, env.nonce_payload, env.payload_ct)

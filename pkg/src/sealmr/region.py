"""Simulated trusted-execution boundary.

A :class:`SealedContext` is the only object in a process that holds key
material. Plaintext is produced inside :meth:`SealedContext.enter` and
handed to a region function; whatever the function wants to emit is
sealed again before it leaves. The shape of this API (enter with an
envelope, get envelopes back) is what a real enclave backend would need
to implement.
"""

from __future__ import annotations

import enum
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Tuple

from . import crypto
from .errors import AuthFailure, ParseFailure, RegionFault
from .wire import Envelope, Header, MessageType, open_envelope, open_header, seal_envelope

log = logging.getLogger(__name__)

HEADER_KEY_ENV = "SEALMR_HEADER_KEY"
PAYLOAD_KEY_ENV = "SEALMR_PAYLOAD_KEY"

Output = Tuple[MessageType, Header, bytes]
RegionFunction = Callable[[Header, bytes], Optional[Iterable[Output]]]


class SealMode(enum.Enum):
    SEALED = "sealed"
    PASSTHROUGH_NOCRYPTO = "plain"
    PASSTHROUGH_CRYPTO = "crypto-only"
    SEALED_NOCRYPTO = "sealed-plain"

    @property
    def crypto(self) -> bool:
        return self in (SealMode.SEALED, SealMode.PASSTHROUGH_CRYPTO)

    @property
    def guarded(self) -> bool:
        return self in (SealMode.SEALED, SealMode.SEALED_NOCRYPTO)

    @classmethod
    def parse(cls, text: str) -> "SealMode":
        for mode in cls:
            if text in (mode.value, mode.name, mode.name.lower()):
                return mode
        choices = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown seal mode {text!r} (choose from {choices})")


def toggle(mode) -> SealMode:
    """Resolve a mode flag (``--seal-mode`` string or enum) to a configuration."""
    return mode if isinstance(mode, SealMode) else SealMode.parse(str(mode))


@dataclass
class RegionStats:
    entries: int = 0
    seconds_inside: float = 0.0
    bytes_unsealed: int = 0
    bytes_sealed: int = 0
    auth_failures: int = 0
    parse_failures: int = 0
    faults: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _as_key(k) -> bytes:
    if isinstance(k, str):
        return crypto.parse_key(k)
    k = bytes(k)
    if len(k) != crypto.KEY_BYTES:
        raise ValueError("keys are 128 bits")
    return k


class SealedContext:
    def __init__(
        self,
        mode: SealMode,
        header_key: Optional[bytes] = None,
        payload_key: Optional[bytes] = None,
        region_id: str = "region",
        nonce_prefix: Optional[bytes] = None,
    ):
        self.mode = toggle(mode)
        self.region_id = region_id
        self._crypto = self.mode.crypto
        self._guarded = self.mode.guarded
        if self.mode.crypto:
            if header_key is None:
                raise ValueError(f"{self.mode.value} mode needs a header key")
            self.__hk = _as_key(header_key)
            self.__pk = None if payload_key is None else _as_key(payload_key)
        else:
            self.__hk = self.__pk = None
        self._nonces = crypto.NonceCounter(nonce_prefix)
        self._lock = threading.RLock()
        self.stats = RegionStats()

    @classmethod
    def from_env(cls, mode, region_id: str, with_payload_key: bool = True, environ=None) -> "SealedContext":
        env = os.environ if environ is None else environ
        mode = toggle(mode)
        if not mode.crypto:
            return cls(mode, region_id=region_id)
        try:
            hk = env[HEADER_KEY_ENV]
            pk = env[PAYLOAD_KEY_ENV] if with_payload_key else None
        except KeyError as missing:
            raise SystemExit(f"{missing.args[0]} must hold a hex-encoded 128-bit key in {mode.value} mode")
        return cls(mode, hk, pk, region_id=region_id)

    @property
    def entry_counter(self) -> int:
        return self.stats.entries

    @property
    def has_payload_key(self) -> bool:
        return self.__pk is not None or not self.mode.crypto

    def __repr__(self):
        return f"SealedContext({self.region_id!r}, mode={self.mode.value})"

    # -- sealing --------------------------------------------------------------

    def _seal(self, msg_type: MessageType, header: Header, payload: bytes) -> Envelope:
        if self._crypto and self.__pk is None:
            raise RegionFault(f"{self.region_id} holds no payload key and cannot emit publications")
        env = seal_envelope(msg_type, header, payload, self.__hk, self.__pk, self._nonces)
        if self._guarded:
            self.stats.bytes_sealed += len(payload) + len(env.header_ct)
        return env

    def _unseal(self, env: Envelope, header_only: bool) -> Tuple[Header, bytes]:
        try:
            if header_only:
                h, p = open_header(env, self.__hk), b""
            else:
                if self._crypto and self.__pk is None:
                    raise RegionFault(f"{self.region_id} holds no payload key")
                h, p = open_envelope(env, self.__hk, self.__pk)
        except AuthFailure:
            self.stats.auth_failures += 1
            raise
        except ParseFailure:
            self.stats.parse_failures += 1
            raise
        if self._guarded:
            self.stats.bytes_unsealed += len(env.header_ct) + len(p)
        return h, p

    def seal(self, msg_type: MessageType, header: Header, payload: bytes = b"") -> Envelope:
        """Seal a message originated by a trusted endpoint (the data owner)."""
        with self._guard(True):
            return self._seal(msg_type, header, payload)

    def unseal(self, env: Envelope) -> Tuple[Header, bytes]:
        """Open an envelope at a trusted endpoint; workers and the router use :meth:`enter`."""
        with self._guard(True):
            return self._unseal(env, header_only=False)

    # -- region entry ---------------------------------------------------------

    def enter(self, env: Envelope, f: RegionFunction, *, mutating: bool = True) -> List[Envelope]:
        """Run ``f(header, payload)`` on the opened envelope; seal and return its outputs.

        Auth/parse failures propagate. Any other exception raised by ``f``
        becomes a :class:`RegionFault` and nothing is emitted.
        """
        with self._guard(mutating):
            header, payload = self._unseal(env, header_only=False)
            try:
                outputs = list(f(header, payload) or ())
                return [self._seal(mt, h, p) for mt, h, p in outputs]
            except RegionFault:
                self.stats.faults += 1
                raise
            except Exception as exc:
                self.stats.faults += 1
                raise RegionFault(f"{self.region_id}: {type(exc).__name__}: {exc}") from exc

    def inspect(self, env: Envelope, f: Callable[[Header], object], *, mutating: bool = False):
        """Run ``f(header)`` on the decrypted header only.

        Used by the router, which holds no payload key. ``f`` must return
        routing decisions (connection handles, counts), never plaintext.
        """
        with self._guard(mutating):
            header, _ = self._unseal(env, header_only=True)
            try:
                return f(header)
            except Exception as exc:
                self.stats.faults += 1
                raise RegionFault(f"{self.region_id}: {type(exc).__name__}: {exc}") from exc

    def _guard(self, mutating: bool):
        if not self._guarded:
            return _NULL
        return _Entry(self, mutating)


class _Null:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


_NULL = _Null()


class _Entry:
    __slots__ = ("ctx", "mutating", "t0")

    def __init__(self, ctx: SealedContext, mutating: bool):
        self.ctx = ctx
        self.mutating = mutating

    def __enter__(self):
        if self.mutating:
            self.ctx._lock.acquire()
        self.ctx.stats.entries += 1
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ctx.stats.seconds_inside += time.perf_counter() - self.t0
        if self.mutating:
            self.ctx._lock.release()
        return False

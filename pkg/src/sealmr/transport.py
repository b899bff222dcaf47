"""Reliable, ordered frame transport over stream sockets (asyncio).

Frames are self-delimiting (see :mod:`sealmr.wire`), so the reader only
needs the length fields to cut the stream.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Callable, Optional, Tuple

from .errors import ParseFailure, RouterUnreachable
from .wire import frame_length

log = logging.getLogger(__name__)

FrameHandler = Callable[["FrameConnection", bytes], None]


class FrameConnection(asyncio.Protocol):
    """One stream connection. Calls ``on_frame(conn, frame)`` for every complete frame, in order."""

    def __init__(self, on_frame: FrameHandler, on_close: Optional[Callable[["FrameConnection"], None]] = None):
        self.on_frame = on_frame
        self.on_close = on_close
        self.transport: Optional[asyncio.Transport] = None
        self._buf = bytearray()
        self.closed = asyncio.get_event_loop().create_future()
        self.peer = None
        self.bytes_in = 0
        self.bytes_out = 0
        self._out: list = []

    def connection_made(self, transport):
        self.transport = transport
        self.peer = transport.get_extra_info("peername")

    def data_received(self, data: bytes):
        self.bytes_in += len(data)
        buf = self._buf
        buf += data
        pos = 0
        try:
            while True:
                n = frame_length(buf, pos)
                if n is None or pos + n > len(buf):
                    break
                frame = bytes(buf[pos : pos + n])
                pos += n
                try:
                    self.on_frame(self, frame)
                except Exception:
                    log.exception("frame handler failed on %s", self.peer)
                if self.transport is None or self.transport.is_closing():
                    break
        except ParseFailure as exc:
            log.warning("unframeable stream from %s: %s; closing", self.peer, exc)
            self.close()
        finally:
            del buf[:pos]

    def connection_lost(self, exc):
        self.transport = None
        if not self.closed.done():
            self.closed.set_result(exc)
        if self.on_close is not None:
            self.on_close(self)

    def send(self, frame: bytes) -> bool:
        """Queue ``frame``; everything queued in one loop turn goes out in a single write."""
        if self.transport is None or self.transport.is_closing():
            return False
        if not self._out:
            asyncio.get_running_loop().call_soon(self._flush)
        self._out.append(frame)
        self.bytes_out += len(frame)
        return True

    def _flush(self):
        out, self._out = self._out, []
        if out and self.transport is not None and not self.transport.is_closing():
            self.transport.write(b"".join(out))

    @property
    def alive(self) -> bool:
        return self.transport is not None and not self.transport.is_closing()

    async def drain(self, high_water: int = 1 << 22):
        """Yield to the loop until the write buffer falls below ``high_water`` bytes."""
        await asyncio.sleep(0)
        while self.transport is not None and self.transport.get_write_buffer_size() > high_water:
            await asyncio.sleep(0.001)

    def close(self):
        if self.transport is not None:
            self._flush()
            self.transport.close()


def parse_addr(addr: str, default_host: str = "127.0.0.1") -> Tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not port.isdigit():
        raise ValueError(f"address must look like host:port, got {addr!r}")
    return host or default_host, int(port)


async def connect(addr, on_frame: FrameHandler, on_close=None, retries: int = 50, delay: float = 0.1) -> FrameConnection:
    host, port = parse_addr(addr) if isinstance(addr, str) else addr
    loop = asyncio.get_running_loop()
    last = None
    for _ in range(max(1, retries)):
        try:
            _, proto = await loop.create_connection(lambda: FrameConnection(on_frame, on_close), host, port)
            return proto
        except OSError as exc:
            last = exc
            await asyncio.sleep(delay)
    raise RouterUnreachable(f"cannot reach router at {host}:{port}: {last}")

"""Content-based publish/subscribe router.

Subscriptions live inside the router's sealed context; publications are
matched on their decrypted header and forwarded byte-for-byte, so the
payload (encrypted under a key the router never holds) is untouched.
"""

from __future__ import annotations

import asyncio
import enum
import json
import logging
import operator
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, Iterable, List, Mapping, Optional, Set, Tuple

from .errors import AuthFailure, DuplicateId, InvalidSubscription, ParseFailure, RegionFault
from .region import SealedContext, SealMode
from .transport import FrameConnection, parse_addr
from .wire import CONTROL_TYPES, Envelope, Header, MessageType, Value

log = logging.getLogger(__name__)


class Op(enum.Enum):
    EQ = "EQ"
    LT = "LT"
    LE = "LE"
    GT = "GT"
    GE = "GE"


_CMP = {Op.EQ: operator.eq, Op.LT: operator.lt, Op.LE: operator.le, Op.GT: operator.gt, Op.GE: operator.ge}


@dataclass(frozen=True)
class Constraint:
    name: str
    op: Op
    value: Value
    _cmp: Callable = field(init=False, repr=False, compare=False)
    _str: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.op, Op):
            object.__setattr__(self, "op", Op(self.op))
        if isinstance(self.value, bool) or not isinstance(self.value, (int, str)):
            raise InvalidSubscription(f"constraint value must be int or str: {self.value!r}")
        object.__setattr__(self, "_cmp", _CMP[self.op])
        object.__setattr__(self, "_str", isinstance(self.value, str))

    def satisfied_by(self, header: Mapping[str, Value]) -> bool:
        v = header.get(self.name, _MISSING)
        # int and str never compare; IntEnum codes count as ints
        if v is _MISSING or (type(v) is str) is not self._str:
            return False
        return self._cmp(v, self.value)


_MISSING = object()


@dataclass(frozen=True)
class Subscription:
    sub_id: int
    owner: Hashable
    constraints: Tuple[Constraint, ...]

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.constraints:
            raise InvalidSubscription("a subscription needs at least one constraint")

    def matches(self, header: Mapping[str, Value]) -> bool:
        for c in self.constraints:
            if not c.satisfied_by(header):
                return False
        return True

    @property
    def type_key(self) -> Optional[int]:
        for c in self.constraints:
            if c.name == "msg_type" and c.op is Op.EQ and not isinstance(c.value, str):
                return int(c.value)
        return None

    # wire form used by SUBSCRIBE headers and JOB_DETAILS payloads
    def constraints_json(self) -> str:
        return json.dumps([[c.name, c.op.value, int(c.value) if isinstance(c.value, int) else c.value] for c in self.constraints])

    @staticmethod
    def parse_constraints(text: str) -> Tuple[Constraint, ...]:
        try:
            raw = json.loads(text)
            return tuple(Constraint(str(n), Op(op), v) for n, op, v in raw)
        except (ValueError, TypeError) as exc:
            raise InvalidSubscription(f"bad constraint list: {exc}") from None


def subscription(sub_id: int, owner, **eq) -> Subscription:
    """Shorthand for an all-equality subscription."""
    return Subscription(sub_id, owner, tuple(Constraint(k, Op.EQ, int(v) if isinstance(v, enum.IntEnum) else v) for k, v in eq.items()))


class SubscriptionStore:
    """Subscriptions indexed by their ``msg_type EQ`` constraint, scanned linearly within a bucket."""

    def __init__(self):
        self.by_type: Dict[Optional[int], Dict[int, Subscription]] = defaultdict(dict)
        self._ids: Dict[int, Subscription] = {}

    @property
    def count(self) -> int:
        return len(self._ids)

    def __contains__(self, sub_id: int) -> bool:
        return sub_id in self._ids

    def register(self, sub: Subscription) -> int:
        if sub.sub_id in self._ids:
            raise DuplicateId(f"subscription id {sub.sub_id} already registered")
        self._ids[sub.sub_id] = sub
        self.by_type[sub.type_key][sub.sub_id] = sub
        return sub.sub_id

    def unregister(self, sub_id: int) -> Optional[Subscription]:
        sub = self._ids.pop(sub_id, None)
        if sub is not None:
            bucket = self.by_type[sub.type_key]
            del bucket[sub_id]
            if not bucket:
                del self.by_type[sub.type_key]
        return sub

    def drop_owner(self, owner) -> int:
        doomed = [s.sub_id for s in self._ids.values() if s.owner == owner]
        for sid in doomed:
            self.unregister(sid)
        return len(doomed)

    def match(self, header: Mapping[str, Value]) -> Set[Hashable]:
        mt = header.get("msg_type")
        out: Set[Hashable] = set()
        buckets = [self.by_type.get(None)]
        if isinstance(mt, int) and not isinstance(mt, bool):
            buckets.append(self.by_type.get(int(mt)))
        for bucket in buckets:
            if not bucket:
                continue
            for sub in bucket.values():
                if sub.owner not in out and sub.matches(header):
                    out.add(sub.owner)
        return out

    def __iter__(self):
        return iter(self._ids.values())


def match(header: Mapping[str, Value], store: SubscriptionStore) -> Set[Hashable]:
    return store.match(header)


def forward(frame: bytes, targets: Iterable[Hashable], resolve: Callable[[Hashable], Optional[FrameConnection]], stats: Optional[Counter] = None) -> int:
    """Send the unmodified frame to each target; unknown/closed targets are skipped and counted."""
    delivered = 0
    for t in targets:
        conn = resolve(t)
        if conn is not None and conn.send(frame):
            delivered += 1
        elif stats is not None:
            stats["dead_connections"] += 1
    return delivered


Tap = Callable[[str, str, bytes], None]


class Router:
    """SCBR-style router. Owns one :class:`SealedContext` holding only the header key."""

    def __init__(self, ctx: SealedContext, tap: Optional[Tap] = None):
        if ctx.mode.crypto and ctx.has_payload_key:
            log.warning("router context holds a payload key; it never needs one")
        self.ctx = ctx
        self.store = SubscriptionStore()
        self.nodes: Dict[str, FrameConnection] = {}
        self.conn_node: Dict[FrameConnection, str] = {}
        self.stats: Counter = Counter()
        self.bytes_by_type: Counter = Counter()
        self.tap = tap
        self._server: Optional[asyncio.base_events.Server] = None
        self._diag: Optional[asyncio.base_events.Server] = None
        self._anon = 0

    # -- frame handling -------------------------------------------------------

    def on_frame(self, conn: FrameConnection, frame: bytes) -> None:
        node = self.conn_node.get(conn)
        if self.tap is not None:
            self.tap("in", node or "?", frame)
        try:
            env = Envelope.from_bytes(frame)
        except ParseFailure as exc:
            self.stats["parse_failures"] += 1
            log.warning("dropping unparseable frame from %s: %s", node, exc)
            return
        self.bytes_by_type[env.msg_type.name] += len(frame)
        try:
            if env.msg_type in CONTROL_TYPES:
                self._control(conn, env)
            else:
                self._publish(conn, env, frame)
        except AuthFailure as exc:
            self.stats["auth_failures"] += 1
            log.warning("dropping frame from %s: %s", node, exc)
        except ParseFailure as exc:
            self.stats["parse_failures"] += 1
            log.warning("dropping frame from %s: %s", node, exc)
        except RegionFault as exc:
            self.stats["region_faults"] += 1
            log.warning("region fault on frame from %s: %s", node, exc)

    def _publish(self, conn, env: Envelope, frame: bytes) -> None:
        self.stats["publications"] += 1
        targets = self.ctx.inspect(env, self.store.match)
        self.stats["matches"] += len(targets)
        delivered = forward(frame, targets, self._resolve_traced(frame), self.stats)
        self.stats["forwards"] += delivered

    def _resolve_traced(self, frame):
        def resolve(node_id):
            conn = self.nodes.get(node_id)
            if conn is not None and self.tap is not None and conn.alive:
                self.tap("out", node_id, frame)
            return conn

        return resolve

    def _control(self, conn, env: Envelope) -> None:
        def apply(h: Header):
            mt = h["msg_type"]
            if mt is MessageType.HELLO:
                node_id = str(h["node_id"])
                old = self.nodes.get(node_id)
                if old is not None and old is not conn and old.alive:
                    raise DuplicateId(f"node id {node_id} already connected")
                self.nodes[node_id] = conn
                self.conn_node[conn] = node_id
                self.stats["hellos"] += 1
            elif mt is MessageType.SUBSCRIBE:
                owner = str(h.get("owner") or self.conn_node.get(conn, ""))
                if not owner:
                    raise InvalidSubscription("subscription from a connection that never said HELLO")
                sub = Subscription(int(h["sub_id"]), owner, Subscription.parse_constraints(str(h["constraints"])))
                self.store.register(sub)
                self.stats["registrations"] += 1
            elif mt is MessageType.UNSUBSCRIBE:
                if self.store.unregister(int(h["sub_id"])) is not None:
                    self.stats["unregistrations"] += 1

        try:
            self.ctx.inspect(env, apply, mutating=True)
        except RegionFault as exc:
            cause = exc.__cause__
            if isinstance(cause, DuplicateId):
                self.stats["duplicate_ids"] += 1
            elif isinstance(cause, (InvalidSubscription, KeyError, ValueError)):
                self.stats["invalid_subscriptions"] += 1
            else:
                raise
            log.warning("rejected control message: %s", cause)

    def on_close(self, conn: FrameConnection) -> None:
        node = self.conn_node.pop(conn, None)
        if node is not None and self.nodes.get(node) is conn:
            del self.nodes[node]
            dropped = self.store.drop_owner(node)
            self.stats["dropped_on_disconnect"] += dropped

    # -- serving --------------------------------------------------------------

    def diagnostics(self) -> dict:
        out = dict(self.stats)
        out["subscriptions"] = self.store.count
        out["connections"] = len(self.conn_node)
        out["bytes_by_type"] = dict(self.bytes_by_type)
        out["region"] = self.ctx.stats.as_dict()
        out["mode"] = self.ctx.mode.value
        return out

    async def start(self, addr: str = "127.0.0.1:0", diag_addr: Optional[str] = None) -> Tuple[str, int]:
        host, port = parse_addr(addr)
        loop = asyncio.get_running_loop()
        self._server = await loop.create_server(lambda: FrameConnection(self.on_frame, self.on_close), host, port)
        if diag_addr is not None:
            dhost, dport = parse_addr(diag_addr)
            if dhost not in ("127.0.0.1", "localhost", "::1"):
                raise ValueError("the diagnostic endpoint is local only")
            self._diag = await asyncio.start_server(self._serve_diag, dhost, dport)
        return self.address

    async def _serve_diag(self, reader, writer):
        writer.write((json.dumps(self.diagnostics(), sort_keys=True) + "\n").encode())
        await writer.drain()
        writer.close()

    @property
    def address(self) -> Tuple[str, int]:
        return self._server.sockets[0].getsockname()[:2]

    @property
    def diag_address(self) -> Optional[Tuple[str, int]]:
        return None if self._diag is None else self._diag.sockets[0].getsockname()[:2]

    async def serve_forever(self):
        await self._server.serve_forever()

    async def close(self):
        for conn in list(self.conn_node):
            conn.close()
        for srv in (self._server, self._diag):
            if srv is not None:
                srv.close()
                await srv.wait_closed()


async def run_router(listen: str, mode: SealMode, diag: Optional[str] = None, ready: Optional[Callable[[Tuple[str, int]], None]] = None):
    ctx = SealedContext.from_env(mode, region_id="router", with_payload_key=False)
    router = Router(ctx)
    addr = await router.start(listen, diag)
    log.info("router listening on %s:%s (%s)", addr[0], addr[1], ctx.mode.value)
    if ready is not None:
        if router.diag_address is not None:
            ready(addr, router.diag_address)
        else:
            ready(addr)
    try:
        await router.serve_forever()
    finally:
        await router.close()

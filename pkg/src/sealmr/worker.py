"""Worker process: volunteers for jobs and runs mapper or reducer scripts in its sealed region."""

from __future__ import annotations

import asyncio
import json
import logging
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from . import protocol as P
from .errors import AuthFailure, ParseFailure, RegionFault, ScriptError
from .region import Output, SealedContext
from .script import DEFAULT_BUDGET, CodePackage, Role, ScriptHost
from .tasks import MapTask, ReduceTask
from .transport import FrameConnection, connect
from .wire import Envelope, Header, MessageType, decode_kv, encode_kv

log = logging.getLogger(__name__)


@dataclass
class Assignment:
    job_id: str
    role: Role
    slot: int
    iteration: int
    task: object
    shuffle_bytes_in: int = 0
    unsealed_at_start: int = 0
    inside_at_start: float = 0.0
    failed: bool = False


class Worker:
    """One worker holds at most one job at a time.

    ``eos_delay`` postpones this worker's outgoing end-of-stream markers
    (fault injection for the EOS-safety check); ``events`` records
    ``(monotonic_time, name, detail)`` tuples for tests.
    """

    def __init__(
        self,
        ctx: SealedContext,
        roles: Sequence[Role] = (Role.MAPPER, Role.REDUCER),
        node_id: Optional[str] = None,
        budget: int = DEFAULT_BUDGET,
        eos_delay: float = 0.0,
    ):
        self.ctx = ctx
        self.roles = [Role.parse(r) for r in roles]
        if not self.roles:
            raise ValueError("a worker needs at least one role")
        self.node_id = node_id or f"w-{uuid.uuid4().hex[:12]}"
        self.budget = budget
        self.eos_delay = eos_delay
        self.conn: Optional[FrameConnection] = None
        self.job: Optional[Assignment] = None
        self.sub_ids = P.SubIds()
        self.events: List[Tuple[float, str, object]] = []
        self._early: List[Tuple[Header, bytes, int]] = []
        self.counters: Dict[str, int] = {}

    # -- lifecycle ------------------------------------------------------------

    async def start(self, router_addr) -> None:
        self.conn = await connect(router_addr, self.on_frame)
        self._send(self.ctx.seal(MessageType.HELLO, P.hello(self.node_id)))
        self.volunteer()

    def volunteer(self) -> int:
        """Register the JOB_OPENING subscription; returns its id."""
        sid = self.sub_ids()
        self._send(self.ctx.seal(MessageType.SUBSCRIBE, P.subscribe(sid, P.job_opening_sub())))
        self._event("volunteered", [r.value for r in self.roles])
        return sid

    async def wait_closed(self):
        if self.conn is not None:
            await self.conn.closed

    def close(self):
        if self.conn is not None:
            self.conn.close()

    @property
    def busy(self) -> bool:
        return self.job is not None

    def _event(self, name, detail=None):
        self.events.append((time.monotonic(), name, detail))

    def _count(self, name, n=1):
        self.counters[name] = self.counters.get(name, 0) + n

    def _send(self, env: Envelope) -> None:
        if self.conn is None or not self.conn.send(env.to_bytes()):
            log.warning("%s: router connection is gone; dropping %s", self.node_id, env.msg_type.name)

    # -- inbound --------------------------------------------------------------

    def on_frame(self, conn: FrameConnection, frame: bytes) -> None:
        try:
            env = Envelope.from_bytes(frame)
            outputs = self.ctx.enter(env, lambda h, p: self._handle(h, p, len(frame)))
        except (AuthFailure, ParseFailure) as exc:
            self._count("dropped_frames")
            log.warning("%s: dropping frame: %s", self.node_id, exc)
            return
        except RegionFault as exc:
            self._count("faults")
            log.error("%s: %s", self.node_id, exc)
            self._report_failure(exc)
            return
        self._emit(outputs)

    def _emit(self, envs: List[Envelope]) -> None:
        delayed = []
        for env in envs:
            if self.eos_delay > 0 and env.msg_type is MessageType.EOS and self.job is not None and self.job.role is Role.MAPPER:
                delayed.append(env)
            else:
                self._send(env)
        if delayed:
            self._event("eos_delayed", self.eos_delay)
            asyncio.get_running_loop().call_later(self.eos_delay, self._send_delayed, delayed)

    def _send_delayed(self, envs):
        self._event("eos_sent_late", len(envs))
        for env in envs:
            self._send(env)

    def _report_failure(self, exc: Exception) -> None:
        job = self.job
        if job is None:
            return
        job.failed = True
        cause = exc.__cause__ or exc
        detail = {"worker_id": self.node_id, "role": job.role.value, "slot": job.slot, "error": f"{type(cause).__name__}: {cause}"}
        try:
            env = self.ctx.seal(MessageType.EOS, P.eos(job.job_id, P.STREAM_ERROR, job.slot, job.iteration), P.dumps(detail))
        except Exception:
            log.exception("%s: could not report failure", self.node_id)
            return
        self._send(env)

    def _handle(self, h: Header, payload: bytes, frame_len: int) -> List[Output]:
        mt = h["msg_type"]
        if mt is MessageType.JOB_OPENING:
            return self._on_opening(h, payload)
        if mt in (MessageType.MAP_CODETYPE, MessageType.REDUCE_CODETYPE):
            return self._on_code(h, payload)
        if mt is MessageType.JOB_CLOSE:
            if self.job is not None and self.job.job_id == h.get("job_id"):
                self._event("job_closed", self.job.job_id)
                self.job = None
                self._early = []
            return []
        return self._on_data(h, payload, frame_len)

    def _on_opening(self, h: Header, payload: bytes) -> List[Output]:
        if self.busy:
            self._event("opening_ignored", h.get("job_id"))
            return []
        job_id, client_id = str(h["job_id"]), str(h["client_id"])
        offers = [P.worker_offer(r, self.node_id, job_id) for r in self.roles]
        body = {"worker_id": self.node_id, "offers": offers}
        self._event("details_sent", job_id)
        return [(MessageType.JOB_DETAILS, {"msg_type": MessageType.JOB_DETAILS, "job_id": job_id, "client_id": client_id}, P.dumps(body))]

    def load_code(self, pkg: CodePackage) -> ScriptHost:
        return ScriptHost(pkg, budget=self.budget)

    def _on_code(self, h: Header, payload: bytes) -> List[Output]:
        pkg = CodePackage.from_payload(payload)
        expect = MessageType.MAP_CODETYPE if pkg.role is Role.MAPPER else MessageType.REDUCE_CODETYPE
        if h["msg_type"] is not expect or pkg.role not in self.roles:
            raise ValueError(f"received {h['msg_type'].name} for role {pkg.role.value}; this worker offers {[r.value for r in self.roles]}")
        if self.job is not None and self.job.job_id != pkg.job_id:
            self._event("code_ignored_busy", pkg.job_id)
            return []
        self.job = Assignment(pkg.job_id, pkg.role, pkg.slot, pkg.iteration, task=None)
        self.job.unsealed_at_start = self.ctx.stats.bytes_unsealed
        self.job.inside_at_start = self.ctx.stats.seconds_inside
        host = self.load_code(pkg)
        self.job.task = MapTask(host) if pkg.role is Role.MAPPER else ReduceTask(host)
        self._event("code_loaded", (pkg.job_id, pkg.role.value, pkg.slot, pkg.iteration))
        out: List[Output] = []
        early, self._early = self._early, []
        for h2, p2, n2 in early:
            out.extend(self._on_data(h2, p2, n2))
        return out

    def _on_data(self, h: Header, payload: bytes, frame_len: int) -> List[Output]:
        job = self.job
        it = int(h.get("iteration", 0))
        if job is None or job.job_id != h.get("job_id") or it > job.iteration:
            # data can overtake code only across different senders; hold it
            self._early.append((h, payload, frame_len))
            return []
        if it < job.iteration or job.failed:
            self._count("stale_frames")
            return []
        if job.role is Role.MAPPER:
            return self._mapper_step(job, h, payload)
        return self._reducer_step(job, h, payload, frame_len)

    def _mapper_step(self, job: Assignment, h: Header, payload: bytes) -> List[Output]:
        task: MapTask = job.task
        mt = h["msg_type"]
        if mt is MessageType.MAP_DATATYPE:
            key, value_json = decode_kv(payload)
            task.run_map(key, json.loads(value_json))
            return []
        if mt is MessageType.EOS and h.get("stream") == P.STREAM_MAP:
            out: List[Output] = []
            for dest, key, value in task.shuffle_out():
                hdr = P.data(MessageType.REDUCE_DATATYPE, job.job_id, dest, job.iteration, src=job.slot)
                out.append((MessageType.REDUCE_DATATYPE, hdr, encode_kv(key, value)))
            body = P.dumps({"from": job.slot, "records": task.records})
            for r in range(task.rcount):
                out.append((MessageType.EOS, P.eos(job.job_id, P.STREAM_REDUCE, r, job.iteration), body))
            self._event("map_done", (job.iteration, task.records))
            return out
        raise ValueError(f"mapper cannot handle {mt.name}/{h.get('stream')}")

    def _reducer_step(self, job: Assignment, h: Header, payload: bytes, frame_len: int) -> List[Output]:
        task: ReduceTask = job.task
        mt = h["msg_type"]
        if mt is MessageType.REDUCE_DATATYPE:
            key, value = decode_kv(payload)
            task.add(key, value, int(h.get("src", 0)))
            job.shuffle_bytes_in += frame_len
            return []
        if mt is MessageType.EOS and h.get("stream") == P.STREAM_REDUCE:
            self._event("eos_received", json.loads(payload).get("from"))
            if not task.eos():
                return []
            results = task.finish()
            self._event("reduce_done", (job.iteration, len(results)))
            out: List[Output] = []
            for key, value in results:
                hdr = {"msg_type": MessageType.RESULT, "job_id": job.job_id, "slot": job.slot, "iteration": job.iteration}
                out.append((MessageType.RESULT, hdr, encode_kv(key, value)))
            stats = self.ctx.stats
            body = {
                "from": job.slot,
                "results": len(results),
                "shuffle_bytes": job.shuffle_bytes_in,
                "unsealed_bytes": stats.bytes_unsealed - job.unsealed_at_start,
                "region_seconds": stats.seconds_inside - job.inside_at_start,
            }
            out.append((MessageType.EOS, P.eos(job.job_id, P.STREAM_RESULT, job.slot, job.iteration), P.dumps(body)))
            return out
        raise ValueError(f"reducer cannot handle {mt.name}/{h.get('stream')}")


async def run_worker(router: str, roles: Sequence[Role], mode, budget: int = DEFAULT_BUDGET, node_id: Optional[str] = None):
    ctx = SealedContext.from_env(mode, region_id="worker")
    w = Worker(ctx, roles, node_id=node_id, budget=budget)
    await w.start(router)
    log.info("worker %s up (%s, %s)", w.node_id, ",".join(r.value for r in w.roles), ctx.mode.value)
    await w.wait_closed()

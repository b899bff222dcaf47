"""Client driver: opens jobs, hires workers, provisions code and data, collects results."""

from __future__ import annotations

import asyncio
import json
import logging
import math
import time
import uuid
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from . import protocol as P
from .errors import DuplicateKeyAcrossReducers, HiringTimeout, ResultTimeout, SealMRError
from .region import SealedContext
from .script import CodePackage, Role
from .transport import FrameConnection, connect
from .wire import Envelope, Header, MessageType, decode_kv, encode_kv

log = logging.getLogger(__name__)

YIELD_EVERY = 256


class JobFailed(SealMRError):
    pass


@dataclass
class JobSpec:
    job_id: str
    map_script: str
    reduce_script: str
    n_mappers: int
    n_reducers: int
    input: Sequence[str] = ()
    iterative: bool = False
    shared_state: Any = None

    def __post_init__(self):
        if self.n_mappers < 1 or self.n_reducers < 1:
            raise ValueError("need at least one mapper and one reducer")
        if not self.map_script.strip() or not self.reduce_script.strip():
            raise ValueError("map and reduce scripts must be non-empty")
        if self.iterative and self.shared_state is None:
            raise ValueError("iterative jobs carry shared state")


@dataclass
class Offer:
    worker_id: str
    offers: Dict[Role, dict]
    arrival: int


@dataclass
class IterationMetrics:
    iteration: int
    wall_ms: float
    split_bytes: int
    shuffle_bytes: int
    output_bytes: int
    seal_mode: str
    unsealed_bytes: int = 0
    region_seconds: float = 0.0

    @property
    def cache_proxy(self) -> float:
        """Bytes unsealed per second inside reducer regions (0 when the region keeps no books)."""
        if self.region_seconds <= 0:
            return 0.0
        return self.unsealed_bytes / self.region_seconds


@dataclass
class JobRun:
    job_id: str
    hired_mappers: List[str] = field(default_factory=list)
    hired_reducers: List[str] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)
    eos_from_reducers: int = 0
    iteration: int = 0
    sub_ids: List[int] = field(default_factory=list)
    worker_subs: Dict[str, List[int]] = field(default_factory=dict)
    ignored_volunteers: List[str] = field(default_factory=list)
    trace: List[Tuple[str, str]] = field(default_factory=list)
    metrics: List[IterationMetrics] = field(default_factory=list)
    dest_trace: List[int] = field(default_factory=list)
    # internal
    _offers: "asyncio.Queue" = field(default=None, repr=False)
    _inbox: "asyncio.Queue" = field(default=None, repr=False)


class _Envelopes:
    """Counts bytes per message type as they are sent."""

    def __init__(self):
        self.sent = defaultdict(int)
        self.received = defaultdict(int)


class Client:
    def __init__(self, ctx: SealedContext, node_id: Optional[str] = None, record_dest: bool = False):
        self.ctx = ctx
        self.node_id = node_id or f"c-{uuid.uuid4().hex[:12]}"
        self.conn: Optional[FrameConnection] = None
        self.sub_ids = P.SubIds()
        self.runs: Dict[str, JobRun] = {}
        self.bytes = _Envelopes()
        self.record_dest = record_dest
        self.trace: List[Tuple[str, str]] = []

    # -- connection -----------------------------------------------------------

    async def connect(self, router_addr) -> "Client":
        self.conn = await connect(router_addr, self._on_frame)
        self._publish(MessageType.HELLO, P.hello(self.node_id))
        for cons in P.client_subs(self.node_id):
            self._subscribe(cons)
        self.trace.append(("sub", "JOB_DETAILS"))
        return self

    def close(self):
        if self.conn is not None:
            self.conn.close()

    async def __aenter__(self):
        return self

    async def __aexit__(self, *exc):
        self.close()

    def _publish(self, msg_type: MessageType, header: Header, payload: bytes = b"") -> int:
        env = self.ctx.seal(msg_type, header, payload)
        frame = env.to_bytes()
        if self.conn is None or not self.conn.send(frame):
            raise SealMRError("not connected to a router")
        self.bytes.sent[msg_type] += len(frame)
        return len(frame)

    def _subscribe(self, constraints, owner: Optional[str] = None) -> int:
        sid = self.sub_ids()
        self._publish(MessageType.SUBSCRIBE, P.subscribe(sid, constraints, owner))
        return sid

    def _unsubscribe(self, sid: int) -> None:
        self._publish(MessageType.UNSUBSCRIBE, P.unsubscribe(sid))

    def _on_frame(self, conn, frame: bytes) -> None:
        try:
            env = Envelope.from_bytes(frame)
            h, payload = self.ctx.unseal(env)
        except SealMRError as exc:
            log.warning("client dropping frame: %s", exc)
            return
        self.bytes.received[env.msg_type] += len(frame)
        run = self.runs.get(str(h.get("job_id")))
        if run is None:
            return
        if h["msg_type"] is MessageType.JOB_DETAILS:
            run._offers.put_nowait(json.loads(payload))
        else:
            run._inbox.put_nowait((h, payload, len(frame), time.monotonic()))

    async def _yield(self):
        await asyncio.sleep(0)
        if self.conn is not None:
            await self.conn.drain()

    # -- session establishment -----------------------------------------------

    async def open_job(self, spec: JobSpec, timeout: float = 30.0, readvertise: float = 1.0) -> JobRun:
        """Advertise the job, hire the first volunteers per role, register their subscriptions.

        The opening is re-published every ``readvertise`` seconds while slots
        are still free, so workers that connect late can still volunteer.
        """
        run = JobRun(spec.job_id)
        run._offers = asyncio.Queue()
        run._inbox = asyncio.Queue()
        self.runs[spec.job_id] = run
        for cons in P.job_subs(spec.job_id):
            run.sub_ids.append(self._subscribe(cons))
        opening = {"msg_type": MessageType.JOB_OPENING, "job_id": spec.job_id, "client_id": self.node_id}
        opening_body = P.dumps({"mappers": spec.n_mappers, "reducers": spec.n_reducers})
        self._publish(MessageType.JOB_OPENING, opening, opening_body)
        run.trace.append(("pub", "JOB_OPENING"))
        next_advert = time.monotonic() + readvertise

        hired: Dict[Role, List[Tuple[str, dict]]] = {Role.MAPPER: [], Role.REDUCER: []}
        need = {Role.MAPPER: spec.n_mappers, Role.REDUCER: spec.n_reducers}
        seen = set()
        deadline = time.monotonic() + timeout
        while any(len(hired[r]) < need[r] for r in need):
            left = deadline - time.monotonic()
            if left <= 0:
                self._abandon(run)
                raise HiringTimeout(
                    f"job {spec.job_id}: hired {len(hired[Role.MAPPER])}/{spec.n_mappers} mappers and "
                    f"{len(hired[Role.REDUCER])}/{spec.n_reducers} reducers within {timeout:.1f}s"
                )
            if time.monotonic() >= next_advert:
                self._publish(MessageType.JOB_OPENING, opening, opening_body)
                next_advert = time.monotonic() + readvertise
            try:
                details = await asyncio.wait_for(run._offers.get(), min(left, max(next_advert - time.monotonic(), 0.001)))
            except asyncio.TimeoutError:
                continue
            run.trace.append(("pub", "JOB_DETAILS"))
            wid = str(details["worker_id"])
            if wid in seen:
                continue
            seen.add(wid)
            # first role (in the worker's preference order) that still has room
            for offer in details.get("offers", []):
                role = Role.parse(offer["role"])
                if len(hired[role]) < need[role]:
                    hired[role].append((wid, offer))
                    break
            else:
                run.ignored_volunteers.append(wid)

        for role in (Role.MAPPER, Role.REDUCER):
            for slot, (wid, offer) in enumerate(hired[role]):
                ids = [self._subscribe(cons, owner=wid) for cons in P.bind_offer(offer, slot)]
                run.worker_subs[wid] = ids
                run.trace.append(("sub-on-behalf", wid))
        run.hired_mappers = [w for w, _ in hired[Role.MAPPER]]
        run.hired_reducers = [w for w, _ in hired[Role.REDUCER]]
        # late volunteers for this job are simply never contacted
        return run

    def _abandon(self, run: JobRun):
        for sid in run.sub_ids:
            self._unsubscribe(sid)
        self.runs.pop(run.job_id, None)

    # -- provisioning ---------------------------------------------------------

    async def provision(self, run: JobRun, spec: JobSpec, iteration: int = 0, shared_state: Any = None) -> int:
        """Send code to every hired worker, then the input line by line, then one EOS per mapper.

        Returns the number of bytes of MAP_DATATYPE frames sent (the split volume).
        """
        run.iteration = iteration
        if shared_state is None:
            shared_state = spec.shared_state
        for slot, wid in enumerate(run.hired_mappers):
            pkg = CodePackage(Role.MAPPER, spec.map_script, spec.n_reducers, spec.job_id, slot, iteration, shared_state)
            self._publish(MessageType.MAP_CODETYPE, {"msg_type": MessageType.MAP_CODETYPE, "job_id": spec.job_id, "worker_id": wid}, pkg.to_payload())
        for slot, wid in enumerate(run.hired_reducers):
            pkg = CodePackage(Role.REDUCER, spec.reduce_script, spec.n_mappers, spec.job_id, slot, iteration, None)
            self._publish(MessageType.REDUCE_CODETYPE, {"msg_type": MessageType.REDUCE_CODETYPE, "job_id": spec.job_id, "worker_id": wid}, pkg.to_payload())
        split = 0
        n = spec.n_mappers
        for i, line in enumerate(spec.input):
            dest = i % n
            if self.record_dest:
                run.dest_trace.append(dest)
            split += self._publish(
                MessageType.MAP_DATATYPE,
                P.data(MessageType.MAP_DATATYPE, spec.job_id, dest, iteration),
                encode_kv(str(i), json.dumps(line)),
            )
            if i % YIELD_EVERY == YIELD_EVERY - 1:
                await self._yield()
        for slot in range(n):
            self._publish(MessageType.EOS, P.eos(spec.job_id, P.STREAM_MAP, slot, iteration), P.dumps({"from": "client"}))
        return split

    # -- collection -----------------------------------------------------------

    async def collect(self, run: JobRun, timeout: float = 120.0) -> Tuple[Dict[str, Any], dict]:
        """Gather RESULT publications until every reducer has sent its end-of-stream."""
        results: Dict[str, Any] = {}
        owner: Dict[str, int] = {}
        done = set()
        info = {"shuffle_bytes": 0, "output_bytes": 0, "unsealed_bytes": 0, "region_seconds": 0.0, "result_times": []}
        want = len(run.hired_reducers)
        deadline = time.monotonic() + timeout
        while len(done) < want:
            left = deadline - time.monotonic()
            if left <= 0:
                raise ResultTimeout(f"job {run.job_id}: {len(done)}/{want} reducers finished within {timeout:.1f}s")
            try:
                h, payload, nbytes, t = await asyncio.wait_for(run._inbox.get(), left)
            except asyncio.TimeoutError:
                continue
            if int(h.get("iteration", 0)) != run.iteration:
                continue
            mt = h["msg_type"]
            if mt is MessageType.RESULT:
                key, value = decode_kv(payload)
                slot = int(h["slot"])
                if key in owner and owner[key] != slot:
                    raise DuplicateKeyAcrossReducers(f"key {key!r} produced by reducers {owner[key]} and {slot}")
                owner[key] = slot
                results[key] = json.loads(value)
                info["output_bytes"] += nbytes
                info["result_times"].append(t)
            elif mt is MessageType.EOS and h.get("stream") == P.STREAM_ERROR:
                detail = json.loads(payload)
                raise JobFailed(f"job {run.job_id}: {detail.get('role')} {detail.get('slot')} failed: {detail.get('error')}")
            elif mt is MessageType.EOS and h.get("stream") == P.STREAM_RESULT:
                body = json.loads(payload)
                done.add(int(h["slot"]))
                info["shuffle_bytes"] += int(body.get("shuffle_bytes", 0))
                info["unsealed_bytes"] += int(body.get("unsealed_bytes", 0))
                info["region_seconds"] += float(body.get("region_seconds", 0.0))
        run.eos_from_reducers = len(done)
        run.results = results
        return results, info

    async def close_job(self, run: JobRun) -> None:
        for wid in run.hired_mappers + run.hired_reducers:
            self._publish(MessageType.JOB_CLOSE, {"msg_type": MessageType.JOB_CLOSE, "job_id": run.job_id, "worker_id": wid})
        for ids in run.worker_subs.values():
            for sid in ids:
                self._unsubscribe(sid)
        for sid in run.sub_ids:
            self._unsubscribe(sid)
        self.runs.pop(run.job_id, None)
        await self._yield()

    async def run_round(self, run: JobRun, spec: JobSpec, iteration: int = 0, shared_state: Any = None, timeout: float = 120.0):
        t0 = time.perf_counter()
        split = await self.provision(run, spec, iteration, shared_state)
        results, info = await self.collect(run, timeout)
        m = IterationMetrics(
            iteration=iteration,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            split_bytes=split,
            shuffle_bytes=info["shuffle_bytes"],
            output_bytes=info["output_bytes"],
            seal_mode=self.ctx.mode.value,
            unsealed_bytes=info["unsealed_bytes"],
            region_seconds=info["region_seconds"],
        )
        run.metrics.append(m)
        return results, m

    async def run_job(self, spec: JobSpec, hire_timeout: float = 30.0, result_timeout: float = 120.0) -> Dict[str, Any]:
        run = await self.open_job(spec, hire_timeout)
        try:
            results, _ = await self.run_round(run, spec, 0, spec.shared_state, result_timeout)
        finally:
            await self.close_job(run)
        return results

    # -- iterative k-means ----------------------------------------------------

    async def run_iterative_kmeans(
        self,
        points,
        k: int,
        init_centers,
        threshold_fraction: float = 1e-3,
        *,
        map_script: Optional[str] = None,
        reduce_script: Optional[str] = None,
        n_mappers: int = 2,
        n_reducers: int = 1,
        max_iterations: int = 500,
        job_id: Optional[str] = None,
        hire_timeout: float = 30.0,
        result_timeout: float = 300.0,
        on_iteration: Optional[Callable[[int, list, float, IterationMetrics], None]] = None,
    ) -> "KMeansRun":
        from . import kmeans
        from .scripts import load_script

        lines = kmeans.as_lines(points)
        if not lines:
            raise ValueError("k-means needs at least one point")
        centers = [list(map(float, c)) for c in init_centers]
        if k < 1 or len(centers) != k:
            raise ValueError(f"need k >= 1 and exactly k initial centers (k={k}, got {len(centers)})")
        box = kmeans.bounding_box(kmeans.parse_lines(lines))
        threshold = threshold_fraction * kmeans.diagonal(box)
        spec = JobSpec(
            job_id=job_id or f"kmeans-{uuid.uuid4().hex[:8]}",
            map_script=map_script or load_script("kmeans_map"),
            reduce_script=reduce_script or load_script("kmeans_reduce"),
            n_mappers=n_mappers,
            n_reducers=n_reducers,
            input=lines,
            iterative=True,
            shared_state={"centers": centers},
        )
        run = await self.open_job(spec, hire_timeout)
        history = [centers]
        shifts = []
        try:
            for it in range(max_iterations):
                results, m = await self.run_round(run, spec, it, {"centers": centers}, result_timeout)
                new = kmeans.next_centers(centers, results)
                shift = kmeans.mean_shift(centers, new)
                shifts.append(shift)
                history.append(new)
                centers = new
                if on_iteration is not None:
                    on_iteration(it + 1, new, shift, m)
                if kmeans.should_stop(shift, threshold):
                    break
        finally:
            await self.close_job(run)
        return KMeansRun(centers, len(history) - 1, history, shifts, threshold, box, run.metrics)


@dataclass
class KMeansRun:
    centers: List[List[float]]
    iterations: int
    history: List[List[List[float]]]
    shifts: List[float]
    threshold: float
    box: Tuple[float, float, float, float]
    metrics: List[IterationMetrics]

    def __iter__(self):
        # unpacks as (centers, iterations)
        return iter((self.centers, self.iterations))

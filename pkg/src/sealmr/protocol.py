"""Header and subscription shapes used by the session, provisioning and data phases.

Session establishment::

    worker  --SUB {msg_type=JOB_OPENING}-------------------> router
    client  --SUB {msg_type=JOB_DETAILS, client_id=c}------> router
    client  --PUB JOB_OPENING {job_id, client_id}----------> workers
    worker  --PUB JOB_DETAILS {job_id, client_id}----------> client   (payload: offered subscriptions)
    client  --SUB (owner=worker) for each hired worker-----> router

Offered data/EOS subscriptions carry a ``bind`` field naming the attribute
the client pins to the slot it assigns at hire time (``dest_id`` for data,
``slot`` for end-of-stream).
"""

from __future__ import annotations

import json
import random
import threading
from typing import Dict, List, Optional

from .router import Constraint, Op, Subscription
from .script import Role
from .wire import Header, MessageType

STREAM_MAP = "MAP"
STREAM_REDUCE = "REDUCE"
STREAM_RESULT = "RESULT"
STREAM_ERROR = "ERROR"

CODE_TYPE = {Role.MAPPER: MessageType.MAP_CODETYPE, Role.REDUCER: MessageType.REDUCE_CODETYPE}
DATA_TYPE = {Role.MAPPER: MessageType.MAP_DATATYPE, Role.REDUCER: MessageType.REDUCE_DATATYPE}
IN_STREAM = {Role.MAPPER: STREAM_MAP, Role.REDUCER: STREAM_REDUCE}


def eq(name: str, value) -> list:
    return [name, "EQ", int(value) if isinstance(value, MessageType) else value]


class SubIds:
    """Node-local subscription ids: random 40-bit prefix followed by a 20-bit counter."""

    def __init__(self, rng: Optional[random.Random] = None):
        self._rng = rng or random.SystemRandom()
        self._prefix = self._rng.getrandbits(40)
        self._n = 0
        self._lock = threading.Lock()

    def __call__(self) -> int:
        with self._lock:
            self._n += 1
            if self._n >= 1 << 20:
                self._prefix = self._rng.getrandbits(40)
                self._n = 1
            return (self._prefix << 20) | self._n


def hello(node_id: str) -> Header:
    return {"msg_type": MessageType.HELLO, "node_id": node_id}


def subscribe(sub_id: int, constraints: List[list], owner: Optional[str] = None) -> Header:
    h: Header = {
        "msg_type": MessageType.SUBSCRIBE,
        "sub_id": sub_id,
        "constraints": json.dumps(constraints, separators=(",", ":")),
    }
    if owner is not None:
        h["owner"] = owner
    return h


def unsubscribe(sub_id: int) -> Header:
    return {"msg_type": MessageType.UNSUBSCRIBE, "sub_id": sub_id}


def job_opening_sub() -> List[list]:
    return [eq("msg_type", MessageType.JOB_OPENING)]


def worker_offer(role: Role, worker_id: str, job_id: str) -> dict:
    """Subscriptions a worker asks the client to register for ``role``."""
    return {
        "role": role.value,
        "subscriptions": [
            {"constraints": [eq("msg_type", CODE_TYPE[role]), eq("worker_id", worker_id)], "bind": None},
            {"constraints": [eq("msg_type", DATA_TYPE[role]), eq("job_id", job_id)], "bind": "dest_id"},
            {
                "constraints": [eq("msg_type", MessageType.EOS), eq("job_id", job_id), eq("stream", IN_STREAM[role])],
                "bind": "slot",
            },
            {"constraints": [eq("msg_type", MessageType.JOB_CLOSE), eq("worker_id", worker_id)], "bind": None},
        ],
    }


def bind_offer(offer: dict, slot: int) -> List[List[list]]:
    out = []
    for sub in offer["subscriptions"]:
        cons = [list(c) for c in sub["constraints"]]
        if sub.get("bind"):
            cons.append([sub["bind"], "EQ", slot])
        # reject anything the router would not accept
        Subscription(0, "x", tuple(Constraint(n, Op(o), v) for n, o, v in cons))
        out.append(cons)
    return out


def client_subs(client_id: str) -> List[List[list]]:
    return [[eq("msg_type", MessageType.JOB_DETAILS), eq("client_id", client_id)]]


def job_subs(job_id: str) -> List[List[list]]:
    return [
        [eq("msg_type", MessageType.RESULT), eq("job_id", job_id)],
        [eq("msg_type", MessageType.EOS), eq("job_id", job_id), eq("stream", STREAM_RESULT)],
        [eq("msg_type", MessageType.EOS), eq("job_id", job_id), eq("stream", STREAM_ERROR)],
    ]


def eos(job_id: str, stream: str, slot: int, iteration: int) -> Header:
    return {"msg_type": MessageType.EOS, "job_id": job_id, "stream": stream, "slot": slot, "iteration": iteration}


def data(msg_type: MessageType, job_id: str, dest_id: int, iteration: int, src: Optional[int] = None) -> Header:
    h: Header = {"msg_type": msg_type, "job_id": job_id, "dest_id": dest_id, "iteration": iteration}
    if src is not None:
        h["src"] = src
    return h


def dumps(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")

"""Local deployments: everything in one event loop, or one OS process per node."""

from __future__ import annotations

import asyncio
import json
import os
import socket
import secrets
import subprocess
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

from .client import Client
from .region import HEADER_KEY_ENV, PAYLOAD_KEY_ENV, SealedContext, SealMode, toggle
from .router import Router
from .script import DEFAULT_BUDGET, Role
from .worker import Worker


def fresh_keys() -> Tuple[str, str]:
    return secrets.token_hex(16), secrets.token_hex(16)


class WireCapture:
    """Router tap that keeps every frame it sees (both directions)."""

    def __init__(self):
        self.frames: List[Tuple[str, str, bytes]] = []

    def __call__(self, direction: str, node: str, frame: bytes) -> None:
        self.frames.append((direction, node, bytes(frame)))

    def blob(self) -> bytes:
        return b"".join(f for _, _, f in self.frames)


class LocalCluster:
    """Router, workers and client sharing one asyncio loop over real TCP sockets.

    >>> async with LocalCluster("sealed", workers=3) as c:   # doctest: +SKIP
    ...     results = await c.client.run_job(spec)
    """

    def __init__(
        self,
        mode="sealed",
        workers: int = 2,
        roles: Sequence[Role] = (Role.MAPPER, Role.REDUCER),
        keys: Optional[Tuple[str, str]] = None,
        capture: bool = False,
        budget: int = DEFAULT_BUDGET,
        eos_delays: Optional[Dict[int, float]] = None,
        worker_roles: Optional[Sequence[Sequence[Role]]] = None,
    ):
        self.mode = toggle(mode)
        self.keys = keys or fresh_keys()
        self.n_workers = workers
        self.roles = roles
        self.worker_roles = worker_roles
        self.budget = budget
        self.eos_delays = eos_delays or {}
        self.capture = WireCapture() if capture else None
        self.router: Optional[Router] = None
        self.workers: List[Worker] = []
        self.client: Optional[Client] = None

    def context(self, region_id: str, payload_key: bool = True) -> SealedContext:
        hk, pk = self.keys
        return SealedContext(self.mode, hk, pk if payload_key else None, region_id=region_id)

    @property
    def address(self) -> str:
        host, port = self.router.address
        return f"{host}:{port}"

    async def start(self) -> "LocalCluster":
        self.router = Router(self.context("router", payload_key=False), tap=self.capture)
        await self.router.start("127.0.0.1:0")
        for i in range(self.n_workers):
            roles = self.worker_roles[i] if self.worker_roles else self.roles
            w = Worker(self.context(f"worker-{i}"), roles, node_id=f"w{i}", budget=self.budget, eos_delay=self.eos_delays.get(i, 0.0))
            await w.start(self.address)
            self.workers.append(w)
        self.client = await Client(self.context("client"), node_id="client").connect(self.address)
        # let HELLO/SUBSCRIBE land before anyone publishes
        await self.settle()
        return self

    async def settle(self, rounds: int = 5):
        want = self.n_workers + 1
        for _ in range(200):
            if self.router.stats["registrations"] >= want and self.router.stats["hellos"] >= want:
                break
            await asyncio.sleep(0.005)
        for _ in range(rounds):
            await asyncio.sleep(0)

    async def stop(self):
        if self.client is not None:
            self.client.close()
        for w in self.workers:
            w.close()
        if self.router is not None:
            await self.router.close()

    async def __aenter__(self):
        return await self.start()

    async def __aexit__(self, *exc):
        await self.stop()


class ProcessCluster:
    """One router and N worker processes started through the console entry points.

    Keys are passed through the environment only. The client runs in the
    calling process (see :meth:`client`).
    """

    def __init__(self, mode="sealed", workers: int = 2, roles: str = "mapper,reducer", keys: Optional[Tuple[str, str]] = None, log_level: str = "WARNING"):
        self.mode = toggle(mode)
        self.keys = keys or fresh_keys()
        self.n_workers = workers
        self.roles = roles
        self.log_level = log_level
        self.procs: List[subprocess.Popen] = []
        self.address: Optional[str] = None
        self.diag_address: Optional[str] = None

    @property
    def env(self) -> dict:
        env = dict(os.environ)
        env[HEADER_KEY_ENV], env[PAYLOAD_KEY_ENV] = self.keys
        return env

    def _spawn(self, *args, env=None) -> subprocess.Popen:
        cmd = [sys.executable, "-m", "sealmr.cli", *args, "--log-level", self.log_level]
        p = subprocess.Popen(cmd, env=env or self.env, stdout=subprocess.PIPE, text=True)
        self.procs.append(p)
        return p

    def start(self, timeout: float = 20.0) -> "ProcessCluster":
        # the router gets the header key only
        renv = dict(self.env)
        renv.pop(PAYLOAD_KEY_ENV)
        router = self._spawn("router", "--listen", "127.0.0.1:0", "--diag", "127.0.0.1:0", "--seal-mode", self.mode.value, env=renv)
        deadline = time.monotonic() + timeout
        while self.diag_address is None:
            if time.monotonic() > deadline:
                raise RuntimeError("router did not report its address")
            line = router.stdout.readline()
            if not line and router.poll() is not None:
                raise RuntimeError(f"router exited with status {router.returncode}")
            word, _, addr = line.strip().partition(" ")
            if word == "listening":
                self.address = addr
            elif word == "diagnostics":
                self.diag_address = addr
        for _ in range(self.n_workers):
            self._spawn("worker", "--router", self.address, "--roles", self.roles, "--seal-mode", self.mode.value)
        # ready once every worker has said HELLO and volunteered
        while True:
            d = self.diagnostics()
            if d.get("hellos", 0) >= self.n_workers and d.get("registrations", 0) >= self.n_workers:
                break
            if time.monotonic() > deadline:
                raise RuntimeError(f"only {d.get('hellos', 0)}/{self.n_workers} workers connected")
            if any(p.poll() is not None for p in self.procs):
                raise RuntimeError("a node process exited during startup")
            time.sleep(0.05)
        return self

    def diagnostics(self) -> dict:
        host, _, port = self.diag_address.rpartition(":")
        with socket.create_connection((host, int(port)), timeout=5) as s:
            data = b""
            while not data.endswith(b"\n"):
                chunk = s.recv(65536)
                if not chunk:
                    break
                data += chunk
        return json.loads(data)

    async def client(self) -> Client:
        hk, pk = self.keys
        return await Client(SealedContext(self.mode, hk, pk, region_id="client")).connect(self.address)

    def stop(self):
        for p in self.procs:
            if p.poll() is None:
                p.terminate()
        for p in self.procs:
            try:
                p.wait(5)
            except subprocess.TimeoutExpired:
                p.kill()
            if p.stdout:
                p.stdout.close()
        self.procs = []

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

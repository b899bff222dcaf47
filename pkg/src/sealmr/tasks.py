"""Map-side and reduce-side execution state, independent of networking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .errors import HashOutOfRange, ScriptFault
from .script import Role, ScriptHost

Emission = Tuple[int, str, str]  # (dest reducer, key, value JSON)


def json_list(values: List[str]) -> str:
    """Group already-encoded JSON values into one JSON list without re-encoding."""
    return "[" + ",".join(values) + "]"


class MapTask:
    """Runs ``map`` per record, stages pushes by key, then combines and shuffles."""

    def __init__(self, host: ScriptHost):
        if host.role is not Role.MAPPER:
            raise ValueError("MapTask needs a mapper script host")
        self.host = host
        self.rcount = host.pkg.peer_count
        self.staged: Dict[str, List[str]] = {}
        self._dest: Dict[str, int] = {}
        self.records = 0
        self.pushes = 0

    def dest_for(self, key: str) -> int:
        d = self._dest.get(key)
        if d is None:
            raw = self.host.call_value("hash", key, self.rcount)
            if isinstance(raw, float) and raw.is_integer():
                raw = int(raw)
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise ScriptFault(f"hash({key!r}, {self.rcount}) returned {raw!r}, not an integer")
            if not 0 <= raw < self.rcount:
                raise HashOutOfRange(f"hash({key!r}, {self.rcount}) = {raw} outside [0, {self.rcount})")
            self._dest[key] = d = raw
        return d

    def run_map(self, key: str, value: str) -> List[Emission]:
        """Run ``map(key, value)``; stage and return what it pushed, tagged with destinations."""
        self.records += 1
        out = []
        for k, v in self.host.call("map", key, value):
            d = self.dest_for(k)
            self.staged.setdefault(k, []).append(v)
            out.append((d, k, v))
        self.pushes += len(out)
        return out

    def run_combine(self, key: str, grouped: str) -> List[Tuple[str, str]]:
        return self.host.call("combine", key, grouped)

    def shuffle_out(self) -> List[Emission]:
        """Final per-key emissions after the input is complete.

        With ``combine``: one emission per combine push. Without: the grouped
        list of staged values, forwarded as a single value.
        """
        out: List[Emission] = []
        combine = self.host.has("combine")
        for key, values in self.staged.items():
            grouped = json_list(values)
            if combine:
                for k, v in self.run_combine(key, grouped):
                    out.append((self.dest_for(k), k, v))
            else:
                out.append((self.dest_for(key), key, grouped))
        self.staged = {}
        return out


@dataclass
class EosLedger:
    expected: int
    received: int = 0

    def record(self) -> None:
        if self.received >= self.expected:
            raise ValueError(f"unexpected end-of-stream: already have {self.received}/{self.expected}")
        self.received += 1

    @property
    def complete(self) -> bool:
        return self.received == self.expected


class ReduceTask:
    """Groups values per key until every mapper has signalled end-of-stream."""

    def __init__(self, host: ScriptHost):
        if host.role is not Role.REDUCER:
            raise ValueError("ReduceTask needs a reducer script host")
        self.host = host
        self.ledger = EosLedger(host.pkg.peer_count)
        # key -> source mapper slot -> values in arrival order
        self.grouped: Dict[str, Dict[int, List[str]]] = {}
        self.done = False

    def add(self, key: str, value: str, src: int = 0) -> None:
        if self.ledger.complete:
            raise ValueError("data after the last end-of-stream")
        self.grouped.setdefault(key, {}).setdefault(src, []).append(value)

    def eos(self) -> bool:
        self.ledger.record()
        return self.ledger.complete

    def run_reduce(self, key: str, grouped: str) -> List[Tuple[str, str]]:
        return self.host.call("reduce", key, grouped)

    def values_for(self, key: str) -> List[str]:
        by_src = self.grouped[key]
        return [v for src in sorted(by_src) for v in by_src[src]]

    def finish(self) -> List[Tuple[str, str]]:
        if not self.ledger.complete:
            raise RuntimeError(
                f"reduce requested with {self.ledger.received}/{self.ledger.expected} end-of-stream markers"
            )
        if self.done:
            raise RuntimeError("reduce phase already ran")
        out = []
        for key in self.grouped:
            values = self.values_for(key)
            assert values, f"key {key!r} has no values"
            out.extend(self.run_reduce(key, json_list(values)))
        self.done = True
        return out

"""Sandboxed Lua host for user map/combine/hash/reduce scripts.

Scripts see a restricted global environment: no ``io``, ``os``,
``debug``, ``package``, ``load*``/``dofile``, coroutines, or access to
Python objects. ``require "json"`` returns the preloaded JSON codec and
``push(key, value)`` hands a pair back to the runtime (the value is JSON
encoded on the Lua side). Every call into the script runs under an
instruction budget enforced by a count hook.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, List, Optional, Tuple

from lupa import lua54

from .errors import MissingEntryPoint, RoleMismatch, ScriptFault, ScriptSyntaxError

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 50_000_000
DEFAULT_MAX_MEMORY = 1 << 30
HOOK_STEP = 1000


class Role(enum.Enum):
    MAPPER = "mapper"
    REDUCER = "reducer"

    @classmethod
    def parse(cls, text) -> "Role":
        if isinstance(text, Role):
            return text
        return cls(str(text).lower())


REQUIRED = {Role.MAPPER: ("map", "hash"), Role.REDUCER: ("reduce",)}
OPTIONAL = {Role.MAPPER: ("combine",), Role.REDUCER: ()}


@dataclass
class CodePackage:
    role: Role
    script_source: str
    peer_count: int
    job_id: str
    slot: int = 0
    iteration: int = 0
    shared_state: Any = None

    def __post_init__(self):
        self.role = Role.parse(self.role)
        if self.peer_count < 1:
            raise ValueError("peer_count must be >= 1")
        if not self.script_source.strip():
            raise ValueError("empty script")

    def to_payload(self) -> bytes:
        return json.dumps(
            {
                "role": self.role.value,
                "script": self.script_source,
                "peer_count": self.peer_count,
                "job_id": self.job_id,
                "slot": self.slot,
                "iteration": self.iteration,
                "shared_state": self.shared_state,
            },
            separators=(",", ":"),
        ).encode("utf-8")

    @classmethod
    def from_payload(cls, payload: bytes) -> "CodePackage":
        d = json.loads(payload)
        return cls(
            role=d["role"],
            script_source=d["script"],
            peer_count=int(d["peer_count"]),
            job_id=str(d["job_id"]),
            slot=int(d.get("slot", 0)),
            iteration=int(d.get("iteration", 0)),
            shared_state=d.get("shared_state"),
        )


_SANDBOX_LUA = r"""
local json_src, host_push, host_log = ...
local sethook = debug.sethook
local used, limit = 0, 0

local function hook()
  used = used + %(step)d
  if used > limit then
    sethook()
    error("instruction budget exceeded", 2)
  end
end

local function invoke(budget, f, ...)
  used, limit = 0, budget
  sethook(hook, "", %(step)d)
  local ok, a = pcall(f, ...)
  sethook()
  if not ok then error(a, 0) end
  return a
end

local function copy(t, drop)
  local c = {}
  for k, v in pairs(t) do
    if not (drop and drop[k]) then c[k] = v end
  end
  return c
end

string.dump = nil
math.randomseed(0)

local env = {
  assert = assert, error = error, ipairs = ipairs, next = next, pairs = pairs,
  pcall = pcall, select = select, tonumber = tonumber, tostring = tostring,
  type = type, xpcall = xpcall, rawequal = rawequal, rawget = rawget,
  rawlen = rawlen, rawset = rawset, setmetatable = setmetatable,
  getmetatable = getmetatable,
  string = copy(string), table = copy(table), math = copy(math), utf8 = copy(utf8),
  _VERSION = _VERSION,
}
env._G = env

local json = load(json_src, "=json", "t", env)()
local modules = { json = json }
env.require = function(name)
  local m = modules[name]
  if m == nil then error("module '" .. tostring(name) .. "' is not available in the sandbox", 2) end
  return m
end

local encode, mtype, format = json.encode, math.type, string.format
env.push = function(key, value)
  local tk = type(key)
  if tk == "number" then
    if mtype(key) == "integer" then key = format("%%d", key) else key = tostring(key) end
  elseif tk ~= "string" then
    error("push: key must be a string or number, got " .. tk, 2)
  end
  if key == "" then error("push: empty key", 2) end
  host_push(key, encode(value))
end
env.print = function(...)
  local parts = {}
  for i = 1, select("#", ...) do parts[i] = tostring((select(i, ...))) end
  host_log(table.concat(parts, "\t"))
end

local function load_user(src, budget)
  local chunk, err = load(src, "=user", "t", env)
  if not chunk then return false, err end
  invoke(budget, chunk)
  return true, ""
end

local function set_shared(text)
  if text == nil then env.shared = nil else env.shared = json.decode(text) end
end

local function entry(name)
  local f = rawget(env, name)
  if type(f) == "function" then return f end
  return nil
end

return invoke, load_user, entry, set_shared
""" % {"step": HOOK_STEP}


def _deny_attributes(obj, name, setting):
    raise AttributeError("python attribute access is disabled in the sandbox")


def _json_source() -> str:
    return resources.files("sealmr").joinpath("lua/json.lua").read_text(encoding="utf-8")


class ScriptHost:
    """One Lua state running one user script for one role."""

    def __init__(self, pkg: CodePackage, budget: int = DEFAULT_BUDGET, max_memory: Optional[int] = DEFAULT_MAX_MEMORY):
        self.pkg = pkg
        self.role = pkg.role
        self.budget = int(budget)
        self._pushed: List[Tuple[str, str]] = []
        kw = {"max_memory": max_memory} if max_memory else {}
        self.lua = lua54.LuaRuntime(
            register_eval=False,
            register_builtins=False,
            unpack_returned_tuples=True,
            attribute_filter=_deny_attributes,
            **kw,
        )
        self.lua.globals().python = None
        setup = self.lua.execute(_SANDBOX_LUA, _json_source(), self._push, self._log)
        self._invoke, load_user, entry, set_shared = setup
        set_shared(None if pkg.shared_state is None else json.dumps(pkg.shared_state))
        try:
            ok, err = load_user(pkg.script_source, self.budget)
        except lua54.LuaError as exc:
            raise ScriptFault(f"script failed while loading: {_clean(exc)}") from None
        if not ok:
            raise ScriptSyntaxError(str(err))
        self.entries = {}
        for name in REQUIRED[Role.MAPPER] + OPTIONAL[Role.MAPPER] + REQUIRED[Role.REDUCER]:
            f = entry(name)
            if f is not None:
                self.entries[name] = f
        self._validate()

    def _validate(self):
        need = REQUIRED[self.role]
        missing = [n for n in need if n not in self.entries]
        if not missing:
            return
        other = Role.REDUCER if self.role is Role.MAPPER else Role.MAPPER
        if len(missing) == len(need) and all(n in self.entries for n in REQUIRED[other]):
            raise RoleMismatch(f"script is written for the {other.value} role, loaded as {self.role.value}")
        raise MissingEntryPoint(f"{self.role.value} script must define: {', '.join(missing)}")

    def _push(self, key, value):
        self._pushed.append((key, value))

    def _log(self, text):
        log.debug("[script %s] %s", self.pkg.job_id, text)

    def has(self, name: str) -> bool:
        return name in self.entries

    def call(self, name: str, *args) -> List[Tuple[str, str]]:
        """Invoke an entry point; returns the ``(key, value_json)`` pairs it pushed."""
        f = self.entries.get(name)
        if f is None:
            raise MissingEntryPoint(f"script defines no {name!r}")
        self._pushed = []
        try:
            self._invoke(self.budget, f, *args)
        except lua54.LuaMemoryError as exc:
            raise ScriptFault(f"{name}: out of memory ({exc})") from None
        except lua54.LuaError as exc:
            raise ScriptFault(f"{name}: {_clean(exc)}") from None
        out, self._pushed = self._pushed, []
        return out

    def call_value(self, name: str, *args):
        """Invoke an entry point and return its (single) return value; pushes are rejected."""
        f = self.entries.get(name)
        if f is None:
            raise MissingEntryPoint(f"script defines no {name!r}")
        self._pushed = []
        try:
            result = self._invoke(self.budget, f, *args)
        except lua54.LuaError as exc:
            raise ScriptFault(f"{name}: {_clean(exc)}") from None
        if self._pushed:
            self._pushed = []
            raise ScriptFault(f"{name} must not call push")
        return result


def _clean(exc) -> str:
    text = str(exc)
    return text.split("\nstack traceback:")[0]


def load_code(pkg: CodePackage, budget: int = DEFAULT_BUDGET) -> ScriptHost:
    return ScriptHost(pkg, budget=budget)

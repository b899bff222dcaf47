import json

import pytest

from sealmr.errors import MissingEntryPoint, RoleMismatch, ScriptFault, ScriptSyntaxError
from sealmr.script import CodePackage, Role, ScriptHost, load_code
from sealmr.scripts import load_script


def host(src, role=Role.MAPPER, peers=2, shared=None, budget=None):
    pkg = CodePackage(role, src, peers, "job", shared_state=shared)
    return ScriptHost(pkg) if budget is None else ScriptHost(pkg, budget=budget)


def test_wordcount_mapper_loads_with_all_entry_points():
    h = load_code(CodePackage(Role.MAPPER, load_script("wordcount_map"), 5, "j"))
    assert {"map", "combine", "hash"} <= set(h.entries)


def test_wordcount_map_tokenises():
    h = host(load_script("wordcount_map"))
    assert h.call("map", "", "the cat the") == [("the", "1"), ("cat", "1"), ("the", "1")]
    assert h.call("map", "0", "") == []
    assert h.call("map", "0", "Don't STOP, x86-64 naïve") == [
        ("don", "1"), ("t", "1"), ("stop", "1"), ("x", "1"), ("na", "1"), ("ve", "1")
    ]


def test_wordcount_combine_and_hash():
    h = host(load_script("wordcount_map"))
    assert h.call("combine", "the", "[1,1]") == [("the", "2")]
    assert h.call("combine", "the", "[1]") == [("the", "1")]
    assert h.call_value("hash", "apple", 5) == 97 % 5 == 2


def test_wordcount_reduce():
    h = host(load_script("wordcount_reduce"), Role.REDUCER)
    assert h.call("reduce", "the", "[2,1]") == [("the", "3")]


def test_kmeans_map_nearest_center():
    h = host(load_script("kmeans_map"), shared={"centers": [[1, 0], [5, 5]]}, peers=1)
    assert h.call("map", "0", "0,0") == [("0", "[0,0]")]
    assert h.call("map", "1", "4.5,4.25") == [("1", "[4.5,4.25]")]
    # equidistant from both centers: lowest index wins
    h2 = host(load_script("kmeans_map"), shared={"centers": [[0, 0], [2, 0]]}, peers=1)
    assert h2.call("map", "0", "1,5") == [("0", "[1,5]")]


def test_kmeans_reduce_mean():
    h = host(load_script("kmeans_reduce"), Role.REDUCER)
    assert h.call("reduce", "0", "[[0,0],[2,0],[0,2],[2,2]]") == [("0", "[1,1]")]
    # batches forwarded by mappers without a combiner
    assert h.call("reduce", "0", "[[[0,0],[2,0]],[[0,2],[2,2]]]") == [("0", "[1,1]")]


def test_floats_survive_json_exactly():
    h = host(load_script("kmeans_reduce"), Role.REDUCER)
    pts = [[0.1, 0.7], [0.2, 1e-300], [123456.789012345, 3.0]]
    ((_, v),) = h.call("reduce", "0", json.dumps(pts))
    want = [(0.1 + 0.2 + 123456.789012345) / 3, (0.7 + 1e-300 + 3.0) / 3]
    assert json.loads(v) == want


def test_missing_hash():
    with pytest.raises(MissingEntryPoint):
        host("function map(k, v) end")


def test_role_mismatch():
    with pytest.raises(RoleMismatch):
        host(load_script("wordcount_reduce"), Role.MAPPER)
    with pytest.raises(RoleMismatch):
        host(load_script("wordcount_map"), Role.REDUCER)


def test_syntax_error():
    with pytest.raises(ScriptSyntaxError):
        host("function map(k, v")


def test_top_level_infinite_loop_hits_budget():
    with pytest.raises(ScriptFault, match="budget"):
        host("while true do end", budget=100_000)


def test_runaway_call_hits_budget():
    h = host("function map(k, v) while true do end end function hash(k, n) return 0 end", budget=100_000)
    with pytest.raises(ScriptFault, match="budget"):
        h.call("map", "k", "v")
    # the host stays usable afterwards
    with pytest.raises(ScriptFault):
        h.call("map", "k", "v")


@pytest.mark.parametrize(
    "body",
    [
        'io.open("/etc/passwd")',
        'os.execute("true")',
        'require("socket")',
        'loadfile("/etc/passwd")',
        'dofile("/etc/passwd")',
        'debug.getinfo(1)',
        "package.loadlib('x', 'y')",
        'python.eval("1")',
        "os.time()",
        "string.dump(map)",
    ],
)
def test_sandbox_denies_file_network_clock(body):
    src = f"function map(k, v) {body} end function hash(k, n) return 0 end"
    h = host(src)
    with pytest.raises(ScriptFault):
        h.call("map", "k", "v")


def test_script_error_is_fault():
    h = host("function map(k, v) error('bad record') end function hash(k, n) return 0 end")
    with pytest.raises(ScriptFault, match="bad record"):
        h.call("map", "k", "v")


def test_push_validation():
    h = host("function map(k, v) push({}, 1) end function hash(k, n) return 0 end")
    with pytest.raises(ScriptFault):
        h.call("map", "k", "v")
    h = host("function map(k, v) push(7, {a = 'b'}) end function hash(k, n) return 0 end")
    assert h.call("map", "k", "v") == [("7", '{"a":"b"}')]


def test_hash_must_not_push():
    h = host("function map(k, v) end function hash(k, n) push(k, 1) return 0 end")
    with pytest.raises(ScriptFault):
        h.call_value("hash", "k", 2)


def test_code_package_payload_round_trip():
    pkg = CodePackage(Role.MAPPER, "x = 1", 5, "job", slot=2, iteration=3, shared_state={"centers": [[1.5, 2]]})
    back = CodePackage.from_payload(pkg.to_payload())
    assert back == pkg
    assert json.loads(pkg.to_payload())["peer_count"] == 5
    with pytest.raises(ValueError):
        CodePackage(Role.MAPPER, "x = 1", 0, "job")

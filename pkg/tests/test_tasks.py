import pytest

from sealmr.errors import HashOutOfRange, ScriptFault
from sealmr.script import CodePackage, Role, ScriptHost
from sealmr.scripts import load_script
from sealmr.tasks import EosLedger, MapTask, ReduceTask, json_list


def mapper(src, rcount):
    return MapTask(ScriptHost(CodePackage(Role.MAPPER, src, rcount, "j")))


def reducer(src, mcount):
    return ReduceTask(ScriptHost(CodePackage(Role.REDUCER, src, mcount, "j")))


def test_run_map_tags_destinations():
    t = mapper(load_script("wordcount_map"), 5)
    out = t.run_map("0", "apple pie")
    assert out == [(97 % 5, "apple", "1"), (ord("p") % 5, "pie", "1")]


def test_single_reducer_gets_everything():
    t = mapper(load_script("wordcount_map"), 1)
    t.run_map("0", "zebra apple mango")
    assert {d for d, _, _ in t.shuffle_out()} == {0}


def test_shuffle_out_combines_per_key():
    t = mapper(load_script("wordcount_map"), 2)
    t.run_map("0", "the cat the")
    t.run_map("1", "cat cat")
    out = sorted(t.shuffle_out())
    assert out == sorted([(ord("t") % 2, "the", "2"), (ord("c") % 2, "cat", "3")])
    assert t.shuffle_out() == []


def test_without_combine_the_grouped_list_is_forwarded():
    src = "function map(k, v) push('a', 1) push('a', {2}) end function hash(k, n) return 0 end"
    t = mapper(src, 1)
    t.run_map("0", "x")
    assert t.shuffle_out() == [(0, "a", "[1,[2]]")]


@pytest.mark.parametrize("ret", ["5", "-1"])
def test_hash_out_of_range_is_fatal(ret):
    t = mapper(f"function map(k, v) push(v, 1) end function hash(k, n) return {ret} end", 5)
    with pytest.raises(HashOutOfRange):
        t.run_map("0", "x")


def test_non_integer_hash_is_fault():
    t = mapper("function map(k, v) push(v, 1) end function hash(k, n) return 'zero' end", 2)
    with pytest.raises(ScriptFault):
        t.run_map("0", "x")


def test_reduce_waits_for_every_eos_and_orders_by_source():
    t = reducer(load_script("wordcount_reduce"), 2)
    t.add("the", "2", src=1)
    t.add("the", "1", src=0)
    assert not t.eos()
    with pytest.raises(RuntimeError):
        t.finish()
    t.add("cat", "3", src=1)
    assert t.eos()
    assert t.values_for("the") == ["1", "2"]
    assert sorted(t.finish()) == [("cat", "3"), ("the", "3")]
    with pytest.raises(ValueError):
        t.add("late", "1", src=0)


def test_reduce_with_no_data():
    t = reducer(load_script("wordcount_reduce"), 1)
    assert t.eos()
    assert t.finish() == []


def test_eos_ledger():
    led = EosLedger(2)
    led.record()
    assert not led.complete
    led.record()
    assert led.complete
    with pytest.raises(ValueError):
        led.record()


def test_json_list():
    assert json_list(["1", "[2,3]", '"x"']) == '[1,[2,3],"x"]'
    assert json_list([]) == "[]"

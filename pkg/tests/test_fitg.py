import pytest

from mcast_testgen import fitg
from mcast_testgen.gfsm import FaultSpec

from .conftest import G, key


def test_enum_exhaustive_size():
    assert len(fitg.enum_init_exhaustive(3, ("NM", "EU"))) == 8


def test_enum_equiv_is_multisets():
    got = {g.key for g in fitg.enum_init_equiv(2, ("NM", "EU"))}
    assert got == {key("NM", "NM"), key("NM", "EU"), key("EU", "EU")}


@pytest.mark.parametrize("bad", [dict(n=0), dict(n=2, algorithm="bogus"), dict(n=2, strategy="random")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        fitg.SearchConfig(**bad)


def test_alias_equiv_plus():
    assert fitg.SearchConfig(2, "equiv+").algorithm == "equivPlus"


def test_two_routers(engine):
    res = fitg.expand_space(engine, fitg.SearchConfig(2))
    assert res.error_classes() == {key("F", "NF")}
    # {F,F} moves to {F,NF} under the probe, so it is not a false error
    assert res.false_error_classes() == set()
    assert [t.final.key for t in res.superseded] == [key("F", "F")]
    (trace,) = res.errors
    assert trace.initial.key == key("EU", "EU")


@pytest.mark.parametrize("n", [2, 3])
def test_algorithms_agree_on_error_classes(engine, n):
    classes = {alg: fitg.expand_space(engine, fitg.SearchConfig(n, alg)).error_classes()
               for alg in fitg.ALGORITHMS}
    assert len(set(map(frozenset, classes.values()))) == 1


def test_depth_first_finds_same_classes(engine):
    bfs = fitg.expand_space(engine, fitg.SearchConfig(3))
    dfs = fitg.expand_space(engine, fitg.SearchConfig(3, strategy="depthFirst"))
    assert bfs.error_classes() == dfs.error_classes()


def test_reduced_does_less_work(engine):
    ex = fitg.expand_space(engine, fitg.SearchConfig(3, "exhaustive")).stats
    red = fitg.expand_space(engine, fitg.SearchConfig(3, "reduced")).stats
    assert red.transitions < ex.transitions


@pytest.mark.parametrize("fault", [None, FaultSpec.loss("Prune"), FaultSpec.loss("Join")])
def test_traces_replay(engine, fault):
    res = fitg.expand_space(engine, fitg.SearchConfig(3, fault=fault))
    for t in res.errors + res.false_errors + res.superseded:
        assert fitg.replay(engine, t).key == t.final.key


def test_without_probe_false_candidates_are_errors(engine):
    res = fitg.expand_space(engine, fitg.SearchConfig(2, probe=False))
    assert res.error_classes() == {key("F", "F")}
    assert not res.false_errors


def test_state_limit_marks_partial(engine):
    res = fitg.expand_space(engine, fitg.SearchConfig(4, "exhaustive", max_states=5))
    assert res.partial


def test_crash_is_not_a_move(crash_engine):
    s = fitg.Search(crash_engine, fitg.SearchConfig(2))
    assert all(stim != "Crash" for stim, _ in s.moves(G("F", "NH")))


def test_reachable_closure(engine):
    r = fitg.reachable_states(engine, 2)
    assert (len(r.stable), len(r.transient)) == (10, 17)
    assert G("F", "NF") in r and G("F_Del", "NC") in r
    assert G("NH", "NH") not in r
    path = r.path(key("F", "NF"))
    assert path and path[0][0] in {key("EU", "EU"), key("EU", "NM"), key("NM", "NM")}


def test_compare_algorithms_rows(engine):
    rows = fitg.compare_algorithms(engine, [2])
    assert [r["algorithm"] for r in rows] == list(fitg.ALGORITHMS)
    assert len({r["errors"] for r in rows}) == 1


def test_false_error_recovers(engine):
    res = fitg.expand_space(engine, fitg.SearchConfig(3))
    assert res.false_error_classes() == {key("F", "F", "NH")}
    assert all(t.note == "recovers under one SPkt probe" for t in res.false_errors)

import itertools

import pytest

from mcast_testgen.gfsm import (
    CRASH,
    LOSS,
    FaultSpec,
    GlobalState,
    Message,
    NotEnabled,
    canonicalize,
)

from .conftest import G, key


def stables(completions):
    return {(c.stable.key, c.fault is not None) for c in completions}


def test_key_is_order_free():
    assert G("F", "NH", "NC").key == G("NC", "F", "NH").key
    assert canonicalize(G("NC", "F")) == canonicalize(G("F", "NC"))
    assert G("F", "F", "NC").counts == {"F": 2, "NC": 1}


def test_spkt_from_two_upstream(engine):
    assert stables(engine.complete_transition(G("EU", "EU"), "SPkt", 0)) == {(key("F", "F"), False)}


def test_leave_is_overridden_by_join(engine):
    out = engine.complete_transition(G("F", "NH", "NH"), "L", 1)
    assert stables(out) == {(key("F", "NC", "NH"), False)}


@pytest.mark.parametrize("lost", ["Prune", "Join"])
def test_leave_with_loss_branches(engine, lost):
    out = engine.complete_transition(G("F", "NH", "NH"), "L", 1, FaultSpec.loss(lost))
    assert (key("F", "NC", "NH"), False) in stables(out)
    assert (key("NF", "NC", "NH"), True) in stables(out)
    assert all(c.fault.kind == LOSS and c.fault.stimulus == lost for c in out if c.fault)


def test_fault_free_branch_comes_first(engine):
    out = engine.complete_transition(G("F", "NH", "NH"), "L", 1, FaultSpec.loss("Prune"))
    assert out[0].fault is None


def test_graft_loss_recovered_by_retransmission(engine):
    out = engine.complete_transition(G("NF", "NC"), "HJ", 1, FaultSpec.loss("Graft_Rcv"))
    assert {c.stable.key for c in out} == {key("F", "NH")}


def test_not_enabled(engine):
    with pytest.raises(NotEnabled):
        engine.complete_transition(G("NM"), "L", 0)


def test_timers_pending(engine):
    timers = engine.pending_timers(G("F_Del", "NC"))
    assert [(m.stimulus, m.orig) for m in timers] == [("Del", 0)]
    assert engine.pending_timers(G("F", "NC")) == []


def test_deliver_with_lost_router(engine):
    g = G("F", "NH", "NH")
    msg = Message("Prune", 1, "NH")
    assert engine.deliver(g, msg).after.routers[0] == "F_Del"
    assert engine.deliver(g, msg, lost=(0,)).after.routers[0] == "F"


def test_counting_equivalence_of_outcomes(engine):
    # every permutation of a state yields the same stable multisets
    base = ("F", "NH", "NH", "NC")
    ref = None
    for perm in set(itertools.permutations(base)):
        g = GlobalState(perm)
        r = next(i for i, s in enumerate(perm) if s == "NH")
        got = stables(engine.complete_transition(g, "L", r, FaultSpec.loss("Prune")))
        ref = got if ref is None else ref
        assert got == ref


def test_crash_rule(crash_engine):
    assert crash_engine.crash(G("F", "NH"), 0).key == key("EU", "NH")
    assert crash_engine.crash(G("F", "NH"), 1).key == key("F", "ED")


def test_crash_fault_injected(crash_engine):
    out = crash_engine.complete_transition(G("NF", "NC"), "HJ", 1, FaultSpec.crash("NF"))
    crashed = [c for c in out if c.fault is not None]
    assert crashed and all(c.fault.kind == CRASH for c in crashed)
    assert key("EU", "NH_Rtx") in {c.stable.key for c in crashed}

import pytest

from mcast_testgen import fitg, fotg
from mcast_testgen.gfsm import GlobalState
from mcast_testgen.model import ModelError

from .conftest import G, key


def test_roots(model):
    pre = fotg.derive_preconditions(model)
    assert [c.stimulus for c in pre["SPkt"]] == ["Ext"]
    assert [c.stimulus for c in pre["Del"]] == ["Exp"]
    assert set(fotg.collapse(pre["Prune"])) == {("FPkt", "NC"), ("L", "NC")}


def test_ancestors(model):
    table = fotg.build_dependency_table(model)
    assert fotg.ancestors(table, "NF") == {"F", "F_Del", "EU", "NF"}
    assert any(e.is_marker for e in table["EU"])


@pytest.mark.parametrize("stim,state,expect", [
    ("Join", G("NH", "NF"), False),
    ("Join", G("NF", "NH", "NC"), True),
    ("Assert", G("F", "NH", "NC"), False),
    ("Assert", G("F", "F", "NH"), True),
])
def test_check_min_topo(tables, stim, state, expect):
    assert fotg.check_min_topo(tables, state, stim) is expect


def test_check_consistency(engine):
    assert fotg.check_consistency(engine, "FPkt", G("F", "NF", "EU")) is False
    assert fotg.check_consistency(engine, "FPkt", G("F", "NF", "NC")) is True


@pytest.mark.parametrize("target,expect", [
    ("Prune", [("F", "NH", "NC")]),
    ("GAck", [("F", "NH_Rtx")]),
    ("Graft", [("NF", "NH_Rtx")]),
])
def test_synthesis(tables, target, expect):
    got = [GlobalState(c.state).key for c in fotg.synthesize_global_state(tables, target)]
    assert got == [GlobalState(e).key for e in expect]


def test_forward_needs_originator(engine):
    with pytest.raises(fotg.InapplicableFault):
        fotg.forward_imply(engine, G("NC", "NC"), "Assert")


def test_budget_exceeded(tables):
    assert fotg.Backward(tables, 1).run(("NF", "NH", "NC")).status == fotg.BUDGET_EXCEEDED


def test_lone_downstream_unreachable(tables):
    assert fotg.backward_imply(tables, ("NH",)).status == fotg.UNREACHABLE


def test_initial_state_is_reached_at_once(tables):
    out = fotg.backward_imply(tables, ("EU", "NM"))
    assert out.reached and out.raw == []


def test_chain_replays(tables):
    out = fotg.backward_imply(tables, ("NF", "NH", "NC"))
    assert out.reached
    assert fotg.replay_fragment(tables.engine, out.raw).key == key("NF", "NH", "NC")
    # timers are folded: the raw chain has a Del step that the collapsed chain hides
    assert "Del" in [s.stimulus for s in out.raw]
    assert "Del" not in [s for _, s in out.chain()]


def test_unreachable_is_sound(engine, tables):
    # n <= 2: anything Unreachable is absent from the forward closure
    import itertools
    for n in (1, 2):
        closure = fitg.reachable_states(engine, n)
        for combo in itertools.combinations_with_replacement(engine.model.alphabet, n):
            if fotg.backward_imply(tables, combo).status == fotg.UNREACHABLE:
                assert GlobalState(combo) not in closure


def test_case_study_counts(tables):
    rows = fotg.case_study(tables)
    assert len(rows) == 21
    assert sum(not r.reachable for r in rows) == 7


def test_loss_targets_all_reachable(tables):
    rows = fotg.case_study(tables, fotg.LOSS_TARGETS)
    assert rows and all(r.reachable for r in rows)


def test_interleave_returns_failing_only(tables):
    bad = fotg.interleave_timer_clear(tables)
    assert [s.name for s in bad] == ["III"]


def test_no_interleave_for_untimed_target(tables):
    assert fotg.graft_scenarios(tables, "Assert") == []


def test_crash_analysis_needs_extension(engine):
    with pytest.raises(ModelError):
        fotg.crash_analysis(engine)


def test_crash_scenarios_are_judged(crash_engine):
    found = fotg.crash_analysis(crash_engine, "NC", n_values=(2,))
    assert found
    assert all(sc.symbol == "NC" for sc in found)
    assert {sc.label for sc in found} <= {fotg.RECOVERED, fotg.JOIN_LATENCY,
                                          "black-hole", "duplication", "wasted-bandwidth"}


def test_loss_on_external_is_skipped(tables):
    (row,) = fotg.case_study(tables, ["HJ"])[:1]
    assert not any(i.faulted for i in row.implications)

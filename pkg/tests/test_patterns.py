from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcast_testgen.gfsm import Checker, GlobalState
from mcast_testgen.model import ModelMismatch
from mcast_testgen.patterns import match_pattern, parse_pattern

from .oracles import ALPHA, correct_def1, correct_def2


states = st.lists(st.sampled_from(ALPHA), min_size=1, max_size=7).map(lambda r: GlobalState(tuple(r)))


@settings(max_examples=400, deadline=None)
@given(states)
def test_definitions_match_counting_oracle(model, g):
    c = Counter(g.routers)
    assert Checker(model, 1).check(g).ok == correct_def1(c)
    assert Checker(model, 2).check(g).ok == correct_def2(c)


@settings(max_examples=200, deadline=None)
@given(states, st.randoms(use_true_random=False))
def test_matching_ignores_router_order(model, g, rnd):
    routers = list(g.routers)
    rnd.shuffle(routers)
    h = GlobalState(tuple(routers))
    for d in (1, 2):
        assert Checker(model, d).check(g) == Checker(model, d).check(h)


@settings(max_examples=200, deadline=None)
@given(states)
def test_every_error_has_a_class(model, g):
    for d in (1, 2):
        v = Checker(model, d).check(g)
        if not v.ok:
            assert v.error_class in {"duplication", "black-hole", "wasted-bandwidth"}


@pytest.mark.parametrize("routers,name", [
    (("NH", "F", "F"), "duplication"),
    (("NH", "NF"), "black-hole"),
    (("F", "NF"), "wasted-bandwidth"),
    (("F", "NC", "NC"), "wasted-bandwidth"),
])
def test_error_classes(model, routers, name):
    assert Checker(model, 1).check(GlobalState(routers)).error_class == name


def test_repetitions():
    p = parse_pattern("NH^1+, F^1, X-{F}^*", ALPHA)
    assert match_pattern(GlobalState(("NH", "NH", "F", "NC")), p)
    assert not match_pattern(GlobalState(("F", "NC")), p)
    assert not match_pattern(GlobalState(("NH", "F", "F")), p)
    two = parse_pattern("F^2+, X^*", ALPHA)
    assert match_pattern(GlobalState(("F", "F")), two)
    assert not match_pattern(GlobalState(("F", "NF")), two)
    # a wildcard term may still absorb routers a zero term excludes
    assert match_pattern(GlobalState(("NH",)), parse_pattern("NH^0, X^*", ALPHA))
    assert not match_pattern(GlobalState(("NH",)), parse_pattern("NH^0, X-{NH}^*", ALPHA))


def test_explicit_class():
    p = parse_pattern("{F,F_Del}^1, X-{F,F_Del}^*", ALPHA)
    assert match_pattern(GlobalState(("F_Del", "NC")), p)
    assert not match_pattern(GlobalState(("F_Del", "F")), p)


def test_unknown_symbol_in_pattern():
    with pytest.raises(ModelMismatch):
        parse_pattern("QQ^1", ALPHA)

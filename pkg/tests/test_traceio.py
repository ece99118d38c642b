import pytest

from mcast_testgen import fitg, fotg, traceio
from mcast_testgen.gfsm import FaultSpec

from .conftest import G


def test_state_format_is_canonical(model):
    assert traceio.format_state(G("NC", "F", "NH", "NH"), model) == "{F:1,NH:2,NC:1}"
    assert traceio.parse_state("{F:1,NH:2,NC:1}", model).routers == ("F", "NH", "NH", "NC")


@pytest.mark.parametrize("bad", ["F:1", "{Q:1}", "{F:x}"])
def test_bad_state(model, bad):
    with pytest.raises(traceio.TraceFormatError):
        traceio.parse_state(bad, model)


@pytest.mark.parametrize("fault", [None, FaultSpec.loss("Prune"), FaultSpec.loss("Join")])
def test_round_trip_and_replay(engine, fault):
    res = fitg.expand_space(engine, fitg.SearchConfig(3, fault=fault))
    recs = [traceio.from_search_trace(t, engine.model) for t in res.errors + res.false_errors]
    text = traceio.dumps(recs, engine.model)
    back = traceio.loads(text, engine.model)
    assert traceio.dumps(back, engine.model) == text
    for rec in back:
        assert not traceio.replay_record(engine, rec).ok


def test_crash_traces_replay(crash_engine):
    res = fitg.expand_space(crash_engine, fitg.SearchConfig(2, fault=FaultSpec.crash()))
    recs = [traceio.from_search_trace(t, crash_engine.model) for t in res.errors]
    assert any(r.steps[i].fault.startswith("crash:") for r in recs for i in range(len(r.steps)) if r.steps[i].fault)
    for rec in traceio.loads(traceio.dumps(recs, crash_engine.model), crash_engine.model):
        traceio.replay_record(crash_engine, rec)


def test_delivery_traces_replay(tables):
    for s in fotg.graft_scenarios(tables):
        if s.raw:
            rec = traceio.from_raw_steps(s.raw, tables.model, str(s.verdict), s.name)
            again = traceio.loads(traceio.dumps([rec], tables.model), tables.model)[0]
            assert str(traceio.replay_record(tables.engine, again)) == str(s.verdict)


def test_settle_step(tables):
    out = fotg.backward_imply(tables, ("NF", "NH", "NC"))
    imp = [i for i in fotg.forward_imply(tables.engine, G("NF", "NH", "NC"), "Join", FaultSpec.loss("Join"))
           if i.faulted][0]
    actor = fotg.originator(tables.engine, G("NF", "NH", "NC"), "Join")
    rec = traceio.implication_record(out.raw, ("NF", "NH", "NC"), "Join", actor, imp.stable,
                                     FaultSpec.loss("Join"), tables.model, str(imp.verdict(2)))
    text = traceio.dumps([rec], tables.model)
    assert "settle" in text.splitlines()[-2]
    assert traceio.replay_record(tables.engine, traceio.loads(text, tables.model)[0]).error_class == "black-hole"


def test_tampered_trace_fails(engine):
    res = fitg.expand_space(engine, fitg.SearchConfig(2))
    text = traceio.dumps([traceio.from_search_trace(res.errors[0], engine.model)], engine.model)
    bad = text.replace("-> {F:1,NF:1}", "-> {NF:2}")
    with pytest.raises(AssertionError):
        traceio.replay_record(engine, traceio.loads(bad, engine.model)[0])


def test_wrong_verdict_fails(engine):
    res = fitg.expand_space(engine, fitg.SearchConfig(2))
    text = traceio.dumps([traceio.from_search_trace(res.errors[0], engine.model)], engine.model)
    with pytest.raises(AssertionError, match="verdict"):
        traceio.replay_record(engine, traceio.loads(text.replace("wasted-bandwidth", "duplication"), engine.model)[0])


@pytest.mark.parametrize("text", [
    "STATE {F:1}\n",
    "# mcast-testgen trace v1\nSTEP SPkt@r0 -> {F:1}\n",
    "# mcast-testgen trace v1\nTRACE 1\nSTATE {EU:1}\n",
    "# mcast-testgen trace v1\nTRACE 1\nSTATE {EU:1}\nSTEP ?? -> {F:1}\nEND\n",
])
def test_malformed_files(model, text):
    with pytest.raises(traceio.TraceFormatError):
        traceio.loads(text, model)


def test_csv_is_lf_terminated():
    text = traceio.write_csv([{"a": 1, "b": "x,y"}], ["a", "b"])
    assert text == 'a,b\n1,"x,y"\n'

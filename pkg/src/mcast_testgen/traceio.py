"""Text trace files and CSV tables.

A trace file holds one or more traces::

    # mcast-testgen trace v1
    # model: pim-dm
    TRACE 1 semantics=complete verdict=Error(wasted-bandwidth)
    STATE {EU:2}
    STEP SPkt@r0 -> {F:1,EU:1}
    END

States are written as symbol counts in model order; ``@rK`` indexes the
expansion of the preceding state in that same order.  ``complete`` steps
are external stimuli run to a stable state; ``delivery`` steps are single
message deliveries as produced by backward search; a ``settle`` step
delivers one message and then runs the LAN to a stable state.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field

from .gfsm import ERROR, FALSE_ERROR, Checker, Engine, FaultSpec, GlobalState, Message, NotEnabled, Verdict
from .model import ModelError, ProtocolModel

MAGIC = "# mcast-testgen trace v1"
COMPLETE = "complete"
DELIVERY = "delivery"

_STEP = re.compile(
    r"^STEP (?P<stim>[A-Za-z_][A-Za-z0-9_]*)@r(?P<actor>\d+)"
    r"(?: fault=(?P<fault>\S+))?(?P<delayed> delayed)?(?P<settle> settle)? -> (?P<state>\{.*\})$"
)


class TraceFormatError(ValueError):
    pass


def ordered(g, model: ProtocolModel) -> GlobalState:
    order = model.symbol_order()
    routers = g.routers if isinstance(g, GlobalState) else tuple(g)
    return GlobalState(tuple(sorted(routers, key=order.__getitem__)))


def format_state(g, model: ProtocolModel) -> str:
    routers = g.routers if isinstance(g, GlobalState) else tuple(g)
    counts = {}
    for s in routers:
        counts[s] = counts.get(s, 0) + 1
    return "{" + ",".join(f"{s}:{counts[s]}" for s in model.alphabet if s in counts) + "}"


def parse_state(text: str, model: ProtocolModel) -> GlobalState:
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise TraceFormatError(f"bad state {text!r}")
    routers = []
    body = text[1:-1].strip()
    for part in filter(None, (p.strip() for p in body.split(","))):
        sym, _, count = part.partition(":")
        if sym not in model.alphabet:
            raise TraceFormatError(f"unknown state {sym!r} in {text!r}")
        if not count.isdigit():
            raise TraceFormatError(f"bad count in {part!r}")
        routers.extend([sym] * int(count))
    return ordered(routers, model)


@dataclass
class TraceStep:
    stimulus: str
    actor: int  # index into the model-ordered expansion of the previous state
    after: GlobalState
    fault: str | None = None  # "loss:STIM" or "crash:STATE"
    delayed: bool = False
    settle: bool = False


@dataclass
class TraceRecord:
    semantics: str
    initial: GlobalState
    steps: list = field(default_factory=list)
    verdict: str = ""
    label: str = ""

    @property
    def final(self) -> GlobalState:
        return self.steps[-1].after if self.steps else self.initial


# --- building records --------------------------------------------------------


def from_search_trace(trace, model: ProtocolModel, label: str = "") -> TraceRecord:
    """Convert a gfsm.Trace of complete transitions."""
    rec = TraceRecord(COMPLETE, ordered(trace.states[0], model), [], str(trace.verdict or ""), label)
    for before, step, after in zip(trace.states, trace.steps, trace.states[1:]):
        ob = ordered(before, model)
        actor = ob.routers.index(before.routers[step.actor])
        fault = None
        if step.fault is not None:
            fault = f"loss:{step.fault.stimulus}" if step.fault.kind != "Crash" else "crash:" + _crashed(before, step)
        rec.steps.append(TraceStep(step.stimulus, actor, ordered(after, model), fault))
    return rec


def _crashed(before, step) -> str:
    ev = step.fault
    prior = step.transients[ev.step - 1] if ev.step > 0 else before
    return prior.routers[ev.orig]


def from_raw_steps(raw, model: ProtocolModel, verdict: str = "", label: str = "") -> TraceRecord:
    """Convert single-delivery steps (fotg.RawStep)."""
    rec = TraceRecord(DELIVERY, ordered(raw[0].before, model), [], verdict, label)
    for st in raw:
        ob = ordered(st.before, model)
        actor = ob.routers.index(st.before[st.actor])
        fault = f"loss:{st.fault.target}" if st.fault is not None else None
        rec.steps.append(TraceStep(st.stimulus, actor, ordered(st.after, model), fault, st.delayed))
    return rec


# --- text --------------------------------------------------------------------


def dumps(records, model: ProtocolModel, header: dict | None = None) -> str:
    lines = [MAGIC, f"# model: {model.name}"]
    for k, v in (header or {}).items():
        lines.append(f"# {k}: {v}")
    for i, rec in enumerate(records, 1):
        head = f"TRACE {i} semantics={rec.semantics}"
        if rec.verdict:
            head += f" verdict={rec.verdict}"
        if rec.label:
            head += f" label={rec.label}"
        lines.append(head)
        lines.append(f"STATE {format_state(rec.initial, model)}")
        for st in rec.steps:
            extra = f" fault={st.fault}" if st.fault else ""
            extra += " delayed" if st.delayed else ""
            extra += " settle" if st.settle else ""
            lines.append(f"STEP {st.stimulus}@r{st.actor}{extra} -> {format_state(st.after, model)}")
        lines.append("END")
    return "\n".join(lines) + "\n"


def loads(text: str, model: ProtocolModel) -> list[TraceRecord]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise TraceFormatError("missing trace header line")
    out, cur = [], None
    for no, line in enumerate(lines[1:], 2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("TRACE "):
            if cur is not None:
                raise TraceFormatError(f"line {no}: TRACE before END")
            fields = dict(f.split("=", 1) for f in line.split()[2:] if "=" in f)
            cur = {"semantics": fields.get("semantics", COMPLETE), "verdict": fields.get("verdict", ""),
                   "label": fields.get("label", ""), "initial": None, "steps": []}
        elif line.startswith("STATE "):
            if cur is None or cur["initial"] is not None:
                raise TraceFormatError(f"line {no}: unexpected STATE")
            cur["initial"] = parse_state(line[6:], model)
        elif line.startswith("STEP "):
            m = _STEP.match(line)
            if cur is None or cur["initial"] is None or not m:
                raise TraceFormatError(f"line {no}: malformed STEP")
            cur["steps"].append(TraceStep(m["stim"], int(m["actor"]), parse_state(m["state"], model),
                                          m["fault"], bool(m["delayed"]), bool(m["settle"])))
        elif line == "END":
            if cur is None or cur["initial"] is None:
                raise TraceFormatError(f"line {no}: END without trace")
            out.append(TraceRecord(cur["semantics"], cur["initial"], cur["steps"], cur["verdict"], cur["label"]))
            cur = None
        else:
            raise TraceFormatError(f"line {no}: unrecognized {line!r}")
    if cur is not None:
        raise TraceFormatError("trace not terminated by END")
    return out


# --- replay ------------------------------------------------------------------


def _fault(text: str | None) -> FaultSpec | None:
    if not text:
        return None
    kind, _, arg = text.partition(":")
    if kind == "loss":
        return FaultSpec.loss(arg)
    if kind == "crash":
        return FaultSpec.crash(arg or None)
    raise TraceFormatError(f"unknown fault {text!r}")


def replay_record(engine: Engine, rec: TraceRecord, definition: int = 2) -> Verdict:
    """Re-execute every step; raises AssertionError on the first divergence."""
    model = engine.model
    g = rec.initial
    for k, st in enumerate(rec.steps):
        fault = _fault(st.fault)
        try:
            if rec.semantics == COMPLETE:
                outs = [c.stable for c in engine.complete_transition(g, st.stimulus, st.actor, fault)
                        if (c.fault is not None) == (fault is not None)]
            elif st.settle:
                msg = Message(st.stimulus, st.actor, g.routers[st.actor])
                outs = [c.stable for c in engine.cascade(g, (msg,), fault)
                        if (c.fault is not None) == (fault is not None)]
            elif st.delayed:
                outs = [engine.deliver(g, Message(st.stimulus, st.actor)).after]
            else:
                outs = engine.apply_stimulus(g, st.stimulus, st.actor, fault)
        except (NotEnabled, ModelError) as exc:
            raise AssertionError(f"step {k + 1}: {exc}") from None
        if st.after.key not in {o.key for o in outs}:
            got = ", ".join(sorted({format_state(o, model) for o in outs}))
            raise AssertionError(f"step {k + 1}: {st.stimulus}@r{st.actor} gives {got}, "
                                 f"trace says {format_state(st.after, model)}")
        g = st.after
    verdict = Checker(model, definition).check(g)
    recorded = rec.verdict.replace(FALSE_ERROR, ERROR, 1) if rec.verdict.startswith(FALSE_ERROR) else rec.verdict
    if recorded and recorded != str(verdict):
        raise AssertionError(f"verdict {verdict} differs from recorded {rec.verdict}")
    return verdict


# --- CSV ---------------------------------------------------------------------


def write_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def implication_record(raw, g_i, stimulus: str, actor: int, stable, fault: FaultSpec | None,
                       model: ProtocolModel, verdict: str = "", label: str = "") -> TraceRecord:
    """Backward chain up to G_I, then ``stimulus`` delivered and settled."""
    g_i = tuple(g_i.routers if isinstance(g_i, GlobalState) else g_i)
    if raw:
        rec = from_raw_steps(raw, model, verdict, label)
    else:
        rec = TraceRecord(DELIVERY, ordered(g_i, model), [], verdict, label)
    ob = ordered(g_i, model)
    step = TraceStep(stimulus, ob.routers.index(g_i[actor]), ordered(stable, model),
                     str(fault) if fault is not None else None, settle=True)
    rec.steps.append(step)
    return rec

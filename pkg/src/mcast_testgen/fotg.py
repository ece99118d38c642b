"""Fault-oriented test generation.

Tables derived from the post-conditions drive three phases: synthesis of a
global state that triggers a target stimulus, forward implication of the
fault from there, and a backward search from that state to an initial
state.  Backward states are multisets (sorted tuples).
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

from .gfsm import (
    Checker,
    Completion,
    Engine,
    FaultSpec,
    GlobalState,
    Message,
    NotEnabled,
    StepLabel,
    Trace,
    Verdict,
)
from .model import EXT, Condition, ModelError, ProtocolModel

IS_MARKER = "I.S."
BROADCAST_SELECTORS = ("other", "otherUpstream", "otherDownstream", "any")


class InapplicableFault(ModelError):
    """The target stimulus cannot fire from the given global state."""


class SynthesisFailure(ModelError):
    """A pre-condition chain never reaches an external or timer root."""


# --- derived tables ----------------------------------------------------------


def derive_preconditions(model: ProtocolModel) -> dict[str, list[Condition]]:
    """Pre-conditions of every stimulus, read off the post-conditions.

    A post that triggers ``s`` inside rule ``sigma`` yields ``sigma.t`` for
    ``s``, where ``t`` is the post's transition (or its state, as a self
    transition).  Root markers (Ext/Exp) are carried over from the rules.
    """
    pre: dict[str, list[Condition]] = {s.name: [] for s in model.stimuli}
    for rule in model.rules:
        for c in rule.pre:
            if c.is_root and c not in pre[rule.stimulus.name]:
                pre[rule.stimulus.name].append(c)
    for rule in model.rules:
        sigma = rule.stimulus.name
        for p in rule.post:
            if p.trigger is None:
                continue
            if p.has_transition:
                cond = Condition(sigma, p.start, p.end)
            else:
                cond = Condition(sigma, p.guard, p.guard)
            target = model.stimulus(p.trigger).name
            if cond not in pre[target]:
                pre[target].append(cond)
    return pre


def collapse(conds) -> list[tuple]:
    """(stimulus, end state) view of a pre-condition list, order kept."""
    out = []
    for c in conds:
        k = (c.stimulus, None) if c.is_root else (c.stimulus, c.end)
        if k not in out:
            out.append(k)
    return out


@dataclass(frozen=True)
class DepEntry:
    start: str | None  # None for the initial-state marker
    stimulus: str | None

    @property
    def is_marker(self) -> bool:
        return self.start is None

    def __str__(self) -> str:
        return IS_MARKER if self.is_marker else f"{self.start} --{self.stimulus}-->"


def build_dependency_table(model: ProtocolModel) -> dict[str, list[DepEntry]]:
    """For each state, the (preceding state, stimulus) pairs that create it.

    Initial states carry the marker; so does any state nothing creates,
    since it can only exist from the start.
    """
    table: dict[str, list[DepEntry]] = {s: [] for s in model.alphabet}
    for rule in model.rules:
        for p in rule.post:
            if not p.has_transition or p.start == p.end:
                continue
            e = DepEntry(p.start, rule.stimulus.name)
            if e not in table[p.end]:
                table[p.end].append(e)
    for s in model.alphabet:
        if s in model.initial_states or not table[s]:
            table[s].append(DepEntry(None, None))
    return table


def ancestors(table: dict[str, list[DepEntry]], state: str) -> set[str]:
    """States from which ``state`` can be produced by some transition chain."""
    seen, todo = set(), [state]
    while todo:
        for e in table[todo.pop()]:
            if not e.is_marker and e.start not in seen:
                seen.add(e.start)
                todo.append(e.start)
    return seen


class Tables:
    """Everything FOTG derives from one model, computed once."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.model = engine.model
        self.pre = derive_preconditions(self.model)
        self.deps = build_dependency_table(self.model)
        self._anc = {s: ancestors(self.deps, s) for s in self.model.alphabet}
        self.order = self.model.symbol_order()
        self.min_topos: dict[str, list[Counter]] = {}
        for s in self.model.stimuli:
            self.build_min_topos(s.name)

    def kind(self, stim: str) -> str:
        return self.engine.kind(stim)

    def is_leaf(self, stim: str) -> bool:
        return self.kind(stim) in ("orig", EXT)

    def infers(self, present: str, required: str) -> bool:
        """``required`` is implied by a router now in ``present``."""
        return present == required or required in self._anc[present]

    def sort(self, symbols) -> tuple:
        return tuple(sorted(symbols, key=self.order.__getitem__))

    # -- minimum topologies
    def build_min_topos(self, stim: str, _active: frozenset = frozenset()) -> list[Counter]:
        stim = self.model.stimulus(stim).name
        if stim in self.min_topos:
            return self.min_topos[stim]
        if stim in _active:
            raise SynthesisFailure(f"pre-condition cycle through {stim} has no Ext root")
        frags: list[Counter] = []
        roots = [c for c in self.pre[stim] if c.is_root]
        if roots:
            for p in self.engine.posts(stim):
                if p.selector in ("orig", "any"):
                    frags.append(Counter({p.source_state: 1}))
        for c in self.pre[stim]:
            if c.is_root:
                continue
            if self.is_leaf(c.stimulus):
                frags.append(Counter({c.end: 1}))
                continue
            for topo in self.build_min_topos(c.stimulus, _active | {stim}):
                t = Counter(topo)
                if c.start != c.end and t[c.start] > 0:
                    t[c.start] -= 1  # the same router moved on
                t[c.end] += 1
                frags.append(+t)
        if self.kind(stim) == "dst":
            starts = [p.source_state for p in self.engine.posts(stim) if p.selector == "dst"]
            grown = []
            for t in frags:
                for s in dict.fromkeys(starts):
                    g = Counter(t)
                    if g[s] == 0:  # the destination may already be part of the chain
                        g[s] += 1
                    grown.append(g)
            frags = grown
        self.min_topos[stim] = _minimal(frags)
        return self.min_topos[stim]

    def min_topo_sets(self, stim: str) -> list[tuple]:
        return [self.sort(t.elements()) for t in self.min_topos[self.model.stimulus(stim).name]]


def _minimal(frags: list[Counter]) -> list[Counter]:
    uniq = []
    for t in frags:
        if t and t not in uniq:
            uniq.append(t)
    return [t for t in uniq if not any(o != t and all(t[k] >= v for k, v in o.items()) for o in uniq)]


def check_min_topo(tables: Tables, g, stim: str) -> bool:
    have = Counter(g)
    return any(all(have[k] >= v for k, v in t.items())
               for t in tables.min_topos[tables.model.stimulus(stim).name])


def check_consistency(engine: Engine, stim: str, g) -> bool:
    """False when a broadcast transition of ``stim`` would still apply to ``g``.

    Only posts that hit every matching receiver count: a router left in
    such a start state would have moved on in the forward direction.
    """
    present = set(g)
    for p in engine.posts(engine.model.stimulus(stim).name):
        if p.has_transition and p.start != p.end and p.selector in BROADCAST_SELECTORS:
            if p.start in present:
                return False
    return True


# --- synthesis ---------------------------------------------------------------


@dataclass(frozen=True)
class SynthStep:
    stimulus: str
    note: str


@dataclass
class Candidate:
    target: str
    state: tuple  # sorted by model symbol order
    steps: tuple = ()

    @property
    def global_state(self) -> GlobalState:
        return GlobalState(self.state)


def _match(tables: Tables, members: list, required: str, exclude: set):
    for i, m in enumerate(members):
        if i not in exclude and tables.infers(m, required):
            return i
    return None


def synthesize_global_state(tables: Tables, target: str) -> list[Candidate]:
    """Minimal global states that trigger ``target``, one per branch.

    Walks the pre-condition chain from the target back to an external or
    timer root.  Each stimulus contributes the start states of its posts
    (receivers) and the end state of its pre-condition (originator); a
    state already present, or implied by a present router, is not added.
    Alternatives among posts on one router and among pre-conditions branch.
    """
    target = tables.model.stimulus(target).name
    out: list[Candidate] = []
    seen: set = set()

    def walk(stim, members, link, via, steps, depth):
        if depth > len(tables.model.stimuli) + 1:
            raise SynthesisFailure(f"pre-condition chain from {target} does not terminate")
        kind = tables.kind(stim)
        has_chain = any(not c.is_root for c in tables.pre[stim])
        groups: dict[str, list] = {}
        for p in tables.engine.posts(stim):
            groups.setdefault(p.selector, []).append(p)
        per_group = []
        for sel, posts in groups.items():
            if via is not None and any(_post_is(p, via) for p in posts):
                continue  # the linked router is this group's receiver
            if sel == "orig" and (link is not None or has_chain):
                continue  # the originator comes from the pre-condition
            opts = list({p.source_state: (sel, p) for p in posts}.values())
            per_group.append(opts)
        for options in itertools.product(*per_group):
            mem, notes = list(members), list(steps)
            used = set() if link is None else {link}
            for sel, p in options:
                i = _match(tables, mem, p.source_state, used)
                if i is None:
                    mem.append(p.source_state)
                    i = len(mem) - 1
                    notes.append(SynthStep(stim, f"post start {p.source_state} added"))
                else:
                    notes.append(SynthStep(stim, f"post start {p.source_state} implied by {mem[i]}"))
                used.add(i)
            for cond in tables.pre[stim]:
                if cond.is_root:
                    _emit(tables, target, mem, notes + [SynthStep(stim, cond.stimulus)], out, seen)
                    continue
                m2, n2 = list(mem), list(notes)
                if kind in ("orig", EXT) and link is not None:
                    orig = link
                    if not tables.infers(m2[orig], cond.end):
                        continue
                else:
                    orig = _match(tables, m2, cond.end, used)
                    if orig is None:
                        m2.append(cond.end)
                        orig = len(m2) - 1
                        n2.append(SynthStep(stim, f"pre state {cond.end} added"))
                        walk(cond.stimulus, m2, orig, cond, n2, depth + 1)
                        continue
                n2.append(SynthStep(stim, f"pre state {cond.end} implied by {m2[orig]}"))
                walk(cond.stimulus, m2, orig, cond, n2, depth + 1)

    walk(target, [], None, None, [], 0)
    return out


def _post_is(p, cond: Condition) -> bool:
    if p.has_transition:
        return (p.start, p.end) == (cond.start, cond.end)
    return cond.start == cond.end == p.guard


def _emit(tables, target, members, steps, out, seen):
    state = tables.sort(members)
    if state not in seen:
        seen.add(state)
        out.append(Candidate(target, state, tuple(steps)))


# --- forward implication -----------------------------------------------------


@dataclass
class Implication:
    stable: GlobalState
    verdicts: dict  # definition -> Verdict
    completion: Completion

    @property
    def faulted(self) -> bool:
        return self.completion.fault is not None

    def verdict(self, definition: int = 2) -> Verdict:
        return self.verdicts[definition]


def originator(engine: Engine, g: GlobalState, stim: str) -> int:
    for r, sym in enumerate(g.routers):
        if engine.applicable(sym, stim):
            return r
    raise InapplicableFault(f"no router in {g} can originate {stim}")


def forward_imply(engine: Engine, g_i, target: str, fault: FaultSpec | None = None,
                  definitions=(1, 2)) -> list[Implication]:
    """Deliver ``target`` from G_I, inject ``fault``, run to a stable state.

    G_I is taken as the transient state in which the target is in flight;
    whatever it triggers, and any timers afterwards, complete the transition.
    """
    g = g_i if isinstance(g_i, GlobalState) else GlobalState(tuple(g_i))
    target = engine.model.stimulus(target).name
    r = originator(engine, g, target)
    checkers = {d: Checker(engine.model, d) for d in definitions}
    out = []
    for c in engine.cascade(g, (Message(target, r, g.routers[r]),), fault):
        out.append(Implication(c.stable, {d: ch.check(c.stable) for d, ch in checkers.items()}, c))
    return out


# --- backward implication ----------------------------------------------------

REACHED = "Reached"
UNREACHABLE = "Unreachable"
BUDGET_EXCEEDED = "BudgetExceeded"


class BudgetExhausted(Exception):
    pass


@dataclass
class BackwardStats:
    backward_calls: int = 0
    rewind_calls: int = 0
    backtracks: int = 0


@dataclass(frozen=True)
class RawStep:
    """One forward delivery: ``stimulus`` from router ``actor`` of ``before``."""

    before: tuple
    stimulus: str
    actor: int
    after: tuple
    fault: FaultSpec | None = None
    delayed: bool = False


@dataclass
class BackwardOutcome:
    status: str
    trace: Trace | None = None
    raw: list = field(default_factory=list)
    stats: BackwardStats = field(default_factory=BackwardStats)

    @property
    def reached(self) -> bool:
        return self.status == REACHED

    def chain(self) -> list[tuple]:
        """Collapsed (state, stimulus) pairs from G_I back to the initial state."""
        if self.trace is None:
            return []
        out = [(self.trace.states[-1], None)]
        for st, step in zip(reversed(self.trace.states[:-1]), reversed(self.trace.steps)):
            out.append((st, step.stimulus))
        return out


class Backward:
    """Depth-first backward search, iteratively deepened.

    Each pass is a depth-limited DFS from G_I over predecessor states; a
    per-pass table of the best remaining depth seen at each state is the
    visited set.  The first pass that reaches an all-initial state yields
    a shortest chain; a pass never cut by its limit proves unreachability.
    """

    def __init__(self, tables: Tables, budget: int = 1_000_000, goal=None, first_stimulus=None):
        self.t = tables
        self.engine = tables.engine
        self.model = tables.model
        self.budget = budget
        self.stats = BackwardStats()
        self.initial = frozenset(self.model.initial_states)
        self.goal = goal or (lambda st: all(s in self.initial for s in st))
        self.first_stimulus = first_stimulus
        self.src_states = {
            s.name: {c.end for c in tables.pre[s.name] if not c.is_root} for s in self.model.stimuli
        }
        self._pre_cache: dict = {}

    # -- single backward step
    def preimages(self, stim: str, sym: str) -> list[str]:
        """States a broadcast receiver may have been in to end up in ``sym``."""
        out = []
        for x in self.model.alphabet:
            y = x
            for p in self.engine.posts(stim):
                if p.selector not in BROADCAST_SELECTORS or p.source_state != x:
                    continue
                if p.selector == "otherUpstream" and self.engine.role(x) != "upstream":
                    continue
                if p.selector == "otherDownstream" and self.engine.role(x) != "downstream":
                    continue
                y = p.end if p.has_transition else x
                break
            if y == sym and x != sym:
                out.append(x)
        if sym not in [p.source_state for p in self.engine.posts(stim)
                       if p.selector in BROADCAST_SELECTORS and p.has_transition and p.start != p.end]:
            out.append(sym)  # unchanged receivers come last
        return out

    def rewind(self, state: tuple, i: int, entry: DepEntry) -> list[tuple[tuple, int]]:
        """Predecessors of ``state`` where router ``i`` came from ``entry``.

        Returns (predecessor, actor) pairs that forward-replay to ``state``.
        """
        self.stats.rewind_calls += 1
        if self.stats.rewind_calls > self.budget:
            raise BudgetExhausted
        stim, p = entry.stimulus, entry.start
        kind = self.t.kind(stim)
        base = list(state)
        base[i] = p
        if kind in ("orig", EXT):
            options = [(tuple(base), i)]
        else:
            srcs = [j for j, s in enumerate(state) if j != i and s in self.src_states[stim]]
            if not srcs:
                return []  # Src not found
            srcs = list({state[j]: j for j in srcs}.values())
            options = []
            if kind == "dst":
                if not check_min_topo(self.t, base, stim):
                    return []
                options = [(tuple(base), j) for j in srcs]
            else:
                for j in srcs:
                    # the originator is not a receiver of its own broadcast
                    if not check_consistency(self.engine, stim, state[:j] + state[j + 1:]):
                        continue
                    for new in self._broadcast_rollbacks(state, i, p, j, stim, kind):
                        if check_min_topo(self.t, new, stim):
                            options.append((new, j))
        out, seen = [], set()
        want = GlobalState(state).key
        for new, actor in options:
            key = GlobalState(new).key
            if key in seen:
                continue
            if self._replays(new, stim, actor, want):
                seen.add(key)
                out.append((new, actor))
        return out

    def _broadcast_rollbacks(self, state, i, p, j, stim, kind):
        alts = []
        upstream_done = kind == "mcastDownstream" and self.engine.role(state[i]) == "upstream"
        for k, sym in enumerate(state):
            if k == i:
                alts.append([p])
            elif k == j:
                alts.append([sym])
            elif kind == "mcast" or self.engine.role(sym) == "downstream":
                alts.append(self.preimages(stim, sym))
            elif not upstream_done and self._dst_preimages(stim, sym):
                upstream_done = True  # lowest-index upstream router is the destination
                alts.append(self._dst_preimages(stim, sym) + [sym])
            else:
                alts.append([sym])
        for combo in itertools.product(*alts):
            yield tuple(combo)

    def _dst_preimages(self, stim, sym):
        return [p.start for p in self.engine.posts(stim)
                if p.selector == "dst" and p.has_transition and p.end == sym and p.start != sym]

    def _replays(self, new: tuple, stim: str, actor: int, want: tuple) -> bool:
        k = (new, stim, actor)
        if k not in self._pre_cache:
            try:
                outs = self.engine.apply_stimulus(GlobalState(new), stim, actor)
            except (NotEnabled, ModelError):
                outs = []
            self._pre_cache[k] = {o.key for o in outs}
        return want in self._pre_cache[k]

    def steps_from(self, state: tuple, first: bool):
        """Valid backward steps, in canonical symbol order then table order."""
        done = set()
        for i in sorted(range(len(state)), key=lambda k: self.t.order[state[k]]):
            if state[i] in done:
                continue
            done.add(state[i])
            for entry in self.t.deps[state[i]]:
                if entry.is_marker:
                    continue
                if first and self.first_stimulus and entry.stimulus != self.first_stimulus:
                    continue
                preds = self.rewind(state, i, entry)
                if not preds:
                    self.stats.backtracks += 1
                for new, actor in preds:
                    yield RawStep(self.t.sort(new), entry.stimulus, actor, state), new

    # -- search
    def run(self, g_i) -> BackwardOutcome:
        start = self.t.sort(g_i.routers if isinstance(g_i, GlobalState) else g_i)
        try:
            limit = 0
            while True:
                self.best: dict = {}
                self.cut = False
                path = self._dfs(start, limit, True)
                if path is not None:
                    return self._outcome(start, path)
                if not self.cut:
                    return BackwardOutcome(UNREACHABLE, stats=self.stats)
                limit += 1
        except BudgetExhausted:
            return BackwardOutcome(BUDGET_EXCEEDED, stats=self.stats)

    def _dfs(self, state: tuple, remaining: int, first: bool = False):
        self.stats.backward_calls += 1
        if self.goal(state) and not first:
            return []
        if self.goal(state) and first and not self.first_stimulus:
            return []
        if self.best.get(state, -1) >= remaining:
            return None
        self.best[state] = remaining
        if remaining == 0:
            self.cut = True
            return None
        for step, new in self.steps_from(state, first):
            sub = self._dfs(self.t.sort(new), remaining - 1)
            if sub is not None:
                actor_sym = new[step.actor]
                before = self.t.sort(new)
                actor = before.index(actor_sym)
                return sub + [RawStep(before, step.stimulus, actor, state)]
        return None

    def _outcome(self, start: tuple, raw: list[RawStep]) -> BackwardOutcome:
        return BackwardOutcome(REACHED, collapse_chain(self.engine, raw, start), raw, self.stats)


def collapse_chain(engine: Engine, raw: list[RawStep], final: tuple | None = None) -> Trace:
    """Forward trace over ``raw`` with each timer expiry folded into the step before it."""
    timers = set(engine.model.timer_stimuli())
    if not raw:
        g = GlobalState(final)
        return Trace([g], [], None, fragment=True)
    states = [GlobalState(raw[0].before)]
    steps: list[StepLabel] = []
    for st in raw:
        if st.stimulus in timers and steps:
            last = steps[-1]
            steps[-1] = StepLabel(last.stimulus, last.actor, last.fault,
                                  last.transients + (GlobalState(st.before),))
            states[-1] = GlobalState(st.after)
            continue
        steps.append(StepLabel(st.stimulus, st.actor, st.fault, ()))
        states.append(GlobalState(st.after))
    return Trace(states, steps, None, fragment=True)


def backward_imply(tables: Tables, g_i, budget: int = 1_000_000) -> BackwardOutcome:
    return Backward(tables, budget).run(g_i)


def replay_fragment(engine: Engine, raw: list[RawStep]) -> GlobalState:
    """Re-run raw steps forward one delivery at a time; AssertionError on divergence."""
    g = None
    for k, st in enumerate(raw):
        before = GlobalState(st.before)
        if g is not None and g.key != before.key:
            raise AssertionError(f"step {k}: chain breaks between {g} and {before}")
        if st.delayed:
            outs = [engine.deliver(before, Message(st.stimulus, st.actor)).after]
        else:
            outs = engine.apply_stimulus(before, st.stimulus, st.actor, st.fault)
        after = GlobalState(st.after)
        if after.key not in {o.key for o in outs}:
            raise AssertionError(f"step {k}: {st.stimulus}@r{st.actor} from {before} does not give {after}")
        g = after
    return g


# --- interleaving: clearing a retransmission timer ---------------------------


@dataclass
class Scenario:
    name: str
    trace: Trace
    raw: list
    verdict: Verdict
    note: str = ""


def _protected_send(tables: Tables, target: str):
    """(sender stimulus, pre-send state, protected state) for an acknowledged target."""
    timers = tables.model.timer_stimuli()
    for c in tables.pre[target]:
        if c.is_root or c.start == c.end:
            continue
        if any(tables.engine.applicable(c.end, t) for t in timers):
            return c.stimulus, c.start, c.end
    return None


def _clearing_entries(tables: Tables, protected: str) -> list[tuple[str, DepEntry]]:
    timers = set(tables.model.timer_stimuli())
    out = []
    for end, entries in tables.deps.items():
        for e in entries:
            if e.is_marker or e.start != protected or e.stimulus in timers:
                continue
            if tables.kind(e.stimulus) in ("orig", EXT):
                continue
            out.append((end, e))
    return out


def _trace(engine: Engine, raw: list[RawStep], definition: int) -> tuple[Trace, Verdict]:
    trace = collapse_chain(engine, raw)
    verdict = Checker(engine.model, definition).check(trace.final)
    return Trace(trace.states, trace.steps, verdict, fragment=False), verdict


def graft_scenarios(tables: Tables, target: str = "Graft_Rcv", definition: int = 2,
                    budget: int = 1_000_000) -> list[Scenario]:
    """Loss of an acknowledged message, alone and interleaved with its timer being cleared.

    I:   the loss alone; the retransmission timer recovers.
    II:  the clearing acknowledgement arrives with no adversary event.
    III: an adversary external event runs between the acknowledged send and
         a second, lost send; the late acknowledgement clears the timer.
    """
    engine = tables.engine
    target = tables.model.stimulus(target).name
    spec = _protected_send(tables, target)
    if spec is None:
        return []
    sender, pre_send, protected = spec
    cands = [c for c in synthesize_global_state(tables, target) if protected in c.state]
    if not cands:
        return []
    loss = FaultSpec.loss(target)
    out: list[Scenario] = []
    g_t = cands[0].state

    # I: non-interleaved loss
    for imp in forward_imply(engine, g_t, target, loss, (definition,)):
        if imp.faulted:
            t = Trace([GlobalState(g_t), imp.stable],
                      [StepLabel(target, originator(engine, GlobalState(g_t), target), imp.completion.fault,
                                 tuple(imp.completion.transients))],
                      imp.verdict(definition))
            out.append(Scenario("I", t, [], imp.verdict(definition), "retransmission timer recovers"))
            break

    for end, entry in _clearing_entries(tables, protected):
        clear = entry.stimulus
        g_i = list(g_t)
        g_i[g_i.index(protected)] = pre_send
        g_i = tables.sort(g_i)
        need = lambda st, c=clear: check_min_topo(tables, st, c)
        # backward from G_I to a state that can send the clearing stimulus
        mid = Backward(tables, budget, goal=need).run(g_i)
        if not mid.reached:
            continue
        s_g = mid.raw[0].before if mid.raw else g_i
        trigger = next(c.stimulus for c in tables.pre[clear] if not c.is_root)
        head = Backward(tables, budget, first_stimulus=trigger).run(s_g)
        if not head.reached:
            continue

        # II: acknowledgement delivered on time, nothing interleaved
        r = originator(engine, GlobalState(s_g), clear)
        ok = engine.apply_stimulus(GlobalState(s_g), clear, r)[0]
        raw2 = head.raw + [RawStep(s_g, clear, r, tables.sort(ok.routers))]
        t2, v2 = _trace(engine, raw2, definition)
        out.append(Scenario("II", t2, raw2, v2, f"{clear} arrives before any adversary event"))

        # III: adversary interleaved, second send lost, late acknowledgement
        s1 = engine.apply_stimulus(GlobalState(g_i), sender, g_i.index(pre_send))[0]
        s1t = tables.sort(s1.routers)
        sent = RawStep(g_i, sender, g_i.index(pre_send), s1t)
        lost = RawStep(s1t, target, s1t.index(protected), s1t, fault=loss)
        late = None
        for a in range(len(s1t)):
            d = engine.deliver(GlobalState(s1t), Message(clear, a))
            if d.after.key != GlobalState(s1t).key and end in d.after.routers:
                late = RawStep(s1t, clear, a, tables.sort(d.after.routers), delayed=True)
                break
        if late is None:
            continue
        stable = engine.cascade(GlobalState(late.after), ())[0].stable
        if stable.key != GlobalState(late.after).key:
            continue  # only quiescent endings are judged
        raw3 = head.raw + mid.raw + [sent, lost, late]
        t3, v3 = _trace(engine, raw3, definition)
        out.append(Scenario("III", t3, raw3, v3,
                            f"{clear} for the first send clears the timer after a lost resend"))
    return out


def interleave_timer_clear(tables: Tables, target: str = "Graft_Rcv", definition: int = 2,
                           budget: int = 1_000_000) -> list[Scenario]:
    """Error scenarios produced by clearing the target's retransmission timer."""
    return [s for s in graft_scenarios(tables, target, definition, budget)
            if s.name == "III" and not s.verdict.ok]


# --- loss of state -----------------------------------------------------------

JOIN_LATENCY = "join-latency"
RECOVERED = "recovered"


@dataclass
class CrashScenario:
    symbol: str
    before: GlobalState  # stable state the crashing transition started from
    trigger: str | None  # external stimulus in flight, None for a crash at rest
    crashed: GlobalState  # stable state right after the crash
    final: GlobalState  # after host probes
    probes: tuple
    verdict: Verdict

    @property
    def label(self) -> str:
        return RECOVERED if self.verdict.ok else self.verdict.error_class

    @property
    def persistent(self) -> bool:
        return not self.verdict.ok


def _probe(engine: Engine, g: GlobalState, crashed: int, member_states, probe_stim="SPkt", join_stim="HJ"):
    """One packet from a sender that kept its state, then a host join at the crashed router."""
    probes = []
    senders = [r for r, s in enumerate(g.routers)
               if r != crashed and engine.applicable(s, probe_stim)]
    senders.sort(key=lambda r: g.routers[r] in engine.model.initial_states)
    if senders:
        r = senders[0]
        g = engine.complete_transition(g, probe_stim, r)[0].stable
        probes.append(f"{probe_stim}@r{r}")
    joined = engine.role(g.routers[crashed]) == "downstream"
    if joined:
        if engine.applicable(g.routers[crashed], join_stim):
            g = engine.complete_transition(g, join_stim, crashed)[0].stable
        probes.append(f"{join_stim}@r{crashed}")
    intent_ok = not joined or g.routers[crashed] in member_states
    return g, tuple(probes), intent_ok


def crash_analysis(engine: Engine, symbol: str | None = None, n_values=(2, 3),
                   definition: int = 2, member_states=None) -> list[CrashScenario]:
    """Crash a router in ``symbol`` (every crashable state when None) and probe.

    States are reached by forward closure; transient-only states such as
    F_Del are crashed in the middle of the complete transition that
    creates them.  After the crash the LAN is probed with host stimuli and
    the stable result judged for correctness and for the joined host.
    """
    from .fitg import reachable_states
    from .pimdm import MEMBER_STATES

    if not engine.model.has_stimulus("Crash"):
        raise ModelError("crash analysis needs the crash extension")
    member_states = MEMBER_STATES if member_states is None else frozenset(member_states)
    checker = Checker(engine.model, definition)
    symbols = [symbol] if symbol else [s for s in engine.model.alphabet if engine.applicable(s, "Crash")]
    out, seen = [], set()

    def judge(g, r):
        final, probes, intent_ok = _probe(engine, g, r, member_states)
        v = checker.check(final)
        if v.ok and not intent_ok:
            v = Verdict("Error", JOIN_LATENCY)
        return final, probes, v

    def record(sym, before, trigger, crashed_g, r, baseline):
        if not judge(baseline, r)[2].ok:
            return  # the same probes fail without the crash
        final, probes, v = judge(crashed_g, r)
        key = (sym, crashed_g.key, v.error_class)
        if key not in seen:
            seen.add(key)
            out.append(CrashScenario(sym, before, trigger, crashed_g, final, probes, v))

    for n in n_values:
        reach = reachable_states(engine, n)
        for g in reach.stable.values():
            roles = {engine.role(x) for x in g.routers}
            if roles != {"upstream", "downstream"}:
                continue  # a LAN needs a source side and a receiver side
            for sym in symbols:
                if sym in g.routers:
                    r = g.routers.index(sym)
                    c = engine.complete_transition(g, "Crash", r)[0]
                    record(sym, g, None, c.stable, r, g)
                done = set()
                for r0, s0 in enumerate(g.routers):
                    if s0 in done:
                        continue
                    done.add(s0)
                    for stim in engine.applicable_externals(s0):
                        if stim == "Crash":
                            continue
                        outs = engine.complete_transition(g, stim, r0, FaultSpec.crash(sym))
                        clean = next(c.stable for c in outs if c.fault is None)
                        for c in outs:
                            if c.fault is None:
                                continue
                            (r,) = tuple(c.fault.routers)
                            record(sym, g, stim, c.stable, r, clean)
    return out


# --- case study --------------------------------------------------------------

LOSS_TARGETS = ("Join", "Prune", "Assert", "Graft_Rcv")


@dataclass
class CaseRow:
    target: str
    candidate: tuple
    outcome: BackwardOutcome
    implications: list

    @property
    def reachable(self) -> bool:
        return self.outcome.reached


def case_study(tables: Tables, targets=None, fault_kind: str = "loss",
               budget: int = 1_000_000) -> list[CaseRow]:
    """Synthesize, forward-imply and backward-imply every candidate for ``targets``.

    With no targets, every stimulus of the model is synthesized.
    """
    engine = tables.engine
    if targets is None:
        targets = [s.name for s in tables.model.stimuli if s.name != "Crash"]
    rows = []
    for target in targets:
        target = tables.model.stimulus(target).name
        lossy = fault_kind == "loss" and tables.kind(target) not in ("orig", EXT)
        fault = FaultSpec.loss(target) if lossy else None
        for cand in synthesize_global_state(tables, target):
            try:
                imps = forward_imply(engine, cand.state, target, fault)
            except InapplicableFault:
                imps = []
            rows.append(CaseRow(target, cand.state, Backward(tables, budget).run(cand.state), imps))
    return rows

"""Fault-independent test generation: forward search over stable states."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

from .gfsm import (
    FALSE_ERROR,
    Checker,
    Engine,
    FaultSpec,
    GlobalState,
    StepLabel,
    Trace,
    Verdict,
)

ALGORITHMS = ("exhaustive", "equiv", "equivPlus", "reduced")
# stimuli that model faults; injected through FaultSpec, never explored as moves
FAULT_STIMULI = frozenset({"Crash"})
ALGORITHM_ALIASES = {"equiv+": "equivPlus", "equivplus": "equivPlus"}


def enum_init_exhaustive(n: int, initial) -> list[GlobalState]:
    """All |IS|^n ordered assignments of initial symbols."""
    if n < 1 or not initial:
        raise ValueError("need n >= 1 and a non-empty initial set")
    return [GlobalState(t) for t in itertools.product(tuple(initial), repeat=n)]


def enum_init_equiv(n: int, initial) -> list[GlobalState]:
    """One representative per counting-equivalence class of initial states."""
    if n < 1 or not initial:
        raise ValueError("need n >= 1 and a non-empty initial set")
    return [GlobalState(t) for t in itertools.combinations_with_replacement(tuple(initial), n)]


@dataclass
class SearchConfig:
    n: int
    algorithm: str = "reduced"
    strategy: str = "breadthFirst"
    fault: FaultSpec | None = None
    definition: int = 2
    probe: bool = True
    max_states: int = 2_000_000

    def __post_init__(self):
        self.algorithm = ALGORITHM_ALIASES.get(self.algorithm, self.algorithm)
        if self.n < 1:
            raise ValueError("router count must be at least 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.strategy not in ("breadthFirst", "depthFirst"):
            raise ValueError("strategy must be breadthFirst or depthFirst")


@dataclass
class SearchStats:
    expanded_states: int = 0
    forwards: int = 0
    transitions: int = 0
    error_states: int = 0


@dataclass
class SearchResult:
    visited: set
    errors: list  # Trace, verdict Error
    false_errors: list  # Trace, verdict FalseErrorCandidate
    stats: SearchStats
    partial: bool = False
    superseded: list = field(default_factory=list)  # Trace; probe led to another error

    def error_classes(self) -> set:
        return {t.final.key for t in self.errors}

    def false_error_classes(self) -> set:
        return {t.final.key for t in self.false_errors}


@dataclass
class _Node:
    state: GlobalState
    used: bool
    parent: "_Node | None" = None
    step: StepLabel | None = None

    def trace(self) -> tuple[list, list]:
        states, steps, node = [], [], self
        while node is not None:
            states.append(node.state)
            if node.step is not None:
                steps.append(node.step)
            node = node.parent
        return states[::-1], steps[::-1]


class Search:
    def __init__(self, engine: Engine, config: SearchConfig):
        self.engine = engine
        self.model = engine.model
        self.config = config
        self.checker = Checker(self.model, config.definition)
        self.stats = SearchStats()
        self.probe_stimulus = "SPkt"

    def _key(self, node_state: GlobalState, used: bool):
        if self.config.algorithm in ("equivPlus", "reduced"):
            return node_state.key, used
        return node_state.routers, used

    def initial_states(self) -> list[GlobalState]:
        if self.config.algorithm == "exhaustive":
            return enum_init_exhaustive(self.config.n, self.model.initial_states)
        return enum_init_equiv(self.config.n, self.model.initial_states)

    def moves(self, g: GlobalState):
        seen = set()
        for r, sym in enumerate(g.routers):
            if self.config.algorithm == "reduced":
                if sym in seen:
                    continue
                seen.add(sym)
            for stim in self.engine.applicable_externals(sym):
                if stim not in FAULT_STIMULI:
                    yield stim, r

    def forward(self, g: GlobalState, stim: str, actor: int, used: bool):
        fault = None if used else self.config.fault
        self.stats.forwards += 1
        outs = self.engine.complete_transition(g, stim, actor, fault)
        for c in outs:
            self.stats.transitions += len(c.transients)
        return outs

    def probe(self, g: GlobalState):
        """One packet from the first forwarding router; None when nobody forwards."""
        for r, sym in enumerate(g.routers):
            if sym not in self.model.initial_states and self.engine.applicable(sym, self.probe_stimulus):
                c = self.engine.complete_transition(g, self.probe_stimulus, r)[0]
                self.stats.forwards += 1
                self.stats.transitions += len(c.transients)
                return r, c
        return None

    def run(self) -> SearchResult:
        cfg = self.config
        work: deque = deque()
        in_work: set = set()
        visited: set = set()
        errors, false_errors, superseded = [], [], []
        error_keys, false_keys = set(), set()
        partial = False

        for g in self.initial_states():
            k = self._key(g, False)
            if k not in in_work:
                in_work.add(k)
                work.append(_Node(g, False))

        while work:
            node = work.popleft() if cfg.strategy == "breadthFirst" else work.pop()
            k = self._key(node.state, node.used)
            visited.add(k)
            self.stats.expanded_states += 1
            if len(visited) > cfg.max_states:
                partial = True
                break
            verdict = self.checker.check(node.state)
            if not verdict.ok:
                self._record(node, verdict, errors, false_errors, superseded, error_keys, false_keys)
                continue
            for stim, r in self.moves(node.state):
                for c in self.forward(node.state, stim, r, node.used):
                    used = node.used or c.fault is not None
                    nk = self._key(c.stable, used)
                    if nk in visited or nk in in_work:
                        continue
                    in_work.add(nk)
                    step = StepLabel(stim, r, c.fault, tuple(c.transients))
                    work.append(_Node(c.stable, used, node, step))

        self.stats.error_states = len(errors)
        return SearchResult(visited, errors, false_errors, self.stats, partial, superseded)

    def _record(self, node, verdict, errors, false_errors, superseded, error_keys, false_keys):
        """File an error state; one probe packet separates real errors from false ones.

        Recovering under the probe makes a false-error candidate.  Moving to
        another error means the state was only on the way there: it is kept
        as superseded and the probed state is filed instead.
        """
        states, steps = node.trace()
        if not self.config.probe:
            if node.state.key not in error_keys:
                error_keys.add(node.state.key)
                errors.append(Trace(states, steps, verdict))
            return
        probed = self.probe(node.state)
        if probed is None or probed[1].stable.key == node.state.key:
            if node.state.key not in error_keys:
                error_keys.add(node.state.key)
                errors.append(Trace(states, steps, verdict))
            return
        r, c = probed
        after = self.checker.check(c.stable)
        if node.state.key not in false_keys:
            false_keys.add(node.state.key)
            if after.ok:
                false_errors.append(Trace(states, steps, Verdict(FALSE_ERROR, verdict.error_class),
                                          note="recovers under one SPkt probe"))
            else:
                superseded.append(Trace(states, steps, verdict, note="changes under one SPkt probe"))
        if not after.ok and c.stable.key not in error_keys:
            error_keys.add(c.stable.key)
            errors.append(Trace(states + [c.stable],
                                steps + [StepLabel("SPkt", r, None, tuple(c.transients))],
                                after, note="after SPkt probe"))


def expand_space(engine: Engine, config: SearchConfig) -> SearchResult:
    return Search(engine, config).run()


def compare_algorithms(engine: Engine, n_values, definition: int = 2, fault=None) -> list[dict]:
    rows = []
    for n in n_values:
        for alg in ALGORITHMS:
            res = expand_space(engine, SearchConfig(n, alg, definition=definition, fault=fault))
            rows.append({
                "n": n,
                "algorithm": alg,
                "expanded": res.stats.expanded_states,
                "forwards": res.stats.forwards,
                "transitions": res.stats.transitions,
                "errors": res.stats.error_states,
            })
    return rows


def replay(engine: Engine, trace: Trace, fault: FaultSpec | None = None) -> GlobalState:
    """Re-execute a trace's steps; raises AssertionError on divergence."""
    g = trace.states[0]
    for i, step in enumerate(trace.steps):
        spec = fault if step.fault is not None else None
        if step.fault is not None and spec is None:
            spec = _fault_from_event(step.fault)
        outs = engine.complete_transition(g, step.stimulus, step.actor, spec)
        want = trace.states[i + 1]
        match = [c for c in outs if c.stable.key == want.key and (c.fault is None) == (step.fault is None)]
        if not match:
            raise AssertionError(f"step {i} ({step.stimulus}@r{step.actor}) does not reach {want}")
        g = want
    return g


def _fault_from_event(ev) -> FaultSpec:
    if ev.kind == "Crash":
        return FaultSpec.crash(None)
    return FaultSpec.loss(ev.stimulus, ev.routers)


@dataclass
class Reachability:
    """Every stable and transient state met from the initial states."""

    stable: dict  # canonical key -> GlobalState (first representative met)
    transient: set
    parent: dict  # key -> (parent key, stimulus, actor, fault event)

    def __contains__(self, g) -> bool:
        key = g.key if isinstance(g, GlobalState) else GlobalState(tuple(g)).key
        return key in self.stable or key in self.transient

    def path(self, key) -> list:
        out = []
        while self.parent.get(key) is not None:
            prev, stim, actor, ev = self.parent[key]
            out.append((prev, stim, actor, ev))
            key = prev
        return out[::-1]


def reachable_states(engine: Engine, n: int, fault: FaultSpec | None = None) -> Reachability:
    """Forward closure without error pruning; the oracle for backward search."""
    initial = enum_init_equiv(n, engine.model.initial_states)
    stable = {g.key: g for g in initial}
    parent = {g.key: None for g in initial}
    transient: set = set()
    work = deque((g, False) for g in initial)
    seen = {(g.key, False) for g in initial}
    while work:
        g, used = work.popleft()
        done = set()
        for r, sym in enumerate(g.routers):
            if sym in done:
                continue
            done.add(sym)
            for stim in engine.applicable_externals(sym):
                if stim in FAULT_STIMULI:
                    continue
                for c in engine.complete_transition(g, stim, r, None if used else fault):
                    transient.update(t.key for t in c.transients)
                    k = c.stable.key
                    if k not in stable:
                        stable[k] = c.stable
                        parent[k] = (g.key, stim, r, c.fault)
                    u = used or c.fault is not None
                    if (k, u) not in seen:
                        seen.add((k, u))
                        work.append((c.stable, u))
    return Reachability(stable, transient, parent)

"""Global FSM engine over a LAN of routers sharing one protocol model.

Router identity is positional: a ``GlobalState`` is a tuple of state
symbols, router ``k`` being ``routers[k]``.  Counting equivalence compares
multisets, so ``canonicalize`` sorts the tuple.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping

from .model import (
    CONDITION_STIMULUS,
    CONDITION_TRANSITION,
    STIMULUS_TRANSITION,
    ModelError,
    ModelMismatch,
    PostCondition,
    ProtocolModel,
)
from .patterns import match_pattern, parse_pattern


class NotEnabled(Exception):
    """The stimulus cannot be applied by the chosen actor in this state."""


class CascadeDivergence(Exception):
    """Internal stimuli did not quiesce within the step bound."""


@dataclass(frozen=True, order=True)
class GlobalState:
    routers: tuple

    def __post_init__(self):
        object.__setattr__(self, "routers", tuple(self.routers))

    @classmethod
    def of(cls, *symbols: str) -> "GlobalState":
        return cls(tuple(symbols))

    @classmethod
    def from_counts(cls, counts: Mapping[str, int]) -> "GlobalState":
        routers = []
        for sym in sorted(counts):
            routers.extend([sym] * counts[sym])
        return cls(tuple(routers))

    @property
    def n(self) -> int:
        return len(self.routers)

    @property
    def counts(self) -> dict[str, int]:
        return dict(sorted(Counter(self.routers).items()))

    @property
    def key(self) -> tuple:
        return tuple(sorted(self.routers))

    def canonical(self) -> "GlobalState":
        return GlobalState(self.key)

    def replace(self, index: int, symbol: str) -> "GlobalState":
        routers = list(self.routers)
        routers[index] = symbol
        return GlobalState(tuple(routers))

    def __len__(self) -> int:
        return len(self.routers)

    def __iter__(self):
        return iter(self.routers)

    def __str__(self) -> str:
        return "{" + ",".join(self.routers) + "}"


def canonicalize(g: GlobalState) -> GlobalState:
    return g.canonical()


def format_counts(g: GlobalState, model: ProtocolModel | None = None) -> str:
    """``{F:1,NH:2,NC:1}`` with symbols in model order (alphabetical without one)."""
    counts = Counter(g.routers)
    if model is not None:
        order = model.symbol_order()
        syms = sorted(counts, key=lambda s: (order.get(s, len(order)), s))
    else:
        syms = sorted(counts)
    return "{" + ",".join(f"{s}:{counts[s]}" for s in syms) + "}"


# --- faults ---------------------------------------------------------------

NO_FAULT = "None"
LOSS = "SelectiveLoss"
CRASH = "Crash"


@dataclass(frozen=True)
class FaultSpec:
    kind: str = NO_FAULT
    target: str | None = None
    loss_set: frozenset | None = None
    budget: int = 1

    @classmethod
    def loss(cls, stimulus: str, loss_set: Iterable[int] | None = None) -> "FaultSpec":
        return cls(LOSS, stimulus, None if loss_set is None else frozenset(loss_set))

    @classmethod
    def crash(cls, state: str | None = None) -> "FaultSpec":
        return cls(CRASH, state)

    def __str__(self) -> str:
        if self.kind == LOSS:
            return f"loss:{self.target}"
        if self.kind == CRASH:
            return f"crash:{self.target or '*'}"
        return "none"


@dataclass(frozen=True)
class FaultEvent:
    """A fault actually applied during one complete transition."""

    kind: str
    stimulus: str | None = None
    orig: int | None = None
    routers: frozenset = frozenset()
    step: int = 0

    def __str__(self) -> str:
        where = ",".join(f"r{r}" for r in sorted(self.routers))
        if self.kind == LOSS:
            return f"loss:{self.stimulus}#{self.step}@{where}"
        return f"crash#{self.step}@{where}"


@dataclass(frozen=True)
class Message:
    stimulus: str
    orig: int
    orig_state: str | None = None
    parent_orig: int | None = None
    parent_dst: int | None = None


@dataclass
class Completion:
    stable: GlobalState
    transients: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    fault: FaultEvent | None = None


@dataclass(frozen=True)
class Delivery:
    before: GlobalState
    after: GlobalState
    dst: int | None
    effects: tuple  # (router, post) pairs that took effect
    triggered: tuple  # Messages


# --- engine ---------------------------------------------------------------


class Engine:
    """Applies model rules to global states; pure apart from caching."""

    def __init__(self, model: ProtocolModel, cascade_factor: int = 4):
        self.model = model
        self.cascade_factor = cascade_factor
        self._kind = {s.name: s.kind for s in model.stimuli}
        self._rules = {r.stimulus.name: r for r in model.rules}
        self._role = {s.name: s.role for s in model.states}
        self._timers = model.timer_stimuli()
        self._deliver = lru_cache(maxsize=200_000)(self._deliver_uncached)

    # -- helpers
    def kind(self, stim: str) -> str:
        return self._kind[self.model.stimulus(stim).name]

    def role(self, symbol: str) -> str:
        try:
            return self._role[symbol]
        except KeyError:
            raise ModelMismatch(f"unknown state {symbol!r}") from None

    def posts(self, stim: str) -> tuple:
        return self._rules[stim].post

    def _selected(self, post: PostCondition, r: int, orig: int, dst, routers) -> bool:
        sel = post.selector
        if sel == "any":
            return True
        if sel == "orig":
            return r == orig
        if sel == "dst":
            return r == dst
        if r == orig:
            return False
        if sel == "other":
            return True
        role = self.role(routers[r])
        if sel == "otherUpstream":
            return role == "upstream"
        return role == "downstream"

    def receivers(self, stim: str, orig: int, dst, routers) -> list[int]:
        kind = self.kind(stim)
        n = len(routers)
        if kind in ("orig", "Ext"):
            return [orig]
        if kind == "dst":
            return [] if dst is None else [dst]
        if kind == "mcast":
            return [r for r in range(n) if r != orig]
        # mcastDownstream: every other downstream router plus one upstream destination
        out = [r for r in range(n) if r != orig and self.role(routers[r]) == "downstream"]
        if dst is not None and dst not in out:
            out.append(dst)
        return sorted(out)

    def post_sources(self, stim: str, selector: str | None = None) -> set:
        return {
            p.source_state
            for p in self.posts(stim)
            if selector is None or p.selector == selector
        }

    def resolve_dst(self, msg: Message, routers: tuple):
        kind = self.kind(msg.stimulus)
        if kind not in ("dst", "mcastDownstream"):
            return None
        others = [r for r in range(len(routers)) if r != msg.orig]
        if kind == "mcastDownstream":
            others = [r for r in others if self.role(routers[r]) == "upstream"]
        if not others:
            return None
        wanted = self.post_sources(msg.stimulus, "dst")
        candidates = [r for r in others if routers[r] in wanted]
        preferred = msg.parent_dst if msg.parent_dst not in (None, msg.orig) else msg.parent_orig
        if preferred == msg.orig:
            preferred = None
        if preferred in candidates:
            return preferred
        if candidates:
            return candidates[0]
        if preferred in others:
            return preferred
        if kind == "dst":
            orig_role = self.role(routers[msg.orig])
            facing = [r for r in others if self.role(routers[r]) != orig_role]
            return (facing or others)[0]
        return others[0]

    def _deliver_uncached(self, routers: tuple, msg: Message, lost: frozenset) -> Delivery:
        dst = self.resolve_dst(msg, routers)
        new = list(routers)
        effects, triggered = [], []
        for r in self.receivers(msg.stimulus, msg.orig, dst, routers):
            if r in lost:
                continue
            for post in self.posts(msg.stimulus):
                if not self._selected(post, r, msg.orig, dst, routers):
                    continue
                if routers[r] != post.source_state:
                    continue
                if post.form == CONDITION_TRANSITION and post.guard not in routers:
                    continue
                # XOR among posts hitting the same router: first enabled wins
                if post.has_transition:
                    new[r] = post.end
                if post.form in (STIMULUS_TRANSITION, CONDITION_STIMULUS):
                    triggered.append(
                        Message(post.trigger, r, new[r], parent_orig=msg.orig, parent_dst=dst)
                    )
                effects.append((r, post))
                break
        return Delivery(GlobalState(routers), GlobalState(tuple(new)), dst, tuple(effects), tuple(triggered))

    def deliver(self, g: GlobalState, msg: Message, lost: Iterable[int] = ()) -> Delivery:
        return self._deliver(g.routers, msg, frozenset(lost))

    def affected(self, g: GlobalState, msg: Message) -> list[int]:
        return sorted({r for r, _ in self.deliver(g, msg).effects})

    # -- enabling
    def applicable(self, symbol: str, stim: str) -> bool:
        """Can a router in ``symbol`` originate ``stim``?"""
        stim = self.model.stimulus(stim).name
        kind = self.kind(stim)
        if kind in ("orig", "Ext"):
            return any(p.selector in ("orig", "any") and p.source_state == symbol for p in self.posts(stim))
        rule = self._rules[stim]
        return any(not c.is_root and c.end == symbol for c in rule.pre)

    def applicable_externals(self, symbol: str) -> list[str]:
        return [s for s in self.model.external_stimuli() if self.applicable(symbol, s)]

    def pending_timers(self, g: GlobalState) -> list[Message]:
        out = []
        for r, sym in enumerate(g.routers):
            for t in self._timers:
                if self.applicable(sym, t):
                    out.append(Message(t, r, sym))
        return out

    # -- single step
    def apply_stimulus(
        self,
        g: GlobalState,
        stim: str,
        actor: int,
        fault: FaultSpec | None = None,
        dst: int | None = None,
    ) -> list[GlobalState]:
        """Transient successors of delivering one stimulus (triggered stimuli not processed)."""
        stim = self.model.stimulus(stim).name
        if not 0 <= actor < g.n:
            raise NotEnabled(f"no router r{actor} in a {g.n}-router state")
        if not self.applicable(g.routers[actor], stim):
            raise NotEnabled(f"{stim} is not enabled at r{actor} in state {g.routers[actor]}")
        kind = self.kind(stim)
        if kind == "dst" and g.n < 2:
            raise ModelError(f"{stim} has no resolvable destination in a 1-router LAN")
        msg = Message(stim, actor, g.routers[actor], parent_dst=dst)
        base = self.deliver(g, msg)
        if fault is None or fault.kind != LOSS or self.model.stimulus(fault.target).name != stim:
            return [base.after]
        out, seen = [], set()
        for lost in self._loss_sets(base, fault):
            after = self.deliver(g, msg, lost).after
            if after.key not in seen:
                seen.add(after.key)
                out.append(after)
        return out

    def _loss_sets(self, delivery: Delivery, fault: FaultSpec) -> list[frozenset]:
        hit = sorted({r for r, _ in delivery.effects})
        if fault.loss_set is not None:
            lost = frozenset(fault.loss_set) & frozenset(hit)
            return [lost] if lost else []
        subsets = []
        for k in range(1, len(hit) + 1):
            subsets.extend(frozenset(c) for c in itertools.combinations(hit, k))
        return subsets

    # -- complete transitions
    def complete_transition(
        self,
        g: GlobalState,
        ext: str,
        actor: int,
        fault: FaultSpec | None = None,
        bound: int | None = None,
        timers: bool = True,
    ) -> list[Completion]:
        """Apply an external stimulus and run everything it triggers to quiescence.

        Pending timers fire once after the cascade quiesces.  With a fault,
        every way of applying it once yields its own completion; completions
        are deduplicated on the canonical stable state, fault-free first.
        """
        ext = self.model.stimulus(ext).name
        if not self.applicable(g.routers[actor], ext):
            raise NotEnabled(f"{ext} is not enabled at r{actor} in state {g.routers[actor]}")
        bound = self.cascade_factor * max(g.n, 1) if bound is None else bound
        start = Message(ext, actor, g.routers[actor])
        return self.cascade(g, (start,), fault, bound, timers)

    def cascade(
        self,
        g: GlobalState,
        queue: tuple,
        fault: FaultSpec | None = None,
        bound: int | None = None,
        timers: bool = True,
    ) -> list[Completion]:
        """Run pending messages from a (possibly transient) state to quiescence."""
        bound = self.cascade_factor * max(g.n, 1) if bound is None else bound
        out = self._run(g, tuple(queue), fault, None, 0, bound, [], [], timers_left=timers)
        seen, uniq = set(), []
        for c in sorted(out, key=lambda c: c.fault is not None):
            k = (c.stable.key, c.fault is not None)
            if k not in seen:
                seen.add(k)
                uniq.append(c)
        return uniq

    def _run(self, g, queue, fault, event, internal, bound, transients, steps, timers_left):
        results = []
        while True:
            if not queue:
                if timers_left:
                    timers_left = False
                    queue = tuple(self.pending_timers(g))
                    internal = 0  # the timer round is a cascade of its own
                    if queue:
                        continue
                results.append(Completion(g, transients, steps, event))
                return results
            msg, queue = queue[0], queue[1:]
            if msg.orig_state is not None and g.routers[msg.orig] != msg.orig_state:
                continue
            if steps:
                internal += 1
                if internal > bound:
                    raise CascadeDivergence(
                        f"more than {bound} internal steps after {steps[0][0]} from {g}"
                    )
            base = self.deliver(g, msg)
            branches = [(frozenset(), None)]
            if (
                fault is not None
                and event is None
                and fault.kind == LOSS
                and self.model.stimulus(fault.target).name == msg.stimulus
            ):
                for lost in self._loss_sets(base, fault):
                    branches.append((lost, FaultEvent(LOSS, msg.stimulus, msg.orig, lost, len(steps))))
            for i, (lost, ev) in enumerate(branches):
                d = base if not lost else self.deliver(g, msg, lost)
                step = (msg.stimulus, msg.orig, d.dst)
                new_t = transients + [d.after]
                new_s = steps + [step]
                new_q = queue + d.triggered
                if i == len(branches) - 1:
                    # continue the last branch iteratively
                    g, queue, transients, steps = d.after, new_q, new_t, new_s
                    event = ev if ev is not None else event
                else:
                    results.extend(
                        self._run(d.after, new_q, fault, ev or event, internal, bound,
                                  new_t, new_s, timers_left)
                    )
            if fault is not None and event is None and fault.kind == CRASH:
                results.extend(self._crash_branches(g, queue, fault, internal, bound,
                                                    transients, steps, timers_left))

    def _crash_branches(self, g, queue, fault, internal, bound, transients, steps, timers_left):
        out = []
        for r, sym in enumerate(g.routers):
            if fault.target is not None and sym != fault.target:
                continue
            if not self.model.has_stimulus("Crash") or not self.applicable(sym, "Crash"):
                continue
            d = self.deliver(g, Message("Crash", r, sym))
            ev = FaultEvent(CRASH, "Crash", r, frozenset([r]), len(steps))
            out.extend(self._run(d.after, queue, fault, ev, internal, bound,
                                 transients + [d.after], steps + [("Crash", r, None)], timers_left))
        return out

    def crash(self, g: GlobalState, router: int) -> GlobalState:
        return self.apply_stimulus(g, "Crash", router)[0]


# --- correctness ------------------------------------------------------------

CORRECT = "Correct"
ERROR = "Error"
FALSE_ERROR = "FalseErrorCandidate"


@dataclass(frozen=True)
class Verdict:
    status: str
    error_class: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == CORRECT

    def __str__(self) -> str:
        if self.error_class:
            return f"{self.status}({self.error_class})"
        return self.status


class Checker:
    """Correctness patterns and error taxonomy for one definition."""

    def __init__(self, model: ProtocolModel, definition: int | str = 1):
        key = str(definition)
        if key not in model.correctness:
            raise ModelError(f"model {model.name} has no correctness definition {definition!r}")
        self.model = model
        self.definition = key
        self.correct = [parse_pattern(t, model.alphabet) for t in model.correctness[key]]
        self.errors = [
            (e["name"], parse_pattern(e["pattern"], model.alphabet))
            for e in model.error_classes.get(key, [])
        ]
        self._cache: dict = {}

    def check(self, g: GlobalState) -> Verdict:
        key = g.key
        v = self._cache.get(key)
        if v is None:
            v = check_correctness(g, self.correct, self.errors)
            self._cache[key] = v
        return v


def check_correctness(g: GlobalState, defs, error_classes=()) -> Verdict:
    if any(match_pattern(g, p) for p in defs):
        return Verdict(CORRECT)
    for name, p in error_classes:
        if match_pattern(g, p):
            return Verdict(ERROR, name)
    return Verdict(ERROR, "unclassified")


# --- traces -----------------------------------------------------------------


@dataclass(frozen=True)
class StepLabel:
    stimulus: str
    actor: int
    fault: FaultEvent | None = None
    transients: tuple = ()


@dataclass
class Trace:
    """Stable states ``states[0..k]`` and the ``k`` steps between them."""

    states: list
    steps: list
    verdict: Verdict = Verdict(CORRECT)
    fragment: bool = False
    note: str = ""

    @property
    def final(self) -> GlobalState:
        return self.states[-1]

    @property
    def initial(self) -> GlobalState:
        return self.states[0]

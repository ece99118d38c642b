"""Protocol model: state alphabet, stimuli, pre/post-condition rules.

Models are loaded from JSON documents of the form::

    {
      "name": "...",
      "states":  [{"name": "F", "role": "upstream", "initial": false}, ...],
      "stimuli": [{"name": "Join", "kind": "dst"}, ...],
      "rules":   [{"stimulus": "Join", "pre": ["Prune.NH"],
                   "post": ["dst: F_Del -> F", "dst: NF -> F"]}, ...],
      "correctness": {"1": [...pattern strings...], "2": [...]},
      "error_classes": {"1": [{"name": "duplication", "pattern": "..."}], ...}
    }

Condition strings are ``STIM.STATE`` or ``STIM.(A->B)``, or one of the
markers ``Ext`` (external host event) and ``Exp`` (timer expiry).

Post-condition strings take an optional ``selector:`` prefix followed by
one of::

    A -> B            transition
    STIM.(A -> B)     stimulus.transition (transition, then trigger STIM)
    A . STIM          condition.stimulus (router in A triggers STIM)
    G ? A -> B        condition.transition (A -> B while some router is in G)
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

ROLES = ("upstream", "downstream")
KINDS = ("Ext", "orig", "dst", "mcast", "mcastDownstream")
SELECTORS = ("orig", "dst", "other", "otherUpstream", "otherDownstream", "any")

EXT = "Ext"
EXP = "Exp"

# post-condition forms
TRANSITION = "Transition"
CONDITION_TRANSITION = "ConditionTransition"
CONDITION_STIMULUS = "ConditionStimulus"
STIMULUS_TRANSITION = "StimulusTransition"


class ModelError(Exception):
    """The model definition (or a request against it) is inconsistent."""


class ModelMismatch(ModelError):
    """A pattern or state refers to a symbol outside the model alphabet."""


@dataclass(frozen=True)
class StateSymbol:
    name: str
    role: str
    initial: bool = False


@dataclass(frozen=True)
class Stimulus:
    name: str
    kind: str


@dataclass(frozen=True)
class Condition:
    """``stimulus.(start -> end)``; a bare state is stored as start == end.

    ``stimulus`` is ``Ext`` or ``Exp`` for external and timer-expiry roots,
    in which case no transition is carried.
    """

    stimulus: str
    start: str | None = None
    end: str | None = None

    @property
    def is_root(self) -> bool:
        return self.stimulus in (EXT, EXP)

    @property
    def is_state(self) -> bool:
        return self.start is not None and self.start == self.end

    def __str__(self) -> str:
        if self.is_root:
            return self.stimulus
        if self.is_state:
            return f"{self.stimulus}.{self.end}"
        return f"{self.stimulus}.({self.start}->{self.end})"


@dataclass(frozen=True)
class PostCondition:
    form: str
    selector: str
    start: str | None = None
    end: str | None = None
    trigger: str | None = None
    guard: str | None = None

    @property
    def has_transition(self) -> bool:
        return self.form in (TRANSITION, STIMULUS_TRANSITION, CONDITION_TRANSITION)

    @property
    def source_state(self) -> str:
        """State the affected router must be in for this post-condition."""
        return self.start if self.has_transition else self.guard

    def __str__(self) -> str:
        if self.form == TRANSITION:
            body = f"{self.start} -> {self.end}"
        elif self.form == STIMULUS_TRANSITION:
            body = f"{self.trigger}.({self.start} -> {self.end})"
        elif self.form == CONDITION_STIMULUS:
            body = f"{self.guard} . {self.trigger}"
        else:
            body = f"{self.guard} ? {self.start} -> {self.end}"
        return f"{self.selector}: {body}"


@dataclass(frozen=True)
class TransitionRule:
    stimulus: Stimulus
    pre: tuple[Condition, ...]
    post: tuple[PostCondition, ...]

    @property
    def is_external(self) -> bool:
        return any(c.stimulus == EXT for c in self.pre)

    @property
    def is_timer(self) -> bool:
        return any(c.stimulus == EXP for c in self.pre)


@dataclass(frozen=True)
class ProtocolModel:
    name: str
    states: tuple[StateSymbol, ...]
    stimuli: tuple[Stimulus, ...]
    rules: tuple[TransitionRule, ...]
    correctness: dict = field(default_factory=dict, compare=False, hash=False)
    error_classes: dict = field(default_factory=dict, compare=False, hash=False)
    aliases: dict = field(default_factory=dict, compare=False, hash=False)

    # lookups -----------------------------------------------------------
    @property
    def alphabet(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.states)

    @property
    def initial_states(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.states if s.initial)

    def state(self, name: str) -> StateSymbol:
        for s in self.states:
            if s.name == name:
                return s
        raise ModelMismatch(f"unknown state {name!r}; valid: {', '.join(self.alphabet)}")

    def role(self, name: str) -> str:
        return self.state(name).role

    def stimulus(self, name: str) -> Stimulus:
        name = self.aliases.get(name, name)
        for s in self.stimuli:
            if s.name == name:
                return s
        valid = ", ".join(s.name for s in self.stimuli)
        raise ModelError(f"unknown stimulus {name!r}; valid: {valid}")

    def rule(self, name: str) -> TransitionRule:
        name = self.stimulus(name).name
        for r in self.rules:
            if r.stimulus.name == name:
                return r
        raise ModelError(f"no rule for stimulus {name!r}")

    def external_stimuli(self) -> list[str]:
        return [r.stimulus.name for r in self.rules if r.is_external]

    def timer_stimuli(self) -> list[str]:
        return [r.stimulus.name for r in self.rules if r.is_timer]

    def symbol_order(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.alphabet)}

    def has_stimulus(self, name: str) -> bool:
        name = self.aliases.get(name, name)
        return any(s.name == name for s in self.stimuli)


# --- parsing --------------------------------------------------------------

_IDENT = r"[A-Za-z][A-Za-z0-9_]*"
_COND_STATE = re.compile(rf"^({_IDENT})\.({_IDENT})$")
_COND_TRANS = re.compile(rf"^({_IDENT})\.\(\s*({_IDENT})\s*->\s*({_IDENT})\s*\)$")
_POST_TRANS = re.compile(rf"^({_IDENT})\s*->\s*({_IDENT})$")
_POST_STIM_TRANS = re.compile(rf"^({_IDENT})\s*\.\s*\(\s*({_IDENT})\s*->\s*({_IDENT})\s*\)$")
_POST_COND_STIM = re.compile(rf"^({_IDENT})\s*\.\s*({_IDENT})$")
_POST_COND_TRANS = re.compile(rf"^({_IDENT})\s*\?\s*({_IDENT})\s*->\s*({_IDENT})$")


def parse_condition(text: str) -> Condition:
    text = text.strip()
    if text in (EXT, EXP):
        return Condition(text)
    m = _COND_TRANS.match(text)
    if m:
        return Condition(m[1], m[2], m[3])
    m = _COND_STATE.match(text)
    if m:
        return Condition(m[1], m[2], m[2])
    raise ModelError(f"malformed condition {text!r}")


def default_selector(kind: str) -> str:
    if kind in ("mcast", "mcastDownstream"):
        return "other"
    if kind == "dst":
        return "dst"
    return "orig"


def parse_postcondition(text: str, kind: str) -> PostCondition:
    body = text.strip()
    selector = default_selector(kind)
    head, sep, rest = body.partition(":")
    if sep and head.strip() in SELECTORS:
        selector, body = head.strip(), rest.strip()
    m = _POST_COND_TRANS.match(body)
    if m:
        return PostCondition(CONDITION_TRANSITION, selector, m[2], m[3], guard=m[1])
    m = _POST_STIM_TRANS.match(body)
    if m:
        return PostCondition(STIMULUS_TRANSITION, selector, m[2], m[3], trigger=m[1])
    m = _POST_TRANS.match(body)
    if m:
        return PostCondition(TRANSITION, selector, m[1], m[2])
    m = _POST_COND_STIM.match(body)
    if m:
        return PostCondition(CONDITION_STIMULUS, selector, guard=m[1], trigger=m[2])
    raise ModelError(f"malformed post-condition {text!r}")


def model_from_dict(doc: dict) -> ProtocolModel:
    for key in ("states", "stimuli", "rules"):
        if key not in doc:
            raise ModelError(f"model document lacks {key!r}")
    states = []
    for s in doc["states"]:
        if s.get("role") not in ROLES:
            raise ModelError(f"state {s.get('name')!r}: role must be one of {ROLES}")
        states.append(StateSymbol(s["name"], s["role"], bool(s.get("initial", False))))
    names = [s.name for s in states]
    if len(set(names)) != len(names):
        raise ModelError("duplicate state names")
    if not any(s.initial for s in states):
        raise ModelError("model has no initial state")

    stimuli = []
    for s in doc["stimuli"]:
        if s.get("kind") not in KINDS:
            raise ModelError(f"stimulus {s.get('name')!r}: kind must be one of {KINDS}")
        stimuli.append(Stimulus(s["name"], s["kind"]))
    stim_names = {s.name for s in stimuli}
    kind_of = {s.name: s.kind for s in stimuli}

    rules = []
    for r in doc["rules"]:
        name = r.get("stimulus")
        if name not in stim_names:
            raise ModelError(f"rule for unknown stimulus {name!r}")
        try:
            pre = tuple(parse_condition(c) for c in r.get("pre", []))
            post = tuple(parse_postcondition(p, kind_of[name]) for p in r.get("post", []))
        except ModelError as exc:
            raise ModelError(f"rule {name}: {exc}") from None
        if not pre:
            raise ModelError(f"rule {name}: at least one pre-condition is required")
        for c in pre:
            if c.is_root:
                continue
            if c.stimulus not in stim_names:
                raise ModelError(f"rule {name}: pre-condition names unknown stimulus {c.stimulus!r}")
            for st in (c.start, c.end):
                if st not in names:
                    raise ModelError(f"rule {name}: pre-condition names unknown state {st!r}")
        for p in post:
            for st in (p.start, p.end, p.guard):
                if st is not None and st not in names:
                    raise ModelError(f"rule {name}: post-condition names unknown state {st!r}")
            if p.trigger is not None and p.trigger not in stim_names:
                raise ModelError(f"rule {name}: post-condition triggers unknown stimulus {p.trigger!r}")
        rules.append(TransitionRule(Stimulus(name, kind_of[name]), pre, post))
    if len({r.stimulus.name for r in rules}) != len(rules):
        raise ModelError("more than one rule for a stimulus")

    correctness = doc.get("correctness", {})
    if isinstance(correctness, list):
        correctness = {"1": correctness}
    return ProtocolModel(
        name=doc.get("name", "model"),
        states=tuple(states),
        stimuli=tuple(stimuli),
        rules=tuple(rules),
        correctness={str(k): list(v) for k, v in correctness.items()},
        error_classes={str(k): list(v) for k, v in doc.get("error_classes", {}).items()},
        aliases=dict(doc.get("aliases", {})),
    )


def model_to_dict(model: ProtocolModel) -> dict:
    doc = {
        "name": model.name,
        "states": [{"name": s.name, "role": s.role, "initial": s.initial} for s in model.states],
        "stimuli": [{"name": s.name, "kind": s.kind} for s in model.stimuli],
        "rules": [
            {
                "stimulus": r.stimulus.name,
                "pre": [str(c) for c in r.pre],
                "post": [str(p) for p in r.post],
            }
            for r in model.rules
        ],
        "correctness": {k: list(v) for k, v in model.correctness.items()},
        "error_classes": {k: [dict(e) for e in v] for k, v in model.error_classes.items()},
    }
    if model.aliases:
        doc["aliases"] = dict(model.aliases)
    return doc


def dumps_canonical(model: ProtocolModel) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n"


def load_model(path: str | Path, extensions: Iterable[dict] = ()) -> ProtocolModel:
    """Load a model file, optionally merging extension documents into it."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    for ext in extensions:
        doc = merge_extension(doc, ext)
    return model_from_dict(doc)


def merge_extension(doc: dict, ext: dict) -> dict:
    merged = dict(doc)
    for key in ("states", "stimuli", "rules"):
        merged[key] = list(doc.get(key, [])) + list(ext.get(key, []))
    return merged

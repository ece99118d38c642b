"""Symbolic multiset patterns with repetition constructs.

A pattern is a list of terms; each term is a class of state symbols and a
repetition (``0``, ``1``, ``2``, ``1+``, ``2+`` or ``*``).  A global state
matches when its routers can be split among the terms so that every
router is consumed by a term whose class holds its symbol and every term's
count lies in its repetition range.

Term syntax: ``NH^1+``, ``X^*`` (any symbol), ``X-{NH,F}^*`` (complement)
and ``{F,F_Del}^1`` (explicit class).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import ModelMismatch

REPETITIONS = {
    "0": (0, 0),
    "1": (1, 1),
    "2": (2, 2),
    "1+": (1, None),
    "2+": (2, None),
    "*": (0, None),
}

_TERM = re.compile(
    r"^(?:(?P<any>X)(?:\s*-\s*\{(?P<minus>[^}]*)\})?|\{(?P<set>[^}]*)\}|(?P<sym>[A-Za-z][A-Za-z0-9_]*))"
    r"\s*\^\s*(?P<rep>0|1\+|2\+|1|2|\*)$"
)


@dataclass(frozen=True)
class Term:
    symbols: frozenset
    repetition: str
    text: str = ""

    @property
    def bounds(self) -> tuple[int, int | None]:
        return REPETITIONS[self.repetition]


@dataclass(frozen=True)
class SymbolicPattern:
    terms: tuple[Term, ...]
    alphabet: frozenset
    text: str = ""

    def __str__(self) -> str:
        return self.text or ", ".join(t.text for t in self.terms)


def _split_terms(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        parts.append("".join(cur).strip())
    return parts


def _names(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def parse_pattern(text: str, alphabet: Iterable[str]) -> SymbolicPattern:
    alphabet = frozenset(alphabet)
    terms = []
    for raw in _split_terms(text):
        m = _TERM.match(raw)
        if not m:
            raise ValueError(f"malformed pattern term {raw!r}")
        if m["any"]:
            excluded = set(_names(m["minus"] or ""))
            unknown = excluded - alphabet
            symbols = alphabet - excluded
        elif m["set"] is not None:
            symbols = set(_names(m["set"]))
            unknown = symbols - alphabet
        else:
            symbols = {m["sym"]}
            unknown = symbols - alphabet
        if unknown:
            raise ModelMismatch(f"pattern {text!r} names unknown symbols {sorted(unknown)}")
        terms.append(Term(frozenset(symbols), m["rep"], raw))
    return SymbolicPattern(tuple(terms), alphabet, text)


def _counts(g) -> Mapping[str, int]:
    if hasattr(g, "counts"):
        return dict(g.counts)
    if isinstance(g, Mapping):
        return {k: v for k, v in g.items() if v}
    return Counter(g)


def match_pattern(g, p: SymbolicPattern) -> bool:
    """True iff some consuming partition of g's routers satisfies every term."""
    counts = _counts(g)
    unknown = set(counts) - p.alphabet
    if unknown:
        raise ModelMismatch(f"state symbols {sorted(unknown)} not in pattern alphabet")
    terms = p.terms
    lows = [t.bounds[0] for t in terms]
    highs = [t.bounds[1] for t in terms]
    symbols = sorted(counts)
    usage = [0] * len(terms)

    def place(si: int) -> bool:
        if si == len(symbols):
            return all(u >= lo for u, lo in zip(usage, lows))
        sym = symbols[si]
        slots = [i for i, t in enumerate(terms) if sym in t.symbols]
        return spread(si, slots, 0, counts[sym])

    def spread(si: int, slots: list[int], k: int, left: int) -> bool:
        if k == len(slots):
            return left == 0 and place(si + 1)
        i = slots[k]
        room = left if highs[i] is None else min(left, highs[i] - usage[i])
        for take in range(room, -1, -1):
            usage[i] += take
            ok = spread(si, slots, k + 1, left - take)
            usage[i] -= take
            if ok:
                return True
        return False

    return place(0)


def match_any(g, patterns: Iterable[SymbolicPattern]) -> bool:
    return any(match_pattern(g, p) for p in patterns)

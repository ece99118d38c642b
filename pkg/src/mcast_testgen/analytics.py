"""Exact state-space accounting under counting equivalence."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

from .gfsm import Checker, GlobalState
from .patterns import match_pattern


def binom(x: int, y: int) -> int:
    """C(x, y), defined as 0 whenever either argument is negative or y > x."""
    if x < 0 or y < 0 or y > x:
        return 0
    return comb(x, y)


def count_equiv_states(n: int, s: int) -> int:
    if n < 0 or s < 1:
        raise ValueError("need n >= 0 and s >= 1")
    return binom(n + s - 1, n)


def count_correct(n: int, s: int = 10, definition: int = 1) -> int:
    if definition == 1:
        return binom(n + s - 3, n) + binom(n + s - 4, n - 2)
    if definition == 2:
        return binom(n + s - 5, n) + 4 * binom(n + s - 5, n - 2) - 2 * binom(n + s - 6, n - 3)
    raise ValueError(f"unknown correctness definition {definition!r}")


@dataclass(frozen=True)
class SpaceCount:
    n: int
    s: int
    total: int
    correct: int
    error: int
    definition: int

    @property
    def correct_pct(self) -> float:
        return 100.0 * self.correct / self.total if self.total else 0.0


def closed_form(n: int, s: int = 10, definition: int = 1) -> SpaceCount:
    total = count_equiv_states(n, s)
    correct = count_correct(n, s, definition)
    return SpaceCount(n, s, total, correct, total - correct, definition)


def multisets(n: int, alphabet) -> itertools.combinations_with_replacement:
    return itertools.combinations_with_replacement(tuple(alphabet), n)


class PartitionViolation(AssertionError):
    """A state matched both or neither of the correct and error families."""


def brute_force_classify(n: int, model, definition: int = 1) -> SpaceCount:
    """Classify every n-multiset over the alphabet; verifies the partition too."""
    checker = Checker(model, definition)
    correct = error = 0
    for combo in multisets(n, model.alphabet):
        g = GlobalState(combo)
        is_correct = any(match_pattern(g, p) for p in checker.correct)
        is_error = any(match_pattern(g, p) for _, p in checker.errors)
        if is_correct == is_error:
            raise PartitionViolation(
                f"{g} is {'both' if is_correct else 'neither'} correct and error under definition {definition}"
            )
        if is_correct:
            correct += 1
        else:
            error += 1
    s = len(model.alphabet)
    return SpaceCount(n, s, correct + error, correct, error, definition)

"""Exact battle outcome model.

A battle between ``A`` committed attackers and ``D`` defenders is expanded
level by level as a tree of ``(a, d, p)`` nodes.  Children produced in the
same expansion step that share ``(a, d)`` are merged, and children that
reach ``a == 0`` or ``d == 0`` are moved to the terminal list.  All
probabilities are exact :class:`fractions.Fraction` values.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class DiceOutcome:
    attacker_losses: int
    defender_losses: int
    probability: Fraction

    @property
    def p(self) -> float:
        return float(self.probability)


@dataclass(frozen=True)
class Terminal:
    attacker_survivors: int
    defender_survivors: int
    probability: Fraction

    @property
    def p(self) -> float:
        return float(self.probability)


@dataclass(frozen=True)
class TerminalTable:
    """Terminal states of an ``(attackers, defenders)`` battle.

    ``entries`` run from best for the defender, ``(0, D)``, through ``(0, 1)``,
    then ``(1, 0)`` up to ``(A, 0)``, the best for the attacker.
    """

    attackers: int
    defenders: int
    entries: tuple

    @property
    def probs(self) -> np.ndarray:
        return np.array([e.p for e in self.entries])

    def conquest_probability(self) -> Fraction:
        return sum((e.probability for e in self.entries if e.defender_survivors == 0), Fraction(0))

    def __len__(self) -> int:
        return len(self.entries)


@lru_cache(maxsize=None)
def dice_distribution(attacker_dice: int, defender_dice: int) -> tuple:
    """Loss distribution for one exchange, by enumerating every roll."""
    if not (1 <= attacker_dice <= 3 and 1 <= defender_dice <= 2):
        raise ValueError(f"dice counts out of range: {attacker_dice} v {defender_dice}")
    counts: dict[tuple[int, int], int] = {}
    total = 0
    for roll in itertools.product(range(1, 7), repeat=attacker_dice + defender_dice):
        att = sorted(roll[:attacker_dice], reverse=True)
        dfn = sorted(roll[attacker_dice:], reverse=True)
        ld = sum(x > y for x, y in zip(att, dfn))
        la = min(attacker_dice, defender_dice) - ld
        counts[la, ld] = counts.get((la, ld), 0) + 1
        total += 1
    return tuple(
        DiceOutcome(la, ld, Fraction(c, total)) for (la, ld), c in sorted(counts.items())
    )


def _order(A: int, D: int, found: dict) -> tuple:
    keys = [(0, d) for d in range(D, 0, -1)] + [(a, 0) for a in range(1, A + 1)]
    return tuple(Terminal(a, d, found[a, d]) for a, d in keys if (a, d) in found)


def build_terminal_table(A: int, D: int, merge: bool = True) -> TerminalTable:
    """Expand the battle tree from ``(A, D)`` until every branch terminates.

    With ``merge=False`` sibling nodes are never combined; the tree then grows
    exponentially and is only useful as a check on small battles.
    """
    if A < 1 or D < 1:
        raise ValueError(f"battle needs at least one army per side, got {A} v {D}")
    leaves: list[tuple[int, int, Fraction]] = [(A, D, Fraction(1))]
    found: dict[tuple[int, int], Fraction] = {}
    while leaves:
        children: list[tuple[int, int, Fraction]] = []
        for a, d, p in leaves:
            for o in dice_distribution(min(3, a), min(2, d)):
                children.append((a - o.attacker_losses, d - o.defender_losses, p * o.probability))
        if merge:
            merged: dict[tuple[int, int], Fraction] = {}
            for a, d, p in children:
                merged[a, d] = merged.get((a, d), 0) + p
            children = [(a, d, p) for (a, d), p in merged.items()]
        leaves = []
        for a, d, p in children:
            if a == 0 or d == 0:
                found[a, d] = found.get((a, d), 0) + p
            else:
                leaves.append((a, d, p))
    return TerminalTable(A, D, _order(A, D, found))


def select_terminal(table: TerminalTable, risky: float) -> Terminal:
    """Outcome at the ``risky`` quantile of the defender-first ordering.

    Returns the first entry whose running probability reaches ``risky``, so
    ``risky=0`` gives the most pessimistic outcome for the attacker and
    larger values move monotonically toward the attacker's best case.
    """
    if not table.entries:
        raise ValueError("empty terminal table")
    if not 0 <= risky <= 1:
        raise ValueError(f"risky must be in [0, 1], got {risky}")
    target = Fraction(risky)
    acc = Fraction(0)
    last = None
    for e in table.entries:
        acc += e.probability
        if e.probability > 0:
            last = e
        if acc >= target and e.probability > 0:
            return e
    return last


def select_index(table: TerminalTable, risky: float) -> int:
    return table.entries.index(select_terminal(table, risky))


class TableCache:
    """Memoized terminal tables.

    Pairs inside ``(cap_A, cap_D)`` can be built eagerly with
    :meth:`precompute`; anything else is built on first request.  Reads are
    lock free; insertion takes a lock so concurrent builders do not race.
    """

    def __init__(self, cap_A: int = 50, cap_D: int = 50):
        if cap_A < 1 or cap_D < 1:
            raise ValueError("caps must be positive")
        self.cap_A = cap_A
        self.cap_D = cap_D
        self._tables: dict[tuple[int, int], TerminalTable] = {}
        self._selected: dict[tuple[int, int, float], Terminal] = {}
        self._lock = threading.Lock()

    def precompute(self) -> "TableCache":
        for A in range(1, self.cap_A + 1):
            for D in range(1, self.cap_D + 1):
                self.get(A, D)
        return self

    def get(self, A: int, D: int) -> TerminalTable:
        t = self._tables.get((A, D))
        if t is None:
            t = build_terminal_table(A, D)
            with self._lock:
                t = self._tables.setdefault((A, D), t)
        return t

    def select(self, A: int, D: int, risky: float) -> Terminal:
        key = (A, D, risky)
        e = self._selected.get(key)
        if e is None:
            e = select_terminal(self.get(A, D), risky)
            self._selected[key] = e
        return e

    def __contains__(self, key) -> bool:
        return key in self._tables

    def __len__(self) -> int:
        return len(self._tables)


def table_cache(cap_A: int = 50, cap_D: int = 50, precompute: bool = True) -> TableCache:
    cache = TableCache(cap_A, cap_D)
    return cache.precompute() if precompute else cache


_default_cache = None


def default_cache() -> TableCache:
    global _default_cache
    if _default_cache is None:
        _default_cache = TableCache()
    return _default_cache


def format_table(table: TerminalTable, risky: float | None = None) -> str:
    lines = [f"battle {table.attackers} v {table.defenders}"]
    chosen = select_index(table, risky) if risky is not None else None
    acc = 0.0
    for i, e in enumerate(table.entries):
        acc += e.p
        mark = "  <- selected" if i == chosen else ""
        lines.append(
            f"{i:3d}  a={e.attacker_survivors:3d} d={e.defender_survivors:3d}"
            f"  p={e.p:.6f}  cum={acc:.6f}{mark}"
        )
    return "\n".join(lines)

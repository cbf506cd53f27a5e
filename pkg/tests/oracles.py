"""Independent reference implementations used by the tests.

Nothing here calls the code under test for the quantity being checked;
each oracle recomputes it another way (brute force, direct recursion,
finite differences, explicit loops).
"""
from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache

import numpy as np

from risktd import engine
from risktd.engine import Attack, Occupy, Phase, Place


# ---------------------------------------------------------------------------
# Dice and battles
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def dice_losses(na: int, nd: int) -> dict:
    """Loss distribution by counting every roll with numpy (no per-roll sorting loop)."""
    rolls = np.array(list(itertools.product(range(1, 7), repeat=na + nd)))
    att = -np.sort(-rolls[:, :na], axis=1)
    dfn = -np.sort(-rolls[:, na:], axis=1)
    k = min(na, nd)
    ld = (att[:, :k] > dfn[:, :k]).sum(axis=1)
    la = k - ld
    out = {}
    for a, d in zip(la, ld):
        out[int(a), int(d)] = out.get((int(a), int(d)), 0) + 1
    return {key: Fraction(c, len(rolls)) for key, c in out.items()}


@lru_cache(maxsize=None)
def markov_terminals(A: int, D: int) -> dict:
    """Absorbing-chain distribution: push probability mass over the (a, d) lattice.

    Every exchange removes at least one army, so visiting states in
    decreasing ``a + d`` order settles each state before it is propagated.
    """
    mass = {(A, D): Fraction(1)}
    for total in range(A + D, 0, -1):
        for a in range(A, -1, -1):
            d = total - a
            if not 0 <= d <= D or (a, d) not in mass or a == 0 or d == 0:
                continue
            p = mass.pop((a, d))
            for (la, ld), q in dice_losses(min(3, a), min(2, d)).items():
                key = (a - la, d - ld)
                mass[key] = mass.get(key, 0) + p * q
    return {k: v for k, v in mass.items() if v}


def unmerged_tree(A: int, D: int) -> dict:
    """Plain recursion over every dice path (exponential, small battles only)."""
    out: dict = {}

    def walk(a, d, p):
        if a == 0 or d == 0:
            out[a, d] = out.get((a, d), 0) + p
            return
        for (la, ld), q in dice_losses(min(3, a), min(2, d)).items():
            walk(a - la, d - ld, p * q)

    walk(A, D, Fraction(1))
    return out


def defender_first(A: int, D: int) -> list:
    return [(0, d) for d in range(D, 0, -1)] + [(a, 0) for a in range(1, A + 1)]


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


def fd_gradient(f, x: np.ndarray, index: tuple, eps: float = 1e-5) -> float:
    """Central difference of scalar ``f()`` with respect to ``x[index]`` (mutated in place)."""
    old = x[index]
    x[index] = old + eps
    up = f()
    x[index] = old - eps
    down = f()
    x[index] = old
    return (up - down) / (2 * eps)


# ---------------------------------------------------------------------------
# Turn enumeration
# ---------------------------------------------------------------------------


def _front(state) -> list[int]:
    me = state.current
    out = [
        int(t) for t in state.territories_of(me)
        if any(state.owner[j] != me for j in state.map.neighbours[t])
    ]
    return out or [int(t) for t in state.territories_of(me)]


def _modelled(state, mv: Attack, risky: float):
    """Risky-quantile outcome, recomputed from the lattice oracle."""
    force = int(state.armies[mv.src]) - 1
    defenders = int(state.armies[mv.dst])
    probs = markov_terminals(force, defenders)
    acc = Fraction(0)
    target = Fraction(risky)
    for key in defender_first(force, defenders):
        p = probs.get(key, Fraction(0))
        acc += p
        if p > 0 and acc >= target:
            return key
    raise AssertionError("quantile not reached")


def turn_end_states(state, risky: float) -> list:
    """Every turn end-state of the pruned deterministic turn model, by DFS.

    Pruning matches the documented move space: placements only on
    enemy-facing territories, attacks only with force >= defenders and a
    modelled outcome that keeps at least one attacker, every occupy count.
    """
    found = {}
    seen = set()

    def dfs(s):
        k = s.key()
        if k in seen:
            return
        seen.add(k)
        if s.phase == Phase.OVER:
            found[k] = s
            return
        if s.occupy is not None:
            _, _, lo, hi = s.occupy
            for c in range(lo, hi + 1):
                dfs(engine.apply_move(s, Occupy(c)))
            return
        if s.phase in (Phase.CARDS, Phase.PLACING):
            hand = s.hands[s.current]
            if s.phase == Phase.CARDS:
                for cards in engine.cashable_sets(hand):
                    dfs(engine.apply_move(s, engine.Cash(cards)))
            if len(hand) < engine.FORCED_CASH_HAND:
                for t in _front(s):
                    dfs(engine.apply_move(s, Place(t, 1)))
            return
        assert s.phase == Phase.ATTACKING
        found[k] = s
        for mv in engine.attack_options(s):
            if int(s.armies[mv.src]) - 1 < int(s.armies[mv.dst]):
                continue
            a_left, d_left = _modelled(s, mv, risky)
            if a_left < 1:
                continue
            dfs(engine.resolve_attack_imposed(s, mv, (a_left, d_left)))

    dfs(state)
    return list(found.values())

"""Turn search for the network-guided agent.

Attacks inside the search are made deterministic: each is replaced by one
terminal outcome picked from its exact outcome table at the ``risky``
quantile.  The search expands whole turns breadth first (cards and
placement first, then one attack per level, each conquest followed by its
occupation choices), scores every position reached after placement, and
returns the move chain to the best one.  Fortification is decided greedily
afterwards, and the agent re-searches after each real attack.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .battle import TableCache, Terminal, default_cache
from .engine import (
    Attack,
    Cash,
    EndAttacks,
    EndTurn,
    FORCED_CASH_HAND,
    Fortify,
    Game,
    GameState,
    IllegalMove,
    Occupy,
    Phase,
    Place,
    apply_move,
    attack_options,
    cashable_sets,
    movable,
    resolve_attack_imposed,
)
from .network import NetworkParams, evaluate_states

log = logging.getLogger(__name__)

SCORE_CHUNK = 512


@dataclass(frozen=True)
class SearchConfig:
    risky: float = 0.3
    tp: int = 2
    gp: int = 3
    ga: int = 3
    gf: int = 10
    search_time: Optional[float] = 10.0
    node_budget: Optional[int] = None
    endgame_threshold: float = 0.95
    min_depth: int = 1  # attack levels searched through the best node regardless of budget

    def __post_init__(self):
        if not 0.0 <= self.risky <= 1.0:
            raise ValueError("risky must be in [0, 1]")
        if self.tp < 2:
            raise ValueError("tp must be at least 2")
        if self.ga < 3:
            raise ValueError("ga must be at least 3")
        if self.gp < 1 or self.gf < 1:
            raise ValueError("group sizes must be positive")
        if self.min_depth < 0:
            raise ValueError("min_depth must be non-negative")
        if self.search_time is None and self.node_budget is None:
            raise ValueError("need a time or node budget")


class SearchDesync(RuntimeError):
    """The authoritative engine rejected a move the search model allowed."""


@dataclass
class SearchResult:
    chain: tuple
    score: float
    state: GameState
    nodes: int
    depth: int


# ---------------------------------------------------------------------------
# Move generation
# ---------------------------------------------------------------------------


def spread(lo: int, hi: int, k: int) -> list[int]:
    """``k`` values linearly spaced over ``[lo, hi]``, rounded half up, deduplicated."""
    if hi <= lo or k == 1:
        return [hi] if k == 1 else [lo]
    out = []
    for i in range(k):
        x = Fraction(lo) + Fraction(hi - lo) * i / (k - 1)
        v = int(x + Fraction(1, 2))  # floor(x + 1/2) for positive x
        if v not in out:
            out.append(v)
    return out


def gen_occupy_splits(survivors: int, cfg: SearchConfig) -> list[int]:
    if survivors < 1:
        raise ValueError("nothing to occupy with")
    return spread(min(3, survivors), survivors, cfg.ga)


def border_territories(state: GameState, player: int) -> list[int]:
    owner = state.owner
    return [
        int(t)
        for t in state.territories_of(player)
        if any(owner[j] != player for j in state.map.neighbours[t])
    ]


def _compositions(total: int, parts: int):
    """All ways to write ``total`` as an ordered sum of ``parts`` non-negative ints."""
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, out = -1, []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 1 - prev - 1)
        yield out


def placement_groups(pending: int, gp: int) -> list[int]:
    n = max(1, pending // gp)
    return [gp] * (n - 1) + [pending - gp * (n - 1)]


def gen_place_moves(state: GameState, cfg: SearchConfig) -> list[tuple]:
    """Placement bundles: whole groups of ``gp`` on at most ``tp`` front-line territories."""
    me = state.current
    pending = state.pending
    if pending == 0:
        return [()]
    targets = border_territories(state, me) or [int(t) for t in state.territories_of(me)]
    groups = placement_groups(pending, cfg.gp)
    head, last = len(groups) - 1, groups[-1]
    bundles: dict[tuple, None] = {}
    for size in range(1, min(cfg.tp, len(targets)) + 1):
        for combo in itertools.combinations(targets, size):
            for li in range(size):
                for comp in _compositions(head, size):
                    alloc = [c * cfg.gp for c in comp]
                    alloc[li] += last
                    key = tuple((t, a) for t, a in zip(combo, alloc) if a > 0)
                    bundles.setdefault(key)
    return [tuple(Place(t, a) for t, a in key) for key in bundles]


def gen_attack_moves(state: GameState, cfg: SearchConfig, cache: TableCache | None = None) -> list[tuple[Attack, Terminal]]:
    """Attacks where the committed force is at least the defence, with their modelled outcome."""
    cache = cache or default_cache()
    out = []
    for mv in attack_options(state):
        force = int(state.armies[mv.src]) - 1
        defenders = int(state.armies[mv.dst])
        if force >= defenders:
            out.append((mv, cache.select(force, defenders, cfg.risky)))
    return out


def cash_options(state: GameState) -> list[tuple]:
    """Forced cashes first, then each optional number of further cashes."""
    hand = state.hands[state.current]
    forced = []
    while len(hand) >= FORCED_CASH_HAND:
        s = cashable_sets(hand)[0]
        forced.append(Cash(s))
        hand = _without(hand, s)
    options = [tuple(forced)]
    extra = list(forced)
    while True:
        sets = cashable_sets(hand)
        if not sets:
            break
        extra.append(Cash(sets[0]))
        hand = _without(hand, sets[0])
        options.append(tuple(extra))
    return options


def _without(hand: tuple, cards: tuple) -> tuple:
    rest = list(hand)
    for c in cards:
        rest.remove(c)
    return tuple(rest)


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def endgame_eval(state: GameState, player: int, threshold: float = 0.95) -> float:
    if state.army_share(player) < threshold:
        raise ValueError("endgame evaluation used below the army-share threshold")
    return float((state.owner == player).sum() + 1)


def make_scorer(model, player: int, endgame: bool) -> Callable[[list], np.ndarray]:
    if endgame:
        return lambda states: np.array([float((s.owner == player).sum() + 1) for s in states])
    if isinstance(model, NetworkParams):
        evaluate = lambda states: evaluate_states(model, states)
    else:
        evaluate = model

    def score(states):
        out = np.empty(len(states))
        for i in range(0, len(states), SCORE_CHUNK):
            out[i : i + SCORE_CHUNK] = np.asarray(evaluate(states[i : i + SCORE_CHUNK]))[:, player]
        return out

    return score


# ---------------------------------------------------------------------------
# Breadth-first search
# ---------------------------------------------------------------------------


def _apply_all(state: GameState, moves) -> GameState:
    for m in moves:
        state = apply_move(state, m)
    return state


def settle(state: GameState, chain: tuple, cfg: SearchConfig, cache: TableCache) -> list[tuple[GameState, tuple]]:
    """Expand forced follow-ups (cards, placement, occupation) until the position is scoreable."""
    if state.phase == Phase.OVER:
        return [(state, chain)]
    if state.occupy is not None:
        out = []
        for c in gen_occupy_splits(state.occupy[3], cfg):
            mv = Occupy(c)
            out += settle(apply_move(state, mv), chain + (mv,), cfg, cache)
        return out
    if state.phase in (Phase.CARDS, Phase.PLACING):
        out = []
        options = cash_options(state) if state.phase == Phase.CARDS else [()]
        for cashes in options:
            s1 = _apply_all(state, cashes)
            for bundle in gen_place_moves(s1, cfg):
                s2 = _apply_all(s1, bundle)
                out += settle(s2, chain + cashes + bundle, cfg, cache)
        return out
    if state.phase == Phase.ATTACKING:
        return [(state, chain)]
    raise ValueError(f"cannot search from phase {state.phase.name}")


def expand_attacks(state: GameState, chain: tuple, cfg: SearchConfig, cache: TableCache):
    for mv, term in gen_attack_moves(state, cfg, cache):
        if term.attacker_survivors < 1:
            continue
        child = resolve_attack_imposed(state, mv, term)
        yield from settle(child, chain + (mv,), cfg, cache)


def bfs_search(state: GameState, model, cfg: SearchConfig, cache: TableCache | None = None) -> SearchResult:
    """Best turn end-state reachable under the deterministic attack model.

    The cards/placement level is always expanded in full; attack levels are
    added until the node or time budget runs out, spending it on the
    best-scoring positions of each level first.  The best node of each of
    the first ``cfg.min_depth`` levels is expanded even past the budget.
    Ties go to the shorter chain, then to the earlier generated one.
    """
    cache = cache or default_cache()
    player = state.current
    deadline = None if cfg.search_time is None else time.perf_counter() + cfg.search_time
    endgame = state.army_share(player) >= cfg.endgame_threshold
    score = make_scorer(model, player, endgame)

    seen = set()
    level = []
    for s, chain in settle(state, (), cfg, cache):
        k = s.key()
        if k not in seen:
            seen.add(k)
            level.append((s, chain))
    nodes = len(level)
    best = None  # (score, -len, state, chain)
    depth = 0

    def consider(batch):
        """Score a level, track the best, and return it ordered best first."""
        nonlocal best
        if not batch:
            return batch
        values = score([s for s, _ in batch])
        for (s, chain), v in zip(batch, values):
            if best is None or v > best[0] or (v == best[0] and len(chain) < len(best[3])):
                best = (float(v), None, s, chain)
        order = sorted(range(len(batch)), key=lambda i: -values[i])  # stable on ties
        return [batch[i] for i in order]

    def exhausted():
        if cfg.node_budget is not None and nodes >= cfg.node_budget:
            return True
        return deadline is not None and time.perf_counter() >= deadline

    level = consider(level)
    while level:
        nxt = []
        for i, (s, chain) in enumerate(level):
            if (i > 0 or depth >= cfg.min_depth) and exhausted():
                break
            if s.phase == Phase.OVER:
                continue
            for child, cchain in expand_attacks(s, chain, cfg, cache):
                k = child.key()
                if k in seen:
                    continue
                seen.add(k)
                nxt.append((child, cchain))
                nodes += 1
        if not nxt:
            break
        depth += 1
        level = consider(nxt)
        if exhausted() and depth >= cfg.min_depth:
            break
    value, _, end, chain = best
    if end.phase != Phase.OVER:
        chain = chain + (EndAttacks(),)
    return SearchResult(chain, value, end, nodes, depth)


# ---------------------------------------------------------------------------
# Fortification and the playing loop
# ---------------------------------------------------------------------------


def fortify_candidates(state: GameState, cfg: SearchConfig) -> list[Fortify]:
    me = state.current
    out = []
    for src in state.territories_of(me):
        m = movable(state, src)
        if m < 1:
            continue
        counts = spread(1, m, cfg.gf)
        for dst in state.map.neighbours[src]:
            if state.owner[dst] == me:
                out += [Fortify(int(src), dst, c) for c in counts]
    return out


def greedy_fortify(state: GameState, model, cfg: SearchConfig) -> list[Fortify]:
    """Repeatedly apply the best fortification while it beats doing nothing."""
    if state.phase != Phase.FORTIFYING:
        raise ValueError("greedy_fortify needs the fortifying phase")
    player = state.current
    endgame = state.army_share(player) >= cfg.endgame_threshold
    score = make_scorer(model, player, endgame)
    base = score([state])[0]
    moves = []
    while True:
        cands = fortify_candidates(state, cfg)
        if not cands:
            break
        after = [apply_move(state, m) for m in cands]
        values = score(after)
        i = int(np.argmax(values))
        if not values[i] > base:
            break
        state, base = after[i], values[i]
        moves.append(cands[i])
    return moves


@dataclass
class TurnReport:
    searches: int = 0
    attacks: int = 0
    nodes: int = 0
    fortifications: int = 0


def play_turn(game: Game, model, cfg: SearchConfig, cache: TableCache | None = None) -> TurnReport:
    """Play the current player's turn on ``game`` with the resync protocol.

    Moves are sent only up to and including the first attack of each chain;
    the real dice result is read back and the search restarts from it.
    """
    cache = cache or default_cache()
    report = TurnReport()
    player = game.state.current

    def submit(mv):
        try:
            return game.submit(mv)
        except IllegalMove as exc:
            log.error("desync: engine rejected %r in state %r", mv, game.state.key())
            raise SearchDesync(f"engine rejected {mv!r}: {exc}") from exc

    while game.state.phase not in (Phase.FORTIFYING, Phase.OVER):
        res = bfs_search(game.state, model, cfg, cache)
        report.searches += 1
        report.nodes += res.nodes
        cut = next((i for i, m in enumerate(res.chain) if isinstance(m, Attack)), None)
        prefix = res.chain if cut is None else res.chain[: cut + 1]
        for mv in prefix:
            submit(mv)
        if cut is None:
            break
        report.attacks += 1
        log.debug("player %d attack %r -> %s", player, prefix[-1], game.log[-1].get("dice"))
    if game.state.phase == Phase.OVER:
        return report
    if game.state.phase == Phase.FORTIFYING:
        for mv in greedy_fortify(game.state, model, cfg):
            submit(mv)
            report.fortifications += 1
    submit(EndTurn())
    return report

"""Players: scripted baselines, the search agent and a terminal human.

Every agent takes its whole turn on the authoritative :class:`Game` through
``take_turn``.  Scripted bots only have to implement ``choose``, which maps
the observed state to one legal move; they draw randomness from a generator
seeded by ``(match seed, seat)`` so a match is reproducible.
"""
from __future__ import annotations

import copy
from typing import Optional

import numpy as np

from .battle import TableCache
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
    attack_options,
    cashable_sets,
    check_move,
    legal_moves,
    movable,
)
from .search import SearchConfig, border_territories, play_turn

MAX_MOVES_PER_TURN = 5000


class Agent:
    name = "agent"

    def __init__(self, name: Optional[str] = None):
        if name:
            self.name = name
        self.seat = 0
        self.rng = np.random.default_rng(0)

    def reset(self, seat: int, seed: int) -> None:
        self.seat = seat
        self.rng = np.random.default_rng([seed, seat, 7919])

    def clone(self) -> "Agent":
        return copy.copy(self)

    def choose(self, state: GameState):
        raise NotImplementedError

    def take_turn(self, game: Game) -> None:
        turn = game.state.turn
        for _ in range(MAX_MOVES_PER_TURN):
            s = game.state
            if s.phase == Phase.OVER or s.turn != turn:
                return
            game.submit(self.choose(s))
        raise IllegalMove("turn_too_long", f"{self.name} did not finish its turn")


# ---------------------------------------------------------------------------
# Shared bot helpers
# ---------------------------------------------------------------------------


def _force(state: GameState, mv: Attack) -> int:
    return int(state.armies[mv.src]) - 1


def _defenders(state: GameState, mv: Attack) -> int:
    return int(state.armies[mv.dst])


def _interior_fortify(state: GameState) -> Optional[Fortify]:
    """Move the largest idle rear stack one step toward the front."""
    me = state.current
    front = set(border_territories(state, me))
    best = None
    for t in state.territories_of(me):
        t = int(t)
        if t in front:
            continue
        m = movable(state, t)
        if m < 1:
            continue
        owned_nbrs = [j for j in state.map.neighbours[t] if state.owner[j] == me]
        if not owned_nbrs:
            continue
        toward = [j for j in owned_nbrs if j in front] or owned_nbrs
        if best is None or m > best.count:
            best = Fortify(t, toward[0], m)
    return best


def _owned_fraction(state: GameState, continent: int) -> float:
    members = list(state.map.members[continent])
    return float((state.owner[members] == state.current).mean())


def _components(state: GameState, player: int) -> list[list[int]]:
    owned = set(int(t) for t in state.territories_of(player))
    comps = []
    while owned:
        start = min(owned)
        stack, comp = [start], {start}
        owned.discard(start)
        while stack:
            t = stack.pop()
            for j in state.map.neighbours[t]:
                if j in owned:
                    owned.discard(j)
                    comp.add(j)
                    stack.append(j)
        comps.append(sorted(comp))
    return comps


class ScriptedBot(Agent):
    """Common cards/occupy/fortify behaviour; subclasses pick placements and attacks."""

    cash_when_possible = True

    def choose(self, state: GameState):
        if state.occupy is not None:
            return Occupy(self.occupy(state))
        if state.phase == Phase.CARDS:
            hand = state.hands[state.current]
            sets = cashable_sets(hand)
            if sets and (len(hand) >= FORCED_CASH_HAND or self.want_cash(state)):
                return Cash(sets[0])
            return self.place(state)
        if state.phase == Phase.PLACING:
            return self.place(state)
        if state.phase == Phase.ATTACKING:
            return self.attack(state) or EndAttacks()
        if state.phase == Phase.FORTIFYING:
            return self.fortify(state) or EndTurn()
        raise IllegalMove("game_over")

    def want_cash(self, state) -> bool:
        return self.cash_when_possible

    def occupy(self, state) -> int:
        return state.occupy[3]

    def fortify(self, state) -> Optional[Fortify]:
        if state.locks.any():
            return None  # one fortification per turn
        return _interior_fortify(state)

    def place(self, state) -> Place:
        raise NotImplementedError

    def attack(self, state) -> Optional[Attack]:
        raise NotImplementedError


class RandomBot(ScriptedBot):
    """Uniform choices; keeps attacking with probability 0.5 per opportunity."""

    name = "random"

    def want_cash(self, state):
        return self.rng.random() < 0.5

    def occupy(self, state):
        _, _, lo, hi = state.occupy
        return int(self.rng.integers(lo, hi + 1))

    def place(self, state):
        owned = state.territories_of(state.current)
        t = int(owned[self.rng.integers(len(owned))])
        return Place(t, int(self.rng.integers(1, state.pending + 1)))

    def attack(self, state):
        opts = attack_options(state)
        if opts and self.rng.random() < 0.5:
            return opts[int(self.rng.integers(len(opts)))]
        return None

    def fortify(self, state):
        if self.rng.random() >= 0.5:
            return None
        me = state.current
        pairs = [
            (int(t), j)
            for t in state.territories_of(me)
            if movable(state, t) >= 1
            for j in state.map.neighbours[t]
            if state.owner[j] == me
        ]
        if not pairs:
            return None
        src, dst = pairs[int(self.rng.integers(len(pairs)))]
        return Fortify(src, dst, int(self.rng.integers(1, movable(state, src) + 1)))


class AggressorBot(ScriptedBot):
    """Stacks the strongest front and attacks whenever it outnumbers the defence."""

    name = "aggressor"

    def place(self, state):
        front = border_territories(state, state.current) or list(state.territories_of(state.current))
        t = max(front, key=lambda t: (state.armies[t], -t))
        return Place(int(t), state.pending)

    def attack(self, state):
        opts = [m for m in attack_options(state) if _force(state, m) > _defenders(state, m)]
        if not opts:
            return None
        return max(opts, key=lambda m: (_force(state, m) - _defenders(state, m), -m.src, -m.dst))


class ClustererBot(ScriptedBot):
    """Grows its largest connected region, favouring continents it nearly holds."""

    name = "clusterer"

    def _target_value(self, state, dst) -> float:
        return _owned_fraction(state, int(state.map.continent_of[dst]))

    def place(self, state):
        me = state.current
        comp = max(_components(state, me), key=len)
        front = [t for t in comp if any(state.owner[j] != me for j in state.map.neighbours[t])] or comp

        def value(t):
            best = max(
                (self._target_value(state, j) for j in state.map.neighbours[t] if state.owner[j] != me),
                default=0.0,
            )
            return (best, state.armies[t], -t)

        return Place(int(max(front, key=value)), state.pending)

    def attack(self, state):
        comp = set(max(_components(state, state.current), key=len))
        opts = [
            m for m in attack_options(state)
            if m.src in comp and _force(state, m) > _defenders(state, m)
        ]
        if not opts:
            return None
        return max(
            opts,
            key=lambda m: (self._target_value(state, m.dst), _force(state, m) - _defenders(state, m), -m.src, -m.dst),
        )


class TurtleBot(ScriptedBot):
    """Reinforces its weakest continent border and attacks only at two to one."""

    name = "turtle"

    def occupy(self, state):
        return state.occupy[2]

    def place(self, state):
        me = state.current
        front = border_territories(state, me)
        gates = [t for t in front if state.map.is_border[t]] or front or list(state.territories_of(me))
        t = min(gates, key=lambda t: (state.armies[t], t))
        return Place(int(t), state.pending)

    def attack(self, state):
        opts = [m for m in attack_options(state) if _force(state, m) >= 2 * _defenders(state, m)]
        if not opts:
            return None
        return max(opts, key=lambda m: (_force(state, m) / _defenders(state, m), -m.src, -m.dst))


BASELINE_BOTS = {
    "random": RandomBot,
    "aggressor": AggressorBot,
    "clusterer": ClustererBot,
    "turtle": TurtleBot,
}


def baseline_bots() -> dict:
    return {name: cls() for name, cls in BASELINE_BOTS.items()}


class SearchAgent(Agent):
    """Network-evaluated breadth-first turn search."""

    name = "dad"

    def __init__(self, params, cfg: Optional[SearchConfig] = None, cache: Optional[TableCache] = None, name=None):
        super().__init__(name)
        self.params = params
        self.cfg = cfg or SearchConfig()
        self.cache = cache
        self.reports = []

    def clone(self):
        c = copy.copy(self)
        c.reports = []
        return c

    def take_turn(self, game: Game) -> None:
        self.reports.append(play_turn(game, self.params, self.cfg, self.cache))


class HumanAgent(Agent):
    """Terminal player: prints the board and reads moves phase by phase."""

    name = "human"

    def __init__(self, name=None, input_fn=input, output_fn=print):
        super().__init__(name)
        self.input = input_fn
        self.output = output_fn

    def choose(self, state: GameState):
        from .render import describe_state, parse_move

        self.output(describe_state(state))
        options = [m for m in legal_moves(state) if not isinstance(m, (Place, Fortify))]
        for i, m in enumerate(options):
            self.output(f"  [{i}] {m}")
        hint = {
            Phase.CARDS: "place <territory> <count>",
            Phase.PLACING: "place <territory> <count>",
            Phase.FORTIFYING: "fortify <from> <to> <count>",
        }.get(state.phase)
        if hint:
            self.output(f"  or type: {hint}")
        while True:
            text = self.input("> ").strip()
            try:
                mv = options[int(text)] if text.isdigit() else parse_move(text, state)
                check_move(state, mv)
                return mv
            except (IndexError, ValueError) as exc:
                self.output(f"  not legal: {exc}")

"""Rules engine: game state, move legality, income, cards and combat.

Every public operation returns a fresh :class:`GameState`; states are never
mutated once handed out.  Randomness is drawn from a counter-based stream
``(seed, draws)`` stored in the state itself, so copying a state copies its
random future and replaying the same moves from the same seed reproduces
every die.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, Union

import numpy as np

from .maps import MapDef

MAX_PLAYERS = 6
CASH_VALUE = 5
FORCED_CASH_HAND = 5
# Infantry, Cavalry, Artillery, Wild: 14/14/14/2 of the 44-card physical deck.
CARD_WEIGHTS = np.array([14, 14, 14, 2]) / 44


class Phase(IntEnum):
    CARDS = 0
    PLACING = 1
    ATTACKING = 2
    FORTIFYING = 3
    OVER = 4


class Card(IntEnum):
    INFANTRY = 0
    CAVALRY = 1
    ARTILLERY = 2
    WILD = 3


class IllegalMove(ValueError):
    """A move that the current state does not allow.

    ``reason`` is a short machine-readable code such as ``"wrong_phase"``,
    ``"not_adjacent"``, ``"insufficient_armies"`` or ``"locked_units"``.
    """

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class Rules:
    income_floor: int = 3
    armies_per_player: int = 20
    turn_cap: int = 400

    def __post_init__(self):
        if self.income_floor < 1:
            raise ValueError("income_floor must be at least 1")


# ---------------------------------------------------------------------------
# Moves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cash:
    cards: tuple


@dataclass(frozen=True)
class Place:
    territory: int
    count: int


@dataclass(frozen=True)
class Attack:
    src: int
    dst: int


@dataclass(frozen=True)
class Occupy:
    count: int


@dataclass(frozen=True)
class Fortify:
    src: int
    dst: int
    count: int


@dataclass(frozen=True)
class EndAttacks:
    pass


@dataclass(frozen=True)
class EndTurn:
    pass


Move = Union[Cash, Place, Attack, Occupy, Fortify, EndAttacks, EndTurn]


def move_to_dict(move: Move) -> dict:
    d = {"type": type(move).__name__}
    if isinstance(move, Cash):
        d["cards"] = [int(c) for c in move.cards]
    else:
        d.update({k: int(v) for k, v in move.__dict__.items()})
    return d


def move_from_dict(d: dict) -> Move:
    kind = d["type"]
    if kind == "Cash":
        return Cash(tuple(Card(c) for c in d["cards"]))
    cls = {c.__name__: c for c in (Place, Attack, Occupy, Fortify, EndAttacks, EndTurn)}
    if kind not in cls:
        raise ValueError(f"unknown move type {kind!r}")
    return cls[kind](**{k: v for k, v in d.items() if k != "type"})


@dataclass(frozen=True)
class AttackResult:
    attacker_survivors: int
    defender_survivors: int
    conquered: bool
    eliminated_player: Optional[int] = None
    rolls: tuple = ()


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GameState:
    map: MapDef
    n_players: int
    owner: np.ndarray
    armies: np.ndarray
    hands: tuple
    phase: Phase
    current: int
    pending: int
    locks: np.ndarray
    alive: tuple
    seed: int
    draws: int = 0
    turn: int = 0
    conquered: bool = False
    occupy: Optional[tuple] = None  # (src, dst, min, max) owed after a conquest
    eliminated: tuple = ()  # ((player, turn), ...) in elimination order
    cash_count: int = 0
    rules: Rules = field(default_factory=Rules)

    def copy(self) -> "GameState":
        new = object.__new__(GameState)
        new.__dict__.update(self.__dict__)
        new.owner = self.owner.copy()
        new.armies = self.armies.copy()
        new.locks = self.locks.copy()
        return new

    def __eq__(self, other) -> bool:
        if not isinstance(other, GameState):
            return NotImplemented
        return self.key() == other.key() and self.seed == other.seed and self.draws == other.draws

    def key(self) -> tuple:
        """Hashable summary of everything that affects play."""
        return (
            self.owner.tobytes(),
            self.armies.tobytes(),
            self.locks.tobytes(),
            self.hands,
            int(self.phase),
            self.current,
            self.pending,
            self.alive,
            self.turn,
            self.conquered,
            self.occupy,
            self.eliminated,
        )

    def stream(self) -> np.random.Generator:
        """Generator for the next random event; advances the counter."""
        rng = np.random.default_rng([self.seed, self.draws])
        self.draws += 1
        return rng

    def territories_of(self, player: int) -> np.ndarray:
        return np.flatnonzero(self.owner == player)

    def total_armies(self) -> int:
        return int(self.armies.sum())

    def army_share(self, player: int) -> float:
        return float(self.armies[self.owner == player].sum()) / self.total_armies()

    def alive_players(self) -> list[int]:
        return [p for p in range(self.n_players) if self.alive[p]]

    def is_over(self) -> bool:
        return self.phase == Phase.OVER


def new_game(
    mapdef: MapDef,
    players: int = 6,
    armies_per_player: Optional[int] = None,
    seed: int = 0,
    rules: Optional[Rules] = None,
) -> GameState:
    """Deal territories round-robin from a seeded shuffle, then scatter armies."""
    rules = rules or Rules()
    if armies_per_player is None:
        armies_per_player = rules.armies_per_player
    if not 2 <= players <= MAX_PLAYERS:
        raise ValueError(f"players must be in 2..{MAX_PLAYERS}, got {players}")
    n = mapdef.n_territories
    if armies_per_player * players < n or armies_per_player < -(-n // players):
        raise ValueError(
            f"{armies_per_player} armies per player cannot cover {n} territories"
        )
    rng = np.random.default_rng([seed, 0])
    owner = np.empty(n, dtype=np.int64)
    owner[rng.permutation(n)] = np.arange(n) % players
    armies = np.ones(n, dtype=np.int64)
    for p in range(players):
        mine = np.flatnonzero(owner == p)
        extra = armies_per_player - len(mine)
        picks = rng.integers(0, len(mine), size=extra)
        np.add.at(armies, mine[picks], 1)
    state = GameState(
        map=mapdef,
        n_players=players,
        owner=owner,
        armies=armies,
        hands=((),) * players,
        phase=Phase.CARDS,
        current=0,
        pending=0,
        locks=np.zeros(n, dtype=np.int64),
        alive=(True,) * players,
        seed=seed,
        draws=1,
        rules=rules,
    )
    state.pending = income(state, 0)
    return state


# ---------------------------------------------------------------------------
# Income and cards
# ---------------------------------------------------------------------------


def income(state: GameState, player: int) -> int:
    """Territory income (with floor) plus continent bonuses; cards excluded."""
    if not state.alive[player]:
        raise ValueError(f"player {player} is dead")
    mine = state.owner == player
    base = max(state.rules.income_floor, int(mine.sum()) // 3)
    bonus = 0
    for c, members in enumerate(state.map.members):
        if mine[list(members)].all():
            bonus += int(state.map.bonuses[c])
    return base + bonus


def cash_value() -> int:
    return CASH_VALUE


def is_set(cards) -> bool:
    if len(cards) != 3:
        return False
    plain = [c for c in cards if c != Card.WILD]
    # Any wild completes either three-of-a-kind or one-of-each.
    return len(plain) < 3 or len(set(plain)) in (1, 3)


def cashable_sets(hand) -> list[tuple]:
    """All distinct valid triples contained in ``hand``; fewest wilds first."""
    found = {tuple(sorted(c)) for c in itertools.combinations(hand, 3) if is_set(c)}
    return sorted(found, key=lambda s: (s.count(Card.WILD), s))


def _remove_cards(hand: tuple, cards) -> tuple:
    rest = list(hand)
    for c in cards:
        try:
            rest.remove(c)
        except ValueError:
            raise IllegalMove("no_such_set", f"{cards} not in hand {hand}") from None
    return tuple(rest)


def _draw_card(state: GameState) -> Card:
    return Card(int(state.stream().choice(4, p=CARD_WEIGHTS)))


# ---------------------------------------------------------------------------
# Dice
# ---------------------------------------------------------------------------


def _exchange(a: int, d: int, dice) -> tuple[int, int, tuple, tuple]:
    na, nd = min(3, a), min(2, d)
    att = sorted(dice[:na], reverse=True)
    dfn = sorted(dice[3 : 3 + nd], reverse=True)
    la = ld = 0
    for x, y in zip(att, dfn):
        if x > y:
            ld += 1
        else:
            la += 1
    return la, ld, tuple(att), tuple(dfn)


def roll_round(a: int, d: int, rng) -> tuple[int, int, tuple, tuple]:
    """One dice exchange; returns (attacker losses, defender losses, rolls)."""
    return _exchange(a, d, [int(x) for x in rng.integers(1, 7, size=5)])


def roll_battle(a: int, d: int, rng) -> tuple[int, int, tuple]:
    """Fight to the end; returns survivors and the per-round rolls.

    Every round removes at least one army, so ``a + d - 1`` rows of five
    dice (three attacker slots, two defender slots) always suffice and are
    drawn in one call.
    """
    block = rng.integers(1, 7, size=(a + d - 1, 5)).tolist()
    rolls = []
    i = 0
    while a > 0 and d > 0:
        la, ld, att, dfn = _exchange(a, d, block[i])
        i += 1
        a -= la
        d -= ld
        rolls.append((att, dfn))
    return a, d, tuple(rolls)


# ---------------------------------------------------------------------------
# Legality
# ---------------------------------------------------------------------------


def _require(cond: bool, reason: str, detail: str = "") -> None:
    if not cond:
        raise IllegalMove(reason, detail)


def movable(state: GameState, territory: int) -> int:
    """Armies that may still leave ``territory`` by fortification."""
    return int(state.armies[territory] - state.locks[territory] - 1)


def check_move(state: GameState, move: Move) -> None:
    """Raise :class:`IllegalMove` unless ``move`` is legal in ``state``."""
    ph = state.phase
    me = state.current
    _require(ph != Phase.OVER, "game_over")
    n = state.map.n_territories
    if state.occupy is not None:
        _require(isinstance(move, Occupy), "occupy_pending", "conquest must be occupied first")
    if isinstance(move, Cash):
        _require(ph == Phase.CARDS, "wrong_phase", f"cannot cash in {ph.name}")
        _require(is_set(move.cards), "no_such_set", f"{move.cards} is not a set")
        _remove_cards(state.hands[me], move.cards)
    elif isinstance(move, Place):
        _require(ph in (Phase.CARDS, Phase.PLACING), "wrong_phase", f"cannot place in {ph.name}")
        _require(
            len(state.hands[me]) < FORCED_CASH_HAND,
            "forced_cash",
            "hand of five or more must be cashed",
        )
        _require(0 <= move.territory < n, "unknown_territory")
        _require(state.owner[move.territory] == me, "not_owner")
        _require(1 <= move.count <= state.pending, "bad_count", f"{move.count} of {state.pending}")
    elif isinstance(move, Attack):
        _require(ph == Phase.ATTACKING, "wrong_phase", f"cannot attack in {ph.name}")
        _require(0 <= move.src < n and 0 <= move.dst < n, "unknown_territory")
        _require(state.owner[move.src] == me, "not_owner")
        _require(state.owner[move.dst] != me, "own_territory")
        _require(bool(state.map.adjacency[move.src, move.dst]), "not_adjacent")
        _require(state.armies[move.src] >= 2, "insufficient_armies")
    elif isinstance(move, Occupy):
        _require(state.occupy is not None, "wrong_phase", "nothing to occupy")
        _, _, lo, hi = state.occupy
        _require(lo <= move.count <= hi, "bad_count", f"occupy {move.count} not in [{lo}, {hi}]")
    elif isinstance(move, Fortify):
        _require(ph == Phase.FORTIFYING, "wrong_phase", f"cannot fortify in {ph.name}")
        _require(0 <= move.src < n and 0 <= move.dst < n, "unknown_territory")
        _require(state.owner[move.src] == me and state.owner[move.dst] == me, "not_owner")
        _require(bool(state.map.adjacency[move.src, move.dst]), "not_adjacent")
        _require(move.count >= 1, "bad_count")
        _require(move.count <= state.armies[move.src] - 1, "insufficient_armies")
        _require(move.count <= movable(state, move.src), "locked_units")
    elif isinstance(move, EndAttacks):
        _require(ph == Phase.ATTACKING, "wrong_phase", f"cannot end attacks in {ph.name}")
    elif isinstance(move, EndTurn):
        _require(ph in (Phase.ATTACKING, Phase.FORTIFYING), "wrong_phase", f"cannot end turn in {ph.name}")
    else:
        raise IllegalMove("unknown_move", repr(move))


def is_legal(state: GameState, move: Move) -> bool:
    try:
        check_move(state, move)
    except IllegalMove:
        return False
    return True


def legal_moves(state: GameState) -> list[Move]:
    """Every legal move (placements and fortifications at every count)."""
    if state.phase == Phase.OVER:
        return []
    me = state.current
    nbrs = state.map.neighbours
    if state.occupy is not None:
        _, _, lo, hi = state.occupy
        return [Occupy(c) for c in range(lo, hi + 1)]
    moves: list[Move] = []
    if state.phase == Phase.CARDS:
        moves += [Cash(s) for s in cashable_sets(state.hands[me])]
    if state.phase in (Phase.CARDS, Phase.PLACING) and len(state.hands[me]) < FORCED_CASH_HAND:
        for t in state.territories_of(me):
            moves += [Place(int(t), c) for c in range(1, state.pending + 1)]
    if state.phase == Phase.ATTACKING:
        for t in state.territories_of(me):
            if state.armies[t] >= 2:
                moves += [Attack(int(t), j) for j in nbrs[t] if state.owner[j] != me]
        moves.append(EndAttacks())
        moves.append(EndTurn())
    if state.phase == Phase.FORTIFYING:
        for t in state.territories_of(me):
            m = movable(state, t)
            for j in nbrs[t]:
                if state.owner[j] == me:
                    moves += [Fortify(int(t), j, c) for c in range(1, m + 1)]
        moves.append(EndTurn())
    return moves


def attack_options(state: GameState) -> list[Attack]:
    me = state.current
    out = []
    for t in state.territories_of(me):
        if state.armies[t] >= 2:
            out += [Attack(int(t), j) for j in state.map.neighbours[t] if state.owner[j] != me]
    return out


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------


def _begin_turn(s: GameState, player: int) -> None:
    s.current = player
    s.phase = Phase.CARDS
    s.conquered = False
    s.locks[:] = 0
    s.pending = income(s, player)


def _after_battle(s: GameState, move: Attack, a_left: int, d_left: int) -> AttackResult:
    """Write battle survivors back into ``s`` (mutating) and settle conquest."""
    me = s.current
    victim = int(s.owner[move.dst])
    s.armies[move.src] = 1 + a_left
    if d_left > 0:
        s.armies[move.dst] = d_left
        return AttackResult(a_left, d_left, False)
    s.owner[move.dst] = me
    s.armies[move.dst] = 0
    s.conquered = True
    eliminated = None
    if not (s.owner == victim).any():
        eliminated = victim
        alive = list(s.alive)
        alive[victim] = False
        s.alive = tuple(alive)
        hands = list(s.hands)
        hands[me] = tuple(sorted(hands[me] + hands[victim]))
        hands[victim] = ()
        s.hands = tuple(hands)
        s.eliminated = s.eliminated + ((victim, s.turn),)
    if sum(s.alive) == 1:
        # Last opponent gone: the game ends on the spot, survivors walk in.
        s.armies[move.src] = 1
        s.armies[move.dst] = a_left
        s.phase = Phase.OVER
    else:
        s.occupy = (move.src, move.dst, min(3, a_left), a_left)
    return AttackResult(a_left, 0, True, eliminated)


def resolve_attack_dice(state: GameState, move: Attack, rng=None) -> tuple[GameState, AttackResult]:
    """Resolve ``move`` with real dice; ``rng`` defaults to the state's stream."""
    check_move(state, move)
    s = state.copy()
    if rng is None:
        rng = s.stream()
    a, d = int(s.armies[move.src]) - 1, int(s.armies[move.dst])
    a_left, d_left, rolls = roll_battle(a, d, rng)
    res = _after_battle(s, move, a_left, d_left)
    return s, replace(res, rolls=rolls)


def resolve_attack_imposed(state: GameState, move: Attack, terminal) -> GameState:
    """Apply a chosen terminal outcome without dice (search model only).

    ``terminal`` is anything with ``attacker_survivors`` and
    ``defender_survivors`` attributes, or an ``(a, d)`` pair.
    """
    check_move(state, move)
    if isinstance(terminal, tuple):
        a_left, d_left = terminal[:2]
    else:
        a_left, d_left = terminal.attacker_survivors, terminal.defender_survivors
    a, d = int(state.armies[move.src]) - 1, int(state.armies[move.dst])
    if (a_left > 0) == (d_left > 0) or not (0 <= a_left <= a and 0 <= d_left <= d):
        raise ValueError(f"({a_left}, {d_left}) is not a terminal state of a {a} v {d} battle")
    s = state.copy()
    _after_battle(s, move, a_left, d_left)
    return s


def apply_move(state: GameState, move: Move, rng=None) -> GameState:
    """Return the state after ``move``; attacks roll real dice."""
    if isinstance(move, Attack):
        return resolve_attack_dice(state, move, rng)[0]
    check_move(state, move)
    s = state.copy()
    me = s.current
    if isinstance(move, Cash):
        hands = list(s.hands)
        hands[me] = _remove_cards(hands[me], move.cards)
        s.hands = tuple(hands)
        s.pending += CASH_VALUE
        s.cash_count += 1
    elif isinstance(move, Place):
        s.armies[move.territory] += move.count
        s.pending -= move.count
        s.phase = Phase.ATTACKING if s.pending == 0 else Phase.PLACING
    elif isinstance(move, Occupy):
        src, dst, _, _ = s.occupy
        s.armies[src] -= move.count
        s.armies[dst] += move.count
        s.occupy = None
        if len(s.hands[me]) >= FORCED_CASH_HAND:
            s.phase = Phase.CARDS
    elif isinstance(move, Fortify):
        s.armies[move.src] -= move.count
        s.armies[move.dst] += move.count
        s.locks[move.dst] += move.count
    elif isinstance(move, EndAttacks):
        s.phase = Phase.FORTIFYING
    elif isinstance(move, EndTurn):
        if s.conquered:
            hands = list(s.hands)
            hands[me] = tuple(sorted(hands[me] + (_draw_card(s),)))
            s.hands = tuple(hands)
        nxt = (me + 1) % s.n_players
        while not s.alive[nxt]:
            nxt = (nxt + 1) % s.n_players
        s.turn += 1
        _begin_turn(s, nxt)
    return s


def winner(state: GameState) -> Optional[int]:
    owners = np.unique(state.owner)
    return int(owners[0]) if len(owners) == 1 else None


def check_invariants(state: GameState) -> None:
    """Assert the structural invariants of a state (used by tests and fuzzing)."""
    n = state.map.n_territories
    assert state.owner.shape == (n,) and state.armies.shape == (n,)
    held = np.ones(n, dtype=bool)
    if state.occupy is not None:
        held[state.occupy[1]] = False
        assert state.armies[state.occupy[1]] == 0
    assert (state.armies[held] >= 1).all(), "territory below one army"
    assert sum(state.alive) >= 1
    for t in range(n):
        assert state.alive[state.owner[t]], "territory owned by a dead player"
    for p in range(state.n_players):
        assert state.alive[p] == bool((state.owner == p).any())
    assert (state.locks >= 0).all() and (state.locks <= state.armies).all()
    if state.phase == Phase.PLACING:
        assert len(state.hands[state.current]) < FORCED_CASH_HAND
    assert state.pending >= 0


class Game:
    """Authoritative match: holds the true state and a replayable move log."""

    def __init__(self, state: GameState):
        self.state = state
        self.log: list[dict] = []
        self.turn_end_state: Optional[GameState] = None

    def submit(self, move: Move) -> Optional[AttackResult]:
        s = self.state
        entry = {"turn": s.turn, "player": s.current, "move": move_to_dict(move)}
        result = None
        if isinstance(move, Attack):
            self.state, result = resolve_attack_dice(s, move)
            entry["dice"] = [[list(a), list(d)] for a, d in result.rolls]
        else:
            self.state = apply_move(s, move)
            if isinstance(move, EndTurn):
                self.turn_end_state = s
        self.log.append(entry)
        return result

"""Network inputs for a turn end-state.

Global vector layout (``GLOBAL_DIM`` = 72)::

    [0:6]            current player, one-hot
    [6 + 5p + k]     player p: army fraction, income fraction, territory
                     fraction, card count, defence   (k = 0..4)
    [36 + 6c + p]    share of continent c's armies held by player p

Board vector per territory (``BOARD_DIM`` = 14)::

    [0:6]   owner one-hot
    [6]     armies / total armies on the board
    [7:13]  continent one-hot
    [13]    1 if adjacent to another continent
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .engine import GameState, income
from .maps import MapDef

PLAYER_SLOTS = 6
CONTINENT_SLOTS = 6
PER_PLAYER = 5
GLOBAL_DIM = PLAYER_SLOTS + PLAYER_SLOTS * PER_PLAYER + CONTINENT_SLOTS * PLAYER_SLOTS
BOARD_DIM = PLAYER_SLOTS + 1 + CONTINENT_SLOTS + 1
DEFENCE_CAP = 0.2
CARD_CAP = 8
STD_FLOOR = 1e-8

GLOBAL_ONE_HOT = np.zeros(GLOBAL_DIM, dtype=bool)
GLOBAL_ONE_HOT[:PLAYER_SLOTS] = True
BOARD_ONE_HOT = np.zeros(BOARD_DIM, dtype=bool)
BOARD_ONE_HOT[:PLAYER_SLOTS] = True
BOARD_ONE_HOT[PLAYER_SLOTS + 1 : PLAYER_SLOTS + 1 + CONTINENT_SLOTS] = True


def global_index(player: int, k: int) -> int:
    return PLAYER_SLOTS + PER_PLAYER * player + k


def continent_index(continent: int, player: int) -> int:
    return PLAYER_SLOTS * (1 + PER_PLAYER) + PLAYER_SLOTS * continent + player


@dataclass
class FeatureSet:
    glob: np.ndarray  # (GLOBAL_DIM,)
    board: np.ndarray  # (n_territories, BOARD_DIM)
    map: MapDef


@lru_cache(maxsize=None)
def _defence_regions(mapdef: MapDef) -> tuple:
    """Per continent, the in-continent component reached from each border territory."""
    out = []
    for members in mapdef.members:
        inside = set(members)
        regions = []
        for b in members:
            if not mapdef.is_border[b]:
                continue
            seen, stack = {b}, [b]
            while stack:
                t = stack.pop()
                for j in mapdef.neighbours[t]:
                    if j in inside and j not in seen:
                        seen.add(j)
                        stack.append(j)
            regions.append(np.array(sorted(seen)))
        out.append((np.array(members), regions))
    return tuple(out)


def defence_list(state: GameState, player: int) -> list[int]:
    """Garrison of the weakest enemy-facing territory behind each border."""
    if not state.alive[player]:
        raise ValueError(f"player {player} is dead")
    mine = state.owner == player
    enemy_facing = (state.map.adjacency & ~mine[None, :]).any(axis=1)
    picks = []
    for members, regions in _defence_regions(state.map):
        if not mine[members].all():
            continue
        for region in regions:
            cands = region[enemy_facing[region]]
            if len(cands):
                # argmin returns the first minimum, i.e. the lowest id.
                picks.append(int(state.armies[cands[np.argmin(state.armies[cands])]]))
    return sorted(picks)


def weighted_defence(garrisons: list[int], total_armies: int) -> float:
    n = len(garrisons)
    if n == 0:
        return 0.0
    weights = np.arange(n, 0, -1)
    return float(weights @ np.asarray(garrisons) / weights.sum() / total_armies)


def defence_value(state: GameState, player: int) -> float:
    value = weighted_defence(defence_list(state, player), state.total_armies())
    return min(value, DEFENCE_CAP)


def extract_global(state: GameState) -> np.ndarray:
    g = np.zeros(GLOBAL_DIM)
    g[state.current] = 1.0
    total = state.total_armies()
    n = state.map.n_territories
    incomes = np.zeros(PLAYER_SLOTS)
    for p in state.alive_players():
        incomes[p] = income(state, p)
    inc_total = incomes.sum()
    for p in state.alive_players():
        mine = state.owner == p
        base = global_index(p, 0)
        g[base] = state.armies[mine].sum() / total
        g[base + 1] = incomes[p] / inc_total
        g[base + 2] = mine.sum() / n
        g[base + 3] = min(len(state.hands[p]), CARD_CAP)
        g[base + 4] = defence_value(state, p)
    for c, members in enumerate(state.map.members):
        idx = list(members)
        armies = state.armies[idx]
        tot = armies.sum()
        if tot == 0:
            continue
        share = np.bincount(state.owner[idx], weights=armies, minlength=PLAYER_SLOTS)
        start = continent_index(c, 0)
        g[start : start + PLAYER_SLOTS] = share / tot
    return g


def extract_board(state: GameState) -> np.ndarray:
    m = state.map
    n = m.n_territories
    b = np.zeros((n, BOARD_DIM))
    rows = np.arange(n)
    b[rows, state.owner] = 1.0
    b[:, PLAYER_SLOTS] = state.armies / state.total_armies()
    b[rows, PLAYER_SLOTS + 1 + m.continent_of] = 1.0
    b[:, -1] = m.is_border
    return b


def extract(state: GameState) -> FeatureSet:
    return FeatureSet(extract_global(state), extract_board(state), state.map)


def extract_many(states) -> tuple[np.ndarray, np.ndarray]:
    """Raw features for a batch of same-map states: ``(B, GLOBAL_DIM), (B, n, BOARD_DIM)``.

    Vectorized over the batch; agrees with :func:`extract_global` and
    :func:`extract_board` applied one state at a time.
    """
    states = list(states)
    m = states[0].map
    n = m.n_territories
    B = len(states)
    owner = np.stack([s.owner for s in states])
    armies = np.stack([s.armies for s in states]).astype(np.float64)
    players = np.arange(PLAYER_SLOTS)
    onehot = (owner[:, :, None] == players).astype(np.float64)  # (B, n, 6)
    total = armies.sum(axis=1)

    board = np.zeros((B, n, BOARD_DIM))
    board[:, :, :PLAYER_SLOTS] = onehot
    board[:, :, PLAYER_SLOTS] = armies / total[:, None]
    board[:, np.arange(n), PLAYER_SLOTS + 1 + m.continent_of] = 1.0
    board[:, :, -1] = m.is_border

    member = np.zeros((n, CONTINENT_SLOTS))
    member[np.arange(n), m.continent_of] = 1.0
    sizes = member.sum(axis=0)
    counts = onehot.sum(axis=1)  # (B, 6)
    held = np.einsum("bnp,nc->bpc", onehot, member)
    holds = (held == sizes) & (sizes > 0)  # (B, 6, C)
    alive = counts > 0
    floor = states[0].rules.income_floor
    incomes = np.maximum(floor, counts // 3) + holds[:, :, : m.n_continents] @ m.bonuses
    incomes = np.where(alive, incomes, 0.0)
    hand = np.array([[min(len(h), CARD_CAP) for h in s.hands] + [0] * (PLAYER_SLOTS - len(s.hands)) for s in states])

    glob = np.zeros((B, GLOBAL_DIM))
    glob[np.arange(B), [s.current for s in states]] = 1.0
    per = glob[:, PLAYER_SLOTS : PLAYER_SLOTS * (1 + PER_PLAYER)].reshape(B, PLAYER_SLOTS, PER_PLAYER)
    per[:, :, 0] = np.einsum("bnp,bn->bp", onehot, armies) / total[:, None]
    per[:, :, 1] = incomes / incomes.sum(axis=1, keepdims=True)
    per[:, :, 2] = counts / n
    per[:, :, 3] = np.where(alive, hand, 0)
    for b, p in zip(*np.nonzero(holds.any(axis=2))):
        garrisons = defence_list(states[b], int(p))
        per[b, p, 4] = min(weighted_defence(garrisons, total[b]), DEFENCE_CAP)
    glob[:, PLAYER_SLOTS : PLAYER_SLOTS * (1 + PER_PLAYER)] = per.reshape(B, -1)

    cont = np.einsum("bnp,bn,nc->bcp", onehot, armies, member)
    ctot = cont.sum(axis=2, keepdims=True)
    share = np.divide(cont, ctot, out=np.zeros_like(cont), where=ctot > 0)
    glob[:, continent_index(0, 0):] = share.reshape(B, -1)
    return glob, board


@dataclass
class Normalizer:
    """Per-position standardisation; one-hot positions pass through."""

    g_mean: np.ndarray
    g_std: np.ndarray
    b_mean: np.ndarray
    b_std: np.ndarray
    defence_cap: float = DEFENCE_CAP

    @classmethod
    def identity(cls) -> "Normalizer":
        return cls(np.zeros(GLOBAL_DIM), np.ones(GLOBAL_DIM), np.zeros(BOARD_DIM), np.ones(BOARD_DIM))

    def apply(self, glob: np.ndarray, board: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (glob - self.g_mean) / self.g_std, (board - self.b_mean) / self.b_std

    def apply_set(self, fs: FeatureSet) -> FeatureSet:
        g, b = self.apply(fs.glob, fs.board)
        return FeatureSet(g, b, fs.map)


def _column_stats(x: np.ndarray, one_hot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = (x == x[0]).all(axis=0)
    mean[constant] = x[0, constant]
    std = np.maximum(std, STD_FLOOR)
    mean[one_hot] = 0.0
    std[one_hot] = 1.0
    return mean, std


def fit_normalizer(glob: np.ndarray, board: np.ndarray) -> Normalizer:
    """Fit on stacked raw features; board statistics pool all territories."""
    glob = np.asarray(glob)
    board = np.asarray(board)
    if len(glob) == 0:
        raise ValueError("cannot fit a normalizer on an empty dataset")
    g_mean, g_std = _column_stats(glob.reshape(-1, GLOBAL_DIM), GLOBAL_ONE_HOT)
    b_mean, b_std = _column_stats(board.reshape(-1, BOARD_DIM), BOARD_ONE_HOT)
    return Normalizer(g_mean, g_std, b_mean, b_std)

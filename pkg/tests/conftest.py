from __future__ import annotations

import time
from contextlib import contextmanager

import numpy as np
import pytest

from risktd.engine import Card, GameState, Phase, Rules, income
from risktd.features import extract_many, fit_normalizer
from risktd.maps import classic_map, make_map
from risktd.network import init_params


def square_map():
    """Four territories on a cycle with one diagonal, two bonus-free continents."""
    return make_map([0, 0], [0, 0, 1, 1], [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], name="square")


def make_state(mapdef, owner, armies, current=0, players=None, phase=Phase.CARDS, hands=None, rules=None, seed=0):
    """Hand-built position; ``pending`` is the current player's income when placing."""
    owner = np.asarray(owner, dtype=np.int64)
    players = players or int(owner.max()) + 1
    rules = rules or Rules()
    alive = tuple(bool((owner == p).any()) for p in range(players))
    s = GameState(
        map=mapdef,
        n_players=players,
        owner=owner,
        armies=np.asarray(armies, dtype=np.int64),
        hands=tuple(tuple(sorted(h)) for h in hands) if hands else ((),) * players,
        phase=phase,
        current=current,
        pending=0,
        locks=np.zeros(len(owner), dtype=np.int64),
        alive=alive,
        seed=seed,
        draws=1,
        rules=rules,
    )
    if phase in (Phase.CARDS, Phase.PLACING):
        s.pending = income(s, current)
    return s


def random_hand(rng, max_cards=4):
    n = int(rng.integers(0, max_cards + 1))
    return tuple(Card(int(c)) for c in rng.choice(4, size=n, p=[14 / 44, 14 / 44, 14 / 44, 2 / 44]))


def random_square_position(rng, players=2, max_armies=6):
    m = square_map()
    while True:
        owner = rng.integers(0, players, size=4)
        if (owner == 0).any() and len(set(owner.tolist())) == players:
            break
    armies = rng.integers(1, max_armies + 1, size=4)
    hands = [random_hand(rng)] + [()] * (players - 1)
    return make_state(m, owner, armies, players=players, hands=hands, seed=int(rng.integers(1 << 30)))


def random_model(mapdef, seed=0, states=None):
    """Random-weight network; the normalizer is fitted on ``states`` when given."""
    params = init_params(seed, mapdef)
    if states:
        g, b = extract_many(states)
        params.normalizer = fit_normalizer(g, b)
    return params


@pytest.fixture(scope="session")
def classic():
    return classic_map()


@pytest.fixture(scope="session")
def square():
    return square_map()


@pytest.fixture(scope="session")
def bot_states(classic):
    """Turn end-states from two short bot matches (shared, read only)."""
    from risktd.agents import AggressorBot, ClustererBot, RandomBot, TurtleBot
    from risktd.arena import run_match

    out = []
    for seed in (1, 2):
        bots = [RandomBot(), AggressorBot(), ClustererBot(), TurtleBot(), RandomBot(), AggressorBot()]
        out += run_match(bots, seed, keep_log=False).end_states
    return out


@pytest.fixture(scope="session")
def classic_model(classic, bot_states):
    return random_model(classic, seed=3, states=bot_states)


def toy_cycle_map():
    return make_map([0], [0, 0, 0, 0], [(0, 1), (1, 2), (2, 3), (3, 0)], name="cycle4")


def toy_episode(rng, mapdef, n_states=6):
    """Two-player episode on a 4-cycle where the eventual winner always holds the army lead."""
    from risktd.td import Episode

    w = int(rng.integers(2))
    states = []
    for t in range(n_states):
        while True:
            owner = rng.integers(0, 2, size=4)
            if 0 < (owner == w).sum() < 4:
                break
        armies = np.ones(4, dtype=np.int64)
        mine, theirs = np.flatnonzero(owner == w), np.flatnonzero(owner != w)
        np.add.at(armies, mine[rng.integers(len(mine), size=int(rng.integers(8, 20)))], 1)
        np.add.at(armies, theirs[rng.integers(len(theirs), size=int(rng.integers(1, 5)))], 1)
        states.append(make_state(mapdef, owner, armies, current=t % 2, players=2, phase=Phase.FORTIFYING))
    g, b = extract_many(states)
    rewards = np.zeros(6)
    rewards[w] = 1.0
    return Episode(g, b, rewards, [None, None, 0, 0, 0, 0], False, mapdef)


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion in the terminal summary.

ACCEPTANCE: dict = {}


@contextmanager
def criterion(number: int, title: str, limit_s: float | None = None):
    """Record a criterion's outcome; ``note`` collects the measured values."""
    note: dict = {}
    start = time.perf_counter()
    ok = False
    try:
        yield note
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        if ok and limit_s is not None and elapsed >= limit_s:
            ok = False
            note["runtime_limit"] = f"{limit_s:g}s exceeded"
        detail = ", ".join(f"{k}={v}" for k, v in note.items())
        ACCEPTANCE[number] = (title, ok, f"{elapsed:.1f}s", detail)
    assert ok, f"criterion {number} exceeded its runtime limit"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, elapsed, detail = ACCEPTANCE[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title} [{elapsed}]"
        terminalreporter.write_line(line + (f"  {detail}" if detail else ""))

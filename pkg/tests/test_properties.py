"""Property-based checks of the invariants, driven by hypothesis."""
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from risktd.battle import build_terminal_table, select_index
from risktd.engine import (
    Card,
    Phase,
    apply_move,
    cashable_sets,
    check_invariants,
    income,
    legal_moves,
    new_game,
)
from risktd.features import DEFENCE_CAP, defence_value, extract_board, extract_global, global_index
from risktd.maps import classic_map
from risktd.network import forward, init_params
from risktd.search import SearchConfig, border_territories, gen_occupy_splits, gen_place_moves
from risktd.td import eligibility_sums

from conftest import random_square_position, square_map
from oracles import markov_terminals

FAST = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
seeds = st.integers(0, 2**31 - 1)


# -- battles -----------------------------------------------------------------------


@FAST
@given(st.integers(1, 25), st.integers(1, 25))
def test_table_is_a_distribution(A, D):
    t = build_terminal_table(A, D)
    assert sum(e.probability for e in t.entries) == 1
    assert all(e.probability > 0 for e in t.entries)
    assert all((e.attacker_survivors == 0) != (e.defender_survivors == 0) for e in t.entries)
    keys = [(e.attacker_survivors, e.defender_survivors) for e in t.entries]
    # defender-first order: defender wins by margin, then attacker wins by margin
    assert keys == sorted(keys, key=lambda k: (k[0], -k[1]))


@FAST
@given(st.integers(1, 9), st.integers(1, 9))
def test_table_matches_lattice(A, D):
    ref = markov_terminals(A, D)
    t = build_terminal_table(A, D)
    assert {(e.attacker_survivors, e.defender_survivors): e.probability for e in t.entries} == ref


@FAST
@given(st.integers(1, 15), st.integers(1, 15), st.floats(0, 1), st.floats(0, 1))
def test_selection_monotone(A, D, r1, r2):
    t = build_terminal_table(A, D)
    lo, hi = sorted((r1, r2))
    assert select_index(t, lo) <= select_index(t, hi)


@FAST
@given(st.integers(1, 14), st.integers(1, 14))
def test_conquest_dominance(A, D):
    p = build_terminal_table(A, D).conquest_probability()
    assert build_terminal_table(A + 1, D).conquest_probability() >= p
    assert build_terminal_table(A, D + 1).conquest_probability() <= p
    assert isinstance(p, Fraction)


# -- engine ------------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(seeds, seeds)
def test_random_play_keeps_invariants(game_seed, choice_seed):
    rng = np.random.default_rng(choice_seed)
    s = new_game(classic_map(), 6, 20, seed=game_seed)
    for _ in range(150):
        if s.phase == Phase.OVER:
            break
        options = legal_moves(s)
        s = apply_move(s, options[int(rng.integers(len(options)))])
        check_invariants(s)
        assert (s.locks <= s.armies).all()


@FAST
@given(st.lists(st.sampled_from(list(Card)), max_size=8))
def test_cashable_sets_are_sets(hand):
    hand = tuple(sorted(hand))
    for s in cashable_sets(hand):
        assert len(s) == 3
        rest = list(hand)
        for c in s:
            rest.remove(c)
    if len(hand) >= 5:
        assert cashable_sets(hand)


@FAST
@given(seeds)
def test_income_floor(seed):
    s = random_square_position(np.random.default_rng(seed), players=3)
    for p in s.alive_players():
        assert income(s, p) >= s.rules.income_floor


# -- features ----------------------------------------------------------------------


@FAST
@given(seeds)
def test_feature_partitions(seed):
    s = random_square_position(np.random.default_rng(seed), players=3)
    g = extract_global(s)
    assert sum(g[global_index(p, 0)] for p in range(6)) == pytest.approx(1.0)
    assert sum(g[global_index(p, 2)] for p in range(6)) == pytest.approx(1.0)
    b = extract_board(s)
    assert (b[:, :6].sum(axis=1) == 1).all()
    assert ((0 <= b[:, 6]) & (b[:, 6] <= 1)).all()


@FAST
@given(seeds, st.integers(2, 5))
def test_defence_bounded_and_scale_free(seed, k):
    s = random_square_position(np.random.default_rng(seed), players=2)
    for p in s.alive_players():
        v = defence_value(s, p)
        assert 0 <= v <= DEFENCE_CAP
        scaled = s.copy()
        scaled.armies = s.armies * k
        assert defence_value(scaled, p) == pytest.approx(v)


# -- network and training ----------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_forward_pure(seed):
    rng = np.random.default_rng(seed)
    p = init_params(seed % 1000, square_map(), gcn1=4, gcn2=3, fc1=4, fc2=4, fc3=3)
    g, b = rng.normal(size=72), rng.normal(size=(4, 14))
    g0, b0 = g.copy(), b.copy()
    assert (forward(p, g, b) == forward(p, g, b)).all()
    assert (g == g0).all() and (b == b0).all()


@FAST
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=12), st.floats(0, 1))
def test_eligibility_recursion(ds, lam):
    d = np.array(ds)[:, None]
    c = eligibility_sums(d, lam)[:, 0]
    n = len(ds)
    for t in range(n):
        assert c[t] == pytest.approx(sum(lam ** (j - t) * ds[j] for j in range(t, n)), abs=1e-9)


# -- search ------------------------------------------------------------------------


@FAST
@given(st.integers(1, 200), st.integers(3, 12))
def test_occupy_splits_in_range(survivors, ga):
    out = gen_occupy_splits(survivors, SearchConfig(ga=ga))
    assert out[0] == min(3, survivors) and out[-1] == survivors
    assert out == sorted(set(out))
    assert len(out) <= ga


@FAST
@given(seeds, st.integers(1, 14), st.integers(1, 4), st.integers(2, 3))
def test_place_bundles(seed, pending, gp, tp):
    s = random_square_position(np.random.default_rng(seed), players=2)
    s.phase = Phase.PLACING
    s.pending = pending
    front = set(border_territories(s, 0)) or set(int(t) for t in s.territories_of(0))
    bundles = gen_place_moves(s, SearchConfig(gp=gp, tp=tp))
    assert len({tuple(b) for b in bundles}) == len(bundles)
    for b in bundles:
        assert sum(m.count for m in b) == pending
        assert {m.territory for m in b} <= front
        assert len(b) <= tp

"""Acceptance suite: one test per criterion, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py`` for criteria 1-8 and 10; the
end-to-end skill run (criterion 9) is marked slow and needs ``-m slow``.
The terminal summary lists one PASS/FAIL line per criterion.
"""
import json
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from risktd.agents import AggressorBot, ClustererBot, RandomBot, SearchAgent, TurtleBot
from risktd.arena import generate_dataset, match_log_lines, replay_match, run_match, tournament
from risktd.battle import build_terminal_table, dice_distribution
from risktd.engine import roll_battle
from risktd.maps import classic_map
from risktd.network import forward, init_params, output_gradient
from risktd.search import SearchConfig, bfs_search, gen_attack_moves
from risktd.td import mean_abs_td, td0_update, td1_update, td_lambda_update, train

from conftest import criterion, make_state, random_square_position, toy_cycle_map, toy_episode
from oracles import defender_first, dice_losses, fd_gradient, markov_terminals
from test_engine import fuzz
from test_network import SMALL, perturbed, random_inputs, toy_map
from test_search import exhaustive_agrees, square_model
from test_td import random_episode


def test_criterion_1_dice_exactness():
    with criterion(1, "dice distributions equal exhaustive enumeration", limit_s=1) as note:
        pairs = [(1, 1), (2, 1), (3, 1), (1, 2), (2, 2), (3, 2)]
        for na, nd in pairs:
            got = {(o.attacker_losses, o.defender_losses): o.probability for o in dice_distribution(na, nd)}
            assert got == dice_losses(na, nd), (na, nd)
        spot = {(o.attacker_losses, o.defender_losses): o.probability for o in dice_distribution(3, 2)}
        assert spot == {(0, 2): Fraction(2890, 7776), (1, 1): Fraction(2611, 7776), (2, 0): Fraction(2275, 7776)}
        note["pairings"] = len(pairs)


def test_criterion_2_terminal_tables():
    with criterion(2, "terminal tables equal the lattice oracle for A, D <= 12", limit_s=10) as note:
        checked = 0
        for A in range(1, 13):
            for D in range(1, 13):
                table = build_terminal_table(A, D)
                ref = markov_terminals(A, D)
                order = [k for k in defender_first(A, D) if k in ref]
                assert [(e.attacker_survivors, e.defender_survivors) for e in table.entries] == order
                assert all(e.probability == ref[e.attacker_survivors, e.defender_survivors] for e in table.entries)
                checked += 1
        note["tables"] = checked


def test_criterion_3_dice_vs_table():
    with criterion(3, "10^6 true-dice battles from (5,3) within 3 SE", limit_s=60) as note:
        n = 10**6
        rng = np.random.default_rng(20240607)
        counts: dict = {}
        for _ in range(n):
            a, d, _ = roll_battle(5, 3, rng)
            counts[a, d] = counts.get((a, d), 0) + 1
        table = build_terminal_table(5, 3)
        assert set(counts) <= {(e.attacker_survivors, e.defender_survivors) for e in table.entries}
        worst = 0.0
        for e in table.entries:
            p = e.p
            se = np.sqrt(p * (1 - p) / n)
            z = abs(counts.get((e.attacker_survivors, e.defender_survivors), 0) / n - p) / se
            worst = max(worst, z)
        note["max_z"] = f"{worst:.2f}"
        assert worst < 3


def test_criterion_4_gradients():
    with criterion(4, "analytic gradients vs central differences", limit_s=60) as note:
        rng = np.random.default_rng(4)
        worst = 0.0
        pairs = 0
        for trial in range(100):
            m = toy_map(n=int(rng.integers(3, 7)), seed=trial)
            p = perturbed(init_params(trial, m, **SMALL), rng, scale=0.5)
            g, b = random_inputs(rng, m.n_territories)
            pairs += 1
            for k in range(6):
                grad = output_gradient(p, g, b, k)
                for name, w in p.weights.items():
                    for _ in range(2):
                        idx = tuple(int(rng.integers(s)) for s in w.shape)
                        num = fd_gradient(lambda: forward(p, g, b)[k], w, idx, eps=1e-5)
                        ana = grad[name][idx]
                        scale = max(abs(num), abs(ana))
                        if scale < 1e-7:
                            assert abs(num - ana) < 1e-9
                            continue
                        worst = max(worst, abs(num - ana) / scale)
        note["pairs"] = pairs
        note["max_rel_err"] = f"{worst:.2e}"
        assert worst < 1e-4


def test_criterion_5_td_reductions():
    with criterion(5, "TD(lambda) reduces to TD(0) and TD(1)", limit_s=60) as note:
        rng = np.random.default_rng(5)
        worst = 0.0
        for i in range(50):
            m = toy_map(seed=i)
            p = perturbed(init_params(i, m, **SMALL), rng, scale=0.5)
            ep = random_episode(rng, m)
            for got, want in (
                (td_lambda_update(ep, p, 0.0, 0.5), td0_update(ep, p, 0.5)),
                (td_lambda_update(ep, p, 1.0, 0.5), td1_update(ep, p, 0.5)),
            ):
                for k in got:
                    scale = max(np.abs(got[k]).max(), np.abs(want[k]).max())
                    if scale > 0:
                        worst = max(worst, np.abs(got[k] - want[k]).max() / scale)
        note["episodes"] = 50
        note["max_rel_err"] = f"{worst:.1e}"
        assert worst < 1e-10


def test_criterion_6_toy_learning():
    with criterion(6, "toy-map TD(0.8) halves held-out mean |d|", limit_s=300) as note:
        m = toy_cycle_map()
        rng = np.random.default_rng(0)
        tr = [toy_episode(rng, m) for _ in range(300)]
        held = [toy_episode(rng, m) for _ in range(100)]
        params, _ = train(tr, lam=0.8, alpha=0.5, epochs=3, seed=0, mapdef=m)
        untrained = init_params(0, m)
        untrained.normalizer = params.normalizer
        held = [e.normalized(params.normalizer) for e in held]
        before, after = mean_abs_td(held, untrained), mean_abs_td(held, params)
        note["before"] = f"{before:.4f}"
        note["after"] = f"{after:.4f}"
        note["reduction"] = f"{1 - after / before:.1%}"
        assert after <= 0.5 * before


def test_criterion_7_exhaustive_search():
    with criterion(7, "search reaches the brute-force optimum on the toy map", limit_s=300) as note:
        rng = np.random.default_rng(7)
        models = [square_model(s) for s in range(4)]
        for i in range(100):
            state = random_square_position(rng, players=int(rng.integers(2, 4)), max_armies=9)
            got, want = exhaustive_agrees(state, models[i % 4])
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12), i
        note["positions"] = 100


def test_criterion_8_engine_soundness():
    with criterion(8, "10,000-move fuzz and bit-identical replay", limit_s=60) as note:
        games = fuzz(classic_map(), 10_000, seed=8)
        note["games"] = games + 1
        bots = [AggressorBot(), ClustererBot(), TurtleBot(), RandomBot(), AggressorBot(), RandomBot()]
        a = run_match(bots, 88)
        b = run_match([x.clone() for x in bots], 88)
        assert a.log == b.log and match_log_lines(a) == match_log_lines(b)
        assert all(x == y for x, y in zip(a.end_states, b.end_states)) and len(a.end_states) == len(b.end_states)
        lines = match_log_lines(a)
        _, ends = replay_match(json.loads(lines[0]), [json.loads(x) for x in lines[1:]])
        assert len(ends) == len(a.end_states) and all(x == y for x, y in zip(ends, a.end_states))
        note["replayed_moves"] = len(a.log)


def endgame_positions(rng, count):
    """Classic-map positions where player 0 holds >= 95% of the armies and can conquer now."""
    m = classic_map()
    out = []
    cfg = SearchConfig()
    while len(out) < count:
        enemies = int(rng.integers(1, 4))
        owner = np.zeros(42, dtype=np.int64)
        held = rng.choice(42, size=int(rng.integers(1, 8)), replace=False)
        owner[held] = rng.integers(1, enemies + 1, size=len(held))
        armies = rng.integers(8, 30, size=42)
        armies[held] = rng.integers(1, 4, size=len(held))
        players = int(owner.max()) + 1
        s = make_state(m, owner, armies, players=players)
        if s.army_share(0) < 0.95:
            continue
        s.phase = s.phase.ATTACKING
        s.pending = 0
        if any(t.attacker_survivors >= 1 for _, t in gen_attack_moves(s, cfg)):
            out.append(make_state(m, owner, armies, players=players))
    return out


def test_criterion_10_endgame_switch(classic_model):
    with criterion(10, "endgame search always takes a territory", limit_s=300) as note:
        rng = np.random.default_rng(10)
        cfg = SearchConfig(search_time=None, node_budget=500)
        gains = []
        for s in endgame_positions(rng, 50):
            res = bfs_search(s, classic_model, cfg)
            gain = int((res.state.owner == 0).sum() - (s.owner == 0).sum())
            gains.append(gain)
        note["positions"] = len(gains)
        note["min_gain"] = min(gains)
        assert len(gains) == 50 and min(gains) >= 1


# ---------------------------------------------------------------------------
# Long-running end-to-end skill evaluation
# ---------------------------------------------------------------------------

SKILL_MATCHES = 200
SKILL_TRAIN_MATCHES = 200
SKILL_NODE_BUDGET = 500


def report_every(label, step=10):
    start = time.perf_counter()

    def progress(k, rec):
        if k % step == 0:
            print(f"{label}: {k} matches, {time.perf_counter() - start:.0f}s", flush=True)

    return progress


@pytest.mark.slow
def test_criterion_9_end_to_end_skill(tmp_path):
    with criterion(9, "trained agent beats random and scripted rosters") as note:
        t0 = time.perf_counter()
        m = classic_map()
        records = generate_dataset(SKILL_TRAIN_MATCHES, seed=0)
        episodes = [r.to_episode(m) for r in records]
        params, report = train(episodes, lam=0.8, alpha=0.5, epochs=3, seed=0, mapdef=m)
        note["train_states"] = sum(len(e) for e in episodes)
        note["train_mean_abs_d"] = "/".join(f"{x:.4f}" for x in report.mean_abs_d)
        note["train_s"] = f"{time.perf_counter() - t0:.0f}"
        print(f"\ntrained on {note['train_states']} states in {note['train_s']}s", flush=True)
        cfg = SearchConfig(search_time=None, node_budget=SKILL_NODE_BUDGET)
        agent = SearchAgent(params, cfg)

        randoms = [agent] + [RandomBot() for _ in range(5)]
        vs_random = tournament(randoms, SKILL_MATCHES, seed=1, progress=report_every("vs random"))
        wins = int(vs_random.wins[0])
        p_random = stats.binomtest(wins, SKILL_MATCHES, 1 / 6, alternative="greater").pvalue
        note["vs_random"] = f"{wins}/{SKILL_MATCHES}"
        note["p_random"] = f"{p_random:.1e}"

        roster = [agent, AggressorBot(), ClustererBot(), TurtleBot(), RandomBot(), RandomBot()]
        vs_scripted = tournament(roster, SKILL_MATCHES, seed=2, progress=report_every("vs scripted"))
        wins2 = int(vs_scripted.wins[0])
        p_scripted = stats.binomtest(wins2, SKILL_MATCHES, 1 / 6, alternative="greater").pvalue
        note["vs_scripted"] = f"{wins2}/{SKILL_MATCHES}"
        note["p_scripted"] = f"{p_scripted:.1e}"
        note["endgame_ratio"] = f"{vs_scripted.endgame_ratio(0):.3f}"
        (tmp_path / "vs_random.tsv").write_text(vs_random.table())
        (tmp_path / "vs_scripted.tsv").write_text(vs_scripted.table())
        print("\nvs random\n" + vs_random.table() + "\n\nvs scripted\n" + vs_scripted.table())

        assert wins / SKILL_MATCHES >= 0.30 and p_random < 0.001
        assert p_scripted < 0.05

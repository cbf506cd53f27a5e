"""Generate a small dataset, train the evaluator briefly and pit it against random bots.

A desk-scale run: a handful of matches and one epoch, so expect a weak agent.
The acceptance suite's slow test does the same thing at full size.
"""
import numpy as np

from risktd.agents import RandomBot, SearchAgent
from risktd.arena import generate_dataset, tournament
from risktd.maps import classic_map
from risktd.search import SearchConfig
from risktd.td import train

m = classic_map()
records = generate_dataset(6, seed=0)
episodes = [r.to_episode(m) for r in records]
print(f"{len(records)} matches, {sum(len(e) for e in episodes)} turn end-states")

params, report = train(episodes, lam=0.8, alpha=0.5, epochs=1, seed=0, mapdef=m)
print("mean |d| per epoch:", np.round(report.mean_abs_d, 4))

agent = SearchAgent(params, SearchConfig(search_time=None, node_budget=60))
stats = tournament([agent] + [RandomBot() for _ in range(5)], 3, seed=1)
print(stats.table())

"""Exact battle odds and what the Risky knob picks from them.

    python demos/battle_odds.py 7 5
"""
import sys

from risktd.battle import build_terminal_table, select_index

attackers, defenders = (int(x) for x in sys.argv[1:3]) if len(sys.argv) > 2 else (7, 5)
table = build_terminal_table(attackers, defenders)
print(f"{attackers} attacking armies v {defenders} defenders")
print(f"conquest probability {float(table.conquest_probability()):.4f}")
for i, e in enumerate(table.entries):
    print(f"  {i:2d}  attacker left {e.attacker_survivors:2d}  defender left {e.defender_survivors:2d}  p={e.p:.4f}")

# Risky is a quantile over the defender-first ordering: low values plan for bad luck.
for risky in (0.1, 0.3, 0.5, 0.9):
    e = table.entries[select_index(table, risky)]
    print(f"risky={risky:.1f} plans for a={e.attacker_survivors} d={e.defender_survivors}")

"""Play a scripted-bot match, write its log and replay it bit-for-bit."""
import tempfile
from pathlib import Path

from risktd.agents import AggressorBot, ClustererBot, RandomBot, TurtleBot
from risktd.arena import read_match_log, replay_match, run_match, write_match_log

rec = run_match([AggressorBot(), ClustererBot(), TurtleBot(), RandomBot(), AggressorBot(), TurtleBot()], seed=3)
print(f"winner seat {rec.winner} ({rec.roster[rec.winner]}) after {rec.turns} turns, {len(rec.log)} moves")
print("placements:", [rec.roster[p] for p in rec.placements])

with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "match.jsonl"
    write_match_log(path, rec)
    header, entries = read_match_log(path)
    _, ends = replay_match(header, entries)
print("replay identical:", len(ends) == len(rec.end_states) and all(a == b for a, b in zip(ends, rec.end_states)))

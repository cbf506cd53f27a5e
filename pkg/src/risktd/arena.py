"""Matches, training datasets and tournaments."""
from __future__ import annotations

import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from .agents import Agent, BASELINE_BOTS
from .engine import (
    Attack,
    Card,
    EndTurn,
    Game,
    GameState,
    IllegalMove,
    Phase,
    Rules,
    move_from_dict,
    new_game,
    winner,
)
from .features import extract_many
from .maps import MapDef, classic_map, parse_map
from .td import Episode

log = logging.getLogger(__name__)

DATASET_MAGIC = "risktd-episodes"
DATASET_VERSION = 1
MATCH_LOG_MAGIC = "risktd-match"
MATCH_LOG_VERSION = 1


@dataclass
class MatchRecord:
    seed: int
    roster: list
    end_states: list = field(repr=False)
    placements: list
    winner: Optional[int]
    turns: int
    truncated: bool
    log: list = field(default_factory=list, repr=False)
    error: Optional[str] = None
    rules: Rules = field(default_factory=Rules, repr=False)
    map: Optional[MapDef] = field(default=None, repr=False)

    @property
    def aborted(self) -> bool:
        return self.error is not None

    def death_turns(self) -> list:
        out = []
        for p in range(len(self.roster)):
            out.append(next((i for i, s in enumerate(self.end_states) if not s.alive[p]), None))
        return out


def placements(state: GameState, truncated: bool) -> list[int]:
    """Seats from first to last: winner or cap survivors, then reverse elimination order."""
    alive = state.alive_players()
    ranked = sorted(
        alive,
        key=lambda p: (-int((state.owner == p).sum()), -int(state.armies[state.owner == p].sum()), p),
    )
    dead = [p for p, _ in reversed(state.eliminated)]
    return ranked + dead


def run_match(
    agents: list[Agent],
    seed: int,
    mapdef: Optional[MapDef] = None,
    rules: Optional[Rules] = None,
    keep_log: bool = True,
) -> MatchRecord:
    """Play one match with true dice; one end-state is kept per player turn."""
    mapdef = mapdef or classic_map()
    rules = rules or Rules()
    state = new_game(mapdef, len(agents), rules.armies_per_player, seed, rules)
    game = Game(state)
    for seat, a in enumerate(agents):
        a.reset(seat, seed)
    end_states = []
    error = None
    while game.state.phase != Phase.OVER and game.state.turn < rules.turn_cap:
        before = len(game.log)
        seat = game.state.current
        try:
            agents[seat].take_turn(game)
        except IllegalMove as exc:
            error = f"seat {seat} ({agents[seat].name}): {exc}"
            log.warning("match %d aborted: %s", seed, error)
            break
        # The turn end-state is the position just before control passes on.
        end_states.append(_turn_end(game, before))
    final = game.state
    truncated = final.phase != Phase.OVER
    record = MatchRecord(
        seed=seed,
        roster=[a.name for a in agents],
        end_states=end_states,
        placements=placements(final, truncated),
        winner=None if truncated else winner(final),
        turns=len(end_states),
        truncated=truncated,
        log=game.log if keep_log else [],
        error=error,
        rules=rules,
        map=mapdef,
    )
    return record


def _turn_end(game: Game, start: int) -> GameState:
    if game.state.phase == Phase.OVER:
        return game.state
    return game.turn_end_state


# ---------------------------------------------------------------------------
# Match logs
# ---------------------------------------------------------------------------


class ReplayMismatch(RuntimeError):
    """A replayed match diverged from its log."""


def match_log_lines(rec: MatchRecord) -> list[str]:
    """JSON lines: one header, then one line per submitted move (with dice for attacks)."""
    mapdef = rec.map or classic_map()
    header = {
        "format": MATCH_LOG_MAGIC,
        "version": MATCH_LOG_VERSION,
        "seed": rec.seed,
        "players": len(rec.roster),
        "roster": list(rec.roster),
        "rules": rec.rules.__dict__,
        "map": mapdef.to_text(),
        "winner": rec.winner,
        "truncated": rec.truncated,
        "placements": rec.placements,
        "error": rec.error,
    }
    return [json.dumps(header)] + [json.dumps(e) for e in rec.log]


def write_match_log(path: str | Path, rec: MatchRecord) -> None:
    Path(path).write_text("\n".join(match_log_lines(rec)) + "\n")


def read_match_log(path: str | Path) -> tuple[dict, list[dict]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty match log")
    header = json.loads(lines[0])
    if header.get("format") != MATCH_LOG_MAGIC:
        raise ValueError(f"{path}: not a match log")
    if header.get("version") != MATCH_LOG_VERSION:
        raise ValueError(f"{path}: match log version {header.get('version')} unsupported")
    return header, [json.loads(ln) for ln in lines[1:]]


def replay_match(header: dict, entries: list[dict]) -> tuple[Game, list[GameState]]:
    """Re-run a logged match move by move; returns the game and its turn end-states.

    Dice come from the state's own seeded stream, so a faithful replay
    reproduces every logged roll; any divergence raises :class:`ReplayMismatch`.
    """
    mapdef = parse_map(header["map"])
    rules = Rules(**header["rules"])
    game = Game(new_game(mapdef, header["players"], rules.armies_per_player, header["seed"], rules))
    end_states = []
    for i, e in enumerate(entries):
        if (e["turn"], e["player"]) != (game.state.turn, game.state.current):
            raise ReplayMismatch(f"entry {i}: logged turn/player {e['turn']}/{e['player']}, "
                                 f"replay at {game.state.turn}/{game.state.current}")
        move = move_from_dict(e["move"])
        game.submit(move)
        if isinstance(move, Attack) and game.log[-1].get("dice") != e.get("dice"):
            raise ReplayMismatch(f"entry {i}: dice differ from the log")
        if isinstance(move, EndTurn):
            end_states.append(game.turn_end_state)
        elif game.state.phase == Phase.OVER:
            end_states.append(game.state)
    return game, end_states


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass
class EpisodeRecord:
    """Raw turn end-states of one match in compact array form."""

    owner: np.ndarray  # (N, n) int8
    armies: np.ndarray  # (N, n) int32
    hands: np.ndarray  # (N, players, 4) card counts
    current: np.ndarray  # (N,)
    rewards: np.ndarray  # (players,)
    death_turn: list
    truncated: bool
    seed: int = 0
    roster: tuple = ()

    def __len__(self):
        return len(self.owner)

    @classmethod
    def from_match(cls, rec: MatchRecord) -> "EpisodeRecord":
        states = rec.end_states
        players = len(rec.roster)
        hands = np.zeros((len(states), players, 4), dtype=np.int8)
        for i, s in enumerate(states):
            for p, h in enumerate(s.hands):
                for c in h:
                    hands[i, p, int(c)] += 1
        rewards = np.zeros(players)
        if rec.winner is not None:
            rewards[rec.winner] = 1.0
        return cls(
            owner=np.array([s.owner for s in states], dtype=np.int8),
            armies=np.array([s.armies for s in states], dtype=np.int32),
            hands=hands,
            current=np.array([s.current for s in states], dtype=np.int8),
            rewards=rewards,
            death_turn=rec.death_turns(),
            truncated=rec.truncated,
            seed=rec.seed,
            roster=tuple(rec.roster),
        )

    def states(self, mapdef: MapDef, rules: Optional[Rules] = None) -> list[GameState]:
        rules = rules or Rules()
        players = self.hands.shape[1]
        n = mapdef.n_territories
        out = []
        for i in range(len(self)):
            owner = self.owner[i].astype(np.int64)
            hands = tuple(
                tuple(Card(c) for c in range(4) for _ in range(int(self.hands[i, p, c])))
                for p in range(players)
            )
            alive = tuple(bool((owner == p).any()) for p in range(players))
            out.append(
                GameState(
                    map=mapdef, n_players=players, owner=owner,
                    armies=self.armies[i].astype(np.int64), hands=hands,
                    phase=Phase.FORTIFYING, current=int(self.current[i]), pending=0,
                    locks=np.zeros(n, dtype=np.int64), alive=alive, seed=0, rules=rules,
                )
            )
        return out

    def to_episode(self, mapdef: MapDef, rules: Optional[Rules] = None) -> Episode:
        glob, board = extract_many(self.states(mapdef, rules))
        return Episode(glob, board, self.rewards.copy(), list(self.death_turn), self.truncated, mapdef)


def generate_dataset(
    n_matches: int,
    seed: int = 0,
    bots: Optional[list[str]] = None,
    mapdef: Optional[MapDef] = None,
    rules: Optional[Rules] = None,
    players: int = 6,
) -> list[EpisodeRecord]:
    """Round-robin-seated matches among the baseline bots."""
    if n_matches < 1:
        raise ValueError("need at least one match")
    bots = bots or list(BASELINE_BOTS)
    out = []
    for m in range(n_matches):
        roster = [BASELINE_BOTS[bots[(m + s) % len(bots)]]() for s in range(players)]
        rec = run_match(roster, seed=_match_seed(seed, m), mapdef=mapdef, rules=rules, keep_log=False)
        if rec.aborted:
            log.warning("skipping aborted match %d: %s", m, rec.error)
            continue
        if len(rec.end_states) >= 2:
            out.append(EpisodeRecord.from_match(rec))
    return out


def _match_seed(seed: int, index: int) -> int:
    return int(np.random.default_rng([seed, index]).integers(2**31))


def save_dataset(path: str | Path, records: list[EpisodeRecord], meta: Optional[dict] = None) -> str:
    """Write a checksummed dataset file; refuses to overwrite. Returns the sha256."""
    path = Path(path)
    if path.exists():
        raise FileExistsError(f"{path} exists; dataset files are write-once")
    arrays = {}
    index = []
    for i, r in enumerate(records):
        for k in ("owner", "armies", "hands", "current", "rewards"):
            arrays[f"{i}_{k}"] = getattr(r, k)
        index.append({"death_turn": r.death_turn, "truncated": r.truncated, "seed": r.seed, "roster": list(r.roster)})
    header = {"format": DATASET_MAGIC, "version": DATASET_VERSION, "episodes": index, "meta": meta or {}}
    arrays["header"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez_compressed(buf, **arrays)
    body = buf.getvalue()
    digest = hashlib.sha256(body).hexdigest()
    path.write_bytes(body)
    Path(str(path) + ".sha256").write_text(digest + "\n")
    return digest


def load_dataset(path: str | Path) -> tuple[list[EpisodeRecord], dict]:
    path = Path(path)
    body = path.read_bytes()
    sums = Path(str(path) + ".sha256")
    if sums.exists() and sums.read_text().strip() != hashlib.sha256(body).hexdigest():
        raise ValueError(f"{path}: checksum mismatch")
    with np.load(io.BytesIO(body)) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("format") != DATASET_MAGIC:
            raise ValueError(f"{path}: not an episode dataset")
        if header.get("version") != DATASET_VERSION:
            raise ValueError(f"{path}: dataset version {header.get('version')} unsupported")
        records = []
        for i, e in enumerate(header["episodes"]):
            records.append(
                EpisodeRecord(
                    owner=z[f"{i}_owner"], armies=z[f"{i}_armies"], hands=z[f"{i}_hands"],
                    current=z[f"{i}_current"], rewards=z[f"{i}_rewards"],
                    death_turn=e["death_turn"], truncated=e["truncated"],
                    seed=e["seed"], roster=tuple(e["roster"]),
                )
            )
    return records, header["meta"]


# ---------------------------------------------------------------------------
# Tournaments
# ---------------------------------------------------------------------------


def seat_roster(entries: list, seats: int = 6) -> list:
    """Fill ``seats`` by cycling ``entries``."""
    if not entries or len(entries) > seats:
        raise ValueError(f"roster needs 1..{seats} agents")
    return [entries[i % len(entries)] for i in range(seats)]


def entry_labels(agents: list[Agent]) -> list[str]:
    labels, counts = [], {}
    for a in agents:
        counts[a.name] = counts.get(a.name, 0) + 1
        labels.append(a.name if counts[a.name] == 1 else f"{a.name}#{counts[a.name]}")
    return labels


def _play(args):
    agents, seed, mapdef, rules, keep_log = args
    rec = run_match(agents, seed, mapdef, rules, keep_log=keep_log)
    rec.end_states = []
    return rec


@dataclass
class TournamentStats:
    labels: list
    rank_counts: np.ndarray  # (entries, seats)
    wins: np.ndarray
    n: np.ndarray  # matches played per entry
    truncated: int
    aborted: int
    seat_counts: np.ndarray  # (entries, seats)

    @property
    def rank_probs(self) -> np.ndarray:
        return self.rank_counts / self.n[:, None]

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.rank_probs, axis=1)

    @property
    def win_rate(self) -> np.ndarray:
        return self.wins / self.n

    def win_ci(self, i: int, level: float = 0.95) -> tuple[float, float]:
        ci = stats.binomtest(int(self.wins[i]), int(self.n[i])).proportion_ci(level, method="wilson")
        return ci.low, ci.high

    def win_pvalue(self, i: int, share: float | None = None) -> float:
        share = share if share is not None else 1.0 / self.rank_counts.shape[1]
        return stats.binomtest(int(self.wins[i]), int(self.n[i]), share, alternative="greater").pvalue

    def endgame_ratio(self, i: int) -> float:
        p1, p2 = self.rank_probs[i, 0], self.rank_probs[i, 1]
        return float(p1 / (p1 + p2)) if p1 + p2 > 0 else float("nan")

    def records(self) -> list[dict]:
        out = []
        for i, lab in enumerate(self.labels):
            lo, hi = self.win_ci(i)
            out.append({
                "agent": lab,
                "n": int(self.n[i]),
                "wins": int(self.wins[i]),
                "win_rate": float(self.win_rate[i]),
                "win_ci95": [lo, hi],
                "rank_probs": [float(x) for x in self.rank_probs[i]],
                "rank_counts": [int(x) for x in self.rank_counts[i]],
                "cumulative": [float(x) for x in self.cumulative[i]],
                # None when the agent never finished first or second.
                "endgame_ratio": None if np.isnan(self.endgame_ratio(i)) else self.endgame_ratio(i),
            })
        return out

    def table(self, sep: str = "\t") -> str:
        seats = self.rank_counts.shape[1]
        head = ["agent", "n", "wins", "win%", "ci_low", "ci_high"] + [f"p{r + 1}" for r in range(seats)] + ["p1/(p1+p2)"]
        rows = [sep.join(head)]
        for r in self.records():
            rows.append(sep.join(
                [r["agent"], str(r["n"]), str(r["wins"]), f"{100 * r['win_rate']:.1f}",
                 f"{r['win_ci95'][0]:.3f}", f"{r['win_ci95'][1]:.3f}"]
                + [f"{p:.3f}" for p in r["rank_probs"]] + ["nan" if r["endgame_ratio"] is None else f"{r['endgame_ratio']:.3f}"]
            ))
        return "\n".join(rows)


def tournament(
    agents: list[Agent],
    n_matches: int,
    seed: int = 0,
    mapdef: Optional[MapDef] = None,
    rules: Optional[Rules] = None,
    seats: int = 6,
    workers: int = 1,
    progress=None,
    keep_logs: bool = False,
) -> TournamentStats:
    """Rotate a roster of at most ``seats`` agents through every seat.

    Match ``m`` seats entry ``(s + m) mod seats`` in seat ``s``, so each entry
    visits each seat equally often over a full cycle.  ``progress(k, record)``
    is called once per finished match, in match order.
    """
    entries = seat_roster(agents, seats)
    labels = entry_labels(entries)
    jobs = []
    for m in range(n_matches):
        order = [(s + m) % seats for s in range(seats)]
        roster = [entries[i].clone() for i in order]
        for a, i in zip(roster, order):
            a.name = labels[i]
        jobs.append(((roster, _match_seed(seed, m), mapdef, rules, keep_logs), order))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_play, [j for j, _ in jobs]))
        if progress:
            for k, rec in enumerate(results):
                progress(k + 1, rec)
    else:
        results = []
        for k, (j, _) in enumerate(jobs):
            results.append(_play(j))
            if progress:
                progress(k + 1, results[-1])
    rank_counts = np.zeros((seats, seats), dtype=int)
    seat_counts = np.zeros((seats, seats), dtype=int)
    wins = np.zeros(seats, dtype=int)
    n = np.zeros(seats, dtype=int)
    truncated = aborted = 0
    for rec, (_, order) in zip(results, jobs):
        if rec.aborted:
            aborted += 1
            continue
        truncated += rec.truncated
        for seat, entry in enumerate(order):
            seat_counts[entry, seat] += 1
            n[entry] += 1
        for rank, seat in enumerate(rec.placements):
            rank_counts[order[seat], rank] += 1
        if rec.winner is not None:
            wins[order[rec.winner]] += 1
    return TournamentStats(labels, rank_counts, wins, n, truncated, aborted, seat_counts)

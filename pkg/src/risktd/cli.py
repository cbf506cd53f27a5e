"""Command line front end.

Every subcommand reads its parameters from three layers: built-in defaults,
an optional JSON ``--config`` file, then explicit flags.  ``--format jsonl``
switches output to one JSON object per line.  Errors exit with status 1,
usage errors with status 2.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

DEFAULTS = {
    # rules
    "players": 6,
    "income_floor": 3,
    "armies": 20,
    "turn_cap": 400,
    # attack model
    "risky": 0.3,
    "cap": 50,
    # search
    "tp": 2,
    "gp": 3,
    "ga": 3,
    "gf": 10,
    "search_time": 10.0,
    "node_budget": None,
    "endgame_threshold": 0.95,
    "min_depth": 1,
    # features / network
    "defence_cap": 0.2,
    "gcn1": 60,
    "gcn2": 30,
    "fc1": 60,
    "fc2": 60,
    "fc3": 30,
    # training
    "lambda": 0.8,
    "alpha": 0.5,
    "epochs": 3,
    "rho": 0.9,
    "eps": 1e-6,
    "batch": "episode",
    # data and tournaments
    "matches": 200,
    "bots": "random,aggressor,clusterer,turtle",
    "agents": "dad,random,random,random,random,random",
    "n": 100,
    "seed": 0,
    "workers": 1,
    "model": None,
}


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# Parameter resolution
# ---------------------------------------------------------------------------


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(f"config file {path} not found")
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path}: invalid JSON ({exc})")
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path}: expected a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        raise CliError(f"config file {path}: unknown keys {', '.join(unknown)}")
    if cfg.get("defence_cap", DEFAULTS["defence_cap"]) != DEFAULTS["defence_cap"]:
        raise CliError("defence_cap is fixed at 0.2; models are trained against that cap")
    return cfg


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and explicit flags (flags win)."""
    params = dict(DEFAULTS)
    params.update(load_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    return params


def make_rules(p: dict):
    from .engine import Rules

    try:
        return Rules(income_floor=p["income_floor"], armies_per_player=p["armies"], turn_cap=p["turn_cap"])
    except ValueError as exc:
        raise CliError(str(exc))


def make_search_config(p: dict):
    from .search import SearchConfig

    try:
        return SearchConfig(
            risky=p["risky"], tp=p["tp"], gp=p["gp"], ga=p["ga"], gf=p["gf"],
            search_time=p["search_time"], node_budget=p["node_budget"],
            endgame_threshold=p["endgame_threshold"], min_depth=p["min_depth"],
        )
    except ValueError as exc:
        raise CliError(str(exc))


def load_model(path):
    from .network import ModelFileError, load

    if path is None:
        raise CliError("a model file is required (--model)")
    if not Path(path).is_file():
        raise CliError(f"model file {path} not found")
    try:
        return load(path)
    except ModelFileError as exc:
        raise CliError(f"model file {path}: {exc}")


def emit(args, human: str, record: dict | list | None = None) -> None:
    if args.format == "jsonl":
        for r in record if isinstance(record, list) else [record]:
            if r is not None:
                print(json.dumps(r))
    else:
        print(human)


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------


def build_agent(name: str, p: dict, cache=None):
    """``dad`` (needs a model), a baseline bot name, or a JSON agent spec file."""
    from .agents import BASELINE_BOTS, SearchAgent

    if name.endswith(".json"):
        spec = json.loads(Path(name).read_text())
        merged = dict(p)
        merged.update({k: v for k, v in spec.items() if k in DEFAULTS})
        agent = SearchAgent(load_model(spec["model"]), make_search_config(merged), cache, name=spec.get("name", "dad"))
        return agent
    if name == "dad":
        return SearchAgent(load_model(p["model"]), make_search_config(p), cache)
    if name in BASELINE_BOTS:
        return BASELINE_BOTS[name]()
    raise CliError(f"unknown agent {name!r} (choose dad, {', '.join(BASELINE_BOTS)}, or an agent spec .json)")


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args, p):
    from .arena import generate_dataset, save_dataset

    rules = make_rules(p)
    bots = _names(p["bots"])
    from .agents import BASELINE_BOTS

    for b in bots:
        if b not in BASELINE_BOTS:
            raise CliError(f"unknown bot {b!r}")
    records = generate_dataset(p["matches"], p["seed"], bots, rules=rules, players=p["players"])
    meta = {"matches": p["matches"], "seed": p["seed"], "bots": bots, "rules": rules.__dict__}
    try:
        digest = save_dataset(args.out, records, meta)
    except FileExistsError as exc:
        raise CliError(str(exc))
    states = sum(len(r) for r in records)
    truncated = sum(r.truncated for r in records)
    emit(
        args,
        f"wrote {args.out}: {len(records)} episodes, {states} turn end-states, "
        f"{truncated} truncated, sha256 {digest}",
        {"out": str(args.out), "episodes": len(records), "states": states, "truncated": truncated, "sha256": digest},
    )


def cmd_train(args, p):
    from .arena import load_dataset
    from .maps import classic_map
    from .network import save
    from .td import train

    if Path(args.out).exists() and not args.force:
        raise CliError(f"{args.out} exists (use --force to overwrite)")
    try:
        records, meta = load_dataset(args.data)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read dataset {args.data}: {exc}")
    if not records:
        raise CliError("dataset is empty")
    if not 0 <= p["lambda"] <= 1:
        raise CliError("lambda must be in [0, 1]")
    mapdef = classic_map()
    rules = make_rules(p)
    episodes = [r.to_episode(mapdef, rules) for r in records]
    sizes = {k: p[k] for k in ("gcn1", "gcn2", "fc1", "fc2", "fc3")}
    params, report = train(
        episodes, lam=p["lambda"], alpha=p["alpha"], epochs=p["epochs"], seed=p["seed"],
        mapdef=mapdef, rho=p["rho"], eps=p["eps"], batch=p["batch"], **sizes,
    )
    save(params, args.out)
    lines = [f"epoch {i}: mean |d| = {v:.5f}" for i, v in enumerate(report.mean_abs_d)]
    emit(
        args,
        "\n".join(lines + [f"wrote {args.out}"]),
        [{"epoch": i, "mean_abs_d": v} for i, v in enumerate(report.mean_abs_d)] + [{"out": str(args.out)}],
    )


def cmd_agent(args, p):
    load_model(p["model"])
    cfg = make_search_config(p)
    spec = {"name": args.name, "model": str(Path(p["model"]).resolve())}
    spec.update({k: getattr(cfg, k) for k in ("risky", "tp", "gp", "ga", "gf", "search_time", "node_budget", "endgame_threshold", "min_depth")})
    if args.out:
        Path(args.out).write_text(json.dumps(spec, indent=2) + "\n")
    emit(args, json.dumps(spec, indent=2) + (f"\nwrote {args.out}" if args.out else ""), spec)


def cmd_tournament(args, p):
    from .arena import tournament, write_match_log
    from .battle import table_cache

    names = _names(p["agents"])
    if not 1 <= len(names) <= p["players"]:
        raise CliError(f"need 1..{p['players']} agents")
    cache = table_cache(p["cap"], p["cap"], precompute=False)
    agents = [build_agent(n, p, cache) for n in names]
    rules = make_rules(p)

    def progress(k, rec):
        if args.progress:
            print(f"[{k}/{p['n']}] seed {rec.seed} winner {rec.winner} turns {rec.turns}", file=sys.stderr)

    log_dir = Path(args.log_dir) if args.log_dir else None
    if log_dir:
        log_dir.mkdir(parents=True, exist_ok=True)

    def on_record(k, rec):
        progress(k, rec)
        if log_dir:
            write_match_log(log_dir / f"match_{k:05d}.jsonl", rec)

    stats = tournament(
        agents, p["n"], p["seed"], rules=rules, seats=p["players"], workers=p["workers"],
        progress=on_record, keep_logs=log_dir is not None,
    )
    table = stats.table()
    summary = f"matches {p['n']}, truncated {stats.truncated}, aborted {stats.aborted}"
    if args.out:
        out = Path(args.out)
        if args.format == "jsonl":
            out.write_text("".join(json.dumps(r) + "\n" for r in stats.records()))
        else:
            out.write_text(table + "\n")
    emit(args, table + "\n" + summary, stats.records() + [{"matches": p["n"], "truncated": stats.truncated, "aborted": stats.aborted}])


def cmd_battle_table(args, p):
    from .battle import build_terminal_table, format_table, select_index

    if args.attackers < 1 or args.defenders < 1:
        raise CliError("attackers and defenders must be at least 1")
    if not 0 <= p["risky"] <= 1:
        raise CliError("risky must be in [0, 1]")
    table = build_terminal_table(args.attackers, args.defenders)
    k = select_index(table, p["risky"])
    records = [
        {"index": i, "attacker_survivors": e.attacker_survivors, "defender_survivors": e.defender_survivors,
         "p": str(e.probability), "p_float": e.p, "selected": i == k}
        for i, e in enumerate(table.entries)
    ]
    emit(args, format_table(table, p["risky"]), records)


def cmd_features(args, p):
    from .arena import read_match_log, replay_match
    from .features import BOARD_DIM, GLOBAL_DIM, extract

    header, entries = _read_log(args.log)
    _, end_states = replay_match(header, entries)
    if not 0 <= args.turn < len(end_states):
        raise CliError(f"turn {args.turn} out of range (log has {len(end_states)} turn end-states)")
    fs = extract(end_states[args.turn])
    if args.format == "jsonl":
        print(json.dumps({"turn": args.turn, "global": fs.glob.tolist()}))
        for t, row in enumerate(fs.board):
            print(json.dumps({"territory": t, "board": row.tolist()}))
        return
    np.set_printoptions(precision=4, suppress=True, linewidth=120)
    print(f"turn {args.turn}  global ({GLOBAL_DIM}):")
    print(fs.glob)
    print(f"board ({fs.board.shape[0]} x {BOARD_DIM}):")
    names = [t.name for t in fs.map.territories]
    for t, row in enumerate(fs.board):
        print(f"{t:2d} {names[t]:<24} {row}")


def _read_log(path):
    from .arena import read_match_log

    try:
        return read_match_log(path)
    except FileNotFoundError:
        raise CliError(f"match log {path} not found")
    except (ValueError, json.JSONDecodeError) as exc:
        raise CliError(str(exc))


def cmd_replay(args, p):
    from .arena import ReplayMismatch, placements, replay_match
    from .engine import IllegalMove, winner

    header, entries = _read_log(args.log)
    try:
        game, end_states = replay_match(header, entries)
    except (ReplayMismatch, IllegalMove) as exc:
        raise CliError(f"replay diverged: {exc}")
    final = game.state
    rec = {
        "moves": len(entries),
        "turn_end_states": len(end_states),
        "winner": winner(final),
        "logged_winner": header.get("winner"),
        "placements": placements(final, final.phase.name != "OVER"),
        "consistent": winner(final) == header.get("winner"),
    }
    if not rec["consistent"]:
        raise CliError(f"replay winner {rec['winner']} differs from logged {rec['logged_winner']}")
    emit(args, f"replayed {rec['moves']} moves over {rec['turn_end_states']} turns; "
               f"winner {rec['winner']}; placements {rec['placements']}", rec)


def cmd_play(args, p):
    from .agents import HumanAgent
    from .arena import run_match, write_match_log
    from .battle import table_cache

    names = _names(args.opponents)
    players = p["players"]
    if len(names) != players - 1:
        names = [names[i % len(names)] for i in range(players - 1)]
    if not 0 <= args.seat < players:
        raise CliError(f"seat must be in 0..{players - 1}")
    cache = table_cache(p["cap"], p["cap"], precompute=False)
    agents = [build_agent(n, p, cache) for n in names]
    agents.insert(args.seat, HumanAgent("human"))
    rec = run_match(agents, p["seed"], rules=make_rules(p))
    if args.log:
        write_match_log(args.log, rec)
    emit(args, f"winner seat {rec.winner}; placements {rec.placements}; turns {rec.turns}",
         {"winner": rec.winner, "placements": rec.placements, "turns": rec.turns})


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _rules_flags(sp):
    sp.add_argument("--players", type=int)
    sp.add_argument("--income-floor", dest="income_floor", type=int)
    sp.add_argument("--armies", type=int, help="starting armies per player")
    sp.add_argument("--turn-cap", dest="turn_cap", type=int)


def _search_flags(sp):
    sp.add_argument("--model")
    sp.add_argument("--risky", type=float)
    sp.add_argument("--tp", type=int)
    sp.add_argument("--gp", type=int)
    sp.add_argument("--ga", type=int)
    sp.add_argument("--gf", type=int)
    sp.add_argument("--search-time", dest="search_time", type=float)
    sp.add_argument("--node-budget", dest="node_budget", type=int)
    sp.add_argument("--endgame-threshold", dest="endgame_threshold", type=float)
    sp.add_argument("--min-depth", dest="min_depth", type=int, help="attack levels searched past the budget")
    sp.add_argument("--cap", type=int, help="battle table cache cap")


def _common(suppress: bool) -> argparse.ArgumentParser:
    # Subcommands repeat the global options; SUPPRESS keeps them from
    # resetting a value given before the subcommand name.
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="JSON file of parameter overrides")
    common.add_argument("--format", choices=["human", "jsonl"], default=d("human"))
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    ap = argparse.ArgumentParser(prog="risktd", parents=[_common(suppress=False)], description="Risk agent toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-data", parents=[common], help="generate a training dataset from bot matches")
    sp.add_argument("--out", required=True)
    sp.add_argument("--matches", type=int)
    sp.add_argument("--bots")
    sp.add_argument("--seed", type=int)
    _rules_flags(sp)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", parents=[common], help="train the evaluation network by TD(lambda)")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true")
    sp.add_argument("--lambda", dest="lambda", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--batch", choices=["episode", "epoch"])
    for k in ("gcn1", "gcn2", "fc1", "fc2", "fc3"):
        sp.add_argument(f"--{k}", type=int)
    _rules_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("agent", parents=[common], help="check a model and write a search-agent spec")
    _search_flags(sp)
    sp.add_argument("--name", default="dad")
    sp.add_argument("--out", help="write the agent spec JSON here")
    sp.set_defaults(func=cmd_agent)

    sp = sub.add_parser("tournament", parents=[common], help="seat-rotated tournament with placement statistics")
    sp.add_argument("--agents")
    sp.add_argument("-n", type=int, dest="n")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", help="write the stats table (or JSON lines with --format jsonl)")
    sp.add_argument("--log-dir", help="write one JSONL match log per match here")
    sp.add_argument("--progress", action="store_true")
    _search_flags(sp)
    _rules_flags(sp)
    sp.set_defaults(func=cmd_tournament)

    sp = sub.add_parser("battle-table", parents=[common], help="print the terminal outcome table of an A vs D battle")
    sp.add_argument("attackers", type=int)
    sp.add_argument("defenders", type=int)
    sp.add_argument("--risky", type=float)
    sp.set_defaults(func=cmd_battle_table)

    sp = sub.add_parser("features", parents=[common], help="dump the features of a logged turn end-state")
    sp.add_argument("log")
    sp.add_argument("turn", type=int)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("play", parents=[common], help="play in the terminal against a roster")
    sp.add_argument("--opponents", default="random")
    sp.add_argument("--seat", type=int, default=0)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--log", help="write the match log here")
    _search_flags(sp)
    _rules_flags(sp)
    sp.set_defaults(func=cmd_play)

    sp = sub.add_parser("replay", parents=[common], help="replay a match log and verify it")
    sp.add_argument("log")
    sp.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        params = resolve(args)
        args.func(args, params)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

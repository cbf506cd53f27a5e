"""Plain-text board rendering and move parsing for the terminal player."""
from __future__ import annotations

from .engine import (
    Attack,
    Card,
    Cash,
    EndAttacks,
    EndTurn,
    Fortify,
    GameState,
    Occupy,
    Place,
)


def describe_state(state: GameState) -> str:
    m = state.map
    lines = [
        f"turn {state.turn}  player {state.current}  phase {state.phase.name}"
        f"  to place {state.pending}",
        "hand: " + (" ".join(Card(c).name.lower() for c in state.hands[state.current]) or "-"),
    ]
    if state.occupy is not None:
        src, dst, lo, hi = state.occupy
        lines.append(f"occupy {m.territories[dst].name} from {m.territories[src].name}: {lo}..{hi}")
    for c in m.continents:
        lines.append(f"-- {c.name} (+{c.bonus})")
        for t in m.members[c.id]:
            lock = f" locked {state.locks[t]}" if state.locks[t] else ""
            lines.append(
                f"  {t:2d} {m.territories[t].name:<24} p{state.owner[t]} {state.armies[t]:4d}{lock}"
            )
    return "\n".join(lines)


def _territory(token: str, state: GameState) -> int:
    if token.lstrip("-").isdigit():
        return int(token)
    return state.map.territory_id(token)


def parse_move(text: str, state: GameState):
    """Parse ``place 3 5``, ``attack 3 4``, ``occupy 3``, ``fortify 3 4 2``,
    ``cash infantry cavalry wild``, ``end`` (ends attacks) or ``pass`` (ends turn)."""
    parts = text.split()
    if not parts:
        raise ValueError("empty move")
    cmd, args = parts[0].lower(), parts[1:]
    try:
        if cmd == "place":
            return Place(_territory(args[0], state), int(args[1]))
        if cmd == "attack":
            return Attack(_territory(args[0], state), _territory(args[1], state))
        if cmd == "occupy":
            return Occupy(int(args[0]))
        if cmd == "fortify":
            return Fortify(_territory(args[0], state), _territory(args[1], state), int(args[2]))
        if cmd == "cash":
            return Cash(tuple(sorted(Card[a.upper()] for a in args)))
    except (IndexError, KeyError) as exc:
        raise ValueError(f"cannot parse {text!r}") from exc
    if cmd == "end":
        return EndAttacks()
    if cmd == "pass":
        return EndTurn()
    raise ValueError(f"unknown command {cmd!r}")

"""Board definitions and the plain-text map format.

A map file is line oriented. Blank lines and ``#`` comments are ignored::

    version 1
    continent <id> <name> <bonus>
    territory <id> <name> <continent id>
    edge <id> <id>

Ids must be dense and start at zero. The classic world map ships with the
package and is available through :func:`classic_map`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

MAP_FORMAT_VERSION = 1


class MapError(ValueError):
    """Raised when a map file is malformed or violates a board invariant."""


@dataclass(frozen=True)
class Continent:
    id: int
    name: str
    bonus: int


@dataclass(frozen=True)
class Territory:
    id: int
    name: str
    continent: int


@dataclass(frozen=True, eq=False)
class MapDef:
    """Static board: territories, continents and the adjacency graph.

    Derived lookup tables (neighbour lists, adjacency matrix, continent
    membership) are built once at construction and shared by every game
    that uses the map.
    """

    territories: tuple[Territory, ...]
    continents: tuple[Continent, ...]
    edges: tuple[tuple[int, int], ...]
    name: str = "custom"
    neighbours: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    adjacency: np.ndarray = field(init=False, repr=False)
    continent_of: np.ndarray = field(init=False, repr=False)
    members: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    bonuses: np.ndarray = field(init=False, repr=False)
    is_border: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        validate(self.territories, self.continents, self.edges)
        n = len(self.territories)
        adj = np.zeros((n, n), dtype=bool)
        for a, b in self.edges:
            adj[a, b] = adj[b, a] = True
        adj.setflags(write=False)
        cont = np.array([t.continent for t in self.territories], dtype=np.int64)
        cont.setflags(write=False)
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(adj[i])) for i in range(n))
        members = tuple(
            tuple(int(i) for i in np.flatnonzero(cont == c.id)) for c in self.continents
        )
        bonuses = np.array([c.bonus for c in self.continents], dtype=np.int64)
        bonuses.setflags(write=False)
        border = np.array(
            [any(cont[j] != cont[i] for j in nbrs[i]) for i in range(n)], dtype=bool
        )
        border.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "adjacency", adj)
        set_(self, "neighbours", nbrs)
        set_(self, "continent_of", cont)
        set_(self, "members", members)
        set_(self, "bonuses", bonuses)
        set_(self, "is_border", border)

    @property
    def n_territories(self) -> int:
        return len(self.territories)

    @property
    def n_continents(self) -> int:
        return len(self.continents)

    def territory_id(self, name: str) -> int:
        for t in self.territories:
            if t.name == name:
                return t.id
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"version {MAP_FORMAT_VERSION}"]
        lines += [f"continent {c.id} {c.name} {c.bonus}" for c in self.continents]
        lines += [f"territory {t.id} {t.name} {t.continent}" for t in self.territories]
        lines += [f"edge {a} {b}" for a, b in self.edges]
        return "\n".join(lines) + "\n"


def validate(territories, continents, edges) -> None:
    n = len(territories)
    if n == 0:
        raise MapError("map has no territories")
    if [t.id for t in territories] != list(range(n)):
        raise MapError("territory ids must be 0..n-1 in order")
    if [c.id for c in continents] != list(range(len(continents))):
        raise MapError("continent ids must be 0..k-1 in order")
    for c in continents:
        if c.bonus < 0:
            raise MapError(f"continent {c.name} has negative bonus")
    used = set()
    for t in territories:
        if not 0 <= t.continent < len(continents):
            raise MapError(f"territory {t.name} references unknown continent {t.continent}")
        used.add(t.continent)
    if len(used) != len(continents):
        raise MapError("every continent needs at least one territory")
    seen = set()
    for a, b in edges:
        if not (0 <= a < n and 0 <= b < n):
            raise MapError(f"edge ({a}, {b}) references unknown territory")
        if a == b:
            raise MapError(f"self loop on territory {a}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise MapError(f"duplicate edge {key}")
        seen.add(key)


def parse_map(text: str, name: str = "custom") -> MapDef:
    version = None
    continents: list[Continent] = []
    territories: list[Territory] = []
    edges: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        try:
            if kind == "version":
                version = int(args[0])
            elif kind == "continent":
                continents.append(Continent(int(args[0]), args[1], int(args[2])))
            elif kind == "territory":
                territories.append(Territory(int(args[0]), args[1], int(args[2])))
            elif kind == "edge":
                edges.append((int(args[0]), int(args[1])))
            else:
                raise MapError(f"line {lineno}: unknown record {kind!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, MapError):
                raise
            raise MapError(f"line {lineno}: cannot parse {raw!r}") from exc
    if version is None:
        raise MapError("missing version line")
    if version != MAP_FORMAT_VERSION:
        raise MapError(f"unsupported map format version {version}")
    return MapDef(tuple(territories), tuple(continents), tuple(edges), name=name)


def load_map(path: str | Path) -> MapDef:
    path = Path(path)
    return parse_map(path.read_text(), name=path.stem)


@lru_cache(maxsize=None)
def classic_map() -> MapDef:
    text = resources.files("risktd").joinpath("data/classic.map").read_text()
    return parse_map(text, name="classic")


def make_map(continent_bonuses, territory_continents, edges, name="toy") -> MapDef:
    """Build a small map in code; names are generated."""
    continents = tuple(Continent(i, f"C{i}", b) for i, b in enumerate(continent_bonuses))
    territories = tuple(
        Territory(i, f"T{i}", c) for i, c in enumerate(territory_continents)
    )
    return MapDef(territories, continents, tuple(map(tuple, edges)), name=name)

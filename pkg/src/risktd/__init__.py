"""Risk-playing agent toolkit.

Modules:

* :mod:`risktd.maps`      map definitions and the bundled classic map
* :mod:`risktd.engine`    rules engine (state, legality, income, cards, combat)
* :mod:`risktd.battle`    exact battle outcome tables and risky-quantile selection
* :mod:`risktd.features`  network inputs and normalization
* :mod:`risktd.network`   graph-convolutional evaluation network, gradients, model files
* :mod:`risktd.td`        TD(lambda) training with Adadelta
* :mod:`risktd.search`    breadth-first turn search and the resync playing loop
* :mod:`risktd.agents`    scripted bots, the search agent and a terminal player
* :mod:`risktd.arena`     matches, datasets, match logs and tournaments
"""

__version__ = "0.1.0"

from .battle import build_terminal_table, dice_distribution, select_terminal
from .engine import GameState, Rules, apply_move, new_game
from .maps import classic_map

__all__ = [
    "GameState",
    "Rules",
    "apply_move",
    "build_terminal_table",
    "classic_map",
    "dice_distribution",
    "new_game",
    "select_terminal",
]

"""Temporal-difference training of the evaluation network.

Time steps are whole player turns.  For player ``p`` the temporal error is
``d[t, p] = J(x[t+1])_p - J(x[t])_p`` with two substitutions for the
successor value: 0 when ``p`` is dead in ``x[t+1]``, and the terminal reward
on the last step of a completed match.  Terms at or after a player's death
are dropped.

The weight update is the offline form of TD(lambda)::

    dw = alpha * sum_p sum_t grad J(x[t])_p * sum_{j>=t} lambda^(j-t) d[j, p]

computed as one vector-Jacobian product per state.  Updates are applied
through Adadelta.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import network
from .features import fit_normalizer
from .maps import MapDef
from .network import NetworkParams

log = logging.getLogger(__name__)


@dataclass
class Episode:
    """Feature-form turn end-states of one match plus its outcome.

    ``death_turn[p]`` is the index of the first state in which ``p`` is
    dead (``None`` if it never dies).  Seats that never took part should be
    given ``death_turn = 0``.
    """

    glob: np.ndarray  # (N, GLOBAL_DIM)
    board: np.ndarray  # (N, n, BOARD_DIM)
    rewards: np.ndarray  # (6,)
    death_turn: list
    truncated: bool = False
    mapdef: Optional[MapDef] = None

    def __len__(self) -> int:
        return len(self.glob)

    def normalized(self, normalizer) -> "Episode":
        g, b = normalizer.apply(self.glob, self.board)
        return Episode(g, b, self.rewards, self.death_turn, self.truncated, self.mapdef)

    def active(self) -> np.ndarray:
        """``(N-1, 6)`` mask of (t, p) terms that take part in learning."""
        n_steps = len(self) - 1
        mask = np.ones((n_steps, len(self.rewards)), dtype=bool)
        for p, dt in enumerate(self.death_turn):
            if dt is not None:
                mask[dt:, p] = False
        return mask


def _check(episode: Episode) -> None:
    if len(episode) < 2:
        raise ValueError("episode needs at least two states")
    if not episode.truncated and not np.isin(episode.rewards, (0, 1)).all():
        raise ValueError("completed episodes need 0/1 rewards")


def td_errors(episode: Episode, params: NetworkParams, values: np.ndarray | None = None) -> np.ndarray:
    """``(N-1, 6)`` temporal errors; inactive entries are zero."""
    _check(episode)
    J = network.forward(params, episode.glob, episode.board) if values is None else values
    n_steps = len(episode) - 1
    target = J[1:].copy()
    if not episode.truncated:
        target[-1] = episode.rewards
    for p, dt in enumerate(episode.death_turn):
        if dt is not None and 1 <= dt <= n_steps:
            target[dt - 1, p] = 0.0
    d = target - J[:-1]
    d[~episode.active()] = 0.0
    return d


def eligibility_sums(d: np.ndarray, lam: float) -> np.ndarray:
    """``c[t] = sum_{j>=t} lam^(j-t) d[j]`` by the backward recursion."""
    c = np.zeros_like(d)
    acc = np.zeros(d.shape[1])
    for t in range(len(d) - 1, -1, -1):
        acc = d[t] + lam * acc
        c[t] = acc
    return c


def td_lambda_update(episode: Episode, params: NetworkParams, lam: float, alpha: float) -> dict:
    """Parameter delta of one episode (gradients at the pre-update params)."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    d = td_errors(episode, params)
    coef = eligibility_sums(d, lam) * episode.active()
    grads = network.backward(params, episode.glob[:-1], episode.board[:-1], coef)
    return {k: alpha * v for k, v in grads.items()}


def _per_term_sum(episode: Episode, params: NetworkParams, alpha: float, coef: np.ndarray) -> dict:
    total = {k: np.zeros_like(v) for k, v in params.weights.items()}
    for t in range(len(episode) - 1):
        for p in range(coef.shape[1]):
            if coef[t, p] == 0.0:
                continue
            g = network.output_gradient(params, episode.glob[t], episode.board[t], p)
            for k in total:
                total[k] += g[k] * coef[t, p]
    return {k: alpha * v for k, v in total.items()}


def td0_update(episode: Episode, params: NetworkParams, alpha: float) -> dict:
    """One-step rule, term by term: ``alpha * sum grad J(x_t)_p * d[t, p]``."""
    return _per_term_sum(episode, params, alpha, td_errors(episode, params))


def td1_update(episode: Episode, params: NetworkParams, alpha: float) -> dict:
    """Monte-Carlo rule, term by term: ``alpha * sum grad J(x_t)_p * (r_p - J(x_t)_p)``."""
    _check(episode)
    if episode.truncated:
        raise ValueError("the terminal-reward rule needs a completed episode")
    J = network.forward(params, episode.glob, episode.board)
    coef = (episode.rewards[None, :] - J[:-1]) * episode.active()
    return _per_term_sum(episode, params, alpha, coef)


@dataclass
class OptimizerState:
    eg2: dict
    edx2: dict
    rho: float = 0.9
    eps: float = 1e-6
    lr: float = 0.5

    @classmethod
    def zeros_like(cls, params: NetworkParams, rho=0.9, eps=1e-6, lr=0.5) -> "OptimizerState":
        z = {k: np.zeros_like(v) for k, v in params.weights.items()}
        return cls(z, {k: v.copy() for k, v in z.items()}, rho, eps, lr)

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            {k: v.copy() for k, v in self.eg2.items()},
            {k: v.copy() for k, v in self.edx2.items()},
            self.rho, self.eps, self.lr,
        )


def adadelta_apply(opt: OptimizerState, params: NetworkParams, grad: dict, inplace: bool = False):
    """One Adadelta step on a loss gradient; the final step is scaled by ``opt.lr``.

    To ascend along a TD delta pass its negation as ``grad``.
    Returns ``(params, opt)``.
    """
    if set(grad) != set(params.weights):
        raise ValueError("gradient keys do not match parameters")
    if not inplace:
        params, opt = params.copy(), opt.copy()
    rho, eps = opt.rho, opt.eps
    for k, g in grad.items():
        if g.shape != params.weights[k].shape:
            raise ValueError(f"shape mismatch for {k}: {g.shape} vs {params.weights[k].shape}")
        eg2 = opt.eg2[k]
        eg2 *= rho
        eg2 += (1 - rho) * g * g
        step = np.sqrt(opt.edx2[k] + eps) / np.sqrt(eg2 + eps) * g
        edx2 = opt.edx2[k]
        edx2 *= rho
        edx2 += (1 - rho) * step * step
        params.weights[k] -= opt.lr * step
    return params, opt


def mean_abs_td(episodes, params: NetworkParams) -> float:
    """Mean |d| over active terms of (already normalized) episodes."""
    total = count = 0.0
    for ep in episodes:
        d = td_errors(ep, params)
        m = ep.active()
        total += np.abs(d[m]).sum()
        count += m.sum()
    return total / max(count, 1)


@dataclass
class TrainReport:
    mean_abs_d: list = field(default_factory=list)  # index 0 is the untrained network
    n_episodes: int = 0
    n_states: int = 0

    def to_dict(self) -> dict:
        return {"mean_abs_d": self.mean_abs_d, "n_episodes": self.n_episodes, "n_states": self.n_states}


def train(
    episodes,
    lam: float = 0.8,
    alpha: float = 0.5,
    epochs: int = 3,
    seed: int = 0,
    mapdef: MapDef | None = None,
    rho: float = 0.9,
    eps: float = 1e-6,
    batch: str = "episode",
    params: NetworkParams | None = None,
    **sizes,
) -> tuple[NetworkParams, TrainReport]:
    """Fit a normalizer on raw ``episodes`` and run TD(lambda) through Adadelta.

    ``batch="episode"`` applies one optimizer step per match, ``"epoch"``
    sums all match deltas of an epoch into a single step.
    """
    episodes = list(episodes)
    if not episodes:
        raise ValueError("empty dataset")
    if batch not in ("episode", "epoch"):
        raise ValueError(f"unknown batch mode {batch!r}")
    mapdef = mapdef or episodes[0].mapdef
    if mapdef is None:
        raise ValueError("a map is needed to build the graph operator")
    nz = fit_normalizer(
        np.concatenate([e.glob for e in episodes]), np.concatenate([e.board for e in episodes])
    )
    data = [e.normalized(nz) for e in episodes]
    if params is None:
        params = network.init_params(seed, mapdef, **sizes)
    else:
        params = params.copy()
    params.normalizer = nz
    opt = OptimizerState.zeros_like(params, rho, eps, alpha)
    rng = np.random.default_rng(seed)
    report = TrainReport(n_episodes=len(data), n_states=sum(len(e) for e in data))
    report.mean_abs_d.append(mean_abs_td(data, params))
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        acc = None
        for i in order:
            delta = td_lambda_update(data[i], params, lam, 1.0)
            if batch == "episode":
                params, opt = adadelta_apply(opt, params, {k: -v for k, v in delta.items()}, inplace=True)
            else:
                acc = delta if acc is None else {k: acc[k] + delta[k] for k in acc}
        if acc is not None:
            params, opt = adadelta_apply(opt, params, {k: -v for k, v in acc.items()}, inplace=True)
        if not all(np.isfinite(w).all() for w in params.weights.values()):
            raise FloatingPointError(f"non-finite parameters after epoch {epoch + 1}")
        report.mean_abs_d.append(mean_abs_td(data, params))
        log.info("epoch %d: mean |d| = %.5f", epoch + 1, report.mean_abs_d[-1])
    return params, report

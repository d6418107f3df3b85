"""Tabular experts for the grid worlds.

``q_greedy`` runs Q-learning (max backup) and converges to shortest paths;
``sarsa_high_eps`` runs on-policy SARSA under a very noisy behaviour policy,
which makes routes that hug the lava look dangerous and yields a detour.

Training uses exploring starts (uniform free cell, heading and first
action) and a copy
of the world whose step cap is effectively infinite, so the goal reward is
a stationary ~1 and only the discount ranks routes.  The env's real cap
applies when the greedy policy is checked.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..envs.grid import GridEnvConfig, GridState, grid_reset, grid_step

UPDATES = ("q_greedy", "sarsa_high_eps")


class ExpertTrainingError(RuntimeError):
    pass


@dataclass
class TabularConfig:
    episodes: int = 6000
    gamma: float = 0.99
    lr: float = 1.0
    lr_min: float = 0.01
    eps: float = 0.1
    # episodes are cut short during training; the greedy check uses the env cap
    train_t_max: int = 100
    exploring_starts: bool = True


def default_config(updates: str) -> TabularConfig:
    if updates == "q_greedy":
        # the training world is deterministic, so a unit step size is exact
        return TabularConfig(lr_min=1.0)
    if updates == "sarsa_high_eps":
        return TabularConfig(episodes=40000, eps=0.8, lr_min=0.0)
    raise ValueError(f"unknown update rule {updates!r}; expected one of {UPDATES}")


class TabularPolicy:
    """Deterministic greedy policy read from a Q table indexed by (cell, direction)."""

    def __init__(self, config: GridEnvConfig, q: np.ndarray, name: str = "expert"):
        self.config = config
        self.q = q
        self.name = name
        self.table = np.argmax(q, axis=1)

    def action(self, state: GridState) -> int:
        return int(self.table[state.index(self.config)])

    def __call__(self, obs, state, rng) -> int:
        return self.action(state)


def _eps_greedy(q_row: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    if rng.random() < eps:
        return int(rng.integers(len(q_row)))
    best = np.flatnonzero(q_row == q_row.max())
    return int(best[0] if len(best) == 1 else rng.choice(best))


def greedy_rollout(policy: TabularPolicy, start: GridState) -> tuple[int, float]:
    """Length and return of the greedy episode from ``start``."""
    state = start
    reward = 0.0
    while not state.done:
        state, _, reward, _ = grid_step(policy.config, state, policy.action(state))
    return state.t, reward


def tabular_expert(config: GridEnvConfig, updates: str = "q_greedy",
                   train: TabularConfig | None = None, seed: int = 0) -> TabularPolicy:
    """Train a tabular expert and check that its greedy policy always succeeds."""
    train = train or default_config(updates)
    if updates not in UPDATES:
        raise ValueError(f"unknown update rule {updates!r}; expected one of {UPDATES}")
    rng = np.random.default_rng(seed)
    learn_config = replace(config, t_max=10**9)
    q = np.zeros((config.n_states, 3))
    visits = np.zeros((config.n_states, 3))
    on_policy = updates == "sarsa_high_eps"
    cells = config.free_cells()
    for _ in range(train.episodes):
        if train.exploring_starts:
            k = int(rng.integers(len(cells) * 4))
            state = GridState(*cells[k // 4], k % 4)
        else:
            state, _ = grid_reset(learn_config, rng)
        s = state.index(config)
        a = int(rng.integers(3)) if train.exploring_starts else _eps_greedy(q[s], train.eps, rng)
        while True:
            nxt, _, r, done = grid_step(learn_config, state, a)
            ns = nxt.index(config)
            visits[s, a] += 1
            lr = max(train.lr_min, train.lr / visits[s, a] ** 0.6)
            if done:
                target = r
                na = -1
            else:
                na = _eps_greedy(q[ns], train.eps, rng)
                bootstrap = q[ns, na] if on_policy else q[ns].max()
                target = r + train.gamma * bootstrap
            q[s, a] += lr * (target - q[s, a])
            if done or nxt.t >= train.train_t_max:
                break
            state, s, a = nxt, ns, na

    policy = TabularPolicy(config, q, name=updates)
    starts = ([GridState(*config.start)] if config.start is not None else
              [GridState(x, y, d) for (x, y) in config.free_cells() for d in range(4)])
    for st in starts:
        _, ret = greedy_rollout(policy, st)
        if ret <= 0.0:
            raise ExpertTrainingError(
                f"{updates} expert fails to reach the goal from {st}; increase the training budget")
    return policy

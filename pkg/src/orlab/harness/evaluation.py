"""Online policy evaluation by greedy rollouts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalResult:
    mean_return: float
    std_return: float
    mean_length: float
    returns: tuple[float, ...]
    lengths: tuple[int, ...]

    def as_dict(self) -> dict:
        return {"eval_mean": self.mean_return, "eval_std": self.std_return,
                "eval_length": self.mean_length}


def evaluate(policy, env, n_episodes: int = 10, seed: int = 0) -> EvalResult:
    """Roll out ``policy`` greedily; ``policy`` is an agent (``.act``) or ``f(obs, state)``.

    Episodes end at termination or at the env's step cap, so a looping
    grid policy scores 0 with length ``t_max``.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    act = policy.act if hasattr(policy, "act") else None
    rng = np.random.default_rng(seed)
    returns, lengths = [], []
    for _ in range(n_episodes):
        obs = env.reset(rng)
        total, t, done = 0.0, 0, False
        while not done:
            action = act(obs) if act is not None else policy(obs, env.state)
            obs, r, done = env.step(action)
            total += r
            t += 1
        returns.append(total)
        lengths.append(t)
    r = np.asarray(returns)
    return EvalResult(float(r.mean()), float(r.std()), float(np.mean(lengths)),
                      tuple(float(x) for x in returns), tuple(int(x) for x in lengths))

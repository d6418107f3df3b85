"""Rollout collection and the dataset-generation protocols.

A policy here is any callable ``policy(obs, env_state, rng) -> action``.
Policies that need per-episode setup may define ``begin_episode(rng)``;
policies that label episodes expose ``episode_tag`` after that call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..envs import make_env
from ..envs.grid import GridEnv, distshift, empty_random_6x6
from ..envs.pointmaze import PointMazeEnv
from .dataset import Manifest, OfflineDataset, action_space_of

PROTOCOLS = ("eps_greedy_expert", "random", "multimodal", "continuous_quality")
EPS_SWEEP = (0.0, 0.3, 0.6, 0.8, 0.9, 1.0)
QUALITIES = ("random", "medium", "expert")
EXPERT_NOISE = 0.03  # action noise std of the expert PointMaze controller


@dataclass(frozen=True)
class GeneratorDescriptor:
    protocol: str
    params: dict
    n_episodes: int | None = None
    n_transitions: int | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if (self.n_episodes is None) == (self.n_transitions is None):
            raise ValueError("exactly one of n_episodes / n_transitions must be given")

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "params": dict(self.params),
                "n_episodes": self.n_episodes, "n_transitions": self.n_transitions}


class RandomPolicy:
    def __init__(self, env):
        self.discrete = env.discrete
        self.n = env.n_actions
        if not env.discrete:
            self.low, self.high = env.action_low, env.action_high

    def __call__(self, obs, state, rng):
        if self.discrete:
            return int(rng.integers(self.n))
        return rng.uniform(self.low, self.high)


class EpsGreedy:
    """With probability ``eps`` a uniform action replaces the wrapped policy's choice."""

    def __init__(self, policy, eps: float, n_actions: int = 3):
        if not 0.0 <= eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {eps}")
        self.policy, self.eps, self.n = policy, eps, n_actions

    def __call__(self, obs, state, rng):
        # both draws happen every step so the stream does not depend on eps
        explore = rng.random() < self.eps
        random_action = int(rng.integers(self.n))
        return random_action if explore else self.policy(obs, state, rng)


class EpisodeMixture:
    """Switches between named policies per episode following a fixed schedule."""

    def __init__(self, policies: dict, schedule: list[str]):
        self.policies, self.schedule = policies, schedule
        self._i = -1
        self.episode_tag = None

    def begin_episode(self, rng):
        self._i += 1
        self.episode_tag = self.schedule[self._i]

    def __call__(self, obs, state, rng):
        return self.policies[self.episode_tag](obs, state, rng)


class WaypointController:
    """Scripted PointMaze expert: heads for the opening of whichever corridor it is in."""

    def __init__(self, env: PointMazeEnv):
        self.cfg = env.config

    def target(self, x: float, y: float) -> tuple[float, float]:
        if y < 0.1:
            return (0.55, -0.15) if x < 0.5 else (0.55, 0.28)
        if y < 0.55:
            return (-0.55, 0.28) if x > -0.5 else (-0.55, 0.72)
        return self.cfg.goal

    def __call__(self, obs, state, rng):
        tx, ty = self.target(float(obs[0]), float(obs[1]))
        step = self.cfg.max_step
        return np.clip([tx - obs[0], ty - obs[1]], -step, step)


class NoisyController:
    """Waypoint controller with Gaussian action noise and an optional share of uniform random steps."""

    def __init__(self, env: PointMazeEnv, sigma: float = 0.05, random_frac: float = 0.2):
        self.expert = WaypointController(env)
        self.sigma, self.random_frac = sigma, random_frac
        self.low, self.high = env.action_low, env.action_high

    def __call__(self, obs, state, rng):
        a = self.expert(obs, state, rng) + rng.normal(0.0, self.sigma, size=2)
        if rng.random() < self.random_frac:
            a = rng.uniform(self.low, self.high)
        return np.clip(a, self.low, self.high)


def collect(env, policy, n_episodes: int | None = None, n_transitions: int | None = None,
            seed: int = 0, generator: GeneratorDescriptor | None = None) -> OfflineDataset:
    """Roll ``policy`` in ``env`` until the episode or transition budget is spent.

    Episodes are never cut short by the transition budget: collection stops
    after the episode during which the budget is reached.
    """
    if (n_episodes is None) == (n_transitions is None):
        raise ValueError("give exactly one of n_episodes / n_transitions")
    if generator is None:
        generator = GeneratorDescriptor("random", {}, n_episodes, n_transitions)
    env_ss, pol_ss = np.random.SeedSequence(seed).spawn(2)
    env_rng, pol_rng = np.random.default_rng(env_ss), np.random.default_rng(pol_ss)

    obs_l, act_l, rew_l, nobs_l, done_l, ep_l, t_l, tags = [], [], [], [], [], [], [], []
    ep = 0
    while True:
        if n_episodes is not None and ep >= n_episodes:
            break
        if n_transitions is not None and len(rew_l) >= n_transitions:
            break
        if hasattr(policy, "begin_episode"):
            policy.begin_episode(pol_rng)
            tags.append(policy.episode_tag)
        obs = env.reset(env_rng)
        t, done = 0, False
        while not done:
            action = policy(obs, env.state, pol_rng)
            if env.discrete:
                action = int(action)
                if not 0 <= action < env.n_actions:
                    raise ValueError(f"policy produced action {action} outside the env's action space")
            else:
                action = np.asarray(action, dtype=np.float64)
                if action.shape != (env.action_dim,):
                    raise ValueError(f"policy produced action of shape {action.shape}, env needs ({env.action_dim},)")
            nobs, r, done = env.step(action)
            obs_l.append(obs); act_l.append(action); rew_l.append(r); nobs_l.append(nobs)
            done_l.append(done); ep_l.append(ep); t_l.append(t)
            obs, t = nobs, t + 1
        ep += 1

    n = len(rew_l)
    d = env.obs_dim
    if env.discrete:
        actions = np.asarray(act_l, dtype=np.int64)
    else:
        actions = np.asarray(act_l, dtype=np.float64).reshape(n, env.action_dim)
    manifest = Manifest(env_id=env.env_id, obs_dim=d, action_space=action_space_of(env),
                        n_transitions=n, n_episodes=ep, generator=generator.to_dict(),
                        seed=int(seed), episode_tags=tags or None)
    return OfflineDataset(
        manifest=manifest,
        obs=np.asarray(obs_l, dtype=np.float64).reshape(n, d),
        actions=actions,
        rewards=np.asarray(rew_l, dtype=np.float64),
        next_obs=np.asarray(nobs_l, dtype=np.float64).reshape(n, d),
        dones=np.asarray(done_l, dtype=bool),
        episode_ids=np.asarray(ep_l, dtype=np.int64),
        ts=np.asarray(t_l, dtype=np.int64),
    )


@lru_cache(maxsize=None)
def empty_expert(seed: int = 0):
    from ..agents.tabular import tabular_expert
    return tabular_expert(empty_random_6x6(), "q_greedy", seed=seed)


@lru_cache(maxsize=None)
def distshift_experts(seed: int = 0):
    """``(expert_A, expert_B)``: the 13-step lava-hugging and 17-step safe experts."""
    from ..agents.tabular import tabular_expert
    return (tabular_expert(distshift(), "q_greedy", seed=seed),
            tabular_expert(distshift(), "sarsa_high_eps", seed=seed))


def make_eps_greedy_dataset(expert_policy=None, eps: float = 0.0, n_episodes: int = 1000,
                            seed: int = 0) -> OfflineDataset:
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    expert_policy = expert_policy or empty_expert()
    env = GridEnv(empty_random_6x6())
    gen = GeneratorDescriptor("eps_greedy_expert", {"eps": eps}, n_episodes=n_episodes)
    return collect(env, EpsGreedy(expert_policy, eps), n_episodes=n_episodes, seed=seed, generator=gen)


def make_random_lava_dataset(n_episodes: int = 3000, seed: int = 0) -> OfflineDataset:
    env = GridEnv(distshift())
    gen = GeneratorDescriptor("random", {"env_id": env.env_id}, n_episodes=n_episodes)
    return collect(env, RandomPolicy(env), n_episodes=n_episodes, seed=seed, generator=gen)


def make_multimodal_dataset(expert_a=None, expert_b=None, n_episodes: int = 1000, seed: int = 0,
                            frac_a: float = 0.2, eps: float = 0.1) -> OfflineDataset:
    """20% of episodes from expert A, 80% from expert B, both eps-greedy, shuffled by seed."""
    if expert_a is None or expert_b is None:
        a, b = distshift_experts()
        expert_a, expert_b = expert_a or a, expert_b or b
    n_a = int(round(frac_a * n_episodes))
    schedule = np.array(["A"] * n_a + ["B"] * (n_episodes - n_a))
    np.random.default_rng([seed, 1]).shuffle(schedule)
    policy = EpisodeMixture({"A": EpsGreedy(expert_a, eps), "B": EpsGreedy(expert_b, eps)},
                            [str(s) for s in schedule])
    env = GridEnv(distshift())
    gen = GeneratorDescriptor("multimodal", {"frac_a": frac_a, "eps": eps}, n_episodes=n_episodes)
    return collect(env, policy, n_episodes=n_episodes, seed=seed, generator=gen)


def make_pointmaze_dataset(quality: str = "expert", n_transitions: int = 100_000,
                           seed: int = 0) -> OfflineDataset:
    env = PointMazeEnv()
    if quality == "expert":
        # a little action noise widens the state coverage around the scripted routes
        policy = NoisyController(env, sigma=EXPERT_NOISE, random_frac=0.0)
    elif quality == "medium":
        policy = NoisyController(env)
    elif quality == "random":
        policy = RandomPolicy(env)
    else:
        raise ValueError(f"unknown quality {quality!r}; expected one of {QUALITIES}")
    gen = GeneratorDescriptor("continuous_quality", {"quality": quality}, n_transitions=n_transitions)
    return collect(env, policy, n_transitions=n_transitions, seed=seed, generator=gen)


def generate(descriptor: GeneratorDescriptor, seed: int = 0, env_id: str | None = None) -> OfflineDataset:
    """Dispatch a descriptor to its protocol (used by the CLI and the harness)."""
    p = descriptor.params
    if descriptor.protocol == "eps_greedy_expert":
        return make_eps_greedy_dataset(eps=float(p.get("eps", 0.0)),
                                       n_episodes=descriptor.n_episodes, seed=seed)
    if descriptor.protocol == "multimodal":
        return make_multimodal_dataset(n_episodes=descriptor.n_episodes, seed=seed,
                                       frac_a=float(p.get("frac_a", 0.2)), eps=float(p.get("eps", 0.1)))
    if descriptor.protocol == "continuous_quality":
        return make_pointmaze_dataset(p.get("quality", "expert"), descriptor.n_transitions, seed)
    env = make_env(env_id or p.get("env_id", "grid/distshift"))
    return collect(env, RandomPolicy(env), descriptor.n_episodes, descriptor.n_transitions, seed,
                   generator=GeneratorDescriptor("random", {"env_id": env.env_id},
                                                 descriptor.n_episodes, descriptor.n_transitions))

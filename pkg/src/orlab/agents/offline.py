"""Agents of the offline suite and the offline training loop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..approx import (AdamState, DivergenceError, LayerSpec, ParamSet, adam_init, adam_step,
                      forward, mlp_init, save_params, soft_update)
from ..data.dataset import Batch, OfflineDataset, sample_batch
from . import losses as L
from .config import AgentConfig
from .heads import gaussian_mean_action


class TrainingDivergence(FloatingPointError):
    """A loss or gradient became non-finite during training."""


class _Net:
    """Parameters plus their optimiser state."""

    def __init__(self, spec: LayerSpec, seed: int, lr: float):
        self.params = mlp_init(spec, seed)
        self.opt: AdamState = adam_init(self.params, lr)

    def step(self, grads: ParamSet) -> None:
        self.params, self.opt = adam_step(self.params, grads, self.opt)


class Agent:
    """Common interface: ``update(batch, rng) -> loss terms`` and greedy ``act(obs)``."""

    def __init__(self, config: AgentConfig, obs_dim: int, action_space: dict, seed: int = 0):
        self.config = config
        self.obs_dim = obs_dim
        self.action_space = dict(action_space)
        self.discrete = action_space["type"] == "discrete"
        if self.discrete:
            self.n_actions = int(action_space["n"])
        else:
            self.action_dim = int(action_space["dim"])
            self.low = np.full(self.action_dim, float(action_space["low"]))
            self.high = np.full(self.action_dim, float(action_space["high"]))
            if not np.allclose(self.low, -self.high):
                raise ValueError("continuous agents assume symmetric action bounds")
            self.scale = float(self.high[0])
        self._seeds = iter(np.random.SeedSequence(seed).generate_state(8))

    def _spec(self, input_dim: int, output_dim: int) -> LayerSpec:
        return LayerSpec(input_dim, output_dim, self.config.hidden)

    def _net(self, input_dim: int, output_dim: int, lr: float) -> _Net:
        return _Net(self._spec(input_dim, output_dim), int(next(self._seeds)), lr)

    @property
    def policy_out_dim(self) -> int:
        return self.n_actions if self.discrete else 2 * self.action_dim

    def update(self, batch: Batch, rng: np.random.Generator) -> dict:
        raise NotImplementedError

    def act(self, obs: np.ndarray):
        """Greedy action for one observation (argmax or squashed mean)."""
        out = forward(self.policy_params(), np.asarray(obs, dtype=np.float64)[None, :])
        if self.discrete:
            return int(np.argmax(out[0]))
        return gaussian_mean_action(out, self.action_dim, self.scale)[0]

    def policy_params(self) -> ParamSet:
        raise NotImplementedError

    def networks(self) -> dict[str, ParamSet]:
        raise NotImplementedError


class BCAgent(Agent):
    def __init__(self, config, obs_dim, action_space, seed=0):
        super().__init__(config, obs_dim, action_space, seed)
        self.policy = self._net(obs_dim, self.policy_out_dim, config.actor_lr)

    def update(self, batch, rng):
        loss, grads = L.bc_loss(self.policy.params, batch, self.discrete,
                                1.0 if self.discrete else self.scale)
        self.policy.step(grads)
        return {"bc_loss": float(loss)}

    def policy_params(self):
        return self.policy.params

    def networks(self):
        return {"policy": self.policy.params}


class DQNAgent(Agent):
    """Double DQN with a soft-updated target network."""

    def __init__(self, config, obs_dim, action_space, seed=0):
        super().__init__(config, obs_dim, action_space, seed)
        if not self.discrete:
            raise ValueError("DQN needs discrete actions")
        self.q = self._net(obs_dim, self.n_actions, config.critic_lr)
        self.target = self.q.params.copy()

    def update(self, batch, rng):
        loss, grads = L.dqn_loss(self.q.params, self.target, batch, self.config.gamma)
        self.q.step(grads)
        self.target = soft_update(self.target, self.q.params, self.config.tau)
        return {"td_loss": float(loss)}

    def policy_params(self):
        return self.q.params

    def networks(self):
        return {"q": self.q.params, "q_target": self.target}


class DiscreteActorCritic(Agent):
    """Policy network plus a critic trained with the expected-Q backup.

    ``cql``: conservative critic, soft policy improvement at the slow policy rate.
    ``crr``: plain critic, filtered regression policy.
    ``ccrr``: conservative critic, filtered regression policy.
    """

    def __init__(self, config, obs_dim, action_space, seed=0):
        super().__init__(config, obs_dim, action_space, seed)
        algo = config.algo
        actor_lr = config.cql_policy_lr if algo == "cql" else config.actor_lr
        self.policy = self._net(obs_dim, self.n_actions, actor_lr)
        self.critic = self._net(obs_dim, self.n_actions, config.critic_lr)
        self.target = self.critic.params.copy()
        self.alpha = 0.0 if algo == "crr" else config.alpha

    def update(self, batch, rng):
        cfg = self.config
        if cfg.algo == "cql":
            c_loss, c_grads = L.cql_critic_loss(self.critic.params, self.target, self.policy.params,
                                                batch, self.alpha, cfg.gamma)
            q = forward(self.critic.params, batch.obs)
            p_loss, p_grads = L.discrete_actor_loss(self.policy.params, q, batch.obs, cfg.temperature)
            starved = 0.0
        else:
            (p_loss, p_grads), (c_loss, c_grads) = L.ccrr_losses(
                self.policy.params, self.critic.params, self.target, batch, self.alpha, cfg.gamma,
                cfg.filter, cfg.advantage, cfg.beta, cfg.exp_clip)
            starved = float(p_loss == 0.0)
        self.critic.step(c_grads)
        self.policy.step(p_grads)
        self.target = soft_update(self.target, self.critic.params, cfg.tau)
        out = {"critic_loss": float(c_loss), "policy_loss": float(p_loss)}
        if cfg.algo != "cql":
            out["starved"] = starved
        return out

    def policy_params(self):
        return self.policy.params

    def networks(self):
        return {"policy": self.policy.params, "critic": self.critic.params, "critic_target": self.target}


class ContinuousActorCritic(Agent):
    """Tanh-Gaussian policy with twin critics and their targets.

    ``sac``: soft critic target, reparameterised policy loss.
    ``cql``: conservative critic (no entropy in its target), SAC policy loss at the slow rate
    after ``bc_warmup`` updates of behaviour cloning.
    ``crr`` / ``ccrr``: plain / conservative critic, filtered regression policy.
    """

    def __init__(self, config, obs_dim, action_space, seed=0):
        super().__init__(config, obs_dim, action_space, seed)
        algo = config.algo
        actor_lr = config.cql_policy_lr if algo == "cql" else config.actor_lr
        self.policy = self._net(obs_dim, self.policy_out_dim, actor_lr)
        self.critics = [self._net(obs_dim + self.action_dim, 1, config.critic_lr) for _ in range(2)]
        self.targets = [c.params.copy() for c in self.critics]
        self.alpha = 0.0 if algo in ("sac", "crr") else config.alpha
        self.n_updates = 0

    def update(self, batch, rng):
        cfg, k = self.config, self.action_dim
        critics = [c.params for c in self.critics]
        if cfg.algo == "sac":
            c_loss, c_grads = L.sac_critic_loss(critics, self.targets, self.policy.params, batch,
                                                cfg.gamma, cfg.temperature,
                                                rng.standard_normal((len(batch), k)), self.scale)
        else:
            c_loss, c_grads = L.cql_critic_loss_continuous(
                critics, self.targets, self.policy.params, batch, self.alpha, cfg.gamma,
                cfg.n_samples, rng, self.scale, self.low, self.high)
        out = {"critic_loss": float(c_loss)}
        if cfg.algo == "cql" and self.n_updates < cfg.bc_warmup:
            p_loss, p_grads = L.bc_loss(self.policy.params, batch, False, self.scale)
        elif cfg.algo in ("sac", "cql"):
            p_loss, p_grads = L.sac_policy_loss(self.policy.params, critics, batch.obs, cfg.temperature,
                                                rng.standard_normal((len(batch), k)), self.scale)
        else:
            p_loss, p_grads, _ = L.crr_policy_loss(self.policy.params, critics, batch, cfg.filter,
                                                   cfg.advantage, cfg.beta, cfg.m, rng, False,
                                                   self.scale, cfg.exp_clip)
            out["starved"] = float(p_loss == 0.0)
        for c, g in zip(self.critics, c_grads):
            c.step(g)
        self.policy.step(p_grads)
        self.targets = [soft_update(t, c.params, cfg.tau) for t, c in zip(self.targets, self.critics)]
        self.n_updates += 1
        out["policy_loss"] = float(p_loss)
        return out

    def policy_params(self):
        return self.policy.params

    def networks(self):
        nets = {"policy": self.policy.params}
        for i, (c, t) in enumerate(zip(self.critics, self.targets), start=1):
            nets[f"critic{i}"] = c.params
            nets[f"critic{i}_target"] = t
        return nets


def make_agent(config: AgentConfig, obs_dim: int, action_space: dict, seed: int = 0) -> Agent:
    discrete = action_space["type"] == "discrete"
    if config.algo == "bc":
        return BCAgent(config, obs_dim, action_space, seed)
    if discrete:
        if config.algo == "dqn":
            return DQNAgent(config, obs_dim, action_space, seed)
        if config.algo == "sac":
            raise ValueError("sac needs continuous actions; use dqn for discrete ones")
        return DiscreteActorCritic(config, obs_dim, action_space, seed)
    if config.algo == "dqn":
        # the naive off-policy baseline for continuous control is SAC
        config = AgentConfig.from_dict({**config.to_dict(), "algo": "sac"})
    return ContinuousActorCritic(config, obs_dim, action_space, seed)


@dataclass
class TrainResult:
    agent: Agent
    checkpoints: list = field(default_factory=list)  # (step, policy ParamSet)
    metrics: list = field(default_factory=list)      # one dict per evaluation point


EvalHook = Callable[[int, Agent], dict]


def train_offline(config: AgentConfig, dataset: OfflineDataset, n_steps: int, seed: int = 0,
                  eval_hook: EvalHook | None = None, log_path=None, checkpoint_dir=None,
                  agent: Agent | None = None, sampler=None, step_offset: int = 0) -> TrainResult:
    """One gradient step per sampled batch; checkpoint and evaluate every ``eval_every`` steps.

    Checkpoints land at multiples of ``config.eval_every`` and at the final step.
    Metric lines hold the step, interval-mean loss terms and whatever
    ``eval_hook(step, agent)`` returns.  ``sampler(batch_size, rng)`` replaces
    uniform dataset sampling (the fine-tuning replay buffer uses it).
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    m = dataset.manifest
    init_ss, batch_ss, noise_ss = np.random.SeedSequence(seed).spawn(3)
    if agent is None:
        agent = make_agent(config, m.obs_dim, m.action_space, int(init_ss.generate_state(1)[0]))
    batch_rng, noise_rng = np.random.default_rng(batch_ss), np.random.default_rng(noise_ss)
    if sampler is None:
        def sampler(bs, rng):
            return sample_batch(dataset, bs, rng)

    result = TrainResult(agent)
    log = open(log_path, "a") if log_path is not None else None
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    sums: dict[str, float] = {}
    count = 0
    try:
        for i in range(1, n_steps + 1):
            batch = sampler(config.batch_size, batch_rng)
            try:
                terms = agent.update(batch, noise_rng)
            except DivergenceError as exc:
                raise TrainingDivergence(f"step {step_offset + i}: {exc}") from exc
            bad = {k: v for k, v in terms.items() if not np.isfinite(v)}
            if bad:
                raise TrainingDivergence(f"non-finite loss at step {step_offset + i}: {bad}")
            for k, v in terms.items():
                sums[k] = sums.get(k, 0.0) + v
            count += 1
            if i % config.eval_every == 0 or i == n_steps:
                step = step_offset + i
                record = {"step": step}
                record.update({k: v / count for k, v in sorted(sums.items())})
                if eval_hook is not None:
                    record.update(eval_hook(step, agent))
                policy = agent.policy_params().copy()
                result.checkpoints.append((step, policy))
                result.metrics.append(record)
                if checkpoint_dir is not None:
                    save_params(policy, Path(checkpoint_dir) / f"policy_{step:08d}.params")
                if log is not None:
                    log.write(json.dumps(record, sort_keys=True) + "\n")
                    log.flush()
                sums, count = {}, 0
    finally:
        if log is not None:
            log.close()
    return result

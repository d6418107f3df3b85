"""Losses of the offline suite with hand-derived gradients.

Every ``*_loss`` returns ``(loss, grads)`` where ``grads`` is shaped like the
parameters being trained.  Quantities that the algorithms treat as constants
(Bellman targets, CRR weights, sampled actions) are computed from the other
networks and never differentiated, so a finite-difference check against the
trained network's parameters sees exactly the returned gradient.

Stochastic pieces take their noise as explicit arrays (or an rng that the
caller seeds), which keeps everything reproducible and checkable.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..approx import ParamSet, backward, forward, forward_cached, logsumexp
from ..data.dataset import Batch
from .heads import (GaussianSample, gaussian_log_prob, log_softmax, q_backward, q_sa,
                    q_sa_cached, softmax)

FILTERS = ("binary", "exp")
ADVANTAGES = ("mean", "max")
DEFAULT_EXP_CLIP = 20.0
_EXP_FLOOR = -700.0


def _rows(n: int) -> np.ndarray:
    return np.arange(n)


def td_loss(q: np.ndarray, y: np.ndarray) -> float:
    """Half mean squared TD error, the Bellman term of the conservative objective."""
    return 0.5 * np.mean((q - y) ** 2)


# ---------------------------------------------------------------- behaviour cloning

def bc_loss(policy: ParamSet, batch: Batch, discrete: bool = True,
            scale: float = 1.0) -> tuple[float, ParamSet]:
    """Discrete: mean NLL of dataset actions.  Continuous: MSE of the squashed mean."""
    out, acts = forward_cached(policy, batch.obs)
    n = len(batch)
    if discrete:
        a = np.asarray(batch.actions, dtype=np.int64)
        logp = log_softmax(out)
        loss = -np.mean(logp[_rows(n), a])
        g = softmax(out)
        g[_rows(n), a] -= 1.0
        g /= n
    else:
        k = batch.actions.shape[1]
        th = np.tanh(out[:, :k])
        diff = scale * th - batch.actions
        loss = np.mean(diff ** 2)
        g = np.zeros_like(out)
        g[:, :k] = 2.0 * diff * scale * (1.0 - th ** 2) / diff.size
    grads, _ = backward(policy, acts, g)
    return loss, grads


def weighted_nll(policy: ParamSet, obs: np.ndarray, actions: np.ndarray, weights: np.ndarray,
                 discrete: bool = True, scale: float = 1.0) -> tuple[float, ParamSet]:
    """``mean(-w * log pi(a|s))`` with ``w`` held constant."""
    out, acts = forward_cached(policy, obs)
    n = len(weights)
    if discrete:
        a = np.asarray(actions, dtype=np.int64)
        logp = log_softmax(out)
        loss = -np.mean(weights * logp[_rows(n), a])
        g = softmax(out)
        g[_rows(n), a] -= 1.0
        g *= weights[:, None]
        g /= n
    else:
        logp, dlogp = gaussian_log_prob(out, actions, scale)
        loss = -np.mean(weights * logp)
        g = -dlogp * weights[:, None] / n
    grads, _ = backward(policy, acts, g)
    return loss, grads


# ---------------------------------------------------------------- discrete critics

def double_dqn_target(online: ParamSet, target: ParamSet, batch: Batch, gamma: float) -> np.ndarray:
    """``r + gamma * (1 - done) * Q_target(s', argmax_a Q_online(s', a))``."""
    n = len(batch)
    best = np.argmax(forward(online, batch.next_obs), axis=1)
    q_next = forward(target, batch.next_obs)[_rows(n), best]
    return batch.rewards + gamma * (1.0 - batch.dones) * q_next


def dqn_loss(online: ParamSet, target: ParamSet, batch: Batch, gamma: float) -> tuple[float, ParamSet]:
    """Double-DQN: mean squared TD error."""
    y = double_dqn_target(online, target, batch, gamma)
    n = len(batch)
    a = np.asarray(batch.actions, dtype=np.int64)
    q, acts = forward_cached(online, batch.obs)
    err = q[_rows(n), a] - y
    g = np.zeros_like(q)
    g[_rows(n), a] = 2.0 * err / n
    grads, _ = backward(online, acts, g)
    return np.mean(err ** 2), grads


def expected_q_target(target: ParamSet, policy: ParamSet, batch: Batch, gamma: float) -> np.ndarray:
    """Bellman target with the expectation of the target critic under the current policy at s'."""
    probs = softmax(forward(policy, batch.next_obs))
    v = np.sum(probs * forward(target, batch.next_obs), axis=1)
    return batch.rewards + gamma * (1.0 - batch.dones) * v


def cql_regularizer_discrete(q_row: np.ndarray, a_data) -> np.ndarray | float:
    """``logsumexp(Q(s, .)) - Q(s, a_data)``; accepts one row or a batch of rows."""
    q_row = np.asarray(q_row, dtype=np.float64)
    if q_row.ndim == 1:
        return float(logsumexp(q_row) - q_row[int(a_data)])
    a = np.asarray(a_data, dtype=np.int64)
    return logsumexp(q_row, axis=1) - q_row[_rows(len(q_row)), a]


def cql_critic_loss(critic: ParamSet, target: ParamSet, policy: ParamSet, batch: Batch,
                    alpha: float, gamma: float) -> tuple[float, ParamSet]:
    """Discrete conservative critic loss: ``alpha * mean(reg) + 0.5 * mean TD^2``."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    y = expected_q_target(target, policy, batch, gamma)
    n = len(batch)
    a = np.asarray(batch.actions, dtype=np.int64)
    q, acts = forward_cached(critic, batch.obs)
    q_a = q[_rows(n), a]
    loss = td_loss(q_a, y)
    g = np.zeros_like(q)
    g[_rows(n), a] = (q_a - y) / n
    if alpha > 0:
        loss = alpha * np.mean(cql_regularizer_discrete(q, a)) + loss
        g += alpha * softmax(q) / n
        g[_rows(n), a] -= alpha / n
    grads, _ = backward(critic, acts, g)
    return loss, grads


def discrete_actor_loss(policy: ParamSet, q_values: np.ndarray, obs: np.ndarray,
                        temperature: float) -> tuple[float, ParamSet]:
    """Soft policy improvement over an enumerable action set:
    ``mean_s sum_a pi(a|s) (temperature * log pi(a|s) - Q(s, a))``."""
    z, acts = forward_cached(policy, obs)
    logp = log_softmax(z)
    p = np.exp(logp)
    f = temperature * logp - q_values
    per_state = np.sum(p * f, axis=1)
    n = len(obs)
    g = p * (f - per_state[:, None]) / n
    grads, _ = backward(policy, acts, g)
    return np.mean(per_state), grads


# ---------------------------------------------------------------- CRR

def crr_filter(adv, kind: str = "exp", beta: float = 1.0, clip: float = DEFAULT_EXP_CLIP):
    """Binary: ``1[adv > 0]``.  Exp: ``min(exp(adv / beta), clip)``."""
    adv = np.asarray(adv, dtype=np.float64)
    if kind == "binary":
        out = (adv > 0).astype(np.float64)
    elif kind == "exp":
        if beta <= 0:
            raise ValueError(f"beta must be > 0 for the exponential filter, got {beta}")
        # exponent bounded before exp: no overflow above, no underflow to 0 below
        z = np.clip(adv / beta, _EXP_FLOOR, np.log(clip) + 1.0)
        out = np.minimum(np.exp(z), clip)
    else:
        raise ValueError(f"unknown filter {kind!r}; expected one of {FILTERS}")
    return out if out.ndim else float(out)


def advantage_from_samples(q_sa_values: np.ndarray, q_samples: np.ndarray, kind: str = "mean") -> np.ndarray:
    """``Q(s,a)`` minus the mean or max of ``Q(s, a_j)`` over the sample axis (last)."""
    if kind == "mean":
        return q_sa_values - np.mean(q_samples, axis=-1)
    if kind == "max":
        return q_sa_values - np.max(q_samples, axis=-1)
    raise ValueError(f"unknown advantage {kind!r}; expected one of {ADVANTAGES}")


def discrete_advantage(q_values: np.ndarray, actions: np.ndarray, kind: str = "mean",
                       probs: np.ndarray | None = None) -> np.ndarray:
    """Exhaustive version over an enumerable action set.

    Without ``probs`` every action counts once (uniform mean).  With policy
    probabilities the mean becomes the exact expectation under the policy;
    the max runs over the policy's support, which for a softmax is every action.
    """
    a = np.asarray(actions, dtype=np.int64)
    q_a = q_values[_rows(len(a)), a]
    if probs is None or kind == "max":
        return advantage_from_samples(q_a, q_values, kind)
    if kind != "mean":
        raise ValueError(f"unknown advantage {kind!r}; expected one of {ADVANTAGES}")
    return q_a - np.sum(probs * q_values, axis=-1)


def sample_policy(policy: ParamSet, obs: np.ndarray, noise: np.ndarray, scale: float) -> GaussianSample:
    return GaussianSample(forward(policy, obs), noise, scale)


def min_q(critics: Sequence[ParamSet], obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.minimum.reduce([q_sa(c, obs, actions) for c in critics])


def continuous_advantage(critics: Sequence[ParamSet], policy: ParamSet, obs: np.ndarray,
                         actions: np.ndarray, kind: str, m: int, rng: np.random.Generator,
                         scale: float) -> np.ndarray:
    """Sampled advantage with ``m`` actions from ``pi(.|s)``; the critic is the min of the twins."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    n, k = actions.shape
    obs_rep = np.repeat(obs, m, axis=0)
    samples = sample_policy(policy, obs_rep, rng.standard_normal((n * m, k)), scale).action
    q_samples = min_q(critics, obs_rep, samples).reshape(n, m)
    return advantage_from_samples(min_q(critics, obs, actions), q_samples, kind)


def crr_policy_loss(policy: ParamSet, critic, batch: Batch, filter: str = "exp",
                    advantage: str = "mean", beta: float = 1.0, m: int = 4,
                    rng: np.random.Generator | None = None, discrete: bool = True,
                    scale: float = 1.0, clip: float = DEFAULT_EXP_CLIP):
    """Filtered regression.  Returns ``(loss, grads, weights)``.

    ``critic`` is one network for discrete actions and a sequence of twin
    networks for continuous ones.  Weights are constants of the loss.
    """
    if discrete:
        probs = softmax(forward(policy, batch.obs))
        adv = discrete_advantage(forward(critic, batch.obs), batch.actions, advantage, probs)
    else:
        adv = continuous_advantage(critic, policy, batch.obs, batch.actions, advantage, m,
                                   rng if rng is not None else np.random.default_rng(0), scale)
    weights = crr_filter(adv, filter, beta, clip)
    loss, grads = weighted_nll(policy, batch.obs, batch.actions, weights, discrete, scale)
    return loss, grads, weights


def ccrr_losses(policy: ParamSet, critic: ParamSet, target: ParamSet, batch: Batch, alpha: float,
                gamma: float, filter: str = "exp", advantage: str = "mean", beta: float = 1.0,
                clip: float = DEFAULT_EXP_CLIP):
    """Discrete CRR on a conservative critic: ``((policy loss, grads), (critic loss, grads))``.

    Both losses are evaluated at the same parameters; the policy weights come
    from the critic being trained.
    """
    critic_out = cql_critic_loss(critic, target, policy, batch, alpha, gamma)
    p_loss, p_grads, _ = crr_policy_loss(policy, critic, batch, filter, advantage, beta,
                                         discrete=True, clip=clip)
    return (p_loss, p_grads), critic_out


# ---------------------------------------------------------------- continuous critics

def twin_td_grads(critics: Sequence[ParamSet], batch: Batch, y: np.ndarray):
    """Sum over twins of ``0.5 * mean (Q_i - y)^2`` plus per-twin caches."""
    n = len(batch)
    loss, grads = 0.0, []
    for c in critics:
        q, acts = q_sa_cached(c, batch.obs, batch.actions)
        loss += td_loss(q, y)
        grads.append(q_backward(c, acts, (q - y) / n)[0])
    return loss, grads


def sac_critic_target(targets: Sequence[ParamSet], policy: ParamSet, batch: Batch, gamma: float,
                      temperature: float, noise: np.ndarray, scale: float) -> np.ndarray:
    """Soft target ``r + gamma (1-d) (min_i Q'_i(s', a') - temperature * log pi(a'|s'))``."""
    nxt = sample_policy(policy, batch.next_obs, noise, scale)
    v = min_q(targets, batch.next_obs, nxt.action) - temperature * nxt.log_prob
    return batch.rewards + gamma * (1.0 - batch.dones) * v


def sac_critic_loss(critics, targets, policy, batch, gamma, temperature, noise, scale):
    y = sac_critic_target(targets, policy, batch, gamma, temperature, noise, scale)
    return twin_td_grads(critics, batch, y)


def sac_policy_loss(policy: ParamSet, critics: Sequence[ParamSet], obs: np.ndarray,
                    temperature: float, noise: np.ndarray, scale: float) -> tuple[float, ParamSet]:
    """Reparameterised ``mean(temperature * log pi(a|s) - min_i Q_i(s, a))``."""
    out, acts = forward_cached(policy, obs)
    smp = GaussianSample(out, noise, scale)
    n, k = noise.shape
    qs, caches = zip(*(q_sa_cached(c, obs, smp.action) for c in critics))
    qs = np.stack(qs)
    pick = np.argmin(qs, axis=0)
    q_min = qs[pick, _rows(n)]
    d_action = np.zeros((n, k))
    for i, (c, cache) in enumerate(zip(critics, caches)):
        sel = (pick == i).astype(np.float64)
        if sel.any():
            d_action -= q_backward(c, cache, sel / n, action_dim=k)[1]
    loss = np.mean(temperature * smp.log_prob - q_min)
    g = smp.grad_out(d_action, np.full(n, temperature / n))
    grads, _ = backward(policy, acts, g)
    return loss, grads


def sac_losses(policy, critics, targets, batch, gamma, temperature, noise_next, noise_pi, scale):
    """``((policy loss, grads), (critic loss, [grads per twin]))``."""
    return (sac_policy_loss(policy, critics, batch.obs, temperature, noise_pi, scale),
            sac_critic_loss(critics, targets, policy, batch, gamma, temperature, noise_next, scale))


# ---------------------------------------------------------------- continuous CQL

Sampler = Callable[[np.ndarray, int, np.random.Generator], tuple[np.ndarray, np.ndarray]]


def gaussian_sampler(policy: ParamSet, scale: float) -> Sampler:
    """``(states, n, rng) -> (actions (B, n, k), log-densities (B, n))`` for a tanh-Gaussian policy."""

    def sample(states, n, rng):
        b = len(states)
        k = policy.spec.output_dim // 2
        smp = sample_policy(policy, np.repeat(states, n, axis=0), rng.standard_normal((b * n, k)), scale)
        return smp.action.reshape(b, n, k), smp.log_prob.reshape(b, n)

    return sample


def cql_proposals(sampler: Sampler, obs: np.ndarray, next_obs: np.ndarray, n: int,
                  rng: np.random.Generator, low: np.ndarray, high: np.ndarray):
    """The 3N importance-sampling proposals: N uniform, N from pi(.|s), N from pi(.|s')."""
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    low, high = np.asarray(low, dtype=np.float64), np.asarray(high, dtype=np.float64)
    b, k = len(obs), len(low)
    uni = rng.uniform(low, high, size=(b, n, k))
    uni_logd = np.full((b, n), -np.sum(np.log(high - low)))
    a_cur, logd_cur = sampler(obs, n, rng)
    a_next, logd_next = sampler(next_obs, n, rng)
    actions = np.concatenate([uni, a_cur, a_next], axis=1)
    logd = np.concatenate([uni_logd, logd_cur, logd_next], axis=1)
    if not np.all(np.isfinite(logd)):
        raise ValueError("non-finite log-density among CQL proposal samples")
    return actions, logd


def cql_logsumexp_estimate(q_values: np.ndarray, log_density: np.ndarray) -> np.ndarray:
    """Importance-sampled ``log integral exp Q``: ``logsumexp(Q - log q) - log(count)`` on the last axis."""
    return logsumexp(q_values - log_density, axis=-1) - np.log(q_values.shape[-1])


def cql_logsumexp_continuous(q_fn: Callable[[np.ndarray, np.ndarray], np.ndarray], sampler: Sampler,
                             obs: np.ndarray, next_obs: np.ndarray, n: int,
                             rng: np.random.Generator, low, high) -> np.ndarray:
    """Per-state estimate of ``log integral exp Q(s, a) da``.

    ``q_fn(states, actions)`` maps ``(M, d)`` and ``(M, k)`` to ``(M,)`` values.
    """
    actions, logd = cql_proposals(sampler, obs, next_obs, n, rng, low, high)
    b, total, k = actions.shape
    q = q_fn(np.repeat(obs, total, axis=0), actions.reshape(b * total, k)).reshape(b, total)
    return cql_logsumexp_estimate(q, logd)


def cql_target_continuous(targets, policy, batch, gamma, noise, scale) -> np.ndarray:
    """Conservative-critic target: min of twin targets at ``a' ~ pi(.|s')`` with no entropy term."""
    return sac_critic_target(targets, policy, batch, gamma, 0.0, noise, scale)


def cql_critic_loss_continuous(critics: Sequence[ParamSet], targets: Sequence[ParamSet],
                               policy: ParamSet, batch: Batch, alpha: float, gamma: float,
                               n: int, rng: np.random.Generator, scale: float, low, high):
    """Sum over twins of ``alpha * mean(lse_est - Q(s, a_data)) + 0.5 * mean TD^2``."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    k = batch.actions.shape[1]
    y = cql_target_continuous(targets, policy, batch, gamma, rng.standard_normal((len(batch), k)), scale)
    loss, grads = twin_td_grads(critics, batch, y)
    if alpha == 0:
        return loss, grads
    b = len(batch)
    actions, logd = cql_proposals(gaussian_sampler(policy, scale), batch.obs, batch.next_obs,
                                  n, rng, low, high)
    total = actions.shape[1]
    obs_rep = np.repeat(batch.obs, total, axis=0)
    flat_actions = actions.reshape(b * total, k)
    for i, c in enumerate(critics):
        q, acts = q_sa_cached(c, obs_rep, flat_actions)
        v = q.reshape(b, total) - logd
        est = logsumexp(v, axis=1) - np.log(total)
        q_data, acts_data = q_sa_cached(c, batch.obs, batch.actions)
        loss += alpha * np.mean(est - q_data)
        w = softmax(v) * (alpha / b)
        g_lse = q_backward(c, acts, w.reshape(-1))[0]
        g_data = q_backward(c, acts_data, np.full(b, -alpha / b))[0]
        grads[i] = ParamSet(c.spec, grads[i].flat + g_lse.flat + g_data.flat)
    return loss, grads

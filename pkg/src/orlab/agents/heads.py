"""Policy and critic heads on top of the plain MLPs in :mod:`orlab.approx`."""

from __future__ import annotations

import numpy as np

from ..approx import ParamSet, backward, forward, forward_cached

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
# dataset actions sitting exactly on the bound are pulled inside before atanh
ATANH_CLIP = 0.999
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    y = z - z.max(axis=-1, keepdims=True)
    return y - np.log(np.exp(y).sum(axis=-1, keepdims=True))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def log1m_tanh_sq(u: np.ndarray) -> np.ndarray:
    """Stable ``log(1 - tanh(u)^2)``."""
    return 2.0 * (np.log(2.0) - u - softplus(-2.0 * u))


def split_gaussian(out: np.ndarray, action_dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(mu, log_std, mask)`` where ``mask`` is 1 where log-std was not clamped."""
    mu = out[:, :action_dim]
    raw = out[:, action_dim:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    mask = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(np.float64)
    return mu, log_std, mask


class GaussianSample:
    """A reparameterised tanh-Gaussian draw ``a = scale * tanh(mu + std * noise)``.

    Keeps what the backward pass needs so gradients w.r.t. ``a`` and
    ``log pi(a)`` can be pushed back to the policy outputs.
    """

    def __init__(self, out: np.ndarray, noise: np.ndarray, scale: float):
        k = noise.shape[-1]
        self.mu, self.log_std, self.mask = split_gaussian(out, k)
        self.noise = noise
        self.scale = scale
        self.std = np.exp(self.log_std)
        self.u = self.mu + self.std * noise
        self.tanh_u = np.tanh(self.u)
        self.action = scale * self.tanh_u
        self.log_prob = np.sum(-0.5 * noise ** 2 - self.log_std - _HALF_LOG_2PI
                               - np.log(scale) - log1m_tanh_sq(self.u), axis=-1)

    def grad_out(self, d_action: np.ndarray, d_logp: np.ndarray) -> np.ndarray:
        """Map ``dL/da`` (n, k) and ``dL/dlog pi`` (n,) to ``dL/d head output`` (n, 2k)."""
        da_du = self.scale * (1.0 - self.tanh_u ** 2)
        dlogp_dmu = 2.0 * self.tanh_u
        dlogp_dlogstd = -1.0 + 2.0 * self.tanh_u * self.std * self.noise
        g_mu = d_action * da_du + d_logp[:, None] * dlogp_dmu
        g_ls = d_action * da_du * self.std * self.noise + d_logp[:, None] * dlogp_dlogstd
        return np.concatenate([g_mu, g_ls * self.mask], axis=1)


def gaussian_log_prob(out: np.ndarray, actions: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """``log pi(a|s)`` of given actions and its gradient w.r.t. the head output."""
    k = actions.shape[-1]
    mu, log_std, mask = split_gaussian(out, k)
    std = np.exp(log_std)
    y = np.clip(actions / scale, -ATANH_CLIP, ATANH_CLIP)
    u = np.arctanh(y)
    z = (u - mu) / std
    log_prob = np.sum(-0.5 * z ** 2 - log_std - _HALF_LOG_2PI - np.log(scale * (1.0 - y ** 2)), axis=-1)
    g = np.concatenate([z / std, (z ** 2 - 1.0) * mask], axis=1)
    return log_prob, g


def gaussian_mean_action(out: np.ndarray, action_dim: int, scale: float) -> np.ndarray:
    return scale * np.tanh(out[:, :action_dim])


def q_sa(critic: ParamSet, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Continuous critic value ``Q(s, a)`` as a flat vector."""
    return forward(critic, np.concatenate([obs, actions], axis=1))[:, 0]


def q_sa_cached(critic: ParamSet, obs: np.ndarray, actions: np.ndarray):
    out, acts = forward_cached(critic, np.concatenate([obs, actions], axis=1))
    return out[:, 0], acts


def q_backward(critic: ParamSet, acts, d_q: np.ndarray, action_dim: int | None = None):
    """Backprop ``dL/dQ`` (n,); also return ``dL/da`` when ``action_dim`` is given."""
    grads, g_in = backward(critic, acts, d_q[:, None], need_input_grad=action_dim is not None)
    if action_dim is None:
        return grads, None
    return grads, g_in[:, -action_dim:]

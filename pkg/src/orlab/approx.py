"""Small numpy function-approximation core.

Fully connected relu networks with a hand-written reverse pass, Adam, a
stable log-sum-exp and a central finite-difference gradient checker.
Everything is float64.

Parameters of one network live in a single flat vector; per-layer weight
and bias arrays are views into it.  That keeps Adam, soft target updates
and gradient checking to one vectorised operation each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "LayerSpec",
    "ParamSet",
    "AdamState",
    "DivergenceError",
    "mlp_init",
    "forward",
    "forward_cached",
    "backward",
    "logsumexp",
    "adam_init",
    "adam_step",
    "soft_update",
    "grad_check",
    "save_params",
    "load_params",
]


class DivergenceError(FloatingPointError):
    """Raised when a gradient or loss stops being finite."""


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = (256, 256)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden:
            raise ValueError("hidden layer list must be non-empty")
        if min(self.dims) < 1:
            raise ValueError(f"all layer dims must be >= 1, got {self.dims}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        d = self.dims
        return [((d[i + 1], d[i]), (d[i + 1],)) for i in range(len(d) - 1)]

    @property
    def n_params(self) -> int:
        return sum(w[0] * w[1] + b[0] for w, b in self.shapes)

    def header(self) -> str:
        return f"LayerSpec input={self.input_dim} hidden={','.join(map(str, self.hidden))} output={self.output_dim}"

    @classmethod
    def from_header(cls, line: str) -> "LayerSpec":
        parts = dict(p.split("=", 1) for p in line.split()[1:])
        return cls(int(parts["input"]), int(parts["output"]),
                   tuple(int(h) for h in parts["hidden"].split(",")))


class ParamSet:
    """Weights ``(out, in)`` and biases ``(out,)`` of every layer, backed by ``flat``."""

    __slots__ = ("spec", "flat", "weights", "biases")

    def __init__(self, spec: LayerSpec, flat: np.ndarray | None = None):
        self.spec = spec
        if flat is None:
            flat = np.zeros(spec.n_params)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (spec.n_params,):
            raise ValueError(f"flat vector has shape {flat.shape}, expected ({spec.n_params},)")
        self.flat = flat
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        off = 0
        for (wshape, bshape) in spec.shapes:
            n = wshape[0] * wshape[1]
            self.weights.append(flat[off:off + n].reshape(wshape))
            off += n
            self.biases.append(flat[off:off + bshape[0]])
            off += bshape[0]

    def copy(self) -> "ParamSet":
        return ParamSet(self.spec, self.flat.copy())

    def zeros_like(self) -> "ParamSet":
        return ParamSet(self.spec)

    def __eq__(self, other):
        return (isinstance(other, ParamSet) and self.spec == other.spec
                and np.array_equal(self.flat, other.flat))

    def __repr__(self):
        return f"ParamSet({self.spec.header()})"


def mlp_init(spec: LayerSpec, seed: int) -> ParamSet:
    """Fan-in uniform init: ``W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, zero biases.

    The output layer is scaled down by 0.1 so initial outputs sit near zero.
    """
    rng = np.random.default_rng(seed)
    params = ParamSet(spec)
    last = len(spec.shapes) - 1
    for i, w in enumerate(params.weights):
        bound = 1.0 / math.sqrt(w.shape[1])
        if i == last:
            bound *= 0.1
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return params


def _check_input(params: ParamSet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.spec.input_dim:
        raise ValueError(f"input dim {x.shape[-1]} != network input_dim {params.spec.input_dim}")
    return x


def forward(params: ParamSet, x: np.ndarray) -> np.ndarray:
    """Network output for a single input vector or a batch ``(n, input_dim)``."""
    h = _check_input(params, x)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def forward_cached(params: ParamSet, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Batched forward pass that also returns the layer inputs needed by :func:`backward`."""
    h = _check_input(params, x)
    if h.ndim == 1:
        h = h[None, :]
    acts = [h]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if i < last:
            h = np.maximum(h, 0.0)
            acts.append(h)
    return h, acts


def backward(params: ParamSet, acts: list[np.ndarray], grad_out: np.ndarray,
             need_input_grad: bool = False) -> tuple[ParamSet, np.ndarray | None]:
    """Reverse pass: gradient of a scalar loss given ``dL/d output``.

    Returns the parameter gradient and, if requested, ``dL/d input``.
    """
    grads = params.zeros_like()
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    n_layers = len(params.weights)
    for i in range(n_layers - 1, -1, -1):
        a_in = acts[i]
        grads.weights[i][...] = g.T @ a_in
        grads.biases[i][...] = g.sum(axis=0)
        if i == 0 and not need_input_grad:
            return grads, None
        g = g @ params.weights[i]
        if i > 0:
            # relu'(z) is 1 where the post-activation output is positive
            g = g * (a_in > 0.0)
    return grads, g


def logsumexp(values: Sequence[float] | np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """``max(v) + log(sum(exp(v - max(v))))`` along ``axis`` (all entries when None)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("logsumexp of an empty vector")
    if axis is None:
        m = v.max()
        if not np.isfinite(m):
            return float(m)
        return float(m + math.log(np.exp(v - m).sum()))
    m = v.max(axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.exp(v - m_safe).sum(axis=axis, keepdims=True)) + m_safe
    return np.squeeze(out, axis=axis)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step, self.lr,
                         self.beta1, self.beta2, self.eps)


def adam_init(params: ParamSet, lr: float = 3e-4) -> AdamState:
    n = params.spec.n_params
    return AdamState(np.zeros(n), np.zeros(n), 0, lr)


def adam_step(params: ParamSet, grads: ParamSet, state: AdamState) -> tuple[ParamSet, AdamState]:
    """One bias-corrected Adam update.  Inputs are left untouched."""
    g = grads.flat
    if g.shape != params.flat.shape:
        raise ValueError("gradient shape does not match parameters")
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient passed to adam_step")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    flat = params.flat - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)
    return ParamSet(params.spec, flat), new_state


def soft_update(target: ParamSet, source: ParamSet, tau: float) -> ParamSet:
    """Polyak average ``(1 - tau) * target + tau * source``."""
    return ParamSet(target.spec, (1.0 - tau) * target.flat + tau * source.flat)


def grad_check(params: ParamSet, loss_and_grad: Callable[[ParamSet], tuple[float, ParamSet]],
               eps: float = 1e-5, n_checks: int = 100, seed: int = 0,
               analytic: ParamSet | None = None, floor: float = 1e-7) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_and_grad`` maps a ParamSet to ``(loss, grad)``; any batch or
    sampling noise must be frozen inside it.  A random subset of
    ``n_checks`` coordinates (all of them if the net is smaller) is probed.
    ``analytic`` overrides the gradient returned at ``params``.  Errors are
    relative to ``max(|analytic|, |numeric|, floor)`` so that exactly-zero
    coordinates (dead relus) do not divide by zero.
    """
    loss0, grad0 = loss_and_grad(params)
    if not np.isfinite(loss0):
        raise DivergenceError("loss is not finite at the unperturbed parameters")
    if analytic is not None:
        grad0 = analytic
    n = params.spec.n_params
    rng = np.random.default_rng(seed)
    idx = np.arange(n) if n <= n_checks else rng.choice(n, size=n_checks, replace=False)
    worst = 0.0
    for i in idx:
        plus = params.copy()
        plus.flat[i] += eps
        minus = params.copy()
        minus.flat[i] -= eps
        lp = loss_and_grad(plus)[0]
        lm = loss_and_grad(minus)[0]
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise DivergenceError(f"loss is not finite when perturbing parameter {i}")
        numeric = (lp - lm) / (2.0 * eps)
        a = grad0.flat[i]
        denom = max(abs(a), abs(numeric), floor)
        worst = max(worst, abs(a - numeric) / denom)
    return worst


def save_params(params: ParamSet, path) -> None:
    """Header line with the LayerSpec, then little-endian float64 values, layer-major."""
    with open(path, "wb") as fh:
        fh.write((params.spec.header() + "\n").encode("ascii"))
        fh.write(params.flat.astype("<f8").tobytes())


def load_params(path) -> ParamSet:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        spec = LayerSpec.from_header(header)
        data = fh.read()
    flat = np.frombuffer(data, dtype="<f8")
    if flat.size != spec.n_params:
        raise ValueError(f"checkpoint holds {flat.size} values, spec needs {spec.n_params}")
    return ParamSet(spec, flat.astype(np.float64))

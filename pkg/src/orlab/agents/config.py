"""Agent hyper-parameters and ``key=value`` overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

ALGOS = ("bc", "dqn", "sac", "cql", "crr", "ccrr")

HELP = {
    "algo": "algorithm: " + ", ".join(ALGOS),
    "gamma": "discount factor",
    "batch_size": "transitions per gradient step",
    "hidden": "hidden layer widths of actor and critic, comma separated",
    "actor_lr": "policy learning rate",
    "critic_lr": "critic learning rate",
    "cql_policy_lr": "policy learning rate used by cql",
    "tau": "soft target update rate",
    "alpha": "conservative penalty weight (cql, ccrr)",
    "beta": "advantage temperature of the exponential filter (crr, ccrr)",
    "filter": "crr filter: binary or exp",
    "advantage": "crr advantage: mean or max",
    "m": "policy samples per advantage estimate (continuous actions)",
    "n_samples": "samples per proposal in the continuous conservative penalty",
    "temperature": "entropy temperature of soft policy updates",
    "bc_warmup": "initial policy updates that clone dataset actions (continuous cql)",
    "exp_clip": "upper clip of exponential filter weights",
    "eval_every": "gradient steps between checkpoints and evaluations",
    "eval_episodes": "evaluation episodes per checkpoint",
}


@dataclass(frozen=True)
class AgentConfig:
    algo: str = "bc"
    gamma: float = 0.99
    batch_size: int = 256
    hidden: tuple[int, ...] = (256, 256)
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    cql_policy_lr: float = 3e-5
    tau: float = 0.05
    alpha: float = 1.0
    beta: float = 1.0
    filter: str = "exp"
    advantage: str = "mean"
    m: int = 4
    n_samples: int = 10
    temperature: float = 0.2
    bc_warmup: int = 0
    exp_clip: float = 20.0
    eval_every: int = 5000
    eval_episodes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}; expected one of {ALGOS}")
        for name in ("actor_lr", "critic_lr", "cql_policy_lr", "tau", "beta", "exp_clip"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.tau > 1:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.alpha < 0 or self.temperature < 0:
            raise ValueError("alpha and temperature must be >= 0")
        if self.bc_warmup < 0:
            raise ValueError(f"bc_warmup must be >= 0, got {self.bc_warmup}")
        for name in ("m", "n_samples", "batch_size", "eval_every", "eval_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError(f"hidden widths must be positive, got {self.hidden}")
        if self.filter not in ("binary", "exp"):
            raise ValueError(f"filter must be binary or exp, got {self.filter!r}")
        if self.advantage not in ("mean", "max"):
            raise ValueError(f"advantage must be mean or max, got {self.advantage!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def with_overrides(self, overrides) -> "AgentConfig":
        """Apply ``key=value`` strings (or a dict) validated against the schema."""
        if isinstance(overrides, dict):
            items = overrides.items()
        else:
            items = [parse_override(s) for s in overrides]
        updates = {}
        types = {f.name: f.type for f in fields(self)}
        for key, value in items:
            if key not in types:
                raise ValueError(f"unknown hyper-parameter {key!r}; valid keys: {', '.join(types)}")
            updates[key] = coerce(key, types[key], value)
        return dataclasses.replace(self, **updates)


def parse_override(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ValueError(f"malformed override {text!r}; expected key=value")
    return key.strip(), value.strip()


def coerce(key: str, type_name, value):
    if not isinstance(value, str):
        return tuple(value) if key == "hidden" else value
    t = str(type_name)
    try:
        if key == "hidden":
            return tuple(int(v) for v in value.split(",") if v.strip())
        if t == "int":
            return int(value)
        if t == "float":
            return float(value)
    except ValueError as exc:
        raise ValueError(f"bad value for {key}: {value!r}") from exc
    return value


def help_text() -> str:
    """One line per hyper-parameter with its default."""
    default = AgentConfig()
    lines = []
    for f in fields(AgentConfig):
        value = getattr(default, f.name)
        shown = ",".join(map(str, value)) if f.name == "hidden" else value
        lines.append(f"  {f.name}={shown}  ({HELP[f.name]})")
    return "\n".join(lines)


def dumps(config: AgentConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True)

"""Multi-seed experiments, sweeps and online fine-tuning."""

from __future__ import annotations

import dataclasses
import itertools
import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..agents.config import AgentConfig
from ..agents.offline import Agent, TrainingDivergence, train_offline
from ..approx import forward, save_params
from ..data.dataset import OfflineDataset, ReplayBuffer, load
from ..data.protocols import GeneratorDescriptor, generate
from ..envs import make_env
from .evaluation import evaluate


@dataclass(frozen=True)
class DatasetSpec:
    """Where a run's data comes from: a generator descriptor plus seed, or a file."""

    protocol: str | None = None
    params: dict = field(default_factory=dict)
    n_episodes: int | None = None
    n_transitions: int | None = None
    seed: int = 0
    path: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(**d)

    def key(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def describe(self) -> str:
        if self.path:
            return self.path
        extra = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.protocol}({extra})"


@lru_cache(maxsize=16)
def _materialise(key: str) -> OfflineDataset:
    spec = DatasetSpec.from_dict(json.loads(key))
    if spec.path:
        return load(spec.path)
    desc = GeneratorDescriptor(spec.protocol, spec.params, spec.n_episodes, spec.n_transitions)
    return generate(desc, seed=spec.seed)


def materialise(spec: DatasetSpec) -> OfflineDataset:
    """Generate or load the dataset (cached per process)."""
    return _materialise(spec.key())


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: DatasetSpec
    agent: AgentConfig
    n_steps: int = 50_000
    seeds: tuple[int, ...] = (0, 1, 2)
    eval_episodes: int = 10
    finetune_steps: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("an experiment needs at least one seed")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")
        if self.n_steps < 0 or self.finetune_steps < 0:
            raise ValueError("step budgets must be >= 0")

    def to_dict(self) -> dict:
        return {"name": self.name, "dataset": self.dataset.to_dict(), "agent": self.agent.to_dict(),
                "n_steps": self.n_steps, "seeds": list(self.seeds),
                "eval_episodes": self.eval_episodes, "finetune_steps": self.finetune_steps}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["dataset"] = DatasetSpec.from_dict(d["dataset"])
        d["agent"] = AgentConfig.from_dict(d["agent"])
        return cls(**d)


@dataclass
class SeedSeries:
    seed: int
    steps: list = field(default_factory=list)
    means: list = field(default_factory=list)
    stds: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    error: str | None = None

    @property
    def final_mean(self) -> float:
        return self.means[-1] if self.means else float("nan")

    @property
    def final_length(self) -> float:
        return self.lengths[-1] if self.lengths else float("nan")


@dataclass
class EvalReport:
    name: str
    steps: list
    seeds: list  # SeedSeries
    mean: list   # per checkpoint, mean over seeds of per-seed means
    var: list    # per checkpoint, variance over seeds of per-seed means
    phase_boundary: int | None = None

    @property
    def final_mean(self) -> float:
        return self.mean[-1] if self.mean else float("nan")

    @property
    def final_var(self) -> float:
        return self.var[-1] if self.var else float("nan")

    @property
    def final_lengths(self) -> list:
        return [s.final_length for s in self.seeds]

    @property
    def failed(self) -> list:
        return [s for s in self.seeds if s.error]

    def to_dict(self) -> dict:
        return {"name": self.name, "steps": self.steps, "mean": self.mean, "var": self.var,
                "phase_boundary": self.phase_boundary,
                "final_mean": self.final_mean, "final_var": self.final_var,
                "seeds": [dataclasses.asdict(s) for s in self.seeds]}


def aggregate(name: str, series: list[SeedSeries], phase_boundary: int | None = None) -> EvalReport:
    """Mean and variance over seeds at the checkpoints every successful seed reached."""
    ok = [s for s in series if not s.error]
    steps = list(ok[0].steps) if ok else []
    for s in ok[1:]:
        steps = [t for t in steps if t in s.steps]
    mean, var = [], []
    for t in steps:
        vals = np.array([s.means[s.steps.index(t)] for s in ok])
        mean.append(float(np.mean(vals)))
        var.append(float(np.var(vals)))
    return EvalReport(name, steps, series, mean, var, phase_boundary)


def _eval_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, step]).generate_state(1)[0])


def make_eval_hook(env_id: str, n_episodes: int, seed: int):
    env = make_env(env_id)

    def hook(step: int, agent: Agent) -> dict:
        return evaluate(agent, env, n_episodes, seed=_eval_seed(seed, step)).as_dict()

    return hook


def _run_seed(cfg: ExperimentConfig, seed: int, out_dir: str | None) -> SeedSeries:
    series = SeedSeries(seed)
    seed_dir = Path(out_dir) / f"seed_{seed}" if out_dir else None
    if seed_dir is not None:
        seed_dir.mkdir(parents=True, exist_ok=True)
        (seed_dir / "metrics.jsonl").unlink(missing_ok=True)
    try:
        dataset = materialise(cfg.dataset)
        checksum = dataset.checksum()
        hook = make_eval_hook(dataset.manifest.env_id, cfg.eval_episodes, seed)
        log_path = seed_dir / "metrics.jsonl" if seed_dir else None
        ckpt_dir = seed_dir / "checkpoints" if seed_dir else None
        result = train_offline(cfg.agent, dataset, cfg.n_steps, seed, eval_hook=hook,
                               log_path=log_path, checkpoint_dir=ckpt_dir)
        records = list(result.metrics)
        if cfg.finetune_steps:
            ft = fine_tune(result.agent, dataset, cfg.finetune_steps, seed, cfg.eval_episodes,
                           step_offset=cfg.n_steps, log_path=log_path)
            records += ft.metrics
        if dataset.checksum() != checksum:
            raise RuntimeError("training modified the offline dataset")
        for r in records:
            series.steps.append(r["step"])
            series.means.append(r["eval_mean"])
            series.stds.append(r["eval_std"])
            series.lengths.append(r["eval_length"])
        if seed_dir is not None:
            for name, params in result.agent.networks().items():
                save_params(params, seed_dir / f"final_{name}.params")
    except (TrainingDivergence, FloatingPointError, ValueError, RuntimeError) as exc:
        series.error = f"{type(exc).__name__}: {exc}"
        if seed_dir is not None:
            (seed_dir / "error.txt").write_text(traceback.format_exc())
    return series


def _pool_map(fn, args_list, workers: int):
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *a) for a in args_list]
        return [f.result() for f in futures]


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_experiment(config: ExperimentConfig, out_dir=None, workers: int = 1) -> EvalReport:
    """Train every seed, evaluate at each checkpoint and aggregate.

    With ``out_dir`` the bundle holds ``config.json``, ``seed_<s>/metrics.jsonl``,
    ``seed_<s>/checkpoints/`` and ``summary.json``.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "config.json", config.to_dict())
    args = [(config, s, str(out) if out else None) for s in config.seeds]
    series = _pool_map(_run_seed, args, workers)
    report = aggregate(config.name, series, config.n_steps if config.finetune_steps else None)
    if out is not None:
        write_json(out / "summary.json", report.to_dict())
    return report


# ---------------------------------------------------------------- sweeps

def apply_overrides(base: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """``data.<param>`` keys change dataset parameters, ``n_steps`` the budget, the rest the agent."""
    agent_over, data_over, top = {}, {}, {}
    for k, v in overrides.items():
        if k.startswith("data."):
            data_over[k[5:]] = v
        elif k in ("n_steps", "eval_episodes", "finetune_steps"):
            top[k] = int(v)
        else:
            agent_over[k] = v
    agent = base.agent.with_overrides({k: v for k, v in agent_over.items()})
    dataset = base.dataset
    if data_over:
        dataset = dataclasses.replace(dataset, params={**dataset.params, **data_over})
    label = ",".join(f"{k}={v}" for k, v in overrides.items()) or "base"
    return dataclasses.replace(base, agent=agent, dataset=dataset, name=f"{base.name}[{label}]", **top)


@dataclass
class SweepRow:
    overrides: dict
    report: EvalReport | None
    error: str | None = None

    @property
    def final_mean(self) -> float:
        return self.report.final_mean if self.report else float("nan")


def grid_points(grid: dict) -> list[dict]:
    if not grid:
        return [{}]
    keys = list(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def _sweep_one(base: ExperimentConfig, point: dict, out_dir: str | None) -> SweepRow:
    try:
        cfg = apply_overrides(base, point)
    except ValueError as exc:
        return SweepRow(point, None, str(exc))
    report = run_experiment(cfg, out_dir)
    err = "; ".join(s.error for s in report.failed) or None
    return SweepRow(point, report, err)


def sweep(base: ExperimentConfig, grid: dict, out_dir=None, workers: int = 1) -> list[SweepRow]:
    """Cross product of ``grid`` over ``base``; rows sorted by final mean return (best first)."""
    out = Path(out_dir) if out_dir is not None else None
    points = grid_points(grid)
    args = []
    for i, p in enumerate(points):
        args.append((base, p, str(out / f"run_{i:03d}") if out else None))
    rows = _pool_map(_sweep_one, args, workers)
    rows.sort(key=lambda r: -np.nan_to_num(r.final_mean, nan=-np.inf))
    if out is not None:
        write_json(out / "sweep.json", sweep_table(rows))
    return rows


def sweep_table(rows: list[SweepRow]) -> list[dict]:
    return [{"overrides": r.overrides, "final_mean": r.final_mean,
             "final_var": r.report.final_var if r.report else None,
             "final_lengths": r.report.final_lengths if r.report else None,
             "error": r.error} for r in rows]


# ---------------------------------------------------------------- fine-tuning

@dataclass
class FineTuneResult:
    metrics: list
    buffer: ReplayBuffer
    agent: Agent


def _explore_action(agent: Agent, obs: np.ndarray, rng: np.random.Generator):
    """Behaviour during fine-tuning: a sample from the policy (eps-greedy 0.1 for Q-only agents)."""
    out = forward(agent.policy_params(), obs[None, :])[0]
    if agent.discrete:
        if agent.config.algo == "dqn":
            return int(rng.integers(agent.n_actions)) if rng.random() < 0.1 else int(np.argmax(out))
        p = np.exp(out - out.max())
        return int(rng.choice(agent.n_actions, p=p / p.sum()))
    k = agent.action_dim
    mu, log_std = out[:k], np.clip(out[k:], -20.0, 2.0)
    return agent.scale * np.tanh(mu + np.exp(log_std) * rng.standard_normal(k))


def fine_tune(agent: Agent, dataset: OfflineDataset, online_steps: int, seed: int = 0,
              eval_episodes: int = 10, step_offset: int = 0, capacity: int = 1_000_000,
              log_path=None) -> FineTuneResult:
    """Continue training online: each env step adds one transition and takes one gradient step.

    The replay buffer starts as a copy of the offline dataset.  Evaluation
    points continue the offline step count, so the phase boundary is
    ``step_offset``.
    """
    if online_steps < 0:
        raise ValueError("online_steps must be >= 0")
    buffer = ReplayBuffer(dataset, capacity)
    env = make_env(dataset.manifest.env_id)
    hook = make_eval_hook(dataset.manifest.env_id, eval_episodes, seed)
    env_rng = np.random.default_rng([seed, 7])
    obs = env.reset(env_rng)
    state = {"obs": obs}

    def sampler(batch_size, rng):
        o = state["obs"]
        a = _explore_action(agent, o, rng)
        nxt, r, done = env.step(a)
        buffer.add(o, a, r, nxt, done)
        state["obs"] = env.reset(env_rng) if done else nxt
        return buffer.sample(batch_size, rng)

    if online_steps == 0:
        return FineTuneResult([], buffer, agent)
    result = train_offline(agent.config, dataset, online_steps, seed + 10_000, eval_hook=hook,
                           log_path=log_path, agent=agent, sampler=sampler, step_offset=step_offset)
    for r in result.metrics:
        r["phase"] = "online"
    return FineTuneResult(result.metrics, buffer, agent)

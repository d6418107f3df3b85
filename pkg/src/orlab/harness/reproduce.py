"""Canned reproduction runs with pass/fail checks against the acceptance thresholds.

Two scales exist.  ``full`` uses the calibrated desk-scale budgets below;
``smoke`` shrinks datasets and step counts so the whole suite runs in a
couple of minutes (used for determinism checks and CLI tests; its checks
are computed but not expected to pass).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..agents.config import AgentConfig
from ..diag import diagnose
from .runner import (DatasetSpec, EvalReport, ExperimentConfig, materialise, run_experiment,
                     write_json)

EXPERIMENTS = ("exp1", "exp2", "exp3", "pointmaze", "sweep_cql", "sweep_crr", "batch_size")
SCALES = ("full", "smoke")

# reference dataset returns for the eps-greedy expert sweep
EPS_REFERENCE = {0.0: 0.991, 0.3: 0.986, 0.6: 0.974, 0.8: 0.947, 0.9: 0.908, 1.0: 0.796}
CQL_ALPHAS = (0.001, 0.01, 0.1, 1.0)


@dataclass(frozen=True)
class Budget:
    grid_hidden: tuple[int, ...]
    grid_steps: int
    grid_episodes: int
    lava_episodes: int
    eval_every: int
    eval_episodes: int
    maze_hidden: tuple[int, ...]
    maze_steps: int
    maze_transitions: int
    seeds: tuple[int, ...] = (0, 1, 2)


BUDGETS = {
    "full": Budget(grid_hidden=(32, 32), grid_steps=15_000, grid_episodes=1000, lava_episodes=3000,
                   eval_every=5000, eval_episodes=10, maze_hidden=(32, 32), maze_steps=10_000,
                   maze_transitions=100_000),
    "smoke": Budget(grid_hidden=(16, 16), grid_steps=60, grid_episodes=30, lava_episodes=60,
                    eval_every=30, eval_episodes=2, maze_hidden=(16, 16), maze_steps=60,
                    maze_transitions=1000, seeds=(0, 1)),
}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class ReproReport:
    experiment: str
    scale: str
    checks: list = field(default_factory=list)
    table: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "scale": self.scale, "passed": self.passed,
                "checks": [dataclasses.asdict(c) for c in self.checks],
                "table": self.table, "notes": self.notes}

    def text(self) -> str:
        lines = [f"{self.experiment} ({self.scale} scale)"]
        lines += [f"  {n}" for n in self.notes]
        for row in self.table:
            lines.append("  " + "  ".join(f"{k}={_fmt(v)}" for k, v in row.items()))
        lines += ["  " + c.line() for c in self.checks]
        lines.append(f"  overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    if isinstance(v, list):
        return "[" + ",".join(_fmt(x) for x in v) + "]"
    return str(v)


class _Ctx:
    """Shared plumbing for one reproduction: budgets, output dirs, run bookkeeping."""

    def __init__(self, experiment: str, scale: str, out_dir, workers: int):
        if scale not in SCALES:
            raise ValueError(f"unknown scale {scale!r}; expected one of {SCALES}")
        self.b = BUDGETS[scale]
        self.out = Path(out_dir) / experiment if out_dir is not None else None
        self.workers = workers
        self.report = ReproReport(experiment, scale)

    def grid_agent(self, algo: str, **kw) -> AgentConfig:
        return AgentConfig(algo=algo, hidden=self.b.grid_hidden, eval_every=self.b.eval_every,
                           eval_episodes=self.b.eval_episodes, **kw)

    def maze_agent(self, algo: str, **kw) -> AgentConfig:
        return AgentConfig(algo=algo, hidden=self.b.maze_hidden, eval_every=self.b.eval_every,
                           eval_episodes=self.b.eval_episodes, **kw)

    def eps_data(self, eps: float) -> DatasetSpec:
        return DatasetSpec("eps_greedy_expert", {"eps": eps}, n_episodes=self.b.grid_episodes)

    def lava_data(self) -> DatasetSpec:
        return DatasetSpec("random", {"env_id": "grid/distshift"}, n_episodes=self.b.lava_episodes)

    def multimodal_data(self) -> DatasetSpec:
        return DatasetSpec("multimodal", {"frac_a": 0.2, "eps": 0.1}, n_episodes=self.b.grid_episodes)

    def maze_data(self, quality: str) -> DatasetSpec:
        return DatasetSpec("continuous_quality", {"quality": quality}, n_transitions=self.b.maze_transitions)

    def run(self, name: str, data: DatasetSpec, agent: AgentConfig, steps: int | None = None) -> EvalReport:
        cfg = ExperimentConfig(name, data, agent, steps if steps is not None else self.b.grid_steps,
                               self.b.seeds, self.b.eval_episodes)
        sub = self.out / _slug(name) if self.out is not None else None
        return run_experiment(cfg, sub, self.workers)

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.report.checks.append(Check(name, bool(passed), detail))


def _slug(name: str) -> str:
    keep = [c if c.isalnum() or c in "._-" else "_" for c in name]
    return "".join(keep).strip("_")


def _finals(rep: EvalReport) -> list:
    return [round(s.final_mean, 6) for s in rep.seeds]


# ---------------------------------------------------------------- experiments

def _exp1(ctx: _Ctx) -> None:
    """Dataset quality sweep: BC, DQN, CRR and CQL on expert, noisy and random data."""
    results = {}
    for eps in (0.0, 0.8, 1.0):
        data = ctx.eps_data(eps)
        mean = diagnose(materialise(data)).mean_return
        ctx.report.notes.append(f"dataset eps={eps}: mean return {mean:.3f} (reference {EPS_REFERENCE[eps]})")
        runs = {"BC": ctx.grid_agent("bc"), "DQN": ctx.grid_agent("dqn"),
                "CRR_exp": ctx.grid_agent("crr", filter="exp", beta=1.0)}
        for a in (0.01, 1.0):
            runs[f"CQL a={a}"] = ctx.grid_agent("cql", alpha=a)
        for label, agent in runs.items():
            rep = ctx.run(f"eps{eps}-{label}", data, agent)
            results[(eps, label)] = rep.final_mean
            ctx.report.table.append({"eps": eps, "method": label, "final_mean": rep.final_mean,
                                     "per_seed": _finals(rep)})
    r = results
    ctx.check("eps=0 BC >= 0.97", r[(0.0, "BC")] >= 0.97, f"{r[(0.0, 'BC')]:.4f}")
    ctx.check("eps=0 DQN < 0.5", r[(0.0, "DQN")] < 0.5, f"{r[(0.0, 'DQN')]:.4f}")
    ctx.check("eps=1 DQN >= 0.9", r[(1.0, "DQN")] >= 0.9, f"{r[(1.0, 'DQN')]:.4f}")
    ctx.check("eps=1 BC <= 0.6", r[(1.0, "BC")] <= 0.6, f"{r[(1.0, 'BC')]:.4f}")
    for eps in (0.0, 0.8, 1.0):
        best = max(v for (e, _), v in r.items() if e == eps)
        cql = max(r[(eps, "CQL a=0.01")], r[(eps, "CQL a=1.0")])
        ctx.check(f"eps={eps} best-alpha CQL within 0.03 of best", cql >= best - 0.03,
                  f"CQL {cql:.4f} vs best {best:.4f}")
    small, large = "CQL a=0.01", "CQL a=1.0"
    ctx.check("CQL small alpha better on random data", r[(1.0, small)] > r[(1.0, large)],
              f"{r[(1.0, small)]:.4f} vs {r[(1.0, large)]:.4f}")
    ctx.check("CQL large alpha better on expert data", r[(0.0, large)] > r[(0.0, small)],
              f"{r[(0.0, large)]:.4f} vs {r[(0.0, small)]:.4f}")


def _exp2(ctx: _Ctx) -> None:
    """Stitching on the random-lava dataset."""
    data = ctx.lava_data()
    rep = diagnose(materialise(data))
    ctx.report.notes.append(f"lava dataset: {rep.positive_fraction:.2%} positive episodes, "
                            f"mean return {rep.mean_return:.4f}, max {rep.max_return:.4f}")
    ctx.check("dataset positive fraction 3.1% +- 1pt", abs(rep.positive_fraction - 0.031) <= 0.01,
              f"{rep.positive_fraction:.4f}")
    ctx.check("dataset mean return 0.024 +- 30%", abs(rep.mean_return - 0.024) <= 0.3 * 0.024,
              f"{rep.mean_return:.4f}")
    finals = {}
    runs = {"BC": ctx.grid_agent("bc"), "DQN": ctx.grid_agent("dqn"),
            "CRR_exp": ctx.grid_agent("crr", filter="exp", beta=1.0)}
    for a in CQL_ALPHAS:
        runs[f"CQL a={a}"] = ctx.grid_agent("cql", alpha=a)
    for label, agent in runs.items():
        r = ctx.run(f"lava-{label}", data, agent)
        finals[label] = r.final_mean
        ctx.report.table.append({"method": label, "final_mean": r.final_mean, "per_seed": _finals(r),
                                 "final_lengths": r.final_lengths})
    best_cql = max(v for k, v in finals.items() if k.startswith("CQL"))
    ctx.check("CRR_exp exceeds dataset max return", finals["CRR_exp"] > rep.max_return,
              f"{finals['CRR_exp']:.4f} vs {rep.max_return:.4f}")
    ctx.check("best-alpha CQL exceeds 10x dataset mean", best_cql > 10 * rep.mean_return,
              f"{best_cql:.4f} vs {10 * rep.mean_return:.4f}")
    for m in ("BC", "DQN"):
        ctx.check(f"{m} below dataset max return", finals[m] < rep.max_return,
                  f"{finals[m]:.4f} vs {rep.max_return:.4f}")


TABLE1 = (
    ("BC", "bc", {}, 17),
    ("CRR_exp beta=1", "crr", {"filter": "exp", "beta": 1.0}, 17),
    ("CRR_exp beta=0.01", "crr", {"filter": "exp", "beta": 0.01}, 500),
    ("CQL alpha=0.001", "cql", {"alpha": 0.001}, 500),
    ("CQL alpha=0.01", "cql", {"alpha": 0.01}, 13),
    ("CQL alpha=0.1", "cql", {"alpha": 0.1}, 17),
    ("CQL alpha=1", "cql", {"alpha": 1.0}, 17),
    ("CCRR alpha=0.01 beta=0.01", "ccrr", {"alpha": 0.01, "beta": 0.01}, 13),
    ("CCRR alpha=0.01 beta=1", "ccrr", {"alpha": 0.01, "beta": 1.0}, 17),
)


def _exp3(ctx: _Ctx) -> None:
    """Multi-modal dataset: which expert's route (13 or 17 steps) each method settles on."""
    data = ctx.multimodal_data()
    ds = materialise(data)
    tags = ds.manifest.episode_tags or []
    ctx.report.notes.append(f"multimodal dataset: {tags.count('A')} episodes from expert A, "
                            f"{tags.count('B')} from expert B")
    for label, algo, kw, expected in TABLE1:
        r = ctx.run(f"mm-{label}", data, ctx.grid_agent(algo, **kw))
        lengths = [int(x) if np.isfinite(x) else -1 for x in r.final_lengths]
        hits = sum(1 for x in lengths if x == expected)
        ctx.report.table.append({"method": label, "expected": expected, "final_lengths": lengths})
        ctx.check(f"{label} -> {expected}", hits >= min(2, len(lengths)),
                  f"final lengths {lengths}, {hits}/{len(lengths)} match")


def _pointmaze(ctx: _Ctx) -> None:
    data = ctx.maze_data("expert")
    rep = diagnose(materialise(data))
    ctx.report.notes.append(f"expert dataset mean return {rep.mean_return:.3f}")
    finals = {}
    for label, agent in (("BC", ctx.maze_agent("bc")), ("SAC", ctx.maze_agent("sac")),
                         ("CQL", ctx.maze_agent("cql", alpha=1.0, bc_warmup=ctx.b.maze_steps // 2))):
        r = ctx.run(f"maze-{label}", data, agent, steps=ctx.b.maze_steps)
        finals[label] = r.final_mean
        ctx.report.table.append({"method": label, "final_mean": r.final_mean, "per_seed": _finals(r)})
    expert = rep.mean_return
    bc, sac, cql = finals["BC"], finals["SAC"], finals["CQL"]
    # returns are negative, so "x% worse" means a larger magnitude
    ctx.check("BC within 15% of expert mean", abs(bc - expert) <= 0.15 * abs(expert),
              f"BC {bc:.3f} vs expert {expert:.3f}")
    ctx.check("SAC at least 30% worse than BC", sac <= bc - 0.30 * abs(bc),
              f"SAC {sac:.3f} vs BC {bc:.3f}")
    ctx.check("CQL within 15% of BC", abs(cql - bc) <= 0.15 * abs(bc), f"CQL {cql:.3f} vs BC {bc:.3f}")


def _sweep(ctx: _Ctx, algo: str, key: str, values) -> None:
    for eps in (0.0, 0.8, 1.0):
        for v in values:
            kw = {key: v}
            if algo == "crr":
                kw["filter"] = "exp"
            r = ctx.run(f"sweep-{algo}-eps{eps}-{key}{v}", ctx.eps_data(eps), ctx.grid_agent(algo, **kw))
            ctx.report.table.append({"eps": eps, key: v, "final_mean": r.final_mean,
                                     "final_var": r.final_var, "per_seed": _finals(r)})
            ctx.check(f"eps={eps} {key}={v} ran", not r.failed, "ok" if not r.failed else
                      "; ".join(s.error for s in r.failed))


def _batch_size(ctx: _Ctx) -> None:
    data = ctx.eps_data(0.8)
    for bs in (64, 256, 1024):
        r = ctx.run(f"batch{bs}", data, ctx.grid_agent("crr", filter="exp", beta=1.0, batch_size=bs))
        curve = [round(m, 6) for m in r.mean]
        ctx.report.table.append({"batch_size": bs, "steps": r.steps, "mean_curve": curve})
        ctx.check(f"batch {bs} ran", not r.failed, "ok" if not r.failed else
                  "; ".join(s.error for s in r.failed))


_RUNNERS = {
    "exp1": _exp1,
    "exp2": _exp2,
    "exp3": _exp3,
    "pointmaze": _pointmaze,
    "sweep_cql": lambda ctx: _sweep(ctx, "cql", "alpha", CQL_ALPHAS),
    "sweep_crr": lambda ctx: _sweep(ctx, "crr", "beta", (0.01, 1.0)),
    "batch_size": _batch_size,
}


def reproduce(experiment_id: str, out_dir=None, scale: str = "full", workers: int = 1) -> ReproReport:
    """Run one canned experiment and score it.  Threshold misses are failed checks, not errors."""
    if experiment_id not in _RUNNERS:
        raise ValueError(f"unknown experiment {experiment_id!r}; valid ids: {', '.join(EXPERIMENTS)}")
    ctx = _Ctx(experiment_id, scale, out_dir, workers)
    _RUNNERS[experiment_id](ctx)
    if ctx.out is not None:
        ctx.out.mkdir(parents=True, exist_ok=True)
        write_json(ctx.out / "summary.json", ctx.report.to_dict())
        (ctx.out / "summary.txt").write_text(ctx.report.text() + "\n")
    return ctx.report


def load_summary(path) -> dict:
    return json.loads(Path(path).read_text())

"""Command-line entry point: ``orlab <subcommand> ...``.

Exit codes: 0 success, 1 reproduction threshold failure, 2 usage or input error.
Every subcommand that writes output also writes ``config.json`` holding the
resolved settings and the argv; ``orlab --replay DIR/config.json`` re-runs it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .agents.config import AgentConfig, help_text, parse_override
from .approx import forward, load_params
from .data.dataset import DatasetFormatError, DatasetIntegrityError, load, save
from .data.protocols import EPS_SWEEP, GeneratorDescriptor, generate
from .diag import diagnose, render_report
from .envs import ENV_IDS, make_env
from .harness.evaluation import evaluate
from .harness.reproduce import EXPERIMENTS, SCALES, reproduce
from .harness.runner import (DatasetSpec, ExperimentConfig, fine_tune, run_experiment, sweep,
                             sweep_table, write_json)


class UsageError(Exception):
    pass


PROTOCOL_ALIASES = {"eps_greedy": "eps_greedy_expert", "eps_greedy_expert": "eps_greedy_expert",
                    "random": "random", "multimodal": "multimodal",
                    "continuous_quality": "continuous_quality", "pointmaze": "continuous_quality"}


def _seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _agent_config(args) -> AgentConfig:
    base = AgentConfig(algo=args.algo)
    try:
        return base.with_overrides(args.set or [])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, args, resolved: dict) -> None:
    write_json(out / "config.json", {"command": args.command, "argv": args.argv, **resolved})


def _require_file(path: str) -> str:
    if not Path(path).is_file():
        raise UsageError(f"no such file: {path}")
    return path


# ---------------------------------------------------------------- subcommands

def cmd_generate(args) -> int:
    protocol = PROTOCOL_ALIASES[args.protocol]
    params: dict = {}
    n_eps, n_tr = args.episodes, args.transitions
    if protocol == "eps_greedy_expert":
        params["eps"] = args.eps
    elif protocol == "multimodal":
        params.update(frac_a=args.frac_a, eps=args.eps if args.eps is not None else 0.1)
    elif protocol == "continuous_quality":
        params["quality"] = args.quality
    else:
        params["env_id"] = args.env
    if protocol == "continuous_quality":
        n_eps, n_tr = None, n_tr or 100_000
    elif n_eps is None and n_tr is None:
        n_eps = 3000 if protocol == "random" else 1000
    if protocol == "eps_greedy_expert" and args.eps is None:
        raise UsageError("--eps is required for the eps_greedy protocol")
    try:
        desc = GeneratorDescriptor(protocol, params, n_eps, n_tr)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds = generate(desc, seed=args.seed)
    out = _out(args)
    save(ds, out / "dataset.orld")
    (out / "manifest.json").write_text(ds.manifest.to_json() + "\n")
    _write_config(out, args, {"generator": desc.to_dict(), "seed": args.seed})
    print(f"wrote {len(ds)} transitions in {ds.manifest.n_episodes} episodes to {out / 'dataset.orld'}")
    return 0


def cmd_inspect(args) -> int:
    ds = load(_require_file(args.dataset))
    out = Path(args.out) if args.out else Path(args.dataset).parent
    out.mkdir(parents=True, exist_ok=True)
    report = diagnose(ds)
    render_report(report, out)
    _write_config(out, args, {"dataset": str(args.dataset)})
    print(f"mean return {report.mean_return:.4f}  mean length {report.mean_length:.2f}  "
          f"episodes {report.n_episodes}  transitions {report.n_transitions}")
    print(f"wrote {out / 'report.json'}")
    return 0


def _experiment(args, name: str) -> ExperimentConfig:
    return ExperimentConfig(name, DatasetSpec(path=str(Path(_require_file(args.data)).resolve())),
                            _agent_config(args), args.steps, args.seeds, args.eval_episodes,
                            getattr(args, "online_steps", 0))


def cmd_train(args) -> int:
    cfg = _experiment(args, f"train-{args.algo}")
    out = _out(args)
    report = run_experiment(cfg, out / "run", workers=args.workers)
    _write_config(out, args, {"experiment": cfg.to_dict()})
    _print_report(report)
    return 0


def cmd_finetune(args) -> int:
    if args.online_steps < 0:
        raise UsageError("--online-steps must be >= 0")
    cfg = _experiment(args, f"finetune-{args.algo}")
    out = _out(args)
    report = run_experiment(cfg, out / "run", workers=args.workers)
    _write_config(out, args, {"experiment": cfg.to_dict()})
    _print_report(report)
    return 0


def _print_report(report) -> None:
    for s in report.seeds:
        if s.error:
            print(f"seed {s.seed}: FAILED {s.error}")
        else:
            print(f"seed {s.seed}: final return {s.final_mean:.4f}, length {s.final_length:.1f}")
    print(f"mean over seeds {report.final_mean:.4f} (variance {report.final_var:.4g})")


def _parse_grid(items) -> dict:
    grid = {}
    for text in items or []:
        key, value = parse_override(text)
        grid[key] = [v for v in value.split(",") if v] if key != "hidden" else value.split(";")
    return grid


def cmd_sweep(args) -> int:
    base = _experiment(args, f"sweep-{args.algo}")
    try:
        grid = _parse_grid(args.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _out(args)
    rows = sweep(base, grid, out / "runs", workers=args.workers)
    _write_config(out, args, {"base": base.to_dict(), "grid": grid})
    table = sweep_table(rows)
    write_json(out / "sweep.json", table)
    for r in table:
        print(f"{r['overrides']}: final mean {r['final_mean']:.4f}" + (f"  ERROR {r['error']}" if r["error"] else ""))
    return 0


class _CheckpointPolicy:
    def __init__(self, params, env):
        self.params, self.env = params, env

    def act(self, obs):
        out = forward(self.params, np.asarray(obs, dtype=np.float64)[None, :])[0]
        if self.env.discrete:
            return int(np.argmax(out))
        k = self.env.action_dim
        return self.env.action_high * np.tanh(out[:k])


def cmd_eval(args) -> int:
    params = load_params(_require_file(args.checkpoint))
    env = make_env(args.env)
    expected_out = env.n_actions if env.discrete else 2 * env.action_dim
    if params.spec.input_dim != env.obs_dim or params.spec.output_dim != expected_out:
        raise UsageError(f"checkpoint shape {params.spec.input_dim}->{params.spec.output_dim} "
                         f"does not fit a policy for {args.env}")
    res = evaluate(_CheckpointPolicy(params, env), env, args.episodes, args.seed)
    print(f"mean return {res.mean_return:.4f}  std {res.std_return:.4f}  mean length {res.mean_length:.2f}")
    if args.out:
        out = _out(args)
        write_json(out / "eval.json", {"mean_return": res.mean_return, "std_return": res.std_return,
                                       "mean_length": res.mean_length, "returns": list(res.returns),
                                       "lengths": list(res.lengths)})
        _write_config(out, args, {"checkpoint": args.checkpoint, "env": args.env,
                                  "episodes": args.episodes, "seed": args.seed})
    return 0


def cmd_reproduce(args) -> int:
    ids = EXPERIMENTS if args.experiment == "all" else (args.experiment,)
    out = _out(args)
    _write_config(out, args, {"experiments": list(ids), "scale": args.scale})
    ok = True
    for exp in ids:
        rep = reproduce(exp, out, scale=args.scale, workers=args.workers)
        print(rep.text())
        ok &= rep.passed
    return 0 if ok else 1


def cmd_envshow(args) -> int:
    env = make_env(args.env)
    env.reset(np.random.default_rng(args.seed))
    print(env.render())
    return 0


# ---------------------------------------------------------------- parser

def _add_training_flags(p, data_required: bool = True) -> None:
    p.add_argument("--algo", required=True, choices=("bc", "dqn", "sac", "cql", "crr", "ccrr"))
    p.add_argument("--data", required=data_required, help="path to a dataset.orld file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="hyper-parameter override (repeatable); see the list below")
    p.add_argument("--seeds", type=_seeds, default=(0, 1, 2), help="comma separated (default 0,1,2)")
    p.add_argument("--steps", type=int, default=50_000, help="offline gradient steps (default 50000)")
    p.add_argument("--eval-episodes", type=int, default=10, help="episodes per evaluation (default 10)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel worker processes (default: number of cores)")


def build_parser() -> argparse.ArgumentParser:
    hp = "hyper-parameters (key=default):\n" + help_text()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="orlab", description="Offline RL laboratory.",
                                     epilog=hp, formatter_class=fmt)
    parser.add_argument("--replay", metavar="CONFIG", help="re-run the command recorded in a config.json")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    g = sub.add_parser("generate", help="generate an offline dataset", formatter_class=fmt)
    g.add_argument("--protocol", required=True, choices=sorted(PROTOCOL_ALIASES))
    g.add_argument("--eps", type=float, default=None,
                   help=f"exploration rate of the eps-greedy expert (sweep values {EPS_SWEEP})")
    g.add_argument("--episodes", type=int, default=None)
    g.add_argument("--transitions", type=int, default=None)
    g.add_argument("--quality", choices=("random", "medium", "expert"), default="expert")
    g.add_argument("--frac-a", type=float, default=0.2, help="share of expert-A episodes (multimodal)")
    g.add_argument("--env", choices=ENV_IDS, default="grid/distshift", help="env of the random protocol")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("inspect", help="diagnose a dataset")
    i.add_argument("dataset")
    i.add_argument("--out", default=None, help="output directory (default: the dataset's directory)")
    i.set_defaults(func=cmd_inspect)

    for name, func, helptext in (("train", cmd_train, "train offline over several seeds"),
                                 ("finetune", cmd_finetune, "train offline, then fine-tune online")):
        t = sub.add_parser(name, help=helptext, epilog=hp, formatter_class=fmt)
        _add_training_flags(t)
        if name == "finetune":
            t.add_argument("--online-steps", type=int, default=100_000, help="online steps (default 100000)")
        t.set_defaults(func=func)

    s = sub.add_parser("sweep", help="grid search over hyper-parameters", epilog=hp, formatter_class=fmt)
    _add_training_flags(s)
    s.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                   help="values to sweep (repeatable); the cross product is run")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("eval", help="evaluate a saved policy checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--env", required=True, choices=ENV_IDS)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("reproduce", help="run a canned experiment and check its thresholds")
    r.add_argument("experiment", choices=EXPERIMENTS + ("all",))
    r.add_argument("--scale", choices=SCALES, default="full")
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    r.set_defaults(func=cmd_reproduce)

    v = sub.add_parser("envshow", help="print an environment as text")
    v.add_argument("env", choices=ENV_IDS)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_envshow)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.replay:
        try:
            recorded = json.loads(Path(args.replay).read_text())["argv"]
        except (OSError, ValueError, KeyError) as exc:
            print(f"orlab: error: cannot replay {args.replay}: {exc}", file=sys.stderr)
            return 2
        return main(recorded)
    if args.command is None:
        parser.print_help()
        return 2
    args.argv = argv
    try:
        return args.func(args)
    except (UsageError, DatasetFormatError, DatasetIntegrityError, FileNotFoundError) as exc:
        print(f"orlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

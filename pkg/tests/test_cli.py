import json
import subprocess
import sys

import numpy as np
import pytest

from orlab.cli import main
from orlab.data import load
from orlab.diag import load_report


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--protocol", "eps_greedy", "--eps", "0.8", "--episodes", "20",
                 "--seed", "5", "--out", str(out)]) == 0
    return out


def train_argv(data, out, *extra):
    return ["train", "--algo", "bc", "--data", str(data), "--seeds", "0", "--steps", "10",
            "--eval-episodes", "1", "--workers", "1", "--set", "hidden=8,8", "--set", "eval_every=5",
            "--set", "batch_size=8", "--out", str(out), *extra]


class TestGenerate:
    def test_writes_dataset_manifest_and_config(self, dataset_dir):
        ds = load(dataset_dir / "dataset.orld")
        assert ds.manifest.n_episodes == 20 and ds.manifest.generator["params"] == {"eps": 0.8}
        assert json.loads((dataset_dir / "manifest.json").read_text())["seed"] == 5
        cfg = json.loads((dataset_dir / "config.json").read_text())
        assert cfg["command"] == "generate" and "--eps" in cfg["argv"]

    def test_same_seed_same_bytes(self, dataset_dir, tmp_path):
        main(["generate", "--protocol", "eps_greedy", "--eps", "0.8", "--episodes", "20",
              "--seed", "5", "--out", str(tmp_path)])
        assert (tmp_path / "dataset.orld").read_bytes() == (dataset_dir / "dataset.orld").read_bytes()

    def test_pointmaze(self, tmp_path):
        assert main(["generate", "--protocol", "pointmaze", "--quality", "random", "--transitions", "250",
                     "--out", str(tmp_path)]) == 0
        assert load(tmp_path / "dataset.orld").manifest.env_id == "maze/point-v0"

    def test_missing_eps_is_usage_error(self, tmp_path, capsys):
        assert main(["generate", "--protocol", "eps_greedy", "--out", str(tmp_path)]) == 2
        assert "--eps" in capsys.readouterr().err


class TestInspect:
    def test_report_written(self, dataset_dir, tmp_path, capsys):
        assert main(["inspect", str(dataset_dir / "dataset.orld"), "--out", str(tmp_path)]) == 0
        rep = load_report(tmp_path)
        assert rep.n_episodes == 20 and (tmp_path / "heatmap_combined.csv").exists()
        assert "mean return" in capsys.readouterr().out

    def test_missing_file(self, tmp_path):
        assert main(["inspect", str(tmp_path / "nope.orld")]) == 2

    def test_corrupt_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.orld"
        bad.write_bytes(b"not a dataset")
        assert main(["inspect", str(bad)]) == 2
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_train_and_replay(self, dataset_dir, tmp_path):
        out = tmp_path / "t"
        assert main(train_argv(dataset_dir / "dataset.orld", out)) == 0
        summary = json.loads((out / "run" / "summary.json").read_text())
        assert summary["steps"] == [5, 10]
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["experiment"]["agent"]["hidden"] == [8, 8]
        first = (out / "run" / "seed_0" / "metrics.jsonl").read_text()
        assert main(["--replay", str(out / "config.json")]) == 0
        assert (out / "run" / "seed_0" / "metrics.jsonl").read_text() == first

    def test_eval_checkpoint(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "t"
        main(train_argv(dataset_dir / "dataset.orld", out))
        ck = out / "run" / "seed_0" / "final_policy.params"
        assert main(["eval", "--checkpoint", str(ck), "--env", "grid/empty6x6", "--episodes", "2",
                     "--out", str(tmp_path / "e")]) == 0
        assert len(json.loads((tmp_path / "e" / "eval.json").read_text())["lengths"]) == 2
        assert main(["eval", "--checkpoint", str(ck), "--env", "grid/distshift"]) == 2

    def test_bad_override_exit_2(self, dataset_dir, tmp_path, capsys):
        argv = train_argv(dataset_dir / "dataset.orld", tmp_path, "--set", "nonsense=1")
        assert main(argv) == 2
        assert "unknown hyper-parameter" in capsys.readouterr().err

    def test_bad_seeds_exit_2(self, dataset_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--algo", "bc", "--data", str(dataset_dir / "dataset.orld"), "--seeds", "a",
                  "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_sweep(self, dataset_dir, tmp_path):
        argv = train_argv(dataset_dir / "dataset.orld", tmp_path)
        argv[0] = "sweep"
        argv += ["--grid", "batch_size=8,16"]
        assert main(argv) == 0
        table = json.loads((tmp_path / "sweep.json").read_text())
        assert sorted(r["overrides"]["batch_size"] for r in table) == ["16", "8"]


def test_help_lists_defaults():
    res = subprocess.run([sys.executable, "-m", "orlab.cli", "train", "--help"],
                         capture_output=True, text=True, check=True)
    for text in ("alpha=", "beta=", "m=4", "gamma=0.99", "default 50000"):
        assert text in res.stdout


def test_envshow(capsys):
    assert main(["envshow", "grid/distshift"]) == 0
    assert capsys.readouterr().out.count("~") == 6


def test_no_command_exit_2(capsys):
    assert main([]) == 2

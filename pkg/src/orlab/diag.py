"""Dataset-quality proxies and visit statistics.

``report.json`` schema (keys in this order):

- ``env_id``, ``n_transitions``, ``n_episodes``
- ``mean_return``, ``max_return``, ``mean_length``, ``positive_fraction``
- ``max_reward_proxy``: best episode return over the reward upper bound 1
  (grids only, ``null`` otherwise)
- ``action_proportions`` and ``action_entropy`` (nats); ``null`` for
  continuous actions
- ``reward_histogram``: episode returns; ``zero_count`` holds exact zeros
  and ``edges``/``counts`` bin the non-zero returns in 20 uniform bins over
  their ``[min, max]``
- ``positive_reward_histogram``: the same binning over positive returns only
- ``length_histogram``: one bin per integer episode length, ``values`` from
  the shortest to the longest episode
- ``heatmaps_omitted``: true for non-grid datasets; otherwise the heatmaps
  are written next to the report as ``heatmap_<name>.csv`` with one row per
  grid row (y) and one column per grid column (x)

Heatmap cells count the transitions whose *source* state has the agent on
that cell facing the named direction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data.dataset import OfflineDataset
from .envs import make_env
from .envs.grid import DIRECTION_NAMES, GridEnv, decode_grid_obs

N_REWARD_BINS = 20
HEATMAP_NAMES = DIRECTION_NAMES + ("combined",)


@dataclass
class Histogram:
    edges: list
    counts: list
    zero_count: int = 0

    @property
    def total(self) -> int:
        return int(sum(self.counts)) + self.zero_count


@dataclass
class LengthHistogram:
    values: list
    counts: list


@dataclass
class DiagnosticsReport:
    env_id: str
    n_transitions: int
    n_episodes: int
    mean_return: float
    max_return: float
    mean_length: float
    positive_fraction: float
    max_reward_proxy: float | None
    action_proportions: list | None
    action_entropy: float | None
    reward_histogram: Histogram
    positive_reward_histogram: Histogram
    length_histogram: LengthHistogram
    heatmaps_omitted: bool
    heatmaps: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("heatmaps")
        return d

    @classmethod
    def from_dict(cls, d: dict, heatmaps: dict | None = None) -> "DiagnosticsReport":
        d = dict(d)
        d["reward_histogram"] = Histogram(**d["reward_histogram"])
        d["positive_reward_histogram"] = Histogram(**d["positive_reward_histogram"])
        d["length_histogram"] = LengthHistogram(**d["length_histogram"])
        return cls(**d, heatmaps=heatmaps or {})

    def __eq__(self, other):
        if not isinstance(other, DiagnosticsReport):
            return NotImplemented
        if self.to_dict() != other.to_dict() or self.heatmaps.keys() != other.heatmaps.keys():
            return False
        return all(np.array_equal(self.heatmaps[k], other.heatmaps[k]) for k in self.heatmaps)


def action_entropy(proportions) -> float:
    """``-sum p ln p`` with ``0 ln 0 = 0``."""
    p = np.asarray(proportions, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("action proportions must be non-negative")
    if not np.isclose(p.sum(), 1.0):
        raise ValueError(f"action proportions must sum to 1, got {p.sum()}")
    nz = p[p > 0]
    return float(max(0.0, -np.sum(nz * np.log(nz))))


def binned(values: np.ndarray, n_bins: int = N_REWARD_BINS, separate_zero: bool = True) -> Histogram:
    values = np.asarray(values, dtype=np.float64)
    zero = int(np.sum(values == 0.0)) if separate_zero else 0
    rest = values[values != 0.0] if separate_zero else values
    if len(rest) == 0:
        return Histogram([], [], zero)
    lo, hi = float(rest.min()), float(rest.max())
    if lo == hi:
        return Histogram([lo, hi], [int(len(rest))], zero)
    counts, edges = np.histogram(rest, bins=n_bins, range=(lo, hi))
    return Histogram([float(e) for e in edges], [int(c) for c in counts], zero)


def length_histogram(lengths: np.ndarray) -> LengthHistogram:
    lengths = np.asarray(lengths, dtype=np.int64)
    if len(lengths) == 0:
        return LengthHistogram([], [])
    lo = int(lengths.min())
    counts = np.bincount(lengths - lo)
    return LengthHistogram(list(range(lo, lo + len(counts))), [int(c) for c in counts])


def grid_heatmaps(env: GridEnv, obs: np.ndarray) -> dict[str, np.ndarray]:
    cfg = env.config
    x, y, d = decode_grid_obs(cfg, obs)
    maps = {}
    for k, name in enumerate(DIRECTION_NAMES):
        m = np.zeros((cfg.height, cfg.width), dtype=np.int64)
        sel = d == k
        np.add.at(m, (y[sel], x[sel]), 1)
        maps[name] = m
    maps["combined"] = sum(maps[n] for n in DIRECTION_NAMES)
    return maps


def diagnose(dataset: OfflineDataset) -> DiagnosticsReport:
    if len(dataset) == 0:
        raise ValueError("cannot diagnose an empty dataset")
    m = dataset.manifest
    returns = dataset.episode_returns()
    lengths = dataset.episode_lengths()
    env = make_env(m.env_id)
    is_grid = isinstance(env, GridEnv)
    if m.discrete:
        props = np.bincount(dataset.actions, minlength=m.action_space["n"]) / len(dataset)
        proportions = [float(p) for p in props]
        entropy = action_entropy(props)
    else:
        proportions, entropy = None, None
    return DiagnosticsReport(
        env_id=m.env_id,
        n_transitions=len(dataset),
        n_episodes=m.n_episodes,
        mean_return=float(returns.mean()),
        max_return=float(returns.max()),
        mean_length=float(lengths.mean()),
        positive_fraction=float(np.mean(returns > 0)),
        max_reward_proxy=float(returns.max()) / 1.0 if is_grid else None,
        action_proportions=proportions,
        action_entropy=entropy,
        reward_histogram=binned(returns),
        positive_reward_histogram=binned(returns[returns > 0], separate_zero=False),
        length_histogram=length_histogram(lengths),
        heatmaps_omitted=not is_grid,
        heatmaps=grid_heatmaps(env, dataset.obs) if is_grid else {},
    )


def render_report(report: DiagnosticsReport, out_dir) -> Path:
    """Write ``report.json`` and, for grids, one CSV per heatmap.  Returns the JSON path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    for name, mat in report.heatmaps.items():
        with open(out / f"heatmap_{name}.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(mat.tolist())
    return path


def load_report(out_dir) -> DiagnosticsReport:
    out = Path(out_dir)
    d = json.loads((out / "report.json").read_text())
    heatmaps = {}
    if not d["heatmaps_omitted"]:
        for name in HEATMAP_NAMES:
            with open(out / f"heatmap_{name}.csv", newline="") as fh:
                heatmaps[name] = np.array([[int(v) for v in row] for row in csv.reader(fh)], dtype=np.int64)
    return DiagnosticsReport.from_dict(d, heatmaps)


def state_coverage(report: DiagnosticsReport) -> int:
    """Number of (cell, direction) pairs visited at least once."""
    return int(sum(np.count_nonzero(report.heatmaps[n]) for n in DIRECTION_NAMES))


__all__ = ["DiagnosticsReport", "Histogram", "LengthHistogram", "action_entropy", "diagnose",
           "render_report", "load_report", "state_coverage", "HEATMAP_NAMES"]

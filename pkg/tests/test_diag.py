import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orlab.data import make_pointmaze_dataset
from orlab.data.dataset import Manifest, OfflineDataset
from orlab.diag import (HEATMAP_NAMES, action_entropy, diagnose, load_report, render_report,
                        state_coverage)
from orlab.envs.grid import EAST, FORWARD, GridState, empty_random_6x6, encode_grid_obs, grid_step


def one_step_dataset():
    """A single episode that reaches the goal in one move."""
    cfg = empty_random_6x6()
    s = GridState(3, 4, EAST)
    n, nobs, r, done = grid_step(cfg, s, FORWARD)
    manifest = Manifest("grid/empty6x6", cfg.obs_dim, {"type": "discrete", "n": 3}, 1, 1,
                        {"protocol": "manual"}, 0)
    return OfflineDataset(manifest, encode_grid_obs(cfg, s)[None], np.array([FORWARD]), np.array([r]),
                          nobs[None], np.array([done]), np.array([0]), np.array([0]))


class TestEntropy:
    def test_examples(self):
        assert action_entropy([1.0, 0.0, 0.0]) == 0.0
        assert action_entropy([1 / 3] * 3) == pytest.approx(math.log(3), abs=1e-12)
        assert action_entropy([0.5, 0.25, 0.25]) == pytest.approx(1.0397207708, abs=1e-9)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            action_entropy([0.5, 0.6, -0.1])
        with pytest.raises(ValueError):
            action_entropy([0.5, 0.2, 0.2])

    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3).filter(lambda v: sum(v) > 1e-3))
    def test_bounds(self, raw):
        p = np.array(raw) / sum(raw)
        h = action_entropy(p)
        assert -1e-12 <= h <= math.log(3) + 1e-12


class TestDiagnose:
    def test_fields_against_direct_computation(self, small_eps_datasets):
        ds = small_eps_datasets[0.8]
        rep = diagnose(ds)
        returns = ds.episode_returns()
        assert rep.n_transitions == len(ds) and rep.n_episodes == 40
        assert rep.mean_return == pytest.approx(returns.mean(), abs=1e-12)
        assert rep.max_reward_proxy == pytest.approx(returns.max(), abs=1e-12)
        props = np.array([np.mean(ds.actions == a) for a in range(3)])
        np.testing.assert_allclose(rep.action_proportions, props, atol=1e-12)
        assert rep.reward_histogram.total == 40
        assert sum(rep.length_histogram.counts) == 40

    def test_combined_heatmap_is_sum_and_counts_transitions(self, small_eps_datasets):
        for ds in small_eps_datasets.values():
            rep = diagnose(ds)
            dirs = sum(rep.heatmaps[n] for n in HEATMAP_NAMES[:4])
            assert np.array_equal(rep.heatmaps["combined"], dirs)
            assert rep.heatmaps["combined"].sum() == len(ds)
            assert rep.heatmaps["combined"].shape == (6, 6)
            # walls are never visited
            m = rep.heatmaps["combined"]
            assert m[0].sum() == m[-1].sum() == m[:, 0].sum() == m[:, -1].sum() == 0

    def test_positive_histogram_mass(self, small_eps_datasets):
        ds = small_eps_datasets[1.0]
        rep = diagnose(ds)
        pos = int(np.sum(ds.episode_returns() > 0))
        assert sum(rep.positive_reward_histogram.counts) == pos
        assert rep.positive_fraction == pytest.approx(pos / 40)

    def test_coverage_grows_with_eps(self, small_eps_datasets):
        cov = [state_coverage(diagnose(small_eps_datasets[e])) for e in (0.0, 0.8, 1.0)]
        assert cov[0] <= cov[1] <= cov[2] and cov[2] <= 16 * 4

    def test_entropy_grows_with_eps(self, small_eps_datasets):
        ents = [diagnose(small_eps_datasets[e]).action_entropy for e in (0.0, 1.0)]
        assert ents[0] < ents[1] and ents[1] > 0.95 * math.log(3)

    def test_single_one_step_episode(self):
        rep = diagnose(one_step_dataset())
        assert rep.n_transitions == 1 and rep.mean_length == 1.0
        assert rep.length_histogram.values == [1] and rep.length_histogram.counts == [1]
        assert rep.action_entropy == 0.0 and rep.action_proportions == [0.0, 0.0, 1.0]
        assert rep.heatmaps["east"][4, 3] == 1 and rep.heatmaps["combined"].sum() == 1
        assert rep.reward_histogram.counts == [1]

    def test_continuous_omits_heatmaps(self, tmp_path):
        rep = diagnose(make_pointmaze_dataset("random", n_transitions=300, seed=0))
        assert rep.heatmaps_omitted and rep.heatmaps == {}
        assert rep.action_entropy is None and rep.max_reward_proxy is None
        render_report(rep, tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["report.json"]
        assert load_report(tmp_path) == rep


class TestRender:
    def test_round_trip(self, tmp_path, small_eps_datasets):
        rep = diagnose(small_eps_datasets[0.8])
        render_report(rep, tmp_path)
        assert load_report(tmp_path) == rep

    def test_csv_shape(self, tmp_path, small_eps_datasets):
        rep = diagnose(small_eps_datasets[0.8])
        render_report(rep, tmp_path)
        for name in HEATMAP_NAMES:
            rows = (tmp_path / f"heatmap_{name}.csv").read_text().splitlines()
            assert len(rows) == 6 and all(len(r.split(",")) == 6 for r in rows)

    def test_rerender_is_byte_identical(self, tmp_path, small_eps_datasets):
        ds = small_eps_datasets[1.0]
        render_report(diagnose(ds), tmp_path / "a")
        render_report(diagnose(ds), tmp_path / "b")
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_empty_dataset_rejected(self):
        m = Manifest("grid/empty6x6", 108, {"type": "discrete", "n": 3}, 0, 0, {}, 0)
        empty = OfflineDataset(m, np.zeros((0, 108)), np.zeros(0, dtype=np.int64), np.zeros(0),
                               np.zeros((0, 108)), np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64),
                               np.zeros(0, dtype=np.int64))
        with pytest.raises(ValueError):
            diagnose(empty)

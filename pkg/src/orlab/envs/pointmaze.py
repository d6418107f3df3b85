"""PointMaze: a point mass pushed through a three-corridor maze in [-1, 1]^2.

Layout (y up)::

     1 +---------------------+
       |        [exit]       |   top corridor
  0.55 |    #################|
  0.45 |    #################|
       |                     |   middle corridor
   0.1 |###############      |
   0.0 |###############      |
       |        start        |   bottom corridor
    -1 +---------------------+
      -1                     1

Walls are closed axis-aligned boxes at least 0.1 thick, so a single
clipped step can never tunnel through one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Box = tuple[float, float, float, float]  # xmin, xmax, ymin, ymax


@dataclass(frozen=True)
class PointMazeConfig:
    name: str = "maze/point-v0"
    walls: tuple[Box, ...] = (
        (-1.0, 0.4, 0.0, 0.1),
        (-0.4, 1.0, 0.45, 0.55),
    )
    exit: Box = (0.2, 0.6, 0.8, 1.0)
    goal: tuple[float, float] = (0.4, 0.9)
    start_low: tuple[float, float] = (-0.1, -0.7)
    start_high: tuple[float, float] = (0.1, -0.1)
    max_step: float = 0.1
    t_max: int = 200

    obs_dim = 2
    action_dim = 2


@dataclass(frozen=True)
class PointMazeState:
    x: float
    y: float
    t: int = 0
    done: bool = False

    @property
    def obs(self) -> np.ndarray:
        return np.array([self.x, self.y])


def _in_box(x: float, y: float, box: Box) -> bool:
    return box[0] <= x <= box[1] and box[2] <= y <= box[3]


def is_blocked(config: PointMazeConfig, x: float, y: float) -> bool:
    return any(_in_box(x, y, w) for w in config.walls)


def pointmaze_reset(config: PointMazeConfig, rng: np.random.Generator) -> tuple[PointMazeState, np.ndarray]:
    x = rng.uniform(config.start_low[0], config.start_high[0])
    y = rng.uniform(config.start_low[1], config.start_high[1])
    state = PointMazeState(float(x), float(y), 0)
    return state, state.obs


def clip_action(config: PointMazeConfig, action) -> np.ndarray:
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape != (2,):
        raise ValueError(f"PointMaze actions are 2-d, got shape {a.shape}")
    return np.clip(a, -config.max_step, config.max_step)


def pointmaze_reward(config: PointMazeConfig, x: float, y: float) -> float:
    gx, gy = config.goal
    return -((x - gx) ** 2) - (y - gy) ** 2


def pointmaze_step(config: PointMazeConfig, state: PointMazeState,
                   action) -> tuple[PointMazeState, np.ndarray, float, bool]:
    """Apply a clipped increment; blocked axes are dropped one at a time."""
    if state.done:
        raise RuntimeError("cannot step a finished episode; call pointmaze_reset")
    dx, dy = clip_action(config, action)
    x, y = state.x, state.y
    for cx, cy in ((x + dx, y + dy), (x + dx, y), (x, y + dy)):
        cx, cy = float(np.clip(cx, -1.0, 1.0)), float(np.clip(cy, -1.0, 1.0))
        if not is_blocked(config, cx, cy):
            x, y = cx, cy
            break
    t = state.t + 1
    done = _in_box(x, y, config.exit) or t >= config.t_max
    new = PointMazeState(x, y, t, done)
    return new, new.obs, pointmaze_reward(config, x, y), done


def render_ascii(config: PointMazeConfig, state: PointMazeState | None = None, cells: int = 20) -> str:
    rows = []
    for j in range(cells - 1, -1, -1):
        row = []
        for i in range(cells):
            x = -1 + (i + 0.5) * 2 / cells
            y = -1 + (j + 0.5) * 2 / cells
            if is_blocked(config, x, y):
                row.append("#")
            elif _in_box(x, y, config.exit):
                row.append("E")
            elif config.start_low[0] <= x <= config.start_high[0] and config.start_low[1] <= y <= config.start_high[1]:
                row.append("s")
            else:
                row.append(".")
        rows.append(row)
    if state is not None:
        i = min(cells - 1, int((state.x + 1) / 2 * cells))
        j = min(cells - 1, int((state.y + 1) / 2 * cells))
        rows[cells - 1 - j][i] = "@"
    return "\n".join("".join(r) for r in rows)


class PointMazeEnv:
    discrete = False
    n_actions = None
    action_dim = 2

    def __init__(self, config: PointMazeConfig | None = None):
        self.config = config or PointMazeConfig()
        self.env_id = self.config.name
        self.obs_dim = 2
        self.action_low = np.full(2, -self.config.max_step)
        self.action_high = np.full(2, self.config.max_step)
        self.state: PointMazeState | None = None

    @property
    def max_episode_steps(self) -> int:
        return self.config.t_max

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state, obs = pointmaze_reset(self.config, rng)
        return obs

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        self.state, obs, reward, done = pointmaze_step(self.config, self.state, action)
        return obs, reward, done

    def render(self) -> str:
        return render_ascii(self.config, self.state)

"""Fully observed MiniGrid-style worlds: Empty-Random-6x6 and DistShift (lava).

Coordinates are 0-indexed ``(x, y)`` with ``y`` growing downwards and the
outer ring of cells being walls, as in MiniGrid.  Directions are
0=east, 1=south, 2=west, 3=north; actions are 0=left, 1=right, 2=forward.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

EAST, SOUTH, WEST, NORTH = range(4)
LEFT, RIGHT, FORWARD = range(3)
N_ACTIONS = 3
DIRECTION_NAMES = ("east", "south", "west", "north")
ACTION_NAMES = ("left", "right", "forward")
_DIR_VEC = ((1, 0), (0, 1), (-1, 0), (0, -1))

# object ids of the first observation channel
OBJ_EMPTY, OBJ_WALL, OBJ_GOAL, OBJ_LAVA, OBJ_AGENT = range(5)


@dataclass(frozen=True)
class GridEnvConfig:
    name: str
    width: int
    height: int
    goal: tuple[int, int]
    lava: frozenset = frozenset()
    start: tuple[int, int, int] | None = None  # (x, y, dir); None = uniform random
    t_max: int = 500

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.goal in self.lava:
            raise ValueError("goal cell cannot be lava")
        for cell in (self.goal, *self.lava):
            if not self.is_interior(*cell):
                raise ValueError(f"cell {cell} is not inside the walls")
        if self.start is not None and not self.is_free(*self.start[:2]):
            raise ValueError(f"start {self.start} is not a free cell")

    @property
    def obs_dim(self) -> int:
        return self.width * self.height * 3

    @property
    def n_states(self) -> int:
        return self.width * self.height * 4

    def is_interior(self, x: int, y: int) -> bool:
        return 0 < x < self.width - 1 and 0 < y < self.height - 1

    def is_free(self, x: int, y: int) -> bool:
        """Interior, not lava and not the goal: a cell an episode can be in."""
        return self.is_interior(x, y) and (x, y) != self.goal and (x, y) not in self.lava

    def free_cells(self) -> list[tuple[int, int]]:
        return [(x, y) for y in range(self.height) for x in range(self.width) if self.is_free(x, y)]


@dataclass(frozen=True)
class GridState:
    x: int
    y: int
    dir: int
    t: int = 0
    done: bool = False

    def index(self, config: GridEnvConfig) -> int:
        """Tabular index of the (cell, direction) pair; ignores ``t``."""
        return (self.y * config.width + self.x) * 4 + self.dir


def empty_random_6x6(t_max: int = 500) -> GridEnvConfig:
    return GridEnvConfig("grid/empty6x6", 6, 6, goal=(4, 4), t_max=t_max)


def distshift(t_max: int = 500) -> GridEnvConfig:
    # 9x7 with two 3-cell lava strips on rows 1-2: the lava-hugging route
    # along row 3 takes 13 steps, the bottom-row detour 17.
    lava = frozenset((x, y) for x in (3, 4, 5) for y in (1, 2))
    return GridEnvConfig("grid/distshift", 9, 7, goal=(7, 1), lava=lava,
                         start=(1, 1, EAST), t_max=t_max)


def grid_reward(t: int, t_max: int = 500) -> float:
    """Success reward ``1 - 0.9 * t / t_max`` for reaching the goal at step ``t``."""
    if not 1 <= t <= t_max:
        raise ValueError(f"step count {t} outside [1, {t_max}]")
    return 1.0 - 0.9 * t / t_max


def _base_grid(config: GridEnvConfig) -> np.ndarray:
    obj = np.full((config.height, config.width), OBJ_EMPTY, dtype=np.int64)
    obj[0, :] = obj[-1, :] = OBJ_WALL
    obj[:, 0] = obj[:, -1] = OBJ_WALL
    for (x, y) in config.lava:
        obj[y, x] = OBJ_LAVA
    gx, gy = config.goal
    obj[gy, gx] = OBJ_GOAL
    return obj


_ENCODING_CACHE: dict = {}


def encode_grid_obs(config: GridEnvConfig, state: GridState) -> np.ndarray:
    """Flat ``height x width x 3`` encoding.

    Channel 0 holds the object id scaled to [0, 1] (agent overrides the
    cell it stands on); channels 1 and 2 hold the heading unit vector at
    the agent cell and zero elsewhere.
    """
    key = (config, state.x, state.y, state.dir)
    hit = _ENCODING_CACHE.get(key)
    if hit is None:
        enc = np.zeros((config.height, config.width, 3))
        enc[:, :, 0] = _base_grid(config) / OBJ_AGENT
        enc[state.y, state.x, 0] = 1.0
        dx, dy = _DIR_VEC[state.dir]
        enc[state.y, state.x, 1] = dx
        enc[state.y, state.x, 2] = dy
        hit = enc.reshape(-1)
        hit.setflags(write=False)
        if len(_ENCODING_CACHE) < 100_000:
            _ENCODING_CACHE[key] = hit
    return hit


def decode_grid_obs(config: GridEnvConfig, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Agent ``(x, y, dir)`` arrays recovered from a batch of encoded observations."""
    enc = np.asarray(obs, dtype=np.float64).reshape(-1, config.height, config.width, 3)
    flat = enc[:, :, :, 0].reshape(len(enc), -1)
    cell = np.argmax(flat == 1.0, axis=1)
    if not np.all(flat[np.arange(len(enc)), cell] == 1.0):
        raise ValueError("observation without an agent cell")
    y, x = np.divmod(cell, config.width)
    head = enc[np.arange(len(enc)), y, x, 1:]
    dirs = np.full(len(enc), -1)
    for d, (dx, dy) in enumerate(_DIR_VEC):
        dirs[(head[:, 0] == dx) & (head[:, 1] == dy)] = d
    if np.any(dirs < 0):
        raise ValueError("observation with an invalid heading")
    return x, y, dirs


def grid_reset(config: GridEnvConfig, rng: np.random.Generator) -> tuple[GridState, np.ndarray]:
    if config.start is None:
        cells = config.free_cells()
        k = int(rng.integers(len(cells) * 4))
        (x, y), d = cells[k // 4], k % 4
    else:
        x, y, d = config.start
    state = GridState(x, y, d, 0)
    return state, encode_grid_obs(config, state)


def grid_step(config: GridEnvConfig, state: GridState,
              action: int) -> tuple[GridState, np.ndarray, float, bool]:
    if state.done:
        raise RuntimeError("cannot step a finished episode; call grid_reset")
    action = int(action)
    if action not in (LEFT, RIGHT, FORWARD):
        raise ValueError(f"invalid action {action}")
    t = state.t + 1
    x, y, d = state.x, state.y, state.dir
    reward, done = 0.0, False
    if action == LEFT:
        d = (d - 1) % 4
    elif action == RIGHT:
        d = (d + 1) % 4
    else:
        nx, ny = x + _DIR_VEC[d][0], y + _DIR_VEC[d][1]
        if config.is_interior(nx, ny):
            x, y = nx, ny
            if (x, y) == config.goal:
                reward, done = grid_reward(t, config.t_max), True
            elif (x, y) in config.lava:
                done = True
    if t >= config.t_max:
        done = True
    new = GridState(x, y, d, t, done)
    return new, encode_grid_obs(config, new), reward, done


def render_ascii(config: GridEnvConfig, state: GridState | None = None) -> str:
    """Text art: ``#`` wall, ``G`` goal, ``~`` lava, ``>v<^`` agent."""
    chars = {OBJ_EMPTY: ".", OBJ_WALL: "#", OBJ_GOAL: "G", OBJ_LAVA: "~"}
    obj = _base_grid(config)
    rows = [[chars[int(o)] for o in row] for row in obj]
    if state is None and config.start is not None:
        state = GridState(*config.start)
    if state is not None:
        rows[state.y][state.x] = ">v<^"[state.dir]
    return "\n".join("".join(r) for r in rows)


class GridEnv:
    """Stateful wrapper used for rollouts; the pure functions above do the work."""

    discrete = True
    n_actions = N_ACTIONS
    action_dim = 1

    def __init__(self, config: GridEnvConfig):
        self.config = config
        self.env_id = config.name
        self.obs_dim = config.obs_dim
        self.state: GridState | None = None

    @property
    def max_episode_steps(self) -> int:
        return self.config.t_max

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state, obs = grid_reset(self.config, rng)
        return obs

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        self.state, obs, reward, done = grid_step(self.config, self.state, action)
        return obs, reward, done

    def with_t_max(self, t_max: int) -> "GridEnv":
        return GridEnv(replace(self.config, t_max=t_max))

    def render(self) -> str:
        return render_ascii(self.config, self.state)

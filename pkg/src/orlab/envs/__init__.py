"""Environments and the id registry (``grid/empty6x6``, ``grid/distshift``, ``maze/point-v0``)."""

from __future__ import annotations

from .grid import GridEnv, GridEnvConfig, GridState, distshift, empty_random_6x6
from .pointmaze import PointMazeConfig, PointMazeEnv, PointMazeState

ENV_IDS = ("grid/empty6x6", "grid/distshift", "maze/point-v0")


def make_env(env_id: str):
    if env_id == "grid/empty6x6":
        return GridEnv(empty_random_6x6())
    if env_id == "grid/distshift":
        return GridEnv(distshift())
    if env_id == "maze/point-v0":
        return PointMazeEnv()
    raise ValueError(f"unknown env id {env_id!r}; valid ids: {', '.join(ENV_IDS)}")


__all__ = ["ENV_IDS", "make_env", "GridEnv", "GridEnvConfig", "GridState", "PointMazeEnv",
           "PointMazeConfig", "PointMazeState", "distshift", "empty_random_6x6"]

"""Offline RL laboratory: grid worlds, PointMaze, dataset protocols and offline agents."""

__version__ = "0.1.0"

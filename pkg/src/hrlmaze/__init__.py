"""Hierarchical-RL lab: option-critic and PPO agents on 8-action grid mazes."""

__version__ = "0.1.0"
